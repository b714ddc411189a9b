"""TOML run configuration with strict key checking.

Every table rejects keys it does not know; errors name the offending field
(``channel.sample_rate``) or, for syntax errors, the line.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from capskin.capmodel import (
    FULL_SCALE_DELTA_C,
    FULL_SCALE_FORCE,
    FittedCoefficients,
    StiffnessProfile,
    TaxelGeometry,
    TaxelModel,
    calibrate_stiffness,
)
from capskin.daq.scan import JointPose
from capskin.dynamics import SensorChannelConfig, ShieldingMode
from capskin.errors import ConfigError, DomainError
from capskin.topology import (
    DEFAULT_PITCH,
    REFERENCE_SECTIONS,
    ContactSpec,
    SkinSection,
    SkinTopology,
)

DEFAULT_UNITS = {"length": "mm", "capacitance": "pF", "force": "N", "angle": "rad", "time": "s"}


@dataclass(frozen=True)
class RunConfig:
    topology: SkinTopology
    model: TaxelModel
    channel: SensorChannelConfig
    contacts: tuple[ContactSpec, ...] = ()
    poses: dict = field(default_factory=dict)
    output_dir: str = "out"
    units: dict = field(default_factory=lambda: dict(DEFAULT_UNITS))

    @property
    def seed(self) -> int:
        return self.channel.seed

    def with_seed(self, seed: int | None) -> "RunConfig":
        if seed is None:
            return self
        return replace(self, channel=replace(self.channel, seed=seed))

    def with_rate(self, rate: float | None) -> "RunConfig":
        if rate is None:
            return self
        try:
            return replace(self, channel=replace(self.channel, sample_rate=rate))
        except DomainError as e:
            raise ConfigError(str(e), "--rate") from None


def _check_keys(table: dict, allowed: set[str], where: str) -> None:
    if not isinstance(table, dict):
        raise ConfigError("expected a table", where)
    unknown = sorted(set(table) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s): {', '.join(unknown)}", where or "<root>")


def _num(table: dict, key: str, where: str, default=None, integer: bool = False):
    if key not in table:
        if default is None:
            raise ConfigError("required", f"{where}.{key}" if where else key)
        return default
    v = table[key]
    ok = isinstance(v, int) if integer else isinstance(v, (int, float))
    if isinstance(v, bool) or not ok:
        kind = "an integer" if integer else "a number"
        raise ConfigError(f"expected {kind}, got {v!r}", f"{where}.{key}" if where else key)
    return v if integer else float(v)


def _num_list(table: dict, key: str, where: str, length: int | None, default):
    if key not in table:
        return default
    v = table[key]
    path = f"{where}.{key}"
    if not isinstance(v, list) or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
        raise ConfigError("expected a list of numbers", path)
    if length is not None and len(v) != length:
        raise ConfigError(f"expected {length} values, got {len(v)}", path)
    return tuple(float(x) for x in v)


def _wrap(where: str, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except (DomainError, ValueError, TypeError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(str(e), where) from None


def _model(doc: dict) -> TaxelModel:
    taxel = doc.get("taxel", {})
    _check_keys(taxel, {"side_length", "thickness", "base_capacitance", "bend_radius",
                        "m_lateral", "m_bend", "stretch_k"}, "taxel")
    d = TaxelGeometry()
    geom = _wrap("taxel", TaxelGeometry.from_baseline,
                 _num(taxel, "side_length", "taxel", d.side_length),
                 _num(taxel, "thickness", "taxel", d.thickness),
                 _num(taxel, "base_capacitance", "taxel", d.base_capacitance),
                 bend_radius=_num(taxel, "bend_radius", "taxel", d.bend_radius),
                 m_lateral=_num(taxel, "m_lateral", "taxel", d.m_lateral),
                 m_bend=_num(taxel, "m_bend", "taxel", d.m_bend),
                 stretch_k=_num(taxel, "stretch_k", "taxel", d.stretch_k))

    co = doc.get("coefficients", {})
    _check_keys(co, {"axial", "lateral", "bending"}, "coefficients")
    dc = FittedCoefficients()
    coeffs = _wrap("coefficients", FittedCoefficients,
                   _num_list(co, "axial", "coefficients", 2, dc.axial),
                   _num_list(co, "lateral", "coefficients", 3, dc.lateral),
                   _num_list(co, "bending", "coefficients", 3, dc.bending))

    st = doc.get("stiffness", {})
    _check_keys(st, {"force_scale", "max_fraction", "full_scale_force", "full_scale_delta_c"}, "stiffness")
    max_fraction = _num(st, "max_fraction", "stiffness", 0.8)
    if "force_scale" in st:
        stiffness = _wrap("stiffness", StiffnessProfile, geom.thickness,
                          _num(st, "force_scale", "stiffness"), max_fraction)
    else:
        stiffness = _wrap("stiffness", calibrate_stiffness, geom, coeffs,
                          _num(st, "full_scale_force", "stiffness", FULL_SCALE_FORCE),
                          _num(st, "full_scale_delta_c", "stiffness", FULL_SCALE_DELTA_C),
                          max_fraction)
    return TaxelModel(geom, coeffs, stiffness)


def _channel(doc: dict, seed: int) -> SensorChannelConfig:
    ch = doc.get("channel", {})
    _check_keys(ch, {"shielding", "noise_fraction", "measuring_range", "clamp", "quantum", "quantize",
                     "sample_rate", "loop_gap_fraction", "gain_decay_per_1000", "dynamics"}, "channel")
    d = SensorChannelConfig()
    noise = dict(d.noise_fraction)
    if "noise_fraction" in ch:
        nf = ch["noise_fraction"]
        _check_keys(nf, {m.value for m in ShieldingMode}, "channel.noise_fraction")
        for k in nf:
            noise[ShieldingMode(k)] = _num(nf, k, "channel.noise_fraction")
    shielding = ch.get("shielding", d.shielding.value)
    if shielding not in {m.value for m in ShieldingMode}:
        raise ConfigError(f"unknown shielding mode {shielding!r}", "channel.shielding")
    for key in ("quantize", "dynamics"):
        if key in ch and not isinstance(ch[key], bool):
            raise ConfigError("expected true or false", f"channel.{key}")
    kwargs = dict(
        shielding=ShieldingMode(shielding),
        noise_fraction=noise,
        measuring_range=_num(ch, "measuring_range", "channel", d.measuring_range),
        clamp=_num(ch, "clamp", "channel", d.clamp),
        quantum=_num(ch, "quantum", "channel", d.quantum),
        quantize=ch.get("quantize", d.quantize),
        sample_rate=_num(ch, "sample_rate", "channel", d.sample_rate),
        seed=seed,
        loop_gap_fraction=_num(ch, "loop_gap_fraction", "channel", d.loop_gap_fraction),
        gain_decay_per_1000=_num(ch, "gain_decay_per_1000", "channel", d.gain_decay_per_1000),
    )
    if not ch.get("dynamics", True):
        kwargs.update(noise_fraction={m: 0.0 for m in ShieldingMode}, loop_gap_fraction=0.0,
                      gain_decay_per_1000=0.0, quantize=False)
    return _wrap("channel", SensorChannelConfig, **kwargs)


def _topology(doc: dict):
    topo = doc.get("topology", {})
    _check_keys(topo, {"pitch", "sections"}, "topology")
    pitch = _num(topo, "pitch", "topology", DEFAULT_PITCH)
    raw = topo.get("sections")
    if raw is None:
        raw = [{"link_id": l, "rows": r, "cols": c, "count": n} for l, r, c, n in REFERENCE_SECTIONS]
    if not isinstance(raw, list) or not raw:
        raise ConfigError("expected a non-empty array of tables", "topology.sections")
    sections, poses, nxt = [], {}, 0
    for k, sec in enumerate(raw):
        where = f"topology.sections[{k}]"
        _check_keys(sec, {"link_id", "rows", "cols", "count", "first_index",
                          "lateral_ratio", "bend_angle", "stretch"}, where)
        link = sec.get("link_id")
        if not isinstance(link, str) or not link:
            raise ConfigError("required string", f"{where}.link_id")
        rows = _num(sec, "rows", where, integer=True)
        cols = _num(sec, "cols", where, integer=True)
        count = _num(sec, "count", where, rows * cols, integer=True)
        first = _num(sec, "first_index", where, nxt, integer=True)
        section = _wrap(where, SkinSection.grid, link, rows, cols, count, first, pitch)
        sections.append(section)
        nxt = first + count
        pose = JointPose(_num(sec, "lateral_ratio", where, 0.0), _num(sec, "bend_angle", where, 0.0),
                         _num(sec, "stretch", where, 0.0))
        if pose != JointPose():
            poses[link] = pose
    return _wrap("topology", SkinTopology, tuple(sections)), poses


def _contacts(doc: dict, topology: SkinTopology) -> tuple[ContactSpec, ...]:
    raw = doc.get("contacts", [])
    if not isinstance(raw, list):
        raise ConfigError("expected an array of tables", "contacts")
    out = []
    for k, c in enumerate(raw):
        where = f"contacts[{k}]"
        _check_keys(c, {"link_id", "center", "radius", "force", "duration", "start"}, where)
        link = c.get("link_id")
        try:
            topology.section(link)
        except KeyError:
            raise ConfigError(f"unknown link {link!r}", f"{where}.link_id") from None
        center = _num_list(c, "center", where, 2, None)
        if center is None:
            raise ConfigError("required", f"{where}.center")
        force = c.get("force")
        if isinstance(force, (int, float)) and not isinstance(force, bool):
            force = [force]
        force = _num_list({"force": force}, "force", where, None, None) if force is not None else None
        if not force:
            raise ConfigError("required number or list of numbers", f"{where}.force")
        out.append(_wrap(where, ContactSpec, link, center, _num(c, "radius", where),
                         force, _num(c, "duration", where), _num(c, "start", where, 0.0)))
    return tuple(out)


def parse_config(doc: dict) -> RunConfig:
    _check_keys(doc, {"seed", "output_dir", "units", "taxel", "coefficients", "stiffness",
                      "channel", "topology", "contacts"}, "")
    seed = _num(doc, "seed", "", 0, integer=True)
    if seed < 0:
        raise ConfigError("must be non-negative", "seed")
    units = dict(DEFAULT_UNITS)
    if "units" in doc:
        _check_keys(doc["units"], set(DEFAULT_UNITS), "units")
        for k, v in doc["units"].items():
            if v != DEFAULT_UNITS[k]:
                raise ConfigError(f"only {DEFAULT_UNITS[k]!r} is supported, got {v!r}", f"units.{k}")
    output_dir = doc.get("output_dir", "out")
    if not isinstance(output_dir, str):
        raise ConfigError("expected a string", "output_dir")
    model = _model(doc)
    channel = _channel(doc, seed)
    topology, poses = _topology(doc)
    for link, pose in poses.items():
        _wrap(f"topology.{link}", model.capacitance, 0.0, pose.lateral_ratio, pose.bend_angle, pose.stretch)
    contacts = _contacts(doc, topology)
    return RunConfig(topology, model, channel, contacts, poses, output_dir, units)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(e.strerror or str(e), str(path)) from None
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(str(e), str(path)) from None
    try:
        return parse_config(doc)
    except ConfigError as e:
        raise ConfigError(str(e), str(path)) from None


def default_config() -> RunConfig:
    return parse_config({})
