"""Skin layout, electrical addressing and contact localisation.

Each link is modelled as an unwrapped rectangle with square taxels on a
regular pitch grid. Surface coordinates ``(u, v)`` are in mm with the origin
at the corner of the grid; taxel ``(row, col)`` covers
``[col*p, (col+1)*p] x [row*p, (row+1)*p]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from capskin.capmodel import TaxelModel
from capskin.dynamics import SensorChannelConfig, ShieldingMode
from capskin.errors import DomainError

MUX_COUNT = 8
CDC_PER_MUX = 7
CHANNELS_PER_CDC = 4
TAXELS_PER_MUX = CDC_PER_MUX * CHANNELS_PER_CDC
MAX_TAXELS = MUX_COUNT * TAXELS_PER_MUX  # 224
DEFAULT_PITCH = 30.0
REFERENCE_SECTIONS = (("link_1", 4, 5, 19), ("link_2", 4, 5, 19), ("link_3", 3, 3, 9), ("link_4", 3, 3, 9))


def taxel_address(index: int) -> tuple[int, int, int]:
    """Map a controller-wide taxel index to ``(mux, cdc, channel)``."""
    if not 0 <= index < MAX_TAXELS:
        raise DomainError(f"taxel index {index} outside [0, {MAX_TAXELS})")
    mux, rest = divmod(index, TAXELS_PER_MUX)
    cdc, channel = divmod(rest, CHANNELS_PER_CDC)
    return mux, cdc, channel


def taxel_index(mux: int, cdc: int, channel: int) -> int:
    if not (0 <= mux < MUX_COUNT and 0 <= cdc < CDC_PER_MUX and 0 <= channel < CHANNELS_PER_CDC):
        raise DomainError(f"address ({mux}, {cdc}, {channel}) out of range")
    return mux * TAXELS_PER_MUX + cdc * CHANNELS_PER_CDC + channel


@dataclass(frozen=True)
class Taxel:
    index: int
    row: int
    col: int
    u: float
    v: float

    @property
    def address(self) -> tuple[int, int, int]:
        return taxel_address(self.index)


@dataclass(frozen=True)
class SkinSection:
    link_id: str
    grid_rows: int
    grid_cols: int
    taxels: tuple[Taxel, ...]
    pitch: float = DEFAULT_PITCH

    def __post_init__(self):
        if self.grid_rows <= 0 or self.grid_cols <= 0 or self.pitch <= 0:
            raise DomainError(f"{self.link_id}: grid dimensions and pitch must be positive")
        cells = set()
        for tx in self.taxels:
            if not (0 <= tx.row < self.grid_rows and 0 <= tx.col < self.grid_cols):
                raise DomainError(f"{self.link_id}: taxel {tx.index} outside the grid")
            if (tx.row, tx.col) in cells:
                raise DomainError(f"{self.link_id}: two taxels share cell ({tx.row}, {tx.col})")
            cells.add((tx.row, tx.col))
            cu, cv = (tx.col + 0.5) * self.pitch, (tx.row + 0.5) * self.pitch
            if not (math.isclose(tx.u, cu) and math.isclose(tx.v, cv)):
                raise DomainError(f"{self.link_id}: taxel {tx.index} is off the pitch grid")

    @classmethod
    def grid(cls, link_id: str, rows: int, cols: int, count: int | None = None,
             first_index: int = 0, pitch: float = DEFAULT_PITCH) -> "SkinSection":
        """Fill ``count`` cells of a ``rows x cols`` grid in row-major order."""
        count = rows * cols if count is None else count
        if not 0 < count <= rows * cols:
            raise DomainError(f"{link_id}: cannot place {count} taxels on a {rows}x{cols} grid")
        taxels = []
        for k in range(count):
            r, c = divmod(k, cols)
            taxels.append(Taxel(first_index + k, r, c, (c + 0.5) * pitch, (r + 0.5) * pitch))
        return cls(link_id, rows, cols, tuple(taxels), pitch)

    @property
    def extent(self) -> tuple[float, float]:
        return self.grid_cols * self.pitch, self.grid_rows * self.pitch


@dataclass(frozen=True)
class SkinTopology:
    sections: tuple[SkinSection, ...]
    _by_index: dict = field(init=False, repr=False, compare=False)
    _by_link: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        by_index, by_link = {}, {}
        for sec in self.sections:
            if sec.link_id in by_link:
                raise DomainError(f"duplicate link id {sec.link_id!r}")
            by_link[sec.link_id] = sec
            for tx in sec.taxels:
                if tx.index in by_index:
                    raise DomainError(f"address collision: taxel index {tx.index} used twice")
                taxel_address(tx.index)
                by_index[tx.index] = (sec, tx)
        if len(by_index) > MAX_TAXELS:
            raise DomainError(f"{len(by_index)} taxels exceed the {MAX_TAXELS} a controller supports")
        object.__setattr__(self, "_by_index", by_index)
        object.__setattr__(self, "_by_link", by_link)

    @property
    def total_taxel_count(self) -> int:
        return len(self._by_index)

    def section(self, link_id: str) -> SkinSection:
        try:
            return self._by_link[link_id]
        except KeyError:
            raise KeyError(f"unknown link {link_id!r}") from None

    def taxel(self, index: int) -> Taxel:
        return self._by_index[index][1]

    def link_of(self, index: int) -> str:
        return self._by_index[index][0].link_id

    def ordered_indices(self) -> list[int]:
        """Taxel indices in scan (address) order."""
        return sorted(self._by_index)

    def address_table(self) -> list[dict]:
        rows = []
        for i in self.ordered_indices():
            sec, tx = self._by_index[i]
            mux, cdc, ch = tx.address
            rows.append({"index": i, "link_id": sec.link_id, "row": tx.row, "col": tx.col,
                         "u_mm": tx.u, "v_mm": tx.v, "mux": mux, "cdc": cdc, "channel": ch})
        return rows

    def to_dict(self) -> dict:
        return {
            "total_taxel_count": self.total_taxel_count,
            "sections": [
                {
                    "link_id": s.link_id,
                    "grid_rows": s.grid_rows,
                    "grid_cols": s.grid_cols,
                    "pitch_mm": s.pitch,
                    "taxels": [
                        {"index": t.index, "row": t.row, "col": t.col, "u_mm": t.u, "v_mm": t.v,
                         "address": list(t.address)}
                        for t in s.taxels
                    ],
                }
                for s in self.sections
            ],
        }


def build_topology(layout, pitch: float = DEFAULT_PITCH) -> SkinTopology:
    """Build contiguous-addressed sections from ``(link_id, rows, cols, count)`` tuples."""
    sections, nxt = [], 0
    for link_id, rows, cols, count in layout:
        sec = SkinSection.grid(link_id, rows, cols, count, first_index=nxt, pitch=pitch)
        sections.append(sec)
        nxt += len(sec.taxels)
    return SkinTopology(tuple(sections))


def build_reference_topology() -> SkinTopology:
    """Four arm sections (19 + 19 + 9 + 9 = 56 taxels)."""
    return build_topology(REFERENCE_SECTIONS)


# -- contacts ------------------------------------------------------------------


@dataclass(frozen=True)
class ContactSpec:
    """A circular press on one link with a force profile over time.

    ``force_profile`` samples are spread evenly over ``[start, start + duration]``
    and linearly interpolated; a single value means constant force.
    """

    link_id: str
    center: tuple[float, float]
    footprint_radius: float
    force_profile: tuple[float, ...]
    duration: float
    start: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "force_profile", tuple(float(f) for f in self.force_profile))
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        if self.footprint_radius <= 0:
            raise DomainError("footprint radius must be positive")
        if not self.force_profile or min(self.force_profile) < 0:
            raise DomainError("force profile must be non-empty and non-negative")
        if self.duration <= 0:
            raise DomainError("duration must be positive")

    def force_at(self, t: float) -> float:
        local = t - self.start
        if local < 0 or local > self.duration:
            return 0.0
        prof = self.force_profile
        if len(prof) == 1:
            return prof[0]
        grid = np.linspace(0.0, self.duration, len(prof))
        return float(np.interp(local, grid, prof))


def _quadrant_area(x: float, y: float, r: float) -> float:
    """Signed area of the disc (centre 0, radius r) inside ``[0, x] x [0, y]``."""
    sx, sy = math.copysign(1.0, x), math.copysign(1.0, y)
    x, y = min(abs(x), r), min(abs(y), r)
    if x == 0 or y == 0:
        return 0.0
    if x * x + y * y <= r * r:
        return sx * sy * x * y
    xs = math.sqrt(r * r - y * y)

    def g(t):
        return 0.5 * (t * math.sqrt(max(r * r - t * t, 0.0)) + r * r * math.asin(t / r))

    return sx * sy * (y * xs + g(x) - g(xs))


def circle_rect_overlap(cx: float, cy: float, r: float, x0: float, x1: float, y0: float, y1: float) -> float:
    """Exact area of a disc intersected with an axis-aligned rectangle."""
    x0, x1, y0, y1 = x0 - cx, x1 - cx, y0 - cy, y1 - cy
    area = (_quadrant_area(x1, y1, r) - _quadrant_area(x0, y1, r)
            - _quadrant_area(x1, y0, r) + _quadrant_area(x0, y0, r))
    return max(area, 0.0)


def footprint_weights(section: SkinSection, center, radius: float) -> dict[int, float]:
    """Overlap area between a circular footprint and each taxel of a section."""
    cu, cv = center
    p = section.pitch
    out = {}
    for tx in section.taxels:
        x0, y0 = tx.col * p, tx.row * p
        if x0 > cu + radius or x0 + p < cu - radius or y0 > cv + radius or y0 + p < cv - radius:
            continue
        a = circle_rect_overlap(cu, cv, radius, x0, x0 + p, y0, y0 + p)
        if a > 0:
            out[tx.index] = a
    return out


def distribute_force(section: SkinSection, center, radius: float, force: float) -> dict[int, float]:
    weights = footprint_weights(section, center, radius)
    total = sum(weights.values())
    if total == 0 or force == 0:
        return {}
    return {i: force * w / total for i, w in weights.items()}


def project_contact(topo: SkinTopology, spec: ContactSpec, t: float) -> dict[int, float]:
    """Per-taxel force at time ``t``, split by footprint overlap area.

    The forces sum to the contact force whenever the footprint touches at
    least one taxel; a footprint entirely off the taxels yields no forces.
    """
    section = topo.section(spec.link_id)
    return distribute_force(section, spec.center, spec.footprint_radius, spec.force_at(t))


@dataclass(frozen=True)
class ContactEstimate:
    activated: frozenset
    per_taxel_force: dict
    centroid: tuple[float, float] | None
    total_force: float

    @property
    def in_contact(self) -> bool:
        return self.centroid is not None


def contact_centroid(topo: SkinTopology, forces: dict[int, float], threshold: float,
                     weighted: bool = True) -> ContactEstimate:
    """Locate a contact as the (force-weighted) mean of activated taxel centres.

    Pass forces from one link at a time; centres of different links live in
    unrelated surface frames. No activated taxel gives ``centroid=None``.
    """
    if threshold < 0:
        raise DomainError("threshold must be non-negative")
    active = {i: float(f) for i, f in forces.items() if f > threshold}
    if not active:
        return ContactEstimate(frozenset(), {}, None, 0.0)
    idx = sorted(active)
    w = np.array([active[i] for i in idx]) if weighted else np.ones(len(idx))
    uv = np.array([(topo.taxel(i).u, topo.taxel(i).v) for i in idx])
    centroid = tuple(float(v) for v in (w @ uv) / w.sum())
    return ContactEstimate(frozenset(idx), active, centroid, float(sum(active.values())))


def default_activation_threshold(model=None, cfg=None) -> float:
    """Three noise sigmas of the active+passive shielded channel, in newtons."""
    model = model or TaxelModel()
    cfg = cfg or SensorChannelConfig()
    sigma = cfg.noise_fraction[ShieldingMode.ACTIVE_PASSIVE] * cfg.measuring_range / 6.0
    return float(model.force_from_delta(3.0 * sigma))
