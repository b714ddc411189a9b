"""Least-squares model fits and capacitance-to-force calibration."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
from scipy.optimize import isotonic_regression
from scipy.stats import spearmanr

from capskin.capmodel import FittedCoefficients, bending_capacitance, lateral_capacitance
from capskin.errors import CalibrationError, DataError, RankError

DEFAULT_KNOTS = 64
FILTER_ANALYTICAL_WEIGHT = 0.4
# binned C/F rank correlation below this is treated as non-invertible
MIN_RANK_CORRELATION = 0.5


@dataclass(frozen=True)
class SampleSet:
    """Paired observations of some deformation variable and capacitance."""

    x: np.ndarray
    c: np.ndarray
    units: str = "mm"
    source: str = "simulated"
    seed: int | None = None

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).ravel()
        c = np.asarray(self.c, dtype=float).ravel()
        if x.shape != c.shape:
            raise DataError(f"x has {x.size} values but c has {c.size}")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(c))):
            raise DataError("samples must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "c", c)

    def __len__(self):
        return self.x.size


def _lstsq(design: np.ndarray, y: np.ndarray, min_distinct: int, x: np.ndarray) -> np.ndarray:
    n_distinct = np.unique(x).size
    if n_distinct < min_distinct:
        raise RankError(f"need at least {min_distinct} distinct abscissae, got {n_distinct}")
    coef, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    if rank < design.shape[1]:
        raise RankError(f"design matrix has rank {rank} < {design.shape[1]}")
    return coef


def fit_inverse_law(samples: SampleSet) -> tuple[float, float]:
    """OLS fit of ``c = a/h + b`` via the substitution ``u = 1/h``."""
    if np.any(samples.x <= 0):
        raise DataError("thickness values must be positive")
    u = 1.0 / samples.x
    design = np.column_stack([u, np.ones_like(u)])
    a, b = _lstsq(design, samples.c, 2, samples.x)
    return float(a), float(b)


def fit_poly2(samples: SampleSet) -> tuple[float, float, float]:
    """Least-squares quadratic ``c = p2*x^2 + p1*x + p0``."""
    x = samples.x
    design = np.column_stack([x * x, x, np.ones_like(x)])
    p2, p1, p0 = _lstsq(design, samples.c, 3, x)
    return float(p2), float(p1), float(p0)


def model_filter(analytical, measured, analytical_weight: float = FILTER_ANALYTICAL_WEIGHT):
    """Blend the model prediction with the measurement (0.4 / 0.6 by default)."""
    if not 0.0 <= analytical_weight <= 1.0:
        raise ValueError("analytical_weight must lie in [0, 1]")
    return analytical_weight * analytical + (1.0 - analytical_weight) * measured


def joint_motion_offset(coeffs: FittedCoefficients, alpha: float, theta: float) -> float:
    """Capacitance added by lateral compression and bending at a joint.

    Subtract this from a taxel's reading to recover the pure contact signal.
    """
    return (lateral_capacitance(coeffs, alpha) - coeffs.lateral[2]) + (
        bending_capacitance(coeffs, theta) - coeffs.bending[2]
    )


# -- force calibration ---------------------------------------------------------


class ForceEstimate(NamedTuple):
    force: float
    out_of_range: bool


@dataclass(frozen=True)
class CalibrationCurve:
    """Monotone piecewise-linear map from capacitance change to force.

    Residuals are measured between the per-branch binned means and the curve,
    so a perfectly repeatable sensor has zero residual and a hysteretic one
    shows roughly half its loop gap.
    """

    capacitance: np.ndarray
    force: np.ndarray
    residual_rms: float = 0.0
    residual_max: float = 0.0
    units: dict = field(default_factory=lambda: {"capacitance": "pF", "force": "N"}, compare=False)

    def __post_init__(self):
        c = np.asarray(self.capacitance, dtype=float)
        f = np.asarray(self.force, dtype=float)
        if c.ndim != 1 or c.shape != f.shape or c.size < 2:
            raise CalibrationError("curve needs at least two matching knots")
        if np.any(np.diff(c) <= 0) or np.any(np.diff(f) <= 0):
            raise CalibrationError("knots must be strictly increasing in both coordinates")
        object.__setattr__(self, "capacitance", c)
        object.__setattr__(self, "force", f)

    @property
    def range(self) -> tuple[float, float]:
        return float(self.capacitance[0]), float(self.capacitance[-1])

    def to_dict(self) -> dict:
        return {
            "knots": {
                "capacitance_pF": self.capacitance.tolist(),
                "force_N": self.force.tolist(),
            },
            "residual": {"rms_N": self.residual_rms, "max_N": self.residual_max},
            "range_pF": list(self.range),
            "units": dict(self.units),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CalibrationCurve":
        return cls(
            np.asarray(d["knots"]["capacitance_pF"]),
            np.asarray(d["knots"]["force_N"]),
            d["residual"]["rms_N"],
            d["residual"]["max_N"],
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "CalibrationCurve":
        return cls.from_dict(json.loads(Path(path).read_text()))


def estimate_forces(curve: CalibrationCurve, c) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`estimate_force`. Returns ``(forces, out_of_range)``."""
    c = np.asarray(c, dtype=float)
    lo, hi = curve.range
    below = c < lo
    above = c > hi
    f = np.interp(c, curve.capacitance, curve.force)
    f = np.where(below, 0.0, f)
    return f, below | above


def estimate_force(curve: CalibrationCurve, c: float) -> ForceEstimate:
    """Interpolate force for one reading.

    Readings below the curve read as no contact (0 N); readings above clamp to
    the top knot. Either case sets ``out_of_range``.
    """
    f, flag = estimate_forces(curve, c)
    return ForceEstimate(float(f), bool(flag))


def _split_branches(cycles):
    load_c, load_f, unload_c, unload_f = [], [], [], []
    for i, cycle in enumerate(cycles):
        c, f = (np.asarray(v, dtype=float).ravel() for v in cycle)
        if c.shape != f.shape or c.size < 2:
            raise DataError(f"cycle {i}: need matching c/f arrays with >= 2 samples")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(f))):
            raise DataError(f"cycle {i}: non-finite values")
        k = int(np.argmax(f))
        load_c.append(c[: k + 1])
        load_f.append(f[: k + 1])
        unload_c.append(c[k:])
        unload_f.append(f[k:])
    return (np.concatenate(load_c), np.concatenate(load_f)), (
        np.concatenate(unload_c),
        np.concatenate(unload_f),
    )


def _bin_means(c, f, edges):
    idx = np.clip(np.searchsorted(edges, c, side="right") - 1, 0, len(edges) - 2)
    k = len(edges) - 1
    counts = np.bincount(idx, minlength=k)
    sc = np.bincount(idx, weights=c, minlength=k)
    sf = np.bincount(idx, weights=f, minlength=k)
    with np.errstate(invalid="ignore", divide="ignore"):
        return sc / counts, sf / counts, counts


def _merge_ties(c, f, w):
    """Collapse runs of equal force (or equal capacitance) into single knots."""
    out_c, out_f, out_w = [c[0]], [f[0]], [w[0]]
    for ci, fi, wi in zip(c[1:], f[1:], w[1:]):
        if fi <= out_f[-1] or ci <= out_c[-1]:
            tw = out_w[-1] + wi
            out_c[-1] = (out_c[-1] * out_w[-1] + ci * wi) / tw
            out_f[-1] = max(out_f[-1], fi)
            out_w[-1] = tw
        else:
            out_c.append(ci)
            out_f.append(fi)
            out_w.append(wi)
    return np.array(out_c), np.array(out_f), np.array(out_w)


def fit_force_calibration(cycles: Sequence, knots: int = DEFAULT_KNOTS) -> CalibrationCurve:
    """Build a monotone capacitance-to-force curve from press-release traces.

    Each cycle is a ``(capacitance, force)`` pair of arrays and is split at its
    force peak into a loading and an unloading branch. Samples are binned by
    capacitance into ``knots`` equal-width bins; inside each bin the loading
    and unloading means are averaged with equal weight, which centres the
    curve inside any hysteresis loop. Pool-adjacent-violators then makes the
    binned forces monotone, and the first and last segments are extended to
    the observed capacitance range (forces floored at 0 N).
    """
    if knots < 2:
        raise ValueError("need at least 2 knots")
    if len(cycles) == 0:
        raise DataError("no cycles given")
    (lc, lf), (uc, uf) = _split_branches(cycles)
    c_all = np.concatenate([lc, uc])
    c_lo, c_hi = float(c_all.min()), float(c_all.max())
    if not c_hi > c_lo:
        raise CalibrationError("capacitance never changes", {"c_min": c_lo, "c_max": c_hi})
    edges = np.linspace(c_lo, c_hi, knots + 1)
    lcm, lfm, ln = _bin_means(lc, lf, edges)
    ucm, ufm, un = _bin_means(uc, uf, edges)

    has_l, has_u = ln > 0, un > 0
    both = has_l & has_u
    bc = np.where(both, 0.5 * (lcm + ucm), np.where(has_l, lcm, ucm))
    bf = np.where(both, 0.5 * (lfm + ufm), np.where(has_l, lfm, ufm))
    occupied = has_l | has_u
    bc, bf, bw = bc[occupied], bf[occupied], (ln + un)[occupied].astype(float)

    rho = spearmanr(bc, bf).statistic if bc.size > 2 else 1.0
    if not (rho >= MIN_RANK_CORRELATION):
        raise CalibrationError(
            "capacitance is not monotone in force",
            {"rank_correlation": float(rho), "occupied_bins": int(bc.size)},
        )
    iso = isotonic_regression(bf, weights=bw, increasing=True).x
    kc, kf, _ = _merge_ties(bc, iso, bw)
    if kc.size < 2:
        raise CalibrationError("fewer than two distinct knots after monotone projection",
                               {"occupied_bins": int(bc.size)})

    lo_f = kf[0] + (kf[1] - kf[0]) / (kc[1] - kc[0]) * (c_lo - kc[0])
    hi_f = kf[-1] + (kf[-1] - kf[-2]) / (kc[-1] - kc[-2]) * (c_hi - kc[-1])
    if c_lo < kc[0]:
        lo_f = max(lo_f, 0.0)
        if lo_f < kf[0]:
            kc, kf = np.insert(kc, 0, c_lo), np.insert(kf, 0, lo_f)
    if c_hi > kc[-1] and hi_f > kf[-1]:
        kc, kf = np.append(kc, c_hi), np.append(kf, hi_f)

    curve = CalibrationCurve(kc, kf)
    resid = []
    for cm, fm, present in ((lcm, lfm, has_l), (ucm, ufm, has_u)):
        resid.append(fm[present] - np.interp(cm[present], kc, kf))
    resid = np.concatenate(resid)
    return CalibrationCurve(
        kc, kf, float(np.sqrt(np.mean(resid**2))), float(np.max(np.abs(resid)))
    )


# -- CSV ingestion -------------------------------------------------------------


def _read_csv(path, header: list[str]) -> np.ndarray:
    path = Path(path)
    try:
        fh = path.open(newline="", encoding="utf-8")
    except OSError as e:
        raise DataError(f"{path}: {e.strerror}") from e
    with fh:
        reader = csv.reader(fh)
        try:
            first = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if [h.strip() for h in first] != header:
            raise DataError(f"{path}: line 1: expected header {','.join(header)!r}, got {','.join(first)!r}")
        rows = []
        for row in reader:
            line = reader.line_num
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: line {line}: expected {len(header)} fields, got {len(row)}")
            try:
                values = [float(cell) for cell in row]
            except ValueError:
                raise DataError(f"{path}: line {line}: non-numeric value in {row!r}") from None
            if not all(math.isfinite(v) for v in values):
                raise DataError(f"{path}: line {line}: non-finite value")
            rows.append(values)
    if not rows:
        raise DataError(f"{path}: no data rows")
    return np.array(rows)


def read_samples_csv(path, units: str = "mm") -> SampleSet:
    data = _read_csv(path, ["x", "c"])
    return SampleSet(data[:, 0], data[:, 1], units=units, source=str(path))


def split_cycles(t, c, f, threshold: float | None = None) -> list[tuple[np.ndarray, np.ndarray]]:
    """Cut a continuous trace into press-release cycles.

    A press is a maximal run of samples with force above ``threshold``
    (default 2% of the peak force). Cycles are cut halfway through the resting
    gap between consecutive presses, so each keeps its low-force tails.
    """
    f = np.asarray(f, dtype=float)
    c = np.asarray(c, dtype=float)
    if np.any(np.diff(np.asarray(t, dtype=float)) < 0):
        raise DataError("time column must be non-decreasing")
    if threshold is None:
        threshold = 0.02 * float(f.max())
    active = np.concatenate([[False], f > threshold, [False]]).astype(np.int8)
    edges = np.diff(active)
    starts, ends = np.flatnonzero(edges == 1), np.flatnonzero(edges == -1)
    if starts.size == 0:
        return []
    cuts = [0, *((ends[:-1] + starts[1:]) // 2), f.size]
    return [(c[a:b], f[a:b]) for a, b in zip(cuts[:-1], cuts[1:])]


def read_cycles_csv(path) -> list[tuple[np.ndarray, np.ndarray]]:
    """Load a ``t,c,f`` trace and split it into cycles.

    ``c`` is the capacitance change from the unloaded baseline in pF.
    """
    data = _read_csv(path, ["t", "c", "f"])
    cycles = split_cycles(data[:, 0], data[:, 1], data[:, 2])
    if not cycles:
        raise DataError(f"{path}: no press-release cycles found")
    return cycles


def write_cycles_csv(path, cycles, rate_hz: float = 200.0) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "c", "f"])
        k = 0
        for c, f in cycles:
            for ci, fi in zip(c, f):
                w.writerow([f"{k / rate_hz:.6f}", repr(float(ci)), repr(float(fi))])
                k += 1
