"""Scalar characterization metrics for force and capacitance traces.

All functions are pure and take plain sequences or numpy arrays.
"""

from __future__ import annotations

import numpy as np

from capskin.errors import DataError, DomainError

FORCE_RANGE_N = 55.0
CAPACITANCE_RANGE_PF = 5.0
MIN_NOISE_SAMPLES = 100
DEFAULT_SMOOTHNESS_EPS = 1e-3


def relative_error(estimates, truth, range_n: float = FORCE_RANGE_N) -> tuple[float, float]:
    """Mean and max absolute force error as fractions of the measuring range."""
    est = np.asarray(estimates, dtype=float).ravel()
    ref = np.asarray(truth, dtype=float).ravel()
    if est.shape != ref.shape:
        raise DataError(f"length mismatch: {est.size} estimates vs {ref.size} truth values")
    if est.size == 0:
        raise DataError("need at least one sample")
    if range_n <= 0:
        raise DomainError("range must be positive")
    err = np.abs(est - ref)
    return float(err.mean() / range_n), float(err.max() / range_n)


def _branch(branch) -> tuple[np.ndarray, np.ndarray]:
    true, est = (np.asarray(v, dtype=float).ravel() for v in branch)
    if true.shape != est.shape or true.size < 2:
        raise DataError("each branch needs matching true/estimate arrays of length >= 2")
    order = np.argsort(true, kind="stable")
    return true[order], est[order]


def hysteresis_error(loading, unloading, range_n: float = FORCE_RANGE_N) -> tuple[float, float]:
    """Largest loading/unloading discrepancy over the shared true-force span.

    Each branch is a ``(true_force, estimated_force)`` pair of arrays. Both are
    linearly interpolated onto the union of their sample points inside the
    overlap. Returns ``(newtons, fraction_of_range)``.
    """
    lt, le = _branch(loading)
    ut, ue = _branch(unloading)
    lo, hi = max(lt[0], ut[0]), min(lt[-1], ut[-1])
    if not lo < hi:
        raise DataError("loading and unloading branches do not overlap in true force")
    grid = np.union1d(lt, ut)
    grid = grid[(grid >= lo) & (grid <= hi)]
    gap = float(np.max(np.abs(np.interp(grid, lt, le) - np.interp(grid, ut, ue))))
    return gap, gap / range_n


def noise_band(samples, range_pf: float = CAPACITANCE_RANGE_PF) -> tuple[float, float]:
    """Peak-to-peak noise taken as six sample standard deviations."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < MIN_NOISE_SAMPLES:
        raise DataError(f"need at least {MIN_NOISE_SAMPLES} samples, got {x.size}")
    band = 6.0 * float(np.std(x, ddof=1))
    return band, band / range_pf


def noise_reduction(band_before: float, band_after: float) -> float:
    if band_before <= 0:
        raise DomainError("reference noise band must be positive")
    return 1.0 - band_after / band_before


def smoothness(force, dt: float, epsilon: float = DEFAULT_SMOOTHNESS_EPS):
    """Reciprocal magnitude of the central second difference of ``force``.

    Returns the per-sample series (length ``n - 2``) and its maximum.
    ``epsilon`` floors the denominator so flat or linear stretches stay finite.
    """
    f = np.asarray(force, dtype=float).ravel()
    if f.size < 3:
        raise DataError("smoothness needs at least 3 samples")
    if dt <= 0 or epsilon <= 0:
        raise DomainError("dt and epsilon must be positive")
    second = (f[2:] - 2.0 * f[1:-1] + f[:-2]) / (dt * dt)
    series = 1.0 / np.maximum(np.abs(second), epsilon)
    return series, float(series.max())


def durability_report(accuracy_before: float, accuracy_after: float) -> float:
    """Accuracy drop in percentage points."""
    for v in (accuracy_before, accuracy_after):
        if not 0.0 <= v <= 1.0:
            raise DomainError(f"accuracy {v} outside [0, 1]")
    return (accuracy_before - accuracy_after) * 100.0
