"""Non-ideal sensor behaviour layered on top of the ideal capacitance.

Noise fractions are peak-to-peak bands expressed as a fraction of the
capacitance measuring range; one band is taken as six Gaussian sigmas.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

from capskin.capmodel import FULL_SCALE_FORCE, TaxelModel
from capskin.errors import DomainError
from capskin.metrics import hysteresis_error


class ShieldingMode(enum.Enum):
    UNSHIELDED = "unshielded"
    ACTIVE_ONLY = "active_only"
    ACTIVE_PASSIVE = "active_passive"


DEFAULT_NOISE_FRACTION = {
    ShieldingMode.UNSHIELDED: 0.142,
    ShieldingMode.ACTIVE_ONLY: 0.052,
    ShieldingMode.ACTIVE_PASSIVE: 0.032,
}
DEFAULT_LOOP_GAP = 0.054
DEFAULT_DECAY_PER_1000 = 0.00054
DRIFT_GAIN_FLOOR = 0.9

# standard press-release cycle used to tune the hysteresis rate
CYCLE_PEAK_N = 40.0
CYCLE_PERIOD_S = 10.0
CYCLE_RATE_HZ = 200.0


@dataclass(frozen=True)
class SensorChannelConfig:
    """Acquisition settings shared by every channel of a skin."""

    shielding: ShieldingMode = ShieldingMode.ACTIVE_PASSIVE
    noise_fraction: dict = field(default_factory=lambda: dict(DEFAULT_NOISE_FRACTION))
    measuring_range: float = 5.0
    clamp: float = 15.0
    quantum: float = 0.0005
    quantize: bool = True
    sample_rate: float = 200.0
    seed: int = 0
    loop_gap_fraction: float = DEFAULT_LOOP_GAP
    gain_decay_per_1000: float = DEFAULT_DECAY_PER_1000

    def __post_init__(self):
        if isinstance(self.shielding, str):
            object.__setattr__(self, "shielding", ShieldingMode(self.shielding))
        fractions = {ShieldingMode(k): float(v) for k, v in self.noise_fraction.items()}
        missing = set(ShieldingMode) - set(fractions)
        if missing:
            raise DomainError(f"noise fraction missing for {sorted(m.value for m in missing)}")
        object.__setattr__(self, "noise_fraction", fractions)
        u, a, ap = (fractions[m] for m in ShieldingMode)
        if min(u, a, ap) < 0 or not u >= a >= ap:
            raise DomainError("noise fractions must satisfy unshielded >= active >= active+passive >= 0")
        if self.quantum <= 0:
            raise DomainError("quantum must be positive")
        if self.measuring_range <= 0 or self.clamp <= self.measuring_range:
            raise DomainError("need 0 < measuring_range < clamp")
        if not 100.0 <= self.sample_rate <= 400.0:
            raise DomainError(f"sample rate {self.sample_rate} Hz outside 100-400 Hz")
        if not 0.0 <= self.loop_gap_fraction <= 0.2:
            raise DomainError("loop_gap_fraction must lie in [0, 0.2]")
        if not 0.0 <= self.gain_decay_per_1000 < 1.0:
            raise DomainError("gain_decay_per_1000 must lie in [0, 1)")

    @classmethod
    def ideal(cls, **kw) -> "SensorChannelConfig":
        """All non-idealities off: the dynamics layer becomes the identity."""
        kw.setdefault("noise_fraction", {m: 0.0 for m in ShieldingMode})
        kw.setdefault("loop_gap_fraction", 0.0)
        kw.setdefault("gain_decay_per_1000", 0.0)
        kw.setdefault("quantize", False)
        return cls(**kw)

    @property
    def noise_sigma(self) -> float:
        return self.noise_fraction[self.shielding] * self.measuring_range / 6.0

    def to_dict(self) -> dict:
        return {
            "shielding": self.shielding.value,
            "noise_fraction": {k.value: v for k, v in self.noise_fraction.items()},
            "measuring_range": self.measuring_range,
            "clamp": self.clamp,
            "quantum": self.quantum,
            "quantize": self.quantize,
            "sample_rate": self.sample_rate,
            "seed": self.seed,
            "loop_gap_fraction": self.loop_gap_fraction,
            "gain_decay_per_1000": self.gain_decay_per_1000,
        }


def apply_noise(c, cfg: SensorChannelConfig, rng: np.random.Generator):
    """Add zero-mean Gaussian noise; works on scalars and arrays."""
    sigma = cfg.noise_sigma
    if sigma == 0:
        return c
    if np.ndim(c) == 0:
        return float(c) + float(rng.normal(0.0, sigma))
    return np.asarray(c, dtype=float) + rng.normal(0.0, sigma, size=np.shape(c))


def quantize_clamp(c, cfg: SensorChannelConfig):
    """Round to the converter resolution (ties to even), then clamp to its range."""
    if isinstance(c, (float, int)):
        q = round(c / cfg.quantum) * cfg.quantum
        return min(max(q, -cfg.clamp), cfg.clamp)
    q = np.round(np.asarray(c, dtype=float) / cfg.quantum) * cfg.quantum
    out = np.clip(q, -cfg.clamp, cfg.clamp)
    return float(out) if out.ndim == 0 else out


# -- hysteresis ---------------------------------------------------------------


@dataclass(frozen=True)
class HysteresisState:
    """First-order lag between the ideal and the reported capacitance.

    ``relaxation_rate`` of ``None`` means: derive it from ``loop_gap_fraction``
    using :func:`tune_relaxation_rate`. ``output`` of ``None`` means the
    channel has not seen a target yet and starts at equilibrium.
    """

    output: float | None = None
    loop_gap_fraction: float = DEFAULT_LOOP_GAP
    relaxation_rate: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.loop_gap_fraction <= 0.2:
            raise DomainError("loop_gap_fraction must lie in [0, 0.2]")
        if self.relaxation_rate is not None and self.relaxation_rate <= 0:
            raise DomainError("relaxation_rate must be positive")

    @property
    def rate(self) -> float:
        if self.relaxation_rate is not None:
            return self.relaxation_rate
        if self.loop_gap_fraction == 0:
            return math.inf
        return tune_relaxation_rate(self.loop_gap_fraction)


def apply_hysteresis(state: HysteresisState, target: float, dt: float):
    """Relax the output toward ``target`` over ``dt`` seconds.

    Returns ``(new_state, output)``.
    """
    if not dt > 0:
        raise DomainError(f"dt must be positive, got {dt}")
    rate = state.rate
    if state.output is None or math.isinf(rate):
        out = float(target)
    else:
        out = state.output + (target - state.output) * -math.expm1(-rate * dt)
    return replace(state, output=out), out


def relax_trace(targets, dt: float, rate: float, start: float | None = None) -> np.ndarray:
    """Run the relaxation over a whole target series (same update as above)."""
    t = np.asarray(targets, dtype=float)
    out = np.empty_like(t)
    if t.size == 0:
        return out
    if math.isinf(rate):
        out[:] = t
        return out
    k = -math.expm1(-rate * dt)
    y = t[0] if start is None else start
    for i, target in enumerate(t):
        y = y + (target - y) * k
        out[i] = y
    return out


def standard_cycle(peak: float = CYCLE_PEAK_N, period: float = CYCLE_PERIOD_S, rate_hz: float = CYCLE_RATE_HZ):
    """Triangular 0 -> peak -> 0 force profile. Returns ``(t, force)``."""
    n = int(round(period * rate_hz))
    t = np.arange(n + 1) / rate_hz
    force = peak * (1.0 - np.abs(2.0 * t / period - 1.0))
    return t, force


def cycle_branches(force, estimate):
    """Split one press-release trace at its peak into loading and unloading."""
    force = np.asarray(force)
    estimate = np.asarray(estimate)
    k = int(np.argmax(force))
    return (force[: k + 1], estimate[: k + 1]), (force[k:], estimate[k:])


def loop_gap(rate: float, model: TaxelModel | None = None, range_n: float = FULL_SCALE_FORCE) -> float:
    """Force-equivalent hysteresis gap (fraction of range) on the standard cycle."""
    model = model or TaxelModel()
    t, force = standard_cycle()
    target = model.baseline + model.delta_c(force)
    out = relax_trace(target, 1.0 / CYCLE_RATE_HZ, rate)
    est = model.force_from_delta(out - model.baseline)
    loading, unloading = cycle_branches(force, est)
    return hysteresis_error(loading, unloading, range_n)[1]


@lru_cache(maxsize=32)
def tune_relaxation_rate(gap_fraction: float, model: TaxelModel | None = None) -> float:
    """Bisect for the relaxation rate whose standard-cycle gap is ``gap_fraction``."""
    if not 0 < gap_fraction <= 0.2:
        raise DomainError("gap fraction must lie in (0, 0.2]")
    model = model or TaxelModel()
    # gap is monotone in the rate above ~1/s; slower lags never reach the peak
    lo, hi = 1.0, 1e4
    if not loop_gap(hi, model) < gap_fraction < loop_gap(lo, model):
        raise DomainError(f"gap fraction {gap_fraction} not reachable")
    return brentq(lambda r: loop_gap(r, model) - gap_fraction, lo, hi, xtol=1e-12, rtol=1e-12)


# -- drift --------------------------------------------------------------------


@dataclass
class DriftState:
    interaction_count: int = 0
    gain_decay_per_1000: float = DEFAULT_DECAY_PER_1000

    def __post_init__(self):
        if self.interaction_count < 0:
            raise DomainError("interaction_count must be non-negative")


def apply_drift(state: DriftState, gain: float = 1.0) -> float:
    """Sensitivity gain after wear, floored at 0.9."""
    if state.interaction_count < 0:
        raise DomainError("interaction_count must be non-negative")
    decayed = gain * (1.0 - state.gain_decay_per_1000 * state.interaction_count / 1000.0)
    return max(DRIFT_GAIN_FLOOR, decayed)
