"""Standard characterization battery run on a simulated single taxel.

Every procedure drives a :class:`~capskin.daq.scan.TaxelChannel` sample by
sample, so the same acquisition chain used by the scan loop is exercised.
Results depend only on the configuration and seed.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from capskin.calib import CalibrationCurve, estimate_forces, fit_force_calibration
from capskin.capmodel import FULL_SCALE_FORCE, TaxelModel
from capskin.daq.scan import TaxelChannel
from capskin.dynamics import (
    CYCLE_PEAK_N,
    CYCLE_PERIOD_S,
    SensorChannelConfig,
    ShieldingMode,
    apply_noise,
    cycle_branches,
    quantize_clamp,
    standard_cycle,
)
from capskin.metrics import (
    durability_report,
    hysteresis_error,
    noise_band,
    noise_reduction,
    relative_error,
    smoothness,
)

REST_S = 2.0
CALIBRATION_CYCLES = 10
SWEEP_LEVELS = tuple(float(f) for f in np.linspace(0.0, 40.0, 41))
AVERAGING_WINDOW = 10
SETTLE_S = 1.0
NOISE_SAMPLES = 1_000_000
DURABILITY_PRESSES = 1000
DURABILITY_PEAK_N = 20.0
DURABILITY_LEVELS = tuple(float(f) for f in np.linspace(4.0, 40.0, 10))
DURABILITY_KNOTS = 512


def run_channel(channel: TaxelChannel, forces) -> np.ndarray:
    """Feed a force series through a channel; returns readings minus baseline."""
    dt = 1.0 / channel.cfg.sample_rate
    base = channel.baseline
    return np.array([channel.step(float(f), dt) - base for f in forces])


def _rest(cfg: SensorChannelConfig, seconds: float = REST_S) -> np.ndarray:
    return np.zeros(int(round(seconds * cfg.sample_rate)))


def calibration_cycles(channel: TaxelChannel, n_cycles: int = CALIBRATION_CYCLES,
                       peak: float = FULL_SCALE_FORCE, period: float = CYCLE_PERIOD_S):
    """Record ``n_cycles`` rest + press-release cycles as ``(delta_c, force)`` pairs."""
    _, force = standard_cycle(peak, period, channel.cfg.sample_rate)
    rest = _rest(channel.cfg)
    cycles = []
    for _ in range(n_cycles):
        run_channel(channel, rest)
        cycles.append((run_channel(channel, force), force.copy()))
    return cycles


def press_trace(channel: TaxelChannel, n_cycles: int = CALIBRATION_CYCLES,
                peak: float = FULL_SCALE_FORCE, period: float = CYCLE_PERIOD_S):
    """Continuous rest/press recording ending in rest, as ``(t, delta_c, force)``."""
    _, press = standard_cycle(peak, period, channel.cfg.sample_rate)
    rest = _rest(channel.cfg)
    force = np.concatenate([np.concatenate([rest, press]) for _ in range(n_cycles)] + [rest])
    t = np.arange(force.size) / channel.cfg.sample_rate
    return t, run_channel(channel, force), force


def calibrate_channel(channel: TaxelChannel, knots: int = 64, **kw) -> CalibrationCurve:
    return fit_force_calibration(calibration_cycles(channel, **kw), knots=knots)


def staircase(channel: TaxelChannel, curve: CalibrationCurve, levels=SWEEP_LEVELS,
              window: int = AVERAGING_WINDOW, settle_s: float = SETTLE_S):
    """Hold each force level, average the last ``window`` frames, estimate force."""
    hold = max(int(round(settle_s * channel.cfg.sample_rate)), window)
    means = []
    for level in levels:
        readings = run_channel(channel, np.full(hold, level))
        means.append(readings[-window:].mean())
    est, _ = estimate_forces(curve, np.array(means))
    return np.asarray(levels, dtype=float), est


def accuracy_sweep(model: TaxelModel, cfg: SensorChannelConfig, levels=SWEEP_LEVELS,
                   window: int = AVERAGING_WINDOW):
    """Calibrate on 10 full-scale cycles, then score a 0-40 N staircase.

    Returns ``(mean_fraction, max_fraction, curve, levels, estimates)``.
    """
    channel = TaxelChannel.create(model, cfg, 0)
    curve = calibrate_channel(channel)
    truth, est = staircase(channel, curve, levels, window)
    mean, mx = relative_error(est, truth, FULL_SCALE_FORCE)
    return mean, mx, curve, truth, est


def hysteresis_run(model: TaxelModel, cfg: SensorChannelConfig, n_cycles: int = CALIBRATION_CYCLES):
    """Loop gap on rest + 0-40-0 N cycles with noise switched off.

    Force is read back through the exact inverse of the ideal model so the
    gap reflects the sensor lag only. Returns per-cycle gaps in newtons.
    """
    quiet = replace(cfg, noise_fraction={m: 0.0 for m in ShieldingMode}, gain_decay_per_1000=0.0)
    channel = TaxelChannel.create(model, quiet, 0)
    _, force = standard_cycle(CYCLE_PEAK_N, CYCLE_PERIOD_S, quiet.sample_rate)
    rest = _rest(quiet)
    gaps = []
    for _ in range(n_cycles):
        run_channel(channel, rest)
        est = model.force_from_delta(run_channel(channel, force))
        gaps.append(hysteresis_error(*cycle_branches(force, est), FULL_SCALE_FORCE)[0])
    return np.array(gaps)


def noise_runs(model: TaxelModel, cfg: SensorChannelConfig, n: int = NOISE_SAMPLES) -> dict:
    """Noise band per shielding mode on a constant, unloaded input."""
    out = {}
    for i, mode in enumerate(ShieldingMode):
        mode_cfg = replace(cfg, shielding=mode)
        rng = np.random.default_rng([cfg.seed, 1_000_000 + i])
        samples = apply_noise(np.full(n, model.baseline), mode_cfg, rng)
        if cfg.quantize:
            samples = quantize_clamp(samples, mode_cfg)
        out[mode] = noise_band(samples, cfg.measuring_range)
    return out


def durability_run(model: TaxelModel, cfg: SensorChannelConfig, presses: int = DURABILITY_PRESSES,
                   peak: float = DURABILITY_PEAK_N, levels=DURABILITY_LEVELS):
    """Score force accuracy before and after ``presses`` probe presses.

    Only wear is simulated (noise, lag and quantization off) so the accuracy
    change is attributable to it. Accuracy is one minus the mean per-reading
    relative error over a staircase; the calibration is taken once, before
    the presses. Returns ``(accuracy_before, accuracy_after, interaction_count)``.
    """
    wear_only = replace(
        SensorChannelConfig.ideal(sample_rate=cfg.sample_rate, seed=cfg.seed),
        gain_decay_per_1000=cfg.gain_decay_per_1000,
    )
    channel = TaxelChannel.create(model, wear_only, 0)
    curve = calibrate_channel(channel, knots=DURABILITY_KNOTS, n_cycles=1)
    channel.drift.interaction_count = 0

    def accuracy() -> float:
        # scoring presses are not wear events
        count = channel.drift.interaction_count
        truth, est = staircase(channel, curve, levels, window=1, settle_s=0.0)
        channel.drift.interaction_count = count
        channel.pressed = False
        return float(1.0 - np.mean(np.abs(est - truth) / truth))

    before = accuracy()
    _, press = standard_cycle(peak, 0.5, wear_only.sample_rate)
    gap = _rest(wear_only, 0.05)
    for _ in range(presses):
        run_channel(channel, press)
        run_channel(channel, gap)
    count = channel.drift.interaction_count
    after = accuracy()
    return before, after, count


def taxel_smoothness(model: TaxelModel, cfg: SensorChannelConfig, curve: CalibrationCurve,
                     n_taxels: int = CALIBRATION_CYCLES, window: int = AVERAGING_WINDOW) -> np.ndarray:
    """Maximum smoothness of the estimated force, one full-scale press per taxel.

    Estimates are smoothed with a ``window``-frame moving average and only the
    loaded, in-range part of the press (true force above 1 N) is scored.
    Quantized readings often give exactly linear stretches, so maxima tend to
    sit at the ``1 / epsilon`` clamp.
    """
    kernel = np.ones(window) / window
    maxima = []
    for k in range(n_taxels):
        channel = TaxelChannel.create(model, cfg, k)
        (dc, force), = calibration_cycles(channel, n_cycles=1)
        f_est, clamped = estimate_forces(curve, np.convolve(dc, kernel, mode="same"))
        loaded = f_est[(force > 1.0) & ~clamped]
        maxima.append(smoothness(loaded, 1.0 / cfg.sample_rate)[1])
    return np.array(maxima)


@dataclass
class CharacterizationReport:
    relative_error_mean: float
    relative_error_max: float
    relative_error_mean_ideal: float
    hysteresis_error_N: float
    hysteresis_fraction: float
    noise_band_pF: dict
    noise_fraction: dict
    noise_reduction: float
    accuracy_before: float
    accuracy_after: float
    durability_drop_pp: float
    smoothness_mean: float
    smoothness_sd: float
    smoothness_max_per_taxel: list
    config: dict = field(default_factory=dict)
    seed: int = 0
    series: dict = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("series")
        return d

    def write(self, out_dir, long_csv: bool = False) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = [out / "report.json", out / "report.csv"]
        paths[0].write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        with paths[1].open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["metric", "value"])
            for k, v in _flatten(self.to_dict()):
                w.writerow([k, v])
        if long_csv:
            p = out / "series_long.csv"
            with p.open("w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["series", "x", "y"])
                for name, (xs, ys) in self.series.items():
                    for x, y in zip(xs, ys):
                        w.writerow([name, repr(float(x)), repr(float(y))])
            paths.append(p)
        return paths


def _flatten(d: dict, prefix: str = ""):
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            yield from _flatten(v, key + ".")
        elif isinstance(v, list):
            for i, item in enumerate(v):
                yield f"{key}[{i}]", item
        else:
            yield key, v


def characterize(model: TaxelModel | None = None, cfg: SensorChannelConfig | None = None,
                 noise_samples: int = NOISE_SAMPLES) -> CharacterizationReport:
    model = model or TaxelModel()
    cfg = cfg or SensorChannelConfig()

    mean, mx, curve, truth, est = accuracy_sweep(model, cfg)
    ideal_cfg = SensorChannelConfig.ideal(sample_rate=cfg.sample_rate, seed=cfg.seed)
    ideal_mean = accuracy_sweep(model, ideal_cfg)[0]

    gaps = hysteresis_run(model, cfg)
    gap_n = float(gaps.max())

    bands = noise_runs(model, cfg, noise_samples)
    unshielded = bands[ShieldingMode.UNSHIELDED][0]
    reduction = noise_reduction(unshielded, bands[ShieldingMode.ACTIVE_PASSIVE][0]) if unshielded > 0 else 0.0

    before, after, _ = durability_run(model, cfg)

    maxima = taxel_smoothness(model, cfg, curve)

    return CharacterizationReport(
        relative_error_mean=mean,
        relative_error_max=mx,
        relative_error_mean_ideal=ideal_mean,
        hysteresis_error_N=gap_n,
        hysteresis_fraction=gap_n / FULL_SCALE_FORCE,
        noise_band_pF={m.value: b[0] for m, b in bands.items()},
        noise_fraction={m.value: b[1] for m, b in bands.items()},
        noise_reduction=reduction,
        accuracy_before=before,
        accuracy_after=after,
        durability_drop_pp=durability_report(before, after),
        smoothness_mean=float(maxima.mean()),
        smoothness_sd=float(maxima.std(ddof=1)) if maxima.size > 1 else 0.0,
        smoothness_max_per_taxel=maxima.tolist(),
        config=cfg.to_dict(),
        seed=cfg.seed,
        series={
            "accuracy_truth_vs_estimate": (truth, est),
            "calibration_curve": (curve.capacitance, curve.force),
        },
    )
