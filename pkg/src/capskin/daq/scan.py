"""Scan loop: contact forces -> per-taxel readings -> frames."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from capskin.capmodel import TaxelModel
from capskin.daq.frame import Frame
from capskin.dynamics import (
    DriftState,
    HysteresisState,
    SensorChannelConfig,
    apply_drift,
    apply_hysteresis,
    apply_noise,
    quantize_clamp,
)
from capskin.errors import DomainError
from capskin.topology import ContactSpec, SkinTopology, project_contact

PRESS_THRESHOLD_N = 1.0


@dataclass(frozen=True)
class JointPose:
    """Static lateral compression, bend and stretch of a section's taxels."""

    lateral_ratio: float = 0.0
    bend_angle: float = 0.0
    stretch: float = 0.0


@dataclass
class TaxelChannel:
    """Dynamic state of one sensing channel: lag, wear and its noise stream."""

    model: TaxelModel
    cfg: SensorChannelConfig
    rng: np.random.Generator
    hysteresis: HysteresisState
    drift: DriftState
    pose: JointPose = field(default_factory=JointPose)
    press_threshold: float = PRESS_THRESHOLD_N
    pressed: bool = False

    def __post_init__(self):
        p = self.pose
        self._baseline = self.model.capacitance(0.0, p.lateral_ratio, p.bend_angle, p.stretch)

    @classmethod
    def create(cls, model: TaxelModel, cfg: SensorChannelConfig, channel_id: int,
               pose: JointPose | None = None, interaction_count: int = 0) -> "TaxelChannel":
        hyst = HysteresisState(loop_gap_fraction=cfg.loop_gap_fraction)
        if cfg.loop_gap_fraction > 0:
            hyst = HysteresisState(loop_gap_fraction=cfg.loop_gap_fraction, relaxation_rate=hyst.rate)
        return cls(
            model=model,
            cfg=cfg,
            rng=np.random.default_rng([cfg.seed, channel_id]),
            hysteresis=hyst,
            drift=DriftState(interaction_count, cfg.gain_decay_per_1000),
            pose=pose or JointPose(),
        )

    @property
    def baseline(self) -> float:
        """Unloaded reading at the channel's pose."""
        return self._baseline

    def _count_press(self, force: float) -> None:
        if not self.pressed and force > self.press_threshold:
            self.pressed = True
            self.drift.interaction_count += 1
        elif self.pressed and force <= 0.5 * self.press_threshold:
            self.pressed = False

    def step(self, force: float, dt: float) -> float:
        """One sample: force -> capacitance -> lag -> noise -> wear gain -> converter."""
        self._count_press(force)
        p = self.pose
        target = self.model.capacitance(force, p.lateral_ratio, p.bend_angle, p.stretch)
        self.hysteresis, c = apply_hysteresis(self.hysteresis, target, dt)
        c = apply_noise(c, self.cfg, self.rng)
        base = self.baseline
        c = base + apply_drift(self.drift) * (c - base)
        if self.cfg.quantize:
            c = quantize_clamp(c, self.cfg)
        return c


def scan_cycle(topo: SkinTopology, forces: dict[int, float], channels: dict[int, TaxelChannel],
               t: float, dt: float, sequence: int) -> Frame:
    """Sample every taxel once, in address order, and pack the frame."""
    order = topo.ordered_indices()
    if len(channels) != len(order) or set(channels) != set(order):
        raise DomainError(f"{len(channels)} channel states for {len(order)} taxels")
    values = [channels[i].step(forces.get(i, 0.0), dt) for i in order]
    return Frame.from_capacitance(sequence, int(round(t * 1e6)), values)


class Scanner:
    """Owns the channel states of one skin and produces consecutive frames."""

    def __init__(self, topo: SkinTopology, model: TaxelModel | None = None,
                 cfg: SensorChannelConfig | None = None, contacts=(),
                 poses: dict[str, JointPose] | None = None):
        self.topo = topo
        self.model = model or TaxelModel()
        self.cfg = cfg or SensorChannelConfig()
        self.contacts: list[ContactSpec] = list(contacts)
        poses = poses or {}
        self.channels = {
            i: TaxelChannel.create(self.model, self.cfg, i, poses.get(topo.link_of(i)))
            for i in topo.ordered_indices()
        }
        self.sequence = 0

    @property
    def dt(self) -> float:
        return 1.0 / self.cfg.sample_rate

    def forces_at(self, t: float) -> dict[int, float]:
        total: dict[int, float] = {}
        for spec in self.contacts:
            for i, f in project_contact(self.topo, spec, t).items():
                total[i] = total.get(i, 0.0) + f
        return total

    def scan(self, t: float) -> Frame:
        frame = scan_cycle(self.topo, self.forces_at(t), self.channels, t, self.dt, self.sequence)
        self.sequence = (self.sequence + 1) & 0xFFFFFFFF
        return frame

    def baselines(self) -> np.ndarray:
        return np.array([self.channels[i].baseline for i in self.topo.ordered_indices()])


class VirtualClock:
    """Tick ``k`` happens at exactly ``k / rate`` seconds."""

    def __init__(self, rate_hz: float):
        if rate_hz <= 0:
            raise DomainError("rate must be positive")
        self.rate_hz = rate_hz
        self.tick = 0

    @property
    def now(self) -> float:
        return self.tick / self.rate_hz

    def advance(self) -> float:
        self.tick += 1
        return self.now


def run_virtual(scanner: Scanner, duration: float) -> list[Frame]:
    """Scan for ``duration`` seconds of simulated time at the configured rate."""
    clock = VirtualClock(scanner.cfg.sample_rate)
    n = int(round(duration * clock.rate_hz))
    frames = []
    for _ in range(n):
        frames.append(scanner.scan(clock.now))
        clock.advance()
    return frames
