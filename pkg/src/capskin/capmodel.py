"""Closed-form capacitance models for a single fabric taxel.

Units throughout: lengths in mm, capacitance in pF, angles in radians,
compression and stretch as fractions. Permittivity is a lumped factor in
pF/mm so that ``eps * area / dist`` comes out in pF.

The fitted defaults describe a 3 cm taxel whose axial baseline
``a/h0 + b`` equals the 5.99 pF constant shared by the lateral and
bending fits; that pins the default dielectric thickness.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from capskin.errors import DomainError

AXIAL_DEFAULT = (5.88, 2.16)
LATERAL_DEFAULT = (0.44, 0.87, 5.99)
BENDING_DEFAULT = (0.024, 0.041, 5.99)

DEFAULT_SIDE_LENGTH = 30.0
DEFAULT_BASE_CAPACITANCE = 5.99
# axial(h0) == 5.99 pF
DEFAULT_THICKNESS = AXIAL_DEFAULT[0] / (DEFAULT_BASE_CAPACITANCE - AXIAL_DEFAULT[1])

FULL_SCALE_FORCE = 55.0
FULL_SCALE_DELTA_C = 5.0


@dataclass(frozen=True)
class FittedCoefficients:
    """Regression constants of the three deformation models.

    ``axial`` is ``(a, b)`` for ``C = a/h + b``; ``lateral`` and ``bending``
    are ``(c2, c1, c0)`` quadratics in compression ratio and bend angle.
    """

    axial: tuple[float, float] = AXIAL_DEFAULT
    lateral: tuple[float, float, float] = LATERAL_DEFAULT
    bending: tuple[float, float, float] = BENDING_DEFAULT
    units: dict = field(
        default_factory=lambda: {"h": "mm", "alpha": "fraction", "theta": "rad", "C": "pF"},
        compare=False,
    )

    def __post_init__(self):
        object.__setattr__(self, "axial", tuple(float(v) for v in self.axial))
        object.__setattr__(self, "lateral", tuple(float(v) for v in self.lateral))
        object.__setattr__(self, "bending", tuple(float(v) for v in self.bending))
        if len(self.axial) != 2 or len(self.lateral) != 3 or len(self.bending) != 3:
            raise DomainError("axial needs 2 coefficients, lateral and bending need 3")
        if not all(math.isfinite(v) for v in self.axial + self.lateral + self.bending):
            raise DomainError("coefficients must be finite")
        if self.axial[0] <= 0:
            raise DomainError(f"axial slope must be positive, got {self.axial[0]}")
        if self.lateral[2] <= 0 or self.bending[2] <= 0:
            raise DomainError("lateral and bending constant terms must be positive")

    def to_dict(self) -> dict:
        return {
            "axial": list(self.axial),
            "lateral": list(self.lateral),
            "bending": list(self.bending),
            "units": dict(self.units),
        }


@dataclass(frozen=True)
class TaxelGeometry:
    """Physical parameters of one taxel.

    ``base_capacitance`` must agree with ``permittivity * side_length**2 /
    thickness`` to 1e-9 relative; use :meth:`from_baseline` to derive the
    permittivity from a measured baseline instead.
    """

    side_length: float = DEFAULT_SIDE_LENGTH
    thickness: float = DEFAULT_THICKNESS
    permittivity: float = DEFAULT_BASE_CAPACITANCE * DEFAULT_THICKNESS / DEFAULT_SIDE_LENGTH**2
    base_capacitance: float = DEFAULT_BASE_CAPACITANCE
    bend_radius: float = 10.0
    m_lateral: float = 1.15
    # puts the physical bend model's linear term near the fitted 0.041
    m_bend: float = 0.3515
    stretch_k: float = 0.3

    def __post_init__(self):
        for name in ("side_length", "thickness", "permittivity", "base_capacitance", "bend_radius"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise DomainError(f"{name} must be positive and finite, got {value}")
        if self.m_lateral < 0 or self.m_bend < 0:
            raise DomainError("permittivity slopes must be non-negative")
        if self.stretch_k < 0:
            raise DomainError("stretch_k must be non-negative")
        expected = self.permittivity * self.side_length**2 / self.thickness
        if abs(expected - self.base_capacitance) > 1e-9 * abs(self.base_capacitance):
            raise DomainError(
                f"base_capacitance {self.base_capacitance} inconsistent with "
                f"permittivity*L^2/h0 = {expected}"
            )

    @classmethod
    def from_baseline(cls, side_length: float, thickness: float, base_capacitance: float, **kw):
        if side_length <= 0 or thickness <= 0:
            raise DomainError("side_length and thickness must be positive")
        eps = base_capacitance * thickness / side_length**2
        return cls(
            side_length=side_length,
            thickness=thickness,
            permittivity=eps,
            base_capacitance=base_capacitance,
            **kw,
        )

    @property
    def area(self) -> float:
        return self.side_length**2

    def to_dict(self) -> dict:
        return {
            "side_length": self.side_length,
            "thickness": self.thickness,
            "base_capacitance": self.base_capacitance,
            "bend_radius": self.bend_radius,
            "m_lateral": self.m_lateral,
            "m_bend": self.m_bend,
            "stretch_k": self.stretch_k,
        }


@dataclass(frozen=True)
class DeformationState:
    deflection: float = 0.0
    lateral_ratio: float = 0.0
    bend_angle: float = 0.0
    stretch: float = 0.0

    def validate(self, geom: TaxelGeometry) -> None:
        if not 0.0 <= self.deflection < geom.thickness:
            raise DomainError(
                f"deflection {self.deflection} outside [0, {geom.thickness})"
            )
        if not 0.0 <= self.lateral_ratio < 1.0:
            raise DomainError(f"lateral ratio {self.lateral_ratio} outside [0, 1)")
        if self.bend_angle < 0:
            raise DomainError(f"bend angle must be >= 0, got {self.bend_angle}")
        if self.stretch < 0:
            raise DomainError(f"stretch must be >= 0, got {self.stretch}")


def parallel_plate_capacitance(eps: float, area: float, dist: float) -> float:
    if eps <= 0 or area <= 0 or dist <= 0:
        raise DomainError("eps, area and dist must all be positive")
    return eps * area / dist


def cylindrical_capacitance(eps: float, length: float, r_inner: float, r_outer: float) -> float:
    """Coaxial capacitor: ``2*pi*eps*L / ln(Rb/Ra)``."""
    if eps <= 0 or length <= 0:
        raise DomainError("eps and length must be positive")
    if not 0 < r_inner < r_outer:
        raise DomainError(f"need 0 < r_inner < r_outer, got {r_inner}, {r_outer}")
    return 2.0 * math.pi * eps * length / math.log(r_outer / r_inner)


def axial_capacitance(coeffs: FittedCoefficients, h1):
    """Capacitance after compressing the dielectric to thickness ``h1``.

    Accepts scalars or arrays.
    """
    a, b = coeffs.axial
    if isinstance(h1, (float, int)):
        if not h1 > 0:
            raise DomainError("compressed thickness must be positive")
        return a / h1 + b
    h1_arr = np.asarray(h1, dtype=float)
    if np.any(~(h1_arr > 0)):
        raise DomainError("compressed thickness must be positive")
    out = a / h1_arr + b
    return float(out) if out.ndim == 0 else out


def lateral_capacitance(coeffs: FittedCoefficients, alpha: float) -> float:
    if not 0.0 <= alpha < 1.0:
        raise DomainError(f"lateral ratio {alpha} outside [0, 1)")
    p2, p1, p0 = coeffs.lateral
    return p2 * alpha * alpha + p1 * alpha + p0


def bending_capacitance(coeffs: FittedCoefficients, theta: float) -> float:
    if theta < 0:
        raise DomainError(f"bend angle must be >= 0, got {theta}")
    q2, q1, q0 = coeffs.bending
    return q2 * theta * theta + q1 * theta + q0


def bend_region_factor(geom: TaxelGeometry) -> float:
    """``eps0*L / ln(1 + h0/Ra)``: capacitance per radian of the wrapped region."""
    return geom.permittivity * geom.side_length / math.log1p(geom.thickness / geom.bend_radius)


def bending_capacitance_physical(geom: TaxelGeometry, theta: float) -> float:
    """Flat region plus cylindrical wrapped region for a taxel bent by ``theta``.

    Permittivity of both regions drops linearly with the bend angle.
    """
    if theta < 0:
        raise DomainError(f"bend angle must be >= 0, got {theta}")
    if geom.m_bend * theta >= 1.0:
        raise DomainError("m_bend * theta >= 1: permittivity would become non-positive")
    flat = geom.base_capacitance * (1.0 - geom.m_bend * theta)
    wrapped = bend_region_factor(geom) * (theta - geom.m_bend * theta * theta)
    return flat + wrapped


def bending_quadratic_form(geom: TaxelGeometry) -> tuple[float, float, float]:
    """Coefficients ``(a, b, c)`` of the physical bend model as ``a*t^2 + b*t + c``."""
    k = bend_region_factor(geom)
    return (-geom.m_bend * k, k - geom.m_bend * geom.base_capacitance, geom.base_capacitance)


def stretch_gain(geom: TaxelGeometry, stretch: float) -> float:
    """Sensitivity attenuation ``1 - k*s`` applied to capacitance changes."""
    if stretch < 0:
        raise DomainError(f"stretch must be >= 0, got {stretch}")
    g = 1.0 - geom.stretch_k * stretch
    if g <= 0:
        raise DomainError(f"stretch {stretch} removes all sensitivity (k={geom.stretch_k})")
    return g


def combined_capacitance(
    geom: TaxelGeometry, coeffs: FittedCoefficients, state: DeformationState
) -> float:
    """Predicted capacitance under simultaneous axial, lateral and bend deformation.

    Lateral and bend terms enter as offsets from their undeformed constants,
    on top of the axial value. Stretch scales the total change only.
    """
    state.validate(geom)
    base = axial_capacitance(coeffs, geom.thickness)
    delta = axial_capacitance(coeffs, geom.thickness - state.deflection) - base
    delta += lateral_capacitance(coeffs, state.lateral_ratio) - coeffs.lateral[2]
    delta += bending_capacitance(coeffs, state.bend_angle) - coeffs.bending[2]
    if state.stretch == 0:
        return base + delta
    return base + stretch_gain(geom, state.stretch) * delta


@dataclass(frozen=True)
class StiffnessProfile:
    """Saturating contact law ``x(F) = h0 * d_max * (1 - exp(-F/F_c))``."""

    thickness: float
    force_scale: float
    max_fraction: float = 0.8

    def __post_init__(self):
        if self.thickness <= 0 or self.force_scale <= 0:
            raise DomainError("thickness and force_scale must be positive")
        if not 0 < self.max_fraction < 1:
            raise DomainError("max_fraction must lie in (0, 1)")

    @property
    def max_deflection(self) -> float:
        return self.thickness * self.max_fraction


def force_to_deflection(stiffness: StiffnessProfile, force):
    if isinstance(force, (float, int)):
        if not force >= 0:
            raise DomainError("force must be non-negative")
        return stiffness.max_deflection * -math.expm1(-force / stiffness.force_scale)
    f = np.asarray(force, dtype=float)
    if np.any(~(f >= 0)):
        raise DomainError("force must be non-negative")
    out = stiffness.max_deflection * -np.expm1(-f / stiffness.force_scale)
    return float(out) if out.ndim == 0 else out


def deflection_to_force(stiffness: StiffnessProfile, deflection):
    """Inverse of :func:`force_to_deflection`; NaN at or beyond saturation."""
    x = np.asarray(deflection, dtype=float)
    ratio = x / stiffness.max_deflection
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(ratio < 1.0, -stiffness.force_scale * np.log1p(-ratio), np.nan)
    return float(out) if out.ndim == 0 else out


def calibrate_stiffness(
    geom: TaxelGeometry,
    coeffs: FittedCoefficients,
    force: float = FULL_SCALE_FORCE,
    delta_c: float = FULL_SCALE_DELTA_C,
    max_fraction: float = 0.8,
) -> StiffnessProfile:
    """Choose ``F_c`` so that ``force`` produces an axial change of ``delta_c``."""
    a, b = coeffs.axial
    base = axial_capacitance(coeffs, geom.thickness)
    h1 = a / (base + delta_c - b)
    x_target = geom.thickness - h1
    ratio = x_target / (geom.thickness * max_fraction)
    if not 0 < ratio < 1:
        raise DomainError(
            f"delta_c={delta_c} pF needs deflection {x_target:.4f} mm, beyond "
            f"{max_fraction:.0%} of thickness"
        )
    force_scale = -force / math.log1p(-ratio)
    return StiffnessProfile(geom.thickness, force_scale, max_fraction)


@dataclass(frozen=True)
class TaxelModel:
    """Ideal force to capacitance chain for one taxel (no sensor non-idealities)."""

    geometry: TaxelGeometry = field(default_factory=TaxelGeometry)
    coeffs: FittedCoefficients = field(default_factory=FittedCoefficients)
    stiffness: StiffnessProfile | None = None

    def __post_init__(self):
        if self.stiffness is None:
            object.__setattr__(self, "stiffness", calibrate_stiffness(self.geometry, self.coeffs))

    @cached_property
    def baseline(self) -> float:
        return axial_capacitance(self.coeffs, self.geometry.thickness)

    def capacitance(self, force: float, lateral_ratio=0.0, bend_angle=0.0, stretch=0.0) -> float:
        x = force_to_deflection(self.stiffness, force)
        state = DeformationState(x, lateral_ratio, bend_angle, stretch)
        return combined_capacitance(self.geometry, self.coeffs, state)

    def delta_c(self, force):
        """Axial-only capacitance change for ``force``; vectorised."""
        x = force_to_deflection(self.stiffness, force)
        return axial_capacitance(self.coeffs, self.geometry.thickness - np.asarray(x)) - self.baseline

    def force_from_delta(self, delta_c):
        """Exact inverse of :meth:`delta_c`; NaN where no force produces ``delta_c``."""
        a, b = self.coeffs.axial
        dc = np.asarray(delta_c, dtype=float)
        with np.errstate(invalid="ignore", divide="ignore"):
            h1 = a / (self.baseline + dc - b)
            h1 = np.where(h1 > 0, h1, np.nan)
        out = deflection_to_force(self.stiffness, self.geometry.thickness - h1)
        return float(out) if np.ndim(out) == 0 else out
