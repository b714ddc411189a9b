import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from capskin.capmodel import (
    DEFAULT_THICKNESS,
    DeformationState,
    FittedCoefficients,
    StiffnessProfile,
    TaxelGeometry,
    TaxelModel,
    axial_capacitance,
    bending_capacitance,
    bending_capacitance_physical,
    bending_quadratic_form,
    calibrate_stiffness,
    combined_capacitance,
    cylindrical_capacitance,
    deflection_to_force,
    force_to_deflection,
    lateral_capacitance,
    parallel_plate_capacitance,
    stretch_gain,
)
from capskin.errors import DomainError

COEFFS = FittedCoefficients()


def test_parallel_plate_values():
    assert parallel_plate_capacitance(1, 2, 1) == 2
    assert parallel_plate_capacitance(1, 9, 6) == 1.5
    assert parallel_plate_capacitance(0.3, 20, 2) * 2 == parallel_plate_capacitance(0.3, 40, 2)


@pytest.mark.parametrize("args", [(0, 1, 1), (1, -1, 1), (1, 1, 0)])
def test_parallel_plate_rejects_non_positive(args):
    with pytest.raises(DomainError):
        parallel_plate_capacitance(*args)


def test_cylindrical_values():
    assert cylindrical_capacitance(1, 1, 1, math.e) == pytest.approx(2 * math.pi, rel=1e-15)
    # 2*pi*10/ln(1.2) = 344.621, commonly quoted as 344.61
    assert cylindrical_capacitance(1, 10, 5, 6) == pytest.approx(20 * math.pi / math.log(1.2), rel=1e-15)
    assert cylindrical_capacitance(1, 10, 5, 6) == pytest.approx(344.61, rel=1e-4)
    assert cylindrical_capacitance(2, 4, 1, 3) == pytest.approx(2 * cylindrical_capacitance(2, 2, 1, 3))
    with pytest.raises(DomainError):
        cylindrical_capacitance(1, 1, 2, 2)


def test_axial_fit_values():
    assert axial_capacitance(COEFFS, 1.0) == pytest.approx(8.04, abs=1e-12)
    assert axial_capacitance(COEFFS, 2.0) == pytest.approx(5.10, abs=1e-12)
    assert axial_capacitance(COEFFS, 1e12) == pytest.approx(2.16, abs=1e-9)
    with pytest.raises(DomainError):
        axial_capacitance(COEFFS, 0.0)


@given(st.lists(st.floats(1e-3, 1e3), min_size=2, max_size=50, unique=True))
def test_axial_strictly_decreasing(hs):
    hs = np.sort(np.array(hs))
    # neighbours closer than float resolution of the output can tie
    hs = hs[np.concatenate([[True], np.diff(hs) / hs[1:] > 1e-9])]
    assert np.all(np.diff(axial_capacitance(COEFFS, hs)) < 0)


@pytest.mark.parametrize("alpha,expected", [(0.0, 5.99), (0.2, 6.1816), (0.5, 6.535)])
def test_lateral_fit_values(alpha, expected):
    assert lateral_capacitance(COEFFS, alpha) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("theta,expected", [(0.0, 5.99), (1.0, 6.055), (math.pi / 2, 6.1136)])
def test_bending_fit_values(theta, expected):
    assert bending_capacitance(COEFFS, theta) == pytest.approx(expected, abs=1e-4)


def test_constant_terms_exact():
    assert lateral_capacitance(COEFFS, 0.0) == 5.99
    assert bending_capacitance(COEFFS, 0.0) == 5.99


def test_fits_non_decreasing_on_domain():
    a = np.linspace(0, 0.999, 500)
    t = np.linspace(0, 3.0, 500)
    assert np.all(np.diff([lateral_capacitance(COEFFS, x) for x in a]) >= 0)
    assert np.all(np.diff([bending_capacitance(COEFFS, x) for x in t]) >= 0)


def test_lateral_and_bend_domains():
    with pytest.raises(DomainError):
        lateral_capacitance(COEFFS, 1.0)
    with pytest.raises(DomainError):
        bending_capacitance(COEFFS, -0.1)


def test_default_geometry_is_consistent():
    g = TaxelGeometry()
    assert g.base_capacitance == pytest.approx(g.permittivity * g.side_length**2 / g.thickness, rel=1e-12)
    assert axial_capacitance(COEFFS, DEFAULT_THICKNESS) == pytest.approx(5.99, rel=1e-12)


def test_geometry_rejects_inconsistent_baseline():
    with pytest.raises(DomainError):
        TaxelGeometry(base_capacitance=6.5)
    with pytest.raises(DomainError):
        TaxelGeometry.from_baseline(30.0, -1.0, 5.99)


def test_physical_bend_at_zero_is_base_exactly():
    g = TaxelGeometry()
    assert bending_capacitance_physical(g, 0.0) == g.base_capacitance


def test_physical_bend_matches_quadratic_form():
    g = TaxelGeometry()
    a, b, c = bending_quadratic_form(g)
    for theta in np.linspace(0, 2.5, 26):
        assert bending_capacitance_physical(g, theta) == pytest.approx(a * theta**2 + b * theta + c, rel=1e-12)


def test_physical_bend_increases_near_zero_when_linear_term_positive():
    g = TaxelGeometry()
    assert bending_quadratic_form(g)[1] > 0
    assert bending_capacitance_physical(g, 1e-3) > g.base_capacitance


def test_combined_zero_state_is_axial_baseline():
    g = TaxelGeometry()
    assert combined_capacitance(g, COEFFS, DeformationState()) == axial_capacitance(COEFFS, g.thickness)


@pytest.mark.parametrize("alpha,theta,expected", [(0.2, 0.0, 8.2316), (0.0, 1.0, 8.105)])
def test_combined_unit_thickness_examples(alpha, theta, expected):
    g = TaxelGeometry.from_baseline(30.0, 1.0, 8.04)
    c = combined_capacitance(g, COEFFS, DeformationState(0.0, alpha, theta))
    assert c == pytest.approx(expected, abs=1e-9)


def test_stretch_scales_change_only():
    g = TaxelGeometry()
    base = combined_capacitance(g, COEFFS, DeformationState())
    plain = combined_capacitance(g, COEFFS, DeformationState(0.5, 0.1, 0.2))
    stretched = combined_capacitance(g, COEFFS, DeformationState(0.5, 0.1, 0.2, stretch=0.5))
    assert stretched - base == pytest.approx(stretch_gain(g, 0.5) * (plain - base), rel=1e-12)
    assert combined_capacitance(g, COEFFS, DeformationState(stretch=0.7)) == base
    with pytest.raises(DomainError):
        stretch_gain(g, 1 / g.stretch_k)


def test_deformation_state_bounds():
    g = TaxelGeometry()
    with pytest.raises(DomainError):
        DeformationState(deflection=g.thickness).validate(g)
    with pytest.raises(DomainError):
        DeformationState(lateral_ratio=-0.1).validate(g)


def test_zero_force_zero_deflection(model):
    assert force_to_deflection(model.stiffness, 0.0) == 0.0


def test_full_scale_deflection_matches_root_find(model):
    g = model.geometry
    base = combined_capacitance(g, COEFFS, DeformationState())

    def excess(x):
        return combined_capacitance(g, COEFFS, DeformationState(deflection=x)) - base - 5.0

    x_star = brentq(excess, 0.0, g.thickness * 0.99, xtol=1e-15)
    x = force_to_deflection(model.stiffness, 55.0)
    assert x == pytest.approx(x_star, rel=1e-9)
    assert model.capacitance(55.0) - model.baseline == pytest.approx(5.0, abs=1e-6)


def test_force_to_capacitance_monotone(model):
    f = np.linspace(0, 55, 1000)
    assert np.all(np.diff(force_to_deflection(model.stiffness, f)) > 0)
    c = [model.capacitance(float(x)) for x in f]
    assert np.all(np.diff(c) > 0)


@given(st.floats(0, 200))
def test_force_from_delta_inverts_delta_c(force):
    m = TaxelModel()
    assert m.force_from_delta(m.delta_c(force)) == pytest.approx(force, rel=1e-9, abs=1e-9)


def test_deflection_inverse_nan_past_saturation(model):
    s = model.stiffness
    assert math.isnan(deflection_to_force(s, s.max_deflection))
    assert deflection_to_force(s, force_to_deflection(s, 12.5)) == pytest.approx(12.5)


def test_calibrate_stiffness_rejects_unreachable_change():
    with pytest.raises(DomainError):
        calibrate_stiffness(TaxelGeometry(), COEFFS, delta_c=500.0)
    with pytest.raises(DomainError):
        StiffnessProfile(1.0, 10.0, max_fraction=1.0)


@settings(max_examples=50)
@given(st.floats(0, 60), st.floats(0, 0.9), st.floats(0, 1.5))
def test_capacitance_is_pure(force, alpha, theta):
    m = TaxelModel()
    assert m.capacitance(force, alpha, theta) == m.capacitance(force, alpha, theta)


def test_coefficients_validate():
    with pytest.raises(DomainError):
        FittedCoefficients(axial=(-1.0, 2.0))
    with pytest.raises(DomainError):
        FittedCoefficients(lateral=(0.4, 0.8, 0.0))
    assert FittedCoefficients().to_dict()["units"]["h"] == "mm"
