import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import dblquad

from capskin.capmodel import TaxelModel
from capskin.errors import DomainError
from capskin.topology import (
    MAX_TAXELS,
    ContactSpec,
    SkinSection,
    SkinTopology,
    build_reference_topology,
    circle_rect_overlap,
    contact_centroid,
    default_activation_threshold,
    distribute_force,
    footprint_weights,
    project_contact,
    taxel_address,
    taxel_index,
)


@pytest.mark.parametrize("index,addr", [(0, (0, 0, 0)), (30, (1, 0, 2)), (223, (7, 6, 3))])
def test_address_examples(index, addr):
    assert taxel_address(index) == addr
    assert taxel_index(*addr) == index


def test_address_bijection():
    addrs = [taxel_address(i) for i in range(MAX_TAXELS)]
    assert len(set(addrs)) == MAX_TAXELS
    assert all(taxel_index(*a) == i for i, a in enumerate(addrs))
    with pytest.raises(DomainError):
        taxel_address(MAX_TAXELS)
    with pytest.raises(DomainError):
        taxel_index(0, 7, 0)


def test_reference_topology(reference_topology):
    topo = reference_topology
    assert topo.total_taxel_count == 56
    assert len(topo.sections) == 4
    counts = [len(s.taxels) for s in topo.sections]
    assert all(9 <= c <= 19 for c in counts)
    table = topo.address_table()
    assert len({(r["mux"], r["cdc"], r["channel"]) for r in table}) == 56
    assert [r for r in table if r["index"] == 30][0]["mux"] == 1


def test_collision_rejected():
    a = SkinSection.grid("a", 2, 2, first_index=0)
    b = SkinSection.grid("b", 2, 2, first_index=3)
    with pytest.raises(DomainError, match="taxel index 3"):
        SkinTopology((a, b))


def test_capacity_limit():
    secs = tuple(SkinSection.grid(f"s{k}", 5, 5, first_index=25 * k) for k in range(9))
    with pytest.raises(DomainError):
        SkinTopology(secs)


def _mc_overlap(cx, cy, r, x0, x1, y0, y1, n=400_000, seed=0):
    rng = np.random.default_rng(seed)
    pts = rng.uniform([x0, y0], [x1, y1], size=(n, 2))
    inside = (pts[:, 0] - cx) ** 2 + (pts[:, 1] - cy) ** 2 <= r * r
    return inside.mean() * (x1 - x0) * (y1 - y0)


@pytest.mark.parametrize("cx,cy,r", [(15, 15, 10), (0, 0, 20), (28, 3, 12), (-5, 15, 9), (15, 15, 40)])
def test_overlap_against_quadrature(cx, cy, r):
    exact = circle_rect_overlap(cx, cy, r, 0, 30, 0, 30)

    def height(x):
        h = math.sqrt(max(r * r - (x - cx) ** 2, 0.0))
        return max(0.0, cy - h), min(30.0, cy + h)

    quad, _ = dblquad(lambda y, x: 1.0, 0, 30, lambda x: height(x)[0], lambda x: max(height(x)), epsabs=1e-10)
    assert exact == pytest.approx(quad, abs=1e-6)


def test_overlap_against_monte_carlo():
    rng = np.random.default_rng(5)
    for k in range(5):
        cx, cy = rng.uniform(-10, 40, 2)
        r = rng.uniform(2, 25)
        mc = _mc_overlap(cx, cy, r, 0, 30, 0, 30, seed=k)
        assert circle_rect_overlap(cx, cy, r, 0, 30, 0, 30) == pytest.approx(mc, abs=0.01 * 900)


def test_overlap_full_containment():
    assert circle_rect_overlap(15, 15, 5, 0, 30, 0, 30) == pytest.approx(math.pi * 25)
    assert circle_rect_overlap(15, 15, 100, 0, 30, 0, 30) == pytest.approx(900)
    assert circle_rect_overlap(100, 100, 5, 0, 30, 0, 30) == 0.0


def test_footprint_inside_one_taxel_gets_everything(reference_topology):
    sec = reference_topology.section("link_1")
    forces = distribute_force(sec, (45.0, 45.0), 10.0, 12.0)
    assert forces == {sec.taxels[6].index: pytest.approx(12.0)}


def test_corner_footprint_splits_evenly():
    sec = SkinSection.grid("s", 2, 2)
    forces = distribute_force(sec, (30.0, 30.0), 10.0, 8.0)
    assert len(forces) == 4
    for f in forces.values():
        assert f == pytest.approx(2.0, abs=1e-9)


def test_force_conservation_random_footprints(reference_topology):
    rng = np.random.default_rng(11)
    touching = 0
    for _ in range(1000):
        link = reference_topology.sections[rng.integers(4)]
        w, h = link.extent
        center = (rng.uniform(0, w), rng.uniform(0, h))
        spec = ContactSpec(link.link_id, center, rng.uniform(1, 40), (rng.uniform(0.1, 55),), 1.0)
        forces = project_contact(reference_topology, spec, 0.5)
        if footprint_weights(link, center, spec.footprint_radius):
            touching += 1
            assert sum(forces.values()) == pytest.approx(spec.force_profile[0], abs=1e-9)
        else:
            # a small press inside the unused cell of a partly filled grid
            assert forces == {}
    assert touching > 950


def test_translation_by_one_pitch_shifts_map():
    sec = SkinSection.grid("s", 5, 5)
    a = distribute_force(sec, (60.0, 62.0), 20.0, 10.0)
    b = distribute_force(sec, (90.0, 62.0), 20.0, 10.0)
    shifted = {i + 1: f for i, f in a.items()}
    assert set(b) == set(shifted)
    for i in b:
        assert b[i] == pytest.approx(shifted[i], abs=1e-12)


def test_contact_profile_interpolates():
    spec = ContactSpec("link_1", (0, 0), 5, (0.0, 20.0, 0.0), duration=2.0, start=1.0)
    assert spec.force_at(0.5) == 0.0
    assert spec.force_at(2.0) == pytest.approx(20.0)
    assert spec.force_at(1.5) == pytest.approx(10.0)
    assert spec.force_at(3.5) == 0.0
    with pytest.raises(DomainError):
        ContactSpec("link_1", (0, 0), 0.0, (1.0,), 1.0)


def test_centroid_examples():
    sec = SkinSection.grid("s", 1, 3)
    topo = SkinTopology((sec,))
    est = contact_centroid(topo, {1: 5.0}, 1.0)
    assert est.centroid == (45.0, 15.0)
    assert contact_centroid(topo, {0: 2.0, 1: 2.0}, 1.0).centroid == pytest.approx((30.0, 15.0))
    # centres at u = 15 and 45: weighted mean 15 + 30 * 1/4
    assert contact_centroid(topo, {0: 3.0, 1: 1.0}, 0.5).centroid[0] == pytest.approx(22.5)
    unweighted = contact_centroid(topo, {0: 3.0, 1: 1.0}, 0.5, weighted=False)
    assert unweighted.centroid[0] == pytest.approx(30.0)


def test_centroid_empty_activation():
    topo = build_reference_topology()
    est = contact_centroid(topo, {0: 0.1}, 1.0)
    assert est.centroid is None and not est.in_contact and est.total_force == 0.0


@settings(max_examples=50)
@given(st.lists(st.floats(0, 50), min_size=19, max_size=19), st.floats(0.1, 100), st.floats(0, 5))
def test_centroid_scale_invariant(forces, k, threshold):
    topo = build_reference_topology()
    fmap = dict(zip(range(19), forces))
    a = contact_centroid(topo, fmap, threshold)
    b = contact_centroid(topo, {i: k * f for i, f in fmap.items()}, k * threshold)
    if a.centroid is None:
        assert b.centroid is None
    else:
        assert a.activated == b.activated
        assert b.centroid == pytest.approx(a.centroid, rel=1e-9)


@settings(max_examples=50)
@given(st.floats(5, 145), st.floats(5, 115), st.floats(1, 10))
def test_centroid_mirror_symmetry(u, v, force):
    sec = SkinSection.grid("s", 4, 5)
    topo = SkinTopology((sec,))
    # mirror about the vertical mid-line of the 5-column grid
    a = distribute_force(sec, (u, v), 20.0, force)
    b = distribute_force(sec, (150.0 - u, v), 20.0, force)
    ca = contact_centroid(topo, a, 0.0).centroid
    cb = contact_centroid(topo, b, 0.0).centroid
    assert cb[0] == pytest.approx(150.0 - ca[0], abs=1e-9)
    assert cb[1] == pytest.approx(ca[1], abs=1e-9)


def test_default_threshold_is_three_sigma_in_force():
    m = TaxelModel()
    thr = default_activation_threshold(m)
    sigma = 0.032 * 5 / 6
    assert m.delta_c(thr) == pytest.approx(3 * sigma, rel=1e-9)


def test_topology_serializes(reference_topology):
    d = reference_topology.to_dict()
    assert len(d["sections"]) == 4
    assert sum(len(s["taxels"]) for s in d["sections"]) == 56
