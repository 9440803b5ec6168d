import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bsrecon.geometry import (
    BumpSpec,
    ClassBounds,
    Interval,
    Rectangle,
    WarpedAnnulus,
    annulus_geodesics,
    boundary_measure,
    build_boundary_mesh,
    diameter,
    load_manifold,
    manifold_from_dict,
    manifold_to_dict,
    pairwise_distances,
    sample_interior_net,
    save_manifold,
    true_distance,
    volume,
)

FLAT = WarpedAnnulus(1e12)  # bump term negligible: the Euclidean annulus 1 <= r <= 4


def _cart(p):
    return np.array([p[0] * math.cos(p[1]), p[0] * math.sin(p[1])])


def test_volumes_closed_form():
    assert volume(Interval(2.0)) == 2.0
    assert volume(Rectangle(2.0, 3.0)) == 6.0
    assert volume(FLAT) == pytest.approx(15 * math.pi, rel=1e-10)
    assert boundary_measure(Rectangle(1.0, 2.0)) == 6.0
    assert boundary_measure(FLAT) == pytest.approx(10 * math.pi, rel=1e-10)


def test_pinched_annulus_loses_volume():
    assert volume(WarpedAnnulus(0.1)) < volume(WarpedAnnulus(1.0)) < volume(FLAT)


def test_invalid_parameters():
    for bad in (0.0, -1.0, math.inf, math.nan):
        with pytest.raises(ValueError):
            Interval(bad)
    with pytest.raises(ValueError):
        BumpSpec(0.5, 2.0)
    with pytest.raises(ValueError):
        manifold_from_dict({"variant": "torus", "params": {}})


def test_manifold_roundtrip(tmp_path):
    for m in (Interval(math.pi), Rectangle(1.0, 2.5), WarpedAnnulus(0.3, BumpSpec(2.2, 2.8))):
        assert manifold_from_dict(manifold_to_dict(m)) == m
        save_manifold(m, tmp_path / "m.json")
        assert load_manifold(tmp_path / "m.json") == m


def test_mesh_quadrature_integrates_boundary_length():
    for m in (Rectangle(math.pi, 2.0), WarpedAnnulus(0.5)):
        mesh = build_boundary_mesh(m, 0.1)
        assert mesh.weights.sum() == pytest.approx(boundary_measure(m), rel=1e-12)
        assert np.all(np.diff(mesh.arc[mesh.component_id == 0]) > 0)


def test_mesh_boundary_distance_wraps_and_splits_components():
    mesh = build_boundary_mesh(Rectangle(1.0, 1.0), 0.25)
    # first and last nodes are adjacent across the closing corner
    assert mesh.boundary_distance(0, mesh.size - 1) == pytest.approx(0.25)
    ann = build_boundary_mesh(FLAT, 0.5)
    i = int(np.flatnonzero(ann.component_id == 0)[0])
    j = int(np.flatnonzero(ann.component_id == 1)[0])
    assert math.isinf(ann.boundary_distance(i, j))


def test_rectangle_mesh_rejects_coarse_spacing():
    with pytest.raises(ValueError):
        build_boundary_mesh(Rectangle(1.0, 1.0), 1.5)


def test_flat_annulus_distance_matches_chord():
    # chords that stay inside the annulus
    for p, q in [((2.0, 0.0), (3.0, 0.5)), ((1.5, 0.3), (3.5, 0.2)), ((4.0, 0.0), (4.0, 0.9))]:
        want = np.linalg.norm(_cart(p) - _cart(q))
        assert true_distance(FLAT, p, q) == pytest.approx(want, abs=1e-6)


def test_flat_annulus_distance_wraps_around_hole():
    # antipodal points on the inner circle: the shortest path is the half circle
    assert true_distance(FLAT, (1.0, 0.0), (1.0, math.pi)) == pytest.approx(math.pi, abs=1e-5)


def test_annulus_radial_distance_is_exact():
    m = WarpedAnnulus(0.3)
    assert true_distance(m, (1.2, 0.7), (3.6, 0.7)) == pytest.approx(2.4, abs=1e-6)


def test_point_along_geodesic_splits_length():
    m = WarpedAnnulus(1.0)
    g = annulus_geodesics(m)
    p, q = (2.2, 0.0), (2.8, 0.4)
    mid = g.point_along(p, q, 0.5)
    total = g.distance(p, q)
    assert g.distance(p, mid) == pytest.approx(total / 2, abs=1e-5)
    assert g.distance(mid, q) == pytest.approx(total / 2, abs=1e-5)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.floats(0, math.pi), st.floats(0, 2.0)), min_size=3, max_size=3))
def test_rectangle_distance_is_a_metric(pts):
    D = pairwise_distances(Rectangle(math.pi, 2.0), np.array(pts))
    assert np.allclose(D, D.T)
    for i in range(3):
        for j in range(3):
            for k in range(3):
                assert D[i, k] <= D[i, j] + D[j, k] + 1e-12


def test_points_outside_rejected():
    with pytest.raises(ValueError):
        true_distance(Interval(1.0), 0.5, 1.5)
    with pytest.raises(ValueError):
        true_distance(Rectangle(1.0, 1.0), (0.5, 0.5), (0.5, -0.1))


def test_diameters():
    assert diameter(Interval(2.0)) == 2.0
    assert diameter(Rectangle(3.0, 4.0)) == 5.0
    # flat annulus: two tangents to the inner circle plus the arc between them
    flat = 2 * math.sqrt(15) + (math.pi - 2 * math.acos(1 / 4))
    assert flat <= diameter(FLAT) <= flat * 1.01


def test_class_bounds():
    ClassBounds(1.0, math.pi, 1.0).check(Interval(math.pi))
    with pytest.raises(ValueError):
        ClassBounds(1.0, 3.0, 1.0).check(Interval(math.pi))
    with pytest.raises(ValueError):
        ClassBounds(1.0, 5.0, 2.0).check(Interval(math.pi))


@pytest.mark.parametrize("m", [Interval(math.pi), Rectangle(math.pi, 2.0)])
def test_interior_net_fill_radius(m):
    net = sample_interior_net(m, 0.3)
    assert net.fill_radius <= 0.3
    rng = np.random.default_rng(0)
    hi = np.array([getattr(m, "length", getattr(m, "lx", 0)), getattr(m, "ly", 0)])[: 1 if isinstance(m, Interval) else 2]
    probe = rng.random((500, len(hi))) * hi
    d = np.sqrt(((probe[:, None, :] - net.points[None, :, :]) ** 2).sum(-1)).min(1)
    assert d.max() <= 0.3
