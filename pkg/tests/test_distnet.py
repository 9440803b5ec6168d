import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bsrecon.distnet import (
    ComplexityError,
    DistanceFunction,
    DistanceNet,
    SliceIndex,
    VolumeTable,
    build_distance_net,
    hausdorff_to_truth,
    load_net,
    part_distances,
    save_net,
    slice_volume,
)
from bsrecon.geometry import Interval, Rectangle, WarpedAnnulus, build_boundary_mesh
from bsrecon.spectral import compute_spectrum
from bsrecon.wave import BoundaryPartition, ControlParams, alpha_max, partition_boundary, side_partition

PI = math.pi
ETA = PI / 16
GRID = (np.arange(200000) + 0.5) * PI / 200000


class ExactIntervalTable:
    """Exact ``vol(M_alpha)`` on the interval with parts {0} and {pi}."""

    def __init__(self, eta=ETA):
        self.eta = eta
        self.top = alpha_max(eta, PI)
        self.cache = {}

    def __call__(self, alpha):
        a, b = (min(x * self.eta, PI) for x in alpha)
        return min(PI, a + b)


def _exact_shell(beta, eta=ETA):
    d0, d1 = GRID, PI - GRID
    inside = (np.abs(d0 - beta[0] * eta) < 2 * eta) & (np.abs(d1 - beta[1] * eta) < 2 * eta)
    return inside.mean() * PI


@pytest.fixture(scope="module")
def interval():
    m = Interval(PI)
    d = compute_spectrum(m, 400.0, build_boundary_mesh(m, 1.0))
    return m, d, partition_boundary(d.mesh, ETA)


def test_distance_function_values_are_beta_eta():
    f = DistanceFunction.from_beta(SliceIndex((3, 1)), 0.5)
    assert np.array_equal(f.values, [1.5, 0.5])
    with pytest.raises(ValueError):
        f.values[0] = 1.0


def test_slice_index_validation():
    with pytest.raises(ValueError):
        SliceIndex((1, -2))
    SliceIndex((18, 0)).check(ETA, PI)
    with pytest.raises(ValueError):
        SliceIndex((19, 0)).check(ETA, PI)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 18), st.integers(0, 18))
def test_slice_volume_set_algebra_is_exact(interval, b0, b1):
    _, d, p = interval
    got = slice_volume(d, SliceIndex((b0, b1)), p, None, PI, table=ExactIntervalTable())
    # the shell window is capped at the horizon, which clips nothing inside the interval
    assert got == pytest.approx(_exact_shell((b0, b1)), abs=2e-4)


def test_slice_volume_checks_length(interval):
    _, d, p = interval
    with pytest.raises(ValueError):
        slice_volume(d, SliceIndex((1, 2, 3)), p, None, PI, table=ExactIntervalTable())


def test_net_from_exact_volumes_is_close_to_truth(interval):
    m, d, p = interval
    net = build_distance_net(d, p, None, PI, sigma=0.5 * ETA, table=ExactIntervalTable())
    assert len(net) > 0
    assert hausdorff_to_truth(net, m, GRID[::500, None], p) <= 2 * ETA + 1e-12
    # every member satisfies the shell volume threshold
    assert min(net.volumes) >= 0.5 * ETA


def test_net_pruning_does_not_lose_members(interval):
    _, d, p = interval
    a = build_distance_net(d, p, None, PI, sigma=0.5 * ETA, table=ExactIntervalTable())
    b = build_distance_net(d, p, None, PI, sigma=0.5 * ETA, table=ExactIntervalTable(), pair_checks=False)
    assert [f.beta for f in a.members] == [f.beta for f in b.members]


def test_net_rejects_large_problems(interval):
    _, d, p = interval
    with pytest.raises(ComplexityError):
        build_distance_net(d, p, None, PI, table=ExactIntervalTable(), max_lattice=10)
    with pytest.raises(ValueError):
        build_distance_net(d, p, None, PI, sigma=0.0, table=ExactIntervalTable())


def test_too_many_parts():
    m = Rectangle(PI, PI)
    mesh = build_boundary_mesh(m, 0.2)
    d = compute_spectrum(m, 5.0, mesh)
    p = partition_boundary(mesh, 0.5)
    assert p.L > 8
    with pytest.raises(ComplexityError):
        slice_volume(d, SliceIndex((0,) * p.L), p, ControlParams.for_size(len(d)), PI)


def test_volume_table_memoizes(interval):
    _, d, p = interval
    P = ControlParams.for_size(len(d))
    t = VolumeTable(d, p, P, PI, strict=False)
    v = t((4, 0))
    assert t((4, 0)) == v and len(t.cache) == 1
    assert t((0, 0)) == 0.0


def test_spectral_net_on_interval(interval):
    m, d, p = interval
    P = ControlParams.for_size(len(d))
    net = build_distance_net(d, p, P, PI, sigma=0.5 * ETA, table=VolumeTable(d, p, P, PI, strict=False))
    assert hausdorff_to_truth(net, m, GRID[::500, None], p) <= 4 * ETA


def test_net_roundtrip(tmp_path, interval):
    _, d, p = interval
    net = build_distance_net(d, p, None, PI, sigma=0.5 * ETA, table=ExactIntervalTable())
    save_net(net, tmp_path / "net.json")
    back = load_net(tmp_path / "net.json")
    assert np.array_equal(back.values(), net.values())
    assert back.volumes == net.volumes and back.partition == net.partition
    bad = net.to_dict()
    bad["members"][0]["values"][0] += 1.0
    with pytest.raises(ValueError):
        DistanceNet.from_dict(bad)


def test_part_distances_interval(interval):
    m, _, p = interval
    pts = np.array([[0.0], [1.0], [PI]])
    assert np.allclose(part_distances(m, p, pts), [[0, PI], [1, PI - 1], [PI, 0]])


def test_part_distances_rectangle_sides():
    m = Rectangle(PI, 2.0)
    p = side_partition(build_boundary_mesh(m, 0.1), 0.5)
    pts = np.array([[1.0, 0.5], [PI, 1.0]])
    # sides in order bottom, right, top, left
    assert np.allclose(part_distances(m, p, pts), [[0.5, PI - 1.0, 1.5, 1.0], [1.0, 0.0, 1.0, PI]])


def test_part_distances_rectangle_small_parts_cover_their_arc():
    m = Rectangle(PI, PI)
    mesh = build_boundary_mesh(m, PI / 16)
    p = partition_boundary(mesh, 0.5)
    # a boundary point is at distance 0 from the part covering it, corners included
    corners = np.array([[0.0, 0.0], [PI, 0.0], [PI, PI], [0.0, PI]])
    pts = np.vstack([mesh.nodes, corners])
    assert np.allclose(part_distances(m, p, pts).min(1), 0.0, atol=1e-12)


def test_hausdorff_empty_net(interval):
    m, _, p = interval
    empty = DistanceNet([], 0.1, ETA, p.to_dict(), ())
    assert math.isinf(hausdorff_to_truth(empty, m, GRID[:5, None], p))


def test_partition_from_net_matches(interval):
    _, d, p = interval
    net = build_distance_net(d, p, None, PI, sigma=0.5 * ETA, table=ExactIntervalTable())
    q = BoundaryPartition.from_dict(net.partition, d.mesh)
    assert np.array_equal(q.labels, p.labels)


def test_part_distances_annulus_radial():
    m = WarpedAnnulus(0.5)
    mesh = build_boundary_mesh(m, 0.5)
    p = partition_boundary(mesh, 1.0)
    node = mesh.nodes[0]  # on the inner circle
    out = part_distances(m, p, np.array([[1.7, node[1]]]))
    assert out[0, p.labels[0]] == pytest.approx(0.7, abs=1e-6)
