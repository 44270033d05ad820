import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spatialpot.geom import (
    Metric,
    Point,
    ServerLayout,
    distance,
    distances,
    grid_side,
    k_nearest,
    make_grid_layout,
    make_uniform_layout,
)

coord = st.floats(0.0, 1.0, exclude_max=True, allow_nan=False)
point = st.tuples(coord, coord)


def brute_knn(servers, p, k, metric):
    d = [distance(p, s, metric) for s in servers]
    order = sorted(range(len(servers)), key=lambda i: (d[i], i))
    return [(i, d[i]) for i in order[:k]]


def test_euclidean_distance():
    assert distance((0, 0), (3 / 5, 4 / 5)) == pytest.approx(1.0)
    assert distance(Point(0.1, 0.2), Point(0.1, 0.2)) == 0.0


def test_torus_distance_wraps():
    assert distance((0.05, 0.5), (0.95, 0.5), Metric.TORUS) == pytest.approx(0.1)
    assert distance((0.05, 0.05), (0.95, 0.95), Metric.TORUS) == pytest.approx(math.sqrt(0.02))
    assert distance((0.05, 0.5), (0.95, 0.5)) == pytest.approx(0.9)


@given(point, point, point)
def test_metric_axioms(a, b, c):
    for m in Metric:
        ab = distance(a, b, m)
        assert ab == pytest.approx(distance(b, a, m))
        assert ab <= distance(a, c, m) + distance(c, b, m) + 1e-12
        assert ab >= 0
    assert distance(a, b, Metric.TORUS) <= distance(a, b) + 1e-15
    assert distance(a, b, Metric.TORUS) <= math.sqrt(0.5) + 1e-12


def test_distances_matrix_matches_scalar():
    g = np.random.default_rng(0)
    p, s = g.random((5, 2)), g.random((7, 2))
    for m in Metric:
        d = distances(p, s, m)
        assert d.shape == (5, 7)
        assert d[2, 3] == pytest.approx(distance(p[2], s[3], m))


def test_grid_layout_positions():
    lay = make_grid_layout(4)
    assert lay.n == 16 and lay.metric is Metric.TORUS and lay.side == 4
    assert tuple(lay.points[1 * 4 + 2]) == (0.375, 0.625)


def test_uniform_layout_is_seeded():
    a = make_uniform_layout(50, 3)
    b = make_uniform_layout(50, 3)
    assert np.array_equal(a.points, b.points)
    assert not np.array_equal(a.points, make_uniform_layout(50, 4).points)
    assert a.metric is Metric.EUCLIDEAN


def test_layout_rejects_bad_input():
    with pytest.raises(ValueError):
        make_grid_layout(1)
    with pytest.raises(ValueError):
        make_uniform_layout(1, 0)
    with pytest.raises(ValueError):
        ServerLayout.from_points([[0.5, 1.0]])
    with pytest.raises(ValueError):
        make_uniform_layout(5, 0).query([[0.1, 0.1]], 6)


def test_layout_points_are_read_only():
    lay = make_uniform_layout(5, 0)
    with pytest.raises(ValueError):
        lay.points[0, 0] = 0.5


def test_grid_side():
    assert grid_side(64) == 8
    with pytest.raises(ValueError):
        grid_side(40000 + 1)


@settings(max_examples=60, deadline=None)
@given(st.lists(point, min_size=2, max_size=25, unique=True), point, st.integers(1, 6), st.sampled_from(list(Metric)))
def test_knn_matches_brute_force(servers, p, k, metric):
    k = min(k, len(servers))
    lay = ServerLayout.from_points(servers, metric)
    got = k_nearest(lay, p, k)
    want = brute_knn(servers, p, k, metric)
    assert [i for i, _ in got] == [i for i, _ in want]
    assert [d for _, d in got] == pytest.approx([d for _, d in want], abs=1e-12)


def test_knn_ties_break_by_id():
    # four servers equidistant from the centre
    lay = ServerLayout.from_points([[0.25, 0.5], [0.75, 0.5], [0.5, 0.25], [0.5, 0.75], [0.9, 0.9]])
    ids = [i for i, _ in lay.k_nearest((0.5, 0.5), 3)]
    assert ids == [0, 1, 2]
    grid = make_grid_layout(8)
    # a point equidistant from a 2x2 block of cell centres
    ids, _ = grid.query([[0.25, 0.25]], 4)
    assert sorted(ids[0].tolist()) == ids[0].tolist()


def test_batch_query_matches_single():
    lay = make_uniform_layout(200, 1)
    pts = np.random.default_rng(2).random((300, 2))
    ids, dists = lay.query(pts, 3)
    for r in (0, 17, 299):
        assert [i for i, _ in lay.k_nearest(pts[r], 3)] == ids[r].tolist()
    full = distances(pts, lay.points)
    assert np.allclose(np.sort(full, axis=1)[:, :3], dists)


def test_small_worked_examples():
    assert distance((0, 0), (0.3, 0.4)) == pytest.approx(0.5)
    lay = ServerLayout.from_points([[0.1, 0.1], [0.9, 0.1], [0.1, 0.9]])
    got = lay.k_nearest((0.2, 0.3), 2)
    assert [i for i, _ in got] == [0, 2]
    assert [d for _, d in got] == pytest.approx([math.sqrt(0.05), math.sqrt(0.37)])
    assert sorted(map(tuple, make_grid_layout(2).points)) == [(0.25, 0.25), (0.25, 0.75), (0.75, 0.25), (0.75, 0.75)]


def test_grid_spacing_and_cell_centres():
    lay = make_grid_layout(8)
    d = distances(lay.points, lay.points, Metric.TORUS)
    np.fill_diagonal(d, np.inf)
    assert d.min() == pytest.approx(0.125)
    ids, dist = lay.query(lay.points[[5, 40]], 1)
    assert ids[:, 0].tolist() == [5, 40] and dist.max() == 0.0


def test_grid_nearest_is_containing_cell():
    lay = make_grid_layout(8)
    pts = np.random.default_rng(0).random((5000, 2))
    cell = np.floor(pts * 8).astype(int)
    ids, _ = lay.nearest(pts)
    assert np.array_equal(ids, cell[:, 0] * 8 + cell[:, 1])


def test_uniform_layout_mean_coordinate():
    assert abs(make_uniform_layout(10000, 1).points[:, 0].mean() - 0.5) < 0.01


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 1000), st.integers(1, 9), st.sampled_from(["grid", "uniform"]))
def test_knn_prefix_property(seed, k, kind):
    lay = make_grid_layout(4) if kind == "grid" else make_uniform_layout(16, seed)
    pts = np.random.default_rng(seed).random((30, 2))
    a, _ = lay.query(pts, k)
    b, _ = lay.query(pts, k + 1)
    assert np.array_equal(a, b[:, :k])
