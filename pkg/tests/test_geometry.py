import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wbary.geometry import (
    WeightedPointSet,
    ambiguous_median_midpoint,
    barycentric_map,
    geometric_median,
    identity_check_star,
    identity_check_sunflower,
    pairwise_lower_bound_l1,
    w1_estimate_check,
    weighted_mean,
)


def _random_set(seed, m=None, d=None):
    rng = np.random.default_rng(seed)
    m = m or int(rng.integers(1, 10))
    d = d or int(rng.integers(1, 4))
    w = rng.random(m) + 0.01
    return WeightedPointSet(rng.normal(size=(m, d)), w / w.sum()), rng


def in_hull(points, y, slack=1e-9):
    """LP-free hull test: ``y`` is not beyond any supporting line through two atoms."""
    points = np.atleast_2d(points)
    y = np.asarray(y, dtype=float)
    d = points.shape[1]
    if d == 1:
        return points.min() - slack <= y[0] <= points.max() + slack
    assert d == 2
    for i in range(len(points)):
        for j in range(len(points)):
            e = points[j] - points[i]
            if not np.any(e):
                continue
            normal = np.array([e[1], -e[0]]) / np.linalg.norm(e)
            side = (points - points[i]) @ normal
            if np.all(side <= 1e-12) and (y - points[i]) @ normal > slack:
                return False
    lo, hi = points.min(axis=0), points.max(axis=0)
    return bool(np.all(y >= lo - slack) and np.all(y <= hi + slack))


# ------------------------------------------------------------ weighted mean

def test_mean_symmetric_pair():
    ps = WeightedPointSet([[-1.0], [1.0]], [0.5, 0.5])
    np.testing.assert_array_equal(weighted_mean(ps), [0.0])


def test_mean_single_point():
    ps = WeightedPointSet([[3.0, -2.0]], [1.0])
    np.testing.assert_array_equal(weighted_mean(ps), [3.0, -2.0])


@given(st.integers(0, 2**32 - 1))
def test_mean_minimizes_along_random_lines(seed):
    ps, rng = _random_set(seed)
    m = weighted_mean(ps)
    for _ in range(5):
        u = rng.normal(size=ps.points.shape[1])
        ts = np.linspace(-2, 2, 401)
        vals = [ps.objective(m + t * u, 2) for t in ts]
        assert np.argmin(vals) == 200


def test_point_set_validation():
    with pytest.raises(ValueError):
        WeightedPointSet([[0.0], [1.0]], [0.5, 0.6])
    with pytest.raises(ValueError):
        WeightedPointSet([[0.0], [1.0]], [1.0, 0.0])
    with pytest.raises(ValueError):
        WeightedPointSet([[np.nan]], [1.0])
    with pytest.raises(ValueError):
        WeightedPointSet(np.zeros((0, 2)), [])


# ---------------------------------------------------------- geometric median

def test_median_collinear_symmetric():
    ps = WeightedPointSet([[-1.0], [0.0], [1.0]], [1 / 3, 1 / 3, 1 / 3])
    assert geometric_median(ps).point[0] == 0.0


def test_median_heavy_atom():
    N = 5
    ps = WeightedPointSet([[0.0], [-1.0]], [1 / N, (N - 1) / N])
    assert geometric_median(ps).point[0] == -1.0


def _grid_minimum(ps):
    # coarse 400 x 400 grid over the bounding box, then two local refinements
    lo, hi = ps.points.min(axis=0), ps.points.max(axis=0)
    best = None
    for _ in range(3):
        xs = np.linspace(lo[0], hi[0], 400)
        ys = np.linspace(lo[1], hi[1], 400)
        X, Y = np.meshgrid(xs, ys)
        Z = np.zeros_like(X)
        for x, w in zip(ps.points, ps.masses):
            Z += w * np.hypot(X - x[0], Y - x[1])
        k = np.unravel_index(np.argmin(Z), Z.shape)
        best = Z[k]
        c = np.array([X[k], Y[k]])
        step = np.array([xs[1] - xs[0], ys[1] - ys[0]])
        lo, hi = c - 2 * step, c + 2 * step
    return best


@pytest.mark.parametrize("seed", range(5))
def test_median_random_planar_vs_grid(seed):
    ps, _ = _random_set(seed, m=7, d=2)
    res = geometric_median(ps)
    ref = _grid_minimum(ps)
    assert abs(res.value - ref) <= 1e-4 * ref
    assert res.value <= ref * (1 + 1e-6) + 1e-12


def test_median_optimal_anchor_returned():
    ps = WeightedPointSet([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]], [0.55, 0.15, 0.15, 0.15])
    res = geometric_median(ps)
    np.testing.assert_array_equal(res.point, [0.0, 0.0])
    assert res.certified


def test_median_start_at_suboptimal_anchor():
    # the weighted mean is the light anchor at the origin, which is not optimal
    a = 0.33
    pts = [[0.0, 0.0], [2.0, 0.0], [-1.0, 1.0], [-1.0, -1.0]]
    ps = WeightedPointSet(pts, [1 - 3 * a, a, a, a])
    np.testing.assert_allclose(weighted_mean(ps), [0.0, 0.0], atol=1e-15)
    res = geometric_median(ps)
    assert res.certified
    assert res.value < ps.objective([0.0, 0.0], 1)
    assert np.linalg.norm(res.point) > 0


@given(st.integers(0, 2**32 - 1))
def test_median_result_invariants(seed):
    ps, _ = _random_set(seed)
    res = geometric_median(ps, eps=1e-6, keep_trace=True)
    assert res.certified_ratio >= 1
    assert res.value == pytest.approx(ps.objective(res.point, 1), abs=1e-12)
    if res.certified:
        assert res.value <= (1 + 1e-6) * res.lower_bound
    assert res.lower_bound <= ps.objective(res.point, 1) + 1e-12
    assert res.lower_bound >= pairwise_lower_bound_l1(ps.points, ps.masses) - 1e-15
    trace = res.trace
    assert all(b <= a + 1e-12 for a, b in zip(trace, trace[1:]))


@given(st.integers(0, 2**32 - 1))
def test_median_gradient_small_after_decrease_stop(seed):
    ps, _ = _random_set(seed, d=2)
    res = geometric_median(ps, eps=1e-15, max_iter=100_000)
    dist = np.linalg.norm(ps.points - res.point, axis=1)
    if dist.min() <= 1e-9:
        return  # anchor solution, no gradient there
    grad = -(ps.masses / dist) @ (ps.points - res.point)
    assert np.linalg.norm(grad) <= 1e-6 * ps.masses.sum()


@given(st.integers(0, 2**32 - 1), st.sampled_from([1, 2]))
def test_outputs_in_convex_hull(seed, d):
    ps, _ = _random_set(seed, d=d)
    assert in_hull(ps.points, weighted_mean(ps))
    assert in_hull(ps.points, geometric_median(ps).point)


def test_median_single_point():
    res = geometric_median(WeightedPointSet([[1.0, 2.0]], [1.0]))
    np.testing.assert_array_equal(res.point, [1.0, 2.0])
    assert res.value == 0.0 and res.certified


def test_median_rejects_nonpositive_eps():
    with pytest.raises(ValueError):
        geometric_median(WeightedPointSet([[0.0]], [1.0]), eps=0)


def test_barycentric_map_dispatch():
    ps = WeightedPointSet([[0.0], [1.0], [5.0]], [0.4, 0.4, 0.2])
    assert barycentric_map(ps, 2)[0] == pytest.approx(1.4)
    assert barycentric_map(ps, 1)[0] == 1.0


def test_collinear_points_in_the_plane():
    pts = [[0.0, 0.0], [1.0, 1.0], [3.0, 3.0]]
    res = geometric_median(WeightedPointSet(pts, [0.3, 0.3, 0.4]))
    np.testing.assert_allclose(res.point, [1.0, 1.0])


# ----------------------------------------------------------------- midpoint

def test_midpoint_two_halves():
    ps = WeightedPointSet([[0.0], [1.0]], [0.5, 0.5])
    assert ambiguous_median_midpoint(ps)[0] == 0.5


def test_midpoint_segment_from_cumulative_half():
    ps = WeightedPointSet([[-1.0], [0.0], [1.0]], [0.25, 0.25, 0.5])
    assert ambiguous_median_midpoint(ps)[0] == 0.5
    # exhaustive check: the objective is flat on [0, 1] and larger outside
    f = [ps.objective([t], 1) for t in np.linspace(-1, 1, 201)]
    flat = np.isclose(f, min(f), atol=1e-12)
    assert np.linspace(-1, 1, 201)[flat].min() == pytest.approx(0.0)


def test_midpoint_strict_majority():
    ps = WeightedPointSet([[-1.0], [1.0]], [0.3, 0.7])
    assert ambiguous_median_midpoint(ps)[0] == 1.0


def test_midpoint_in_plane():
    ps = WeightedPointSet([[0.0, 0.0], [2.0, 2.0]], [0.5, 0.5])
    np.testing.assert_allclose(ambiguous_median_midpoint(ps), [1.0, 1.0])


def test_midpoint_rejects_noncollinear():
    ps = WeightedPointSet([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], [0.3, 0.3, 0.4])
    with pytest.raises(ValueError):
        ambiguous_median_midpoint(ps)


# --------------------------------------------------------------- identities

def test_sunflower_at_mean():
    X = np.array([[0.0, 1.0], [2.0, 3.0]])
    w = np.array([0.25, 0.75])
    lhs, rhs = identity_check_sunflower(X, w, w @ X)
    var = w @ np.sum((X - w @ X) ** 2, axis=1)
    assert lhs == pytest.approx(var) and rhs == pytest.approx(var)


def test_sunflower_single_point():
    lhs, rhs = identity_check_sunflower([[1.0, 2.0]], [1.0], [4.0, 6.0])
    assert lhs == rhs == 25.0


def test_star_two_points():
    lhs, rhs = identity_check_star([[0.0], [2.0]], [0.5, 0.5])
    assert lhs == rhs == 1.0


@given(st.integers(0, 2**32 - 1))
def test_identities_random(seed):
    ps, rng = _random_set(seed)
    y = rng.normal(size=ps.points.shape[1])
    lhs, rhs = identity_check_sunflower(ps.points, ps.masses, y)
    assert abs(lhs - rhs) <= 1e-12 * (1 + abs(lhs))
    lhs, rhs = identity_check_star(ps.points, ps.masses)
    assert abs(lhs - rhs) <= 1e-12 * (1 + abs(lhs))
    lhs, rhs = w1_estimate_check(ps.points, ps.masses, y)
    assert lhs >= rhs - 1e-12
