"""Barycentric maps: weighted mean (p=2) and weighted geometric median (p=1).

The geometric median uses Weiszfeld's iteration.  It stops as soon as the
objective is provably within a factor ``1 + eps`` of the minimum.  The proof
compares against the best available lower bound on the minimal value:

* the pairwise bound ``sum_{i<j} w_i w_j ||x_i - x_j||``, and
* the convexity bound ``f(m) - ||grad f(m)|| * max_i ||x_i - m||``, valid
  because the minimizer lies in the convex hull of the anchors.

Collinear inputs are reduced to an exact 1-D weighted median; when the
minimizer set is a segment its midpoint is returned.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

COLLINEAR_TOL = 1e-10
TIE_TOL = 1e-12
DECREASE_FLOOR = 1e-12
GRAD_TOL = 1e-6  # masses sum to one
MAX_ITER = 10_000


@dataclass(frozen=True, eq=False)
class WeightedPointSet:
    """``m`` points in ``R^d`` with positive masses summing to one (within 1e-9)."""

    points: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        w = np.array(self.masses, dtype=float).reshape(-1)
        if len(pts) == 0 or len(pts) != len(w):
            raise ValueError("need m >= 1 points with one mass each")
        if not np.all(np.isfinite(pts)):
            raise ValueError("non-finite coordinates")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("masses must be positive and sum to one")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "masses", w / w.sum())

    @classmethod
    def normalized(cls, points, masses) -> "WeightedPointSet":
        w = np.asarray(masses, dtype=float)
        return cls(points, w / w.sum())

    def objective(self, y, p: int = 1) -> float:
        dist = np.linalg.norm(self.points - np.asarray(y, dtype=float), axis=1)
        return float(np.dot(self.masses, dist**p))


@dataclass(frozen=True)
class MedianResult:
    point: np.ndarray
    value: float
    certified_ratio: float
    iterations: int
    certified: bool
    lower_bound: float
    trace: list = field(default_factory=list, repr=False)


def weighted_mean(ps: WeightedPointSet) -> np.ndarray:
    return ps.masses @ ps.points


def _merge(points, masses):
    uniq, inverse = np.unique(points, axis=0, return_inverse=True)
    if len(uniq) == len(points):
        return points, masses
    w = np.zeros(len(uniq))
    np.add.at(w, inverse.reshape(-1), masses)
    return uniq, w


def _line_direction(points):
    """Unit direction if the points are collinear, else ``None``."""
    centered = points - points.mean(axis=0)
    if points.shape[1] == 1:
        return np.ones(1)
    s_vals, vt = np.linalg.svd(centered, full_matrices=False)[1:]
    if s_vals[0] == 0:
        return vt[0]
    if len(s_vals) < 2 or s_vals[1] <= COLLINEAR_TOL * s_vals[0]:
        return vt[0]
    return None


def _median_1d(points, masses, direction):
    t = (points - points[0]) @ direction
    order = np.argsort(t, kind="stable")
    cum = np.cumsum(masses[order])
    total = cum[-1]
    idx = int(np.searchsorted(cum, 0.5 * total - TIE_TOL * total))
    if idx < len(order) - 1 and abs(cum[idx] - 0.5 * total) <= TIE_TOL * total:
        # the minimizers form the segment between two consecutive atoms
        return 0.5 * (points[order[idx]] + points[order[idx + 1]])
    return points[order[idx]].copy()


def ambiguous_median_midpoint(ps: WeightedPointSet) -> np.ndarray:
    """Exact weighted median of collinear points, midpoint of the segment on ties."""
    pts, w = _merge(ps.points, ps.masses)
    if len(pts) == 1:
        return pts[0].copy()
    direction = _line_direction(pts)
    if direction is None:
        raise ValueError("points are not collinear")
    return _median_1d(pts, w, direction)


def pairwise_lower_bound_l1(points, masses) -> float:
    """``sum_{i<j} w_i w_j ||x_i - x_j||``, a lower bound on ``min_y sum_i w_i ||x_i - y||``."""
    diff = points[:, None, :] - points[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    return 0.5 * float(masses @ dist @ masses)


def _anchor_pull(points, masses, j):
    diff = points - points[j]
    dist = np.linalg.norm(diff, axis=1)
    dist[j] = np.inf
    return (masses / dist) @ diff


def geometric_median(ps: WeightedPointSet, eps: float = 1e-6, max_iter: int = MAX_ITER,
                     keep_trace: bool = False) -> MedianResult:
    """Weighted geometric median ``argmin_m sum_i w_i ||x_i - m||``.

    Returns a :class:`MedianResult`; ``certified`` is true when
    ``value <= (1 + eps) * lower_bound`` was verified, in which case
    ``value <= (1 + eps) * min f`` holds.  Otherwise the iteration stopped on
    a relative decrease below ``1e-12`` together with a gradient norm below
    ``1e-6``, on a step that failed to decrease ``f`` at all, or on
    ``max_iter``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    pts, w = _merge(ps.points, ps.masses)
    if len(pts) == 1:
        return MedianResult(pts[0].copy(), 0.0, 1.0, 0, True, 0.0)

    def f(y):
        return float(np.dot(w, np.linalg.norm(pts - y, axis=1)))

    lb_pair = pairwise_lower_bound_l1(pts, w)
    direction = _line_direction(pts)
    if direction is not None:
        y = _median_1d(pts, w, direction)
        val = f(y)
        return MedianResult(y, val, 1.0, 0, True, val)

    # an anchor is optimal iff the pull of the other anchors does not exceed its own mass
    pulls = np.array([np.linalg.norm(_anchor_pull(pts, w, j)) for j in range(len(pts))])
    optimal = np.nonzero(pulls <= w)[0]
    if len(optimal):
        y = pts[optimal[0]].copy()
        val = f(y)
        return MedianResult(y, val, 1.0, 0, True, val)

    diam = float(np.max(np.linalg.norm(pts - pts.mean(axis=0), axis=1))) * 2
    snap = 1e-12 * max(diam, 1.0)

    def leave_anchor(y):
        dist = np.linalg.norm(pts - y, axis=1)
        j = int(np.argmin(dist))
        if dist[j] > snap:
            return y
        pull = _anchor_pull(pts, w, j)
        return pts[j] + 1e-9 * diam * pull / np.linalg.norm(pull)

    y = leave_anchor(weighted_mean(WeightedPointSet(pts, w)))
    val = f(y)
    lower = lb_pair
    trace = [val] if keep_trace else []
    it = 0
    while True:
        diff = pts - y
        dist = np.linalg.norm(diff, axis=1)
        grad = -(w / dist) @ diff
        lower = max(lower, val - np.linalg.norm(grad) * dist.max())
        if val <= (1 + eps) * lower or it >= max_iter:
            break
        coef = w / dist
        y_new = leave_anchor(coef @ pts / coef.sum())
        val_new = f(y_new)
        it += 1
        if val_new > val:
            break  # rounding noise at convergence, keep the better point
        decrease = val - val_new
        y, val = y_new, val_new
        if keep_trace:
            trace.append(val)
        if decrease <= DECREASE_FLOOR * val:
            diff = pts - y
            dist = np.linalg.norm(diff, axis=1)
            grad = -(w / dist) @ diff
            lower = max(lower, val - np.linalg.norm(grad) * dist.max())
            # a tiny decrease alone is not convergence when the rate is slow
            if np.linalg.norm(grad) <= GRAD_TOL:
                break
    ratio = val / lower if lower > 0 else np.inf
    return MedianResult(y, val, max(ratio, 1.0), it, val <= (1 + eps) * lower, lower, trace)


def barycentric_map(ps: WeightedPointSet, p: int, eps: float = 1e-6) -> np.ndarray:
    """Minimizer of ``sum_i w_i ||x_i - m||^p``: mean for p=2, median for p=1."""
    if p == 2:
        return weighted_mean(ps)
    return geometric_median(ps, eps).point


# ------------------------------------------------------- identity checkers

def identity_check_sunflower(points, weights, y):
    """Both sides of ``sum w_i||x_i-y||^2 = ||m-y||^2 + sum w_i||x_i-m||^2``."""
    X = np.atleast_2d(np.asarray(points, dtype=float))
    w = np.asarray(weights, dtype=float)
    y = np.asarray(y, dtype=float)
    m = w @ X
    lhs = float(w @ np.sum((X - y) ** 2, axis=1))
    rhs = float(np.sum((m - y) ** 2) + w @ np.sum((X - m) ** 2, axis=1))
    return lhs, rhs


def identity_check_star(points, weights):
    """Both sides of ``sum w_i||x_i-m||^2 = sum_{i<j} w_i w_j ||x_i-x_j||^2``."""
    X = np.atleast_2d(np.asarray(points, dtype=float))
    w = np.asarray(weights, dtype=float)
    m = w @ X
    lhs = float(w @ np.sum((X - m) ** 2, axis=1))
    diff = X[:, None, :] - X[None, :, :]
    sq = np.einsum("ijk,ijk->ij", diff, diff)
    rhs = 0.5 * float(w @ sq @ w)
    return lhs, rhs


def w1_estimate_check(points, weights, y):
    """Both sides of ``sum w_i||x_i-y|| >= sum_{i<j} w_i w_j ||x_i-x_j||``."""
    X = np.atleast_2d(np.asarray(points, dtype=float))
    w = np.asarray(weights, dtype=float)
    lhs = float(w @ np.linalg.norm(X - np.asarray(y, dtype=float), axis=1))
    return lhs, pairwise_lower_bound_l1(X, w)
