"""Brute-force exact solvers for verification at toy scale.

Both oracles go through :class:`LPTableau`, a dense two-phase primal simplex
with Bland's rule.  It is slow but terminates, and it shares no code with the
network simplex in :mod:`wbary.ot`.
"""

from __future__ import annotations

import itertools

import numpy as np

from . import bounds as _bounds
from .barycenter import BarycenterResult, compute_pairwise, merge_close
from .geometry import WeightedPointSet, geometric_median
from .measures import DiscreteMeasure, Problem, check_p
from .ot import TransportPlan, cost_matrix

OT_SIZE_GUARD = 10_000
BARYCENTER_SIZE_GUARD = 5_000


class OracleError(RuntimeError):
    """The dense simplex failed (pivot budget, infeasibility or unboundedness)."""


class OracleSizeError(ValueError):
    """The instance is beyond the brute-force size guard."""


class LPTableau:
    """Dense simplex tableau for ``min c.x  s.t.  A x = b, x >= 0``."""

    def __init__(self, A, b, c, tol: float = 1e-11):
        A = np.array(A, dtype=float)
        b = np.array(b, dtype=float)
        c = np.array(c, dtype=float)
        m, n = A.shape
        if b.shape != (m,) or c.shape != (n,):
            raise ValueError("inconsistent LP dimensions")
        flip = b < 0
        A[flip] *= -1
        b[flip] *= -1
        self.m, self.n, self.tol = m, n, tol
        self.c = c
        # columns: n structural, m artificial, then the right-hand side
        self.T = np.hstack([A, np.eye(m), b[:, None]])
        self.basis = list(range(n, n + m))
        self.pivots = 0

    def _pivot(self, r, j):
        T = self.T
        T[r] /= T[r, j]
        col = T[:, j].copy()
        col[r] = 0.0
        T -= np.outer(col, T[r])
        self.basis[r] = j
        self.pivots += 1

    def _run(self, cost, allowed, max_pivots):
        T = self.T
        while True:
            z = cost[:allowed] - cost[self.basis] @ T[:, :allowed]
            candidates = np.nonzero(z < -self.tol)[0]
            if len(candidates) == 0:
                return
            if self.pivots >= max_pivots:
                raise OracleError(f"simplex exceeded {max_pivots} pivots")
            j = int(candidates[0])
            column = T[:, j]
            rows = np.nonzero(column > self.tol)[0]
            if len(rows) == 0:
                raise OracleError("LP is unbounded")
            ratios = T[rows, -1] / column[rows]
            best = ratios.min()
            ties = rows[ratios <= best + self.tol * max(1.0, abs(best))]
            r = int(min(ties, key=lambda i: self.basis[i]))
            self._pivot(r, j)

    def solve(self, max_pivots: int = 200_000):
        """Return ``(x, value)`` at an optimal vertex."""
        m, n = self.m, self.n
        phase1 = np.concatenate([np.zeros(n), np.ones(m)])
        self._run(phase1, n + m, max_pivots)
        infeas = float(phase1[self.basis] @ self.T[:, -1])
        if infeas > 1e-9:
            raise OracleError(f"LP is infeasible (phase one residual {infeas:.3g})")
        # drive zero-level artificials out of the basis, dropping redundant rows
        r = 0
        while r < len(self.basis):
            if self.basis[r] >= n:
                nz = np.nonzero(np.abs(self.T[r, :n]) > 1e-9)[0]
                if len(nz):
                    self._pivot(r, int(nz[0]))
                else:
                    self.T = np.delete(self.T, r, axis=0)
                    del self.basis[r]
                    continue
            r += 1
        self.T = np.hstack([self.T[:, :n], self.T[:, -1:]])
        cost = self.c
        self._run(cost, n, max_pivots)
        x = np.zeros(n)
        x[self.basis] = np.maximum(self.T[:, -1], 0.0)
        return x, float(self.c @ x)


def solve_ot_lp(mu: DiscreteMeasure, nu: DiscreteMeasure, p=2):
    """Optimal transport by the dense LP over all ``n1 * n2`` couplings."""
    p = check_p(p)
    n1, n2 = mu.n, nu.n
    if n1 * n2 > OT_SIZE_GUARD:
        raise OracleSizeError(f"{n1}x{n2} exceeds the oracle size guard of {OT_SIZE_GUARD}")
    C = cost_matrix(mu, nu, p)
    A = np.zeros((n1 + n2, n1 * n2))
    for k in range(n1):
        A[k, k * n2:(k + 1) * n2] = 1.0
    for l in range(n2):
        A[n1 + l, l::n2] = 1.0
    x, value = LPTableau(A, np.concatenate([mu.weights, nu.weights]), C.ravel()).solve()
    plan = TransportPlan.from_dense(x.reshape(n1, n2), p, value)
    return plan, value


def tuple_barycenter(points, weights, p: int):
    """Optimal center of one support tuple and its cost ``sum_i lambda_i ||x_i - s||^p``."""
    if p == 2:
        s = weights @ points
        return s, float(weights @ np.sum((points - s) ** 2, axis=1))
    res = geometric_median(WeightedPointSet(points, weights), eps=1e-13, max_iter=200_000)
    return res.point, res.value


def exact_barycenter(problem: Problem):
    """Optimal barycenter by multi-marginal LP over all support tuples.

    Every tuple ``(x^1_{l_1}, ..., x^N_{l_N})`` contributes one candidate atom:
    its weighted mean (p=2) or weighted geometric median (p=1), priced at the
    tuple's barycentric cost.  An optimal vertex has at most
    ``sum_i n_i - N + 1`` atoms.  Returns ``(measure, objective)``.
    """
    p = problem.p
    sizes = [m.n for m in problem.measures]
    total = int(np.prod(sizes))
    if total > BARYCENTER_SIZE_GUARD:
        raise OracleSizeError(f"{total} support tuples exceed the guard of {BARYCENTER_SIZE_GUARD}")
    if p == 1 and problem.d > 2:
        raise OracleSizeError("the p=1 oracle is limited to d <= 2")
    lam = problem.weights
    tuples = list(itertools.product(*[range(s) for s in sizes]))
    centers = np.empty((total, problem.d))
    costs = np.empty(total)
    for t, idx in enumerate(tuples):
        pts = np.array([m.points[l] for m, l in zip(problem.measures, idx)])
        centers[t], costs[t] = tuple_barycenter(pts, lam, p)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    A = np.zeros((offsets[-1], total))
    for t, idx in enumerate(tuples):
        for i, l in enumerate(idx):
            A[offsets[i] + l, t] = 1.0
    b = np.concatenate([m.weights for m in problem.measures])
    gamma, value = LPTableau(A, b, costs).solve()
    keep = gamma > 0
    return merge_close(centers[keep], gamma[keep]), value


def exact_barycenter_result(problem: Problem) -> BarycenterResult:
    """:func:`exact_barycenter` packaged like the approximate algorithms' output."""
    measure, value = exact_barycenter(problem)
    costs = compute_pairwise(problem).costs
    lb = _bounds.pairwise_lower_bound(costs, problem.weights)
    degenerate = lb <= _bounds.DEGENERATE_TOL
    report = _bounds.BoundReport(lb, 1.0, 1.0, 1.0, costs, degenerate)
    return BarycenterResult(measure, value, lb, 1.0, "exact_oracle", problem.p, report=report)
