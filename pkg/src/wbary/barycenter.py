"""Approximate free-support barycenters from averaged optimal transport plans.

Every algorithm here applies the averaging map ``G`` once (or repeatedly, for
the fixed-point mode): each atom ``y_k`` of an initial measure is moved to the
barycentric map image ``m_k`` of its transport targets, keeping its mass.

* reference: start from one input measure, ``N - 1`` OT solves;
* pairwise: start from the ``lambda``-mixture of the inputs and reuse the
  ``N(N-1)/2`` pairwise plans, which equals the mixture of all reference
  results;
* fixed point: iterate ``G`` with freshly solved plans.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import bounds as _bounds
from .geometry import WeightedPointSet, geometric_median
from .measures import DiscreteMeasure, Problem, check_p
from .ot import TransportPlan, diagonal_plan, solve_many, wasserstein_objective

MERGE_TOL = 1e-12
MARGINAL_TOL = 1e-9
DEFAULT_EPS = 1e-6


@dataclass(frozen=True, eq=False)
class BarycenterResult:
    """Approximate barycenter with its exact objective and certified bounds.

    ``images`` are the barycentric images of the initial atoms before
    near-coincident atoms were merged; ``source_weights`` their masses.
    """

    measure: DiscreteMeasure
    objective: float
    lower_bound: float
    eta: float
    method: str
    p: int
    ref_index: int | None = None
    eps: float | None = None
    plan_cost: int | None = None
    report: _bounds.BoundReport | None = None
    images: np.ndarray = field(default=None, repr=False)
    source_weights: np.ndarray = field(default=None, repr=False)
    history: tuple = ()

    def metadata(self) -> dict:
        meta = {
            "method": self.method,
            "p": self.p,
            "objective": _json_float(self.objective),
            "lower_bound": float(self.lower_bound),
            "eta": float(self.eta),
            "ref_index": self.ref_index,
            "eps": self.eps,
            "plan_cost": self.plan_cost,
            "support_size": self.measure.n,
        }
        if self.history:
            meta["objective_history"] = list(self.history)
        if self.report is not None:
            meta["bounds"] = self.report.to_dict()
        return meta

    def to_dict(self) -> dict:
        return {"format": 1, **self.measure.to_dict(), "result": self.metadata()}


# ------------------------------------------------------------------ helpers

def _json_float(x):
    # a skipped objective is NaN, which JSON cannot carry
    x = float(x)
    return x if np.isfinite(x) else None


def merge_close(points, weights, tol: float = MERGE_TOL) -> DiscreteMeasure:
    """Measure ``sum_k w_k delta(x_k)`` with atoms closer than ``tol`` merged."""
    points = np.asarray(points, dtype=float)
    weights = np.asarray(weights, dtype=float)
    order = np.lexsort(points.T[::-1])
    pts, w = points[order], weights[order]
    keep_pts, keep_w = [], []
    rep = None
    for x, m in zip(pts, w):
        if rep is not None and np.max(np.abs(x - rep)) <= tol:
            keep_w[-1] += m
            continue
        rep = x
        keep_pts.append(x)
        keep_w.append(m)
    return DiscreteMeasure(np.array(keep_pts), np.array(keep_w))


def mixture(measures, weights) -> DiscreteMeasure:
    """``sum_i lambda_i mu^i`` as one measure (coincident atoms merged)."""
    pts = np.vstack([m.points for m in measures])
    w = np.concatenate([lam * m.weights for lam, m in zip(weights, measures)])
    return merge_close(pts, w)


def _check_plans(nu: DiscreteMeasure, plans, problem: Problem):
    if len(plans) != problem.N:
        raise ValueError(f"expected {problem.N} plans, got {len(plans)}")
    for i, (plan, mu) in enumerate(zip(plans, problem.measures)):
        if plan.source_size != nu.n or plan.target_size != mu.n:
            raise ValueError(f"plan {i} has shape {plan.source_size}x{plan.target_size}")
        if np.max(np.abs(plan.row_sums() - nu.weights)) > MARGINAL_TOL:
            raise ValueError(f"plan {i} does not have the source measure as first marginal")
        if np.max(np.abs(plan.col_sums() - mu.weights)) > MARGINAL_TOL:
            raise ValueError(f"plan {i} does not have mu^{i} as second marginal")


def barycentric_images(source_weights, plans, problem: Problem, p: int | None = None,
                       eps: float = DEFAULT_EPS) -> np.ndarray:
    """Images ``m_k`` of the source atoms under the barycentric map.

    ``plans[i]`` couples the source atoms with ``mu^i``.  For p=2 this is the
    matrix product ``diag(nu)^-1 sum_i lambda_i pi^i X^i``; for p=1 one
    weighted geometric median per source atom.
    """
    p = problem.p if p is None else check_p(p)
    nu = np.asarray(source_weights, dtype=float)
    n, d = len(nu), problem.d
    if p == 2:
        acc = np.zeros((n, d))
        for lam, plan, mu in zip(problem.weights, plans, problem.measures):
            np.add.at(acc, plan.rows, (lam * plan.masses)[:, None] * mu.points[plan.cols])
        return acc / nu[:, None]

    rows = np.concatenate([plan.rows for plan in plans])
    targets = np.vstack([mu.points[plan.cols] for plan, mu in zip(plans, problem.measures)])
    mass = np.concatenate([lam * plan.masses for lam, plan in zip(problem.weights, plans)])
    order = np.argsort(rows, kind="stable")
    rows, targets, mass = rows[order], targets[order], mass[order]
    splits = np.searchsorted(rows, np.arange(n + 1))
    out = np.empty((n, d))
    for k in range(n):
        s, e = splits[k], splits[k + 1]
        if s == e:
            raise RuntimeError(f"source atom {k} has no transported mass")
        ps = WeightedPointSet.normalized(targets[s:e], mass[s:e])
        out[k] = geometric_median(ps, eps).point
    return out


def average_map_G(nu: DiscreteMeasure, plans, problem: Problem, eps: float = DEFAULT_EPS,
                  p: int | None = None) -> DiscreteMeasure:
    """Push every atom of ``nu`` to its barycentric image under ``plans``."""
    _check_plans(nu, plans, problem)
    images = barycentric_images(nu.weights, plans, problem, p, eps)
    return merge_close(images, nu.weights)


def default_ref_index(problem: Problem) -> int:
    return int(np.argmax(problem.weights))  # first index on ties


# ------------------------------------------------------------ pairwise plans

@dataclass(frozen=True, eq=False)
class PairwisePlans:
    """Optimal plans ``pi^{ij}`` for ``i < j`` with their costs, solved once."""

    measures: tuple
    plan_cost: int
    plans: dict
    costs: np.ndarray

    def get(self, i: int, j: int) -> TransportPlan:
        if i == j:
            return diagonal_plan(self.measures[i], self.plan_cost)
        if i < j:
            return self.plans[i, j]
        return self.plans[j, i].transpose()

    def row(self, i: int) -> list:
        return [self.get(i, j) for j in range(len(self.measures))]


def compute_pairwise(problem: Problem, plan_cost: int | None = None) -> PairwisePlans:
    """Solve all ``N(N-1)/2`` pairwise OT problems under ``||x-y||^plan_cost``."""
    q = problem.p if plan_cost is None else check_p(plan_cost)
    ms = problem.measures
    pairs = [(i, j) for i in range(len(ms)) for j in range(i + 1, len(ms))]
    solved = solve_many([(ms[i], ms[j]) for i, j in pairs], q)
    costs = np.zeros((len(ms), len(ms)))
    plans = {}
    for (i, j), (plan, cost) in zip(pairs, solved):
        plans[i, j] = plan
        costs[i, j] = costs[j, i] = cost
    return PairwisePlans(ms, q, plans, costs)


def _bound_costs(problem: Problem, pairwise: PairwisePlans | None) -> np.ndarray:
    if pairwise is not None and pairwise.plan_cost == problem.p:
        return pairwise.costs
    return compute_pairwise(problem).costs


def _finish(problem, images, source_weights, plans, method, eps, plan_cost, costs,
            eta_worst, ref_index=None, compute_objective=True, eta_p2=None):
    measure = merge_close(images, source_weights)
    objective = wasserstein_objective(measure, problem) if compute_objective else float("nan")
    lb = _bounds.pairwise_lower_bound(costs, problem.weights)
    eta_general, degenerate = _bounds.adapted_bound_general(images, plans, problem, costs)
    if eta_p2 is not None:
        eta, eta_raw, degenerate = eta_p2
    else:
        eta, eta_raw = eta_general, eta_general
    report = _bounds.BoundReport(lb, eta_worst, eta, eta_raw, costs, degenerate)
    return BarycenterResult(
        measure, objective, lb, eta, method, problem.p, ref_index,
        eps if problem.p == 1 else None, plan_cost, report, images, np.asarray(source_weights),
    )


# ---------------------------------------------------------------- algorithms

def _reference_images(problem, ref, plans, eps):
    return barycentric_images(problem.measures[ref].weights, plans, problem, eps=eps)


def reference_barycenter(problem: Problem, ref_index: int | None = None, eps: float = DEFAULT_EPS,
                         plan_cost: int | None = None, compute_objective: bool = True,
                         pairwise: PairwisePlans | None = None) -> BarycenterResult:
    """One averaging step from the reference measure ``mu^ref``.

    The result has at most ``n_ref`` atoms and ``Psi(result) <= Psi(opt) /
    lambda_ref`` (times ``1 + eps`` for p=1).  ``plan_cost=2`` with ``p=1``
    computes the plans under squared distances but places atoms at medians.
    """
    ref = default_ref_index(problem) if ref_index is None else int(ref_index)
    if not 0 <= ref < problem.N:
        raise IndexError(f"reference index {ref} out of range for {problem.N} measures")
    q = problem.p if plan_cost is None else check_p(plan_cost)
    ms = problem.measures
    if pairwise is not None and pairwise.plan_cost == q:
        plans = pairwise.row(ref)
    else:
        others = [i for i in range(problem.N) if i != ref]
        solved = solve_many([(ms[ref], ms[i]) for i in others], q)
        plans = [None] * problem.N
        plans[ref] = diagonal_plan(ms[ref], q)
        for i, (plan, _) in zip(others, solved):
            plans[i] = plan
        if q == problem.p and pairwise is None:
            pairwise = _complete_pairwise(problem, ref, plans)
    images = _reference_images(problem, ref, plans, eps)
    costs = _bound_costs(problem, pairwise)
    eta_worst = _bounds.init_bound(problem.weights, ref) * ((1 + eps) if problem.p == 1 else 1.0)
    return _finish(problem, images, ms[ref].weights, plans, "reference", eps, q, costs,
                   eta_worst, ref, compute_objective)


def _complete_pairwise(problem, ref, ref_plans) -> PairwisePlans:
    # the bounds need every pairwise cost; reuse the N-1 plans already solved
    ms = problem.measures
    missing = [(i, j) for i in range(problem.N) for j in range(i + 1, problem.N)
               if ref not in (i, j)]
    solved = solve_many([(ms[i], ms[j]) for i, j in missing], problem.p)
    plans = {}
    costs = np.zeros((problem.N, problem.N))
    for j in range(problem.N):
        if j == ref:
            continue
        key = (ref, j) if ref < j else (j, ref)
        plan = ref_plans[j] if ref < j else ref_plans[j].transpose()
        plans[key] = plan
        costs[ref, j] = costs[j, ref] = plan.cost
    for (i, j), (plan, cost) in zip(missing, solved):
        plans[i, j] = plan
        costs[i, j] = costs[j, i] = cost
    return PairwisePlans(ms, problem.p, plans, costs)


def pairwise_barycenter(problem: Problem, eps: float = DEFAULT_EPS, plan_cost: int | None = None,
                        pairwise: PairwisePlans | None = None,
                        compute_objective: bool = True, bound_costs=None) -> BarycenterResult:
    """One averaging step from the mixture ``sum_i lambda_i mu^i`` using pairwise plans.

    Atom ``k`` of ``mu^i`` (mass ``lambda_i mu^i_k``) moves to the barycentric
    image under ``(pi^{i1}, ..., pi^{iN})``.  ``pairwise`` may carry plans
    solved earlier, e.g. when sweeping over many weight vectors;
    ``bound_costs`` likewise the matrix of ``W_p^p(mu^i, mu^j)``.
    """
    q = problem.p if plan_cost is None else check_p(plan_cost)
    if pairwise is None or pairwise.plan_cost != q:
        pairwise = compute_pairwise(problem, q)
    ms, lam = problem.measures, problem.weights
    blocks = [_reference_images(problem, i, pairwise.row(i), eps) for i in range(problem.N)]
    images = np.vstack(blocks)
    source_w = np.concatenate([lam[i] * ms[i].weights for i in range(problem.N)])

    # composite plans pi^j = sum_i lambda_i pi^{ij} out of the concatenated mixture atoms
    offsets = np.concatenate([[0], np.cumsum([m.n for m in ms])])
    plans = []
    for j in range(problem.N):
        parts = [pairwise.get(i, j) for i in range(problem.N)]
        plans.append(TransportPlan(
            int(offsets[-1]), ms[j].n,
            np.concatenate([pl.rows + offsets[i] for i, pl in enumerate(parts)]),
            np.concatenate([pl.cols for pl in parts]),
            np.concatenate([lam[i] * pl.masses for i, pl in enumerate(parts)]),
            q,
        ))

    costs = _bound_costs(problem, pairwise) if bound_costs is None else np.asarray(bound_costs)
    eta_p2 = None
    if problem.p == 2 and q == 2:
        y = np.vstack([m.points for m in ms])
        sq = np.sum((images - y) ** 2, axis=1)
        eta_p2 = _bounds.adapted_bound_p2((source_w, sq), costs, lam)
    eta_worst = 2.0 * ((1 + eps) if problem.p == 1 else 1.0)
    return _finish(problem, images, source_w, plans, "pairwise", eps, q, costs, eta_worst,
                   None, compute_objective, eta_p2)


def fixed_point_iterate(problem: Problem, init: DiscreteMeasure, max_rounds: int = 10,
                        eps: float = DEFAULT_EPS, tol: float = MERGE_TOL):
    """Iterate ``nu <- G(nu)`` with freshly solved optimal plans.

    Returns ``[(nu_0, Psi(nu_0)), (nu_1, Psi(nu_1)), ...]`` starting with the
    initial measure.  Stops after ``max_rounds`` updates or when an update
    leaves the measure unchanged.  One round is usually all that pays off.
    """
    if max_rounds < 1:
        raise ValueError("max_rounds must be at least 1")
    history, _ = _fixed_point(problem, init, max_rounds, eps, tol)
    return history


def _fixed_point(problem, init, max_rounds, eps, tol):
    nu = init
    history = []
    last = None
    for r in range(max_rounds + 1):
        solved = solve_many([(nu, mu) for mu in problem.measures], problem.p)
        plans = [plan for plan, _ in solved]
        objective = float(sum(l * c for l, (_, c) in zip(problem.weights, solved)))
        history.append((nu, objective))
        if r == max_rounds:
            break
        images = barycentric_images(nu.weights, plans, problem, eps=eps)
        new = merge_close(images, nu.weights)
        last = (nu, plans, images)
        if _same_measure(new, nu, tol):
            history.append((nu, objective))  # the round ran; record it before stopping
            break
        nu = new
    return history, last


def _same_measure(a: DiscreteMeasure, b: DiscreteMeasure, tol: float) -> bool:
    if a.n != b.n:
        return False
    a, b = a.sorted(), b.sorted()
    return (np.max(np.abs(a.points - b.points)) <= tol
            and np.max(np.abs(a.weights - b.weights)) <= tol)


def fixed_point_barycenter(problem: Problem, init: DiscreteMeasure | None = None,
                           max_rounds: int = 10, eps: float = DEFAULT_EPS,
                           ref_index: int | None = None) -> BarycenterResult:
    """Fixed-point mode as a :class:`BarycenterResult`.

    Starts from ``init`` or else from the input measure ``ref_index``
    (default: largest weight).  ``history`` holds the objective per round.
    """
    ref = default_ref_index(problem) if ref_index is None else int(ref_index)
    if not 0 <= ref < problem.N:
        raise IndexError(f"reference index {ref} out of range for {problem.N} measures")
    nu0 = problem.measures[ref] if init is None else init
    history, last = _fixed_point(problem, nu0, max_rounds, eps, MERGE_TOL)
    costs = compute_pairwise(problem).costs
    final, objective = history[-1]
    src, plans, images = last
    lb = _bounds.pairwise_lower_bound(costs, problem.weights)
    eta, degenerate = _bounds.adapted_bound_general(images, plans, problem, costs)
    worst = _bounds.init_bound(problem.weights, ref) if init is None else float("inf")
    worst *= (1 + eps) if problem.p == 1 else 1.0
    report = _bounds.BoundReport(lb, worst, eta, eta, costs, degenerate)
    return BarycenterResult(final, objective, lb, eta, "fixed_point", problem.p,
                            ref if init is None else None,
                            eps if problem.p == 1 else None, problem.p, report, images, src.weights,
                            tuple(obj for _, obj in history))
