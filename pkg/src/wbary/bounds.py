"""Certified bounds on the barycenter objective.

Everything here is arithmetic over already computed transport artifacts:
pairwise costs ``W_p^p(mu^i, mu^j)``, transport plans and barycentric images.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SYMMETRY_TOL = 1e-9
DEGENERATE_TOL = 1e-14


@dataclass(frozen=True)
class BoundReport:
    """Lower bound on the optimal objective and the error multipliers.

    ``eta_adapted`` bounds ``Psi(approx) / Psi(optimal)`` for the given instance;
    ``eta_raw`` is the same quantity before clamping.  ``degenerate`` marks the
    all-identical-inputs case where the ratio is reported as 1.
    """

    lower_bound: float
    eta_worst_case: float
    eta_adapted: float
    eta_raw: float
    pairwise_costs: np.ndarray
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {
            "lower_bound": float(self.lower_bound),
            "eta_worst_case": float(self.eta_worst_case),
            "eta_adapted": float(self.eta_adapted),
            "eta_raw": float(self.eta_raw),
            "degenerate": bool(self.degenerate),
            "pairwise_costs": np.asarray(self.pairwise_costs).tolist(),
        }


def pairwise_lower_bound(pairwise_costs, weights) -> float:
    """``sum_{i<j} lambda_i lambda_j W_p^p(mu^i, mu^j)``; valid for p in {1, 2}."""
    C = np.asarray(pairwise_costs, dtype=float)
    lam = np.asarray(weights, dtype=float)
    if C.shape != (len(lam), len(lam)):
        raise ValueError(f"cost matrix shape {C.shape} does not match {len(lam)} weights")
    if np.max(np.abs(C - C.T), initial=0.0) > SYMMETRY_TOL:
        raise ValueError("pairwise cost matrix is not symmetric")
    iu = np.triu_indices(len(lam), 1)
    return float(np.sum(lam[iu[0]] * lam[iu[1]] * C[iu]))


def init_bound(weights, choice) -> float:
    """A-priori multiplier of an initial measure.

    ``choice`` is an index ``j`` (initialize with ``mu^j``: ``1 / lambda_j``)
    or ``"mixture"`` (initialize with ``sum_i lambda_i mu^i``: 2).
    """
    lam = np.asarray(weights, dtype=float)
    if choice == "mixture":
        return 2.0
    j = int(choice)
    if not 0 <= j < len(lam):
        raise IndexError(f"reference index {j} out of range for {len(lam)} measures")
    return float(1.0 / lam[j])


def transported_cost(images, plans, problem, p=None) -> float:
    """``sum_i lambda_i sum_{k,l} pi^i_kl ||m_k - x^i_l||^p`` for plans out of the images' source."""
    p = problem.p if p is None else p
    images = np.asarray(images, dtype=float)
    total = 0.0
    for lam, plan, mu in zip(problem.weights, plans, problem.measures):
        diff = images[plan.rows] - mu.points[plan.cols]
        sq = np.einsum("ij,ij->i", diff, diff)
        total += float(lam) * float(np.dot(plan.masses, sq if p == 2 else np.sqrt(sq)))
    return total


def adapted_bound_general(images, plans, problem, pairwise_costs):
    """Instance bound ``transported_cost / pairwise_lower_bound`` on the error ratio.

    ``images`` holds the barycentric image ``m_k`` of every source atom of
    ``plans`` (before any merging).  Returns ``(eta, degenerate)``; when the
    lower bound vanishes (all inputs identical) the bound is 1 by convention.
    """
    lb = pairwise_lower_bound(pairwise_costs, problem.weights)
    if lb <= DEGENERATE_TOL:
        return 1.0, True
    return transported_cost(images, plans, problem) / lb, False


def adapted_bound_p2(displacement, pairwise_costs, weights):
    """``2 - sum_k nu_k ||m_k - y_k||^2 / lower_bound`` for the pairwise p=2 run.

    ``displacement`` is either the scalar ``sum_k nu_k ||m_k - y_k||^2`` or a
    pair of arrays ``(nu_k, ||m_k - y_k||^2)``.  Returns
    ``(eta_clamped, eta_raw, degenerate)`` with the clamp to ``[1, 2]``.
    """
    if np.ndim(displacement) == 0:
        moved = float(displacement)
    else:
        nu_k, sq = displacement
        moved = float(np.dot(nu_k, sq))
    lb = pairwise_lower_bound(pairwise_costs, weights)
    if lb <= DEGENERATE_TOL:
        return 1.0, 1.0, True
    raw = 2.0 - moved / lb
    return float(min(max(raw, 1.0), 2.0)), raw, False
