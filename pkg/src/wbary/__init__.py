"""Approximate free-support Wasserstein barycenters with certified error bounds."""

from .barycenter import (
    BarycenterResult,
    PairwisePlans,
    average_map_G,
    compute_pairwise,
    fixed_point_barycenter,
    fixed_point_iterate,
    pairwise_barycenter,
    reference_barycenter,
)
from .bounds import (
    BoundReport,
    adapted_bound_general,
    adapted_bound_p2,
    init_bound,
    pairwise_lower_bound,
)
from .geometry import MedianResult, WeightedPointSet, geometric_median, weighted_mean
from .measures import (
    DiscreteMeasure,
    MeasureError,
    Problem,
    gen_nested_ellipses,
    gen_sharpness_instance,
    gen_unit_disk_cloud,
    load_measure,
    save_measure,
)
from .ot import SolverError, TransportPlan, cost_matrix, solve_ot, transpose_plan, wasserstein_objective

__all__ = [
    "BarycenterResult", "BoundReport", "DiscreteMeasure", "MeasureError", "MedianResult",
    "PairwisePlans", "Problem", "SolverError", "TransportPlan", "WeightedPointSet",
    "adapted_bound_general", "adapted_bound_p2", "average_map_G", "compute_pairwise",
    "cost_matrix", "fixed_point_barycenter", "fixed_point_iterate", "gen_nested_ellipses",
    "gen_sharpness_instance", "gen_unit_disk_cloud", "geometric_median", "init_bound",
    "load_measure", "pairwise_barycenter", "pairwise_lower_bound", "reference_barycenter",
    "save_measure", "solve_ot", "transpose_plan", "wasserstein_objective", "weighted_mean",
]
