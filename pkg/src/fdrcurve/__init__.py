"""FDR curve control for one-sided tests in location families."""

__version__ = "0.1.0"

from .distributions import DomainError, FamilyBatch, FamilyKind, LocationFamily, cdf, has_monotone_ratio, quantile, sup_ratio
from .fdr_curve import (
    Constraint,
    CurveSamples,
    DegenerateCurveError,
    Dominance,
    QStarCurve,
    TargetCurve,
    UnsupportedFamilyError,
    curve_from_constraints,
    dominates,
    q_star,
    q_star_single,
    select_constraints_greedy,
    select_constraints_minimal,
    touching_point,
)
from .testing import HypothesisSet, RejectionResult, bh_generalized, bh_standard, fdp_curve, normalized_p_values, p_value
from .ingest import DataError, ExpressionMatrix, GeneSummary, build_hypotheses, group_summary, load_matrix
from .simulation import CurveEstimate, SimulationConfig, lower_bound_curve, simulate_fdr_curve, sup_fdp_ratio_check
