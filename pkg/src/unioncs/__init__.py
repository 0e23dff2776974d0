"""Compressive sensing with a union-of-convex-sets prior.

Solver based on multiplicative weight updates over set memberships combined
with proximal gradient steps on the signal, plus numerical evaluators for the
measurement-count bounds and a reproducible experiment harness.
"""

from .core import (
    CapacityError,
    expected_gauss_norm,
    project_simplex,
    soft_threshold,
    spectral_norm,
)
from .sets import (
    AffineSlice,
    Ball,
    Box,
    Halfspace,
    Intersection,
    PenaltyConfig,
    SupportWindow,
    contains,
    penalty,
    penalty_grad,
    phase_retrieval_branches,
    project_set,
    project_union,
    quantize,
    quantized_cells,
    smoothness_constant,
)
from .solver import (
    CertificateReport,
    ProblemInstance,
    SolverConfig,
    SolverResult,
    Trace,
    certificates,
    lagrangian,
    mw_update_p,
    objective_components,
    prox_gradient_step_x,
    regularized_update_p,
    solve,
)
from .theory import (
    BoundReport,
    MeasurementSearch,
    WidthEstimate,
    min_measurements,
    p1_bound,
    p2_bound,
    uniqueness_lower_bound,
    width_difference_cones,
    width_set,
    width_support_union,
    width_tangent_cone,
)
from .harness import (
    ExperimentSpec,
    TrialRecord,
    convergence_study,
    generate_problem,
    phase_transition,
    run_trial,
)

__version__ = "0.1.0"
