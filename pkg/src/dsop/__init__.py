"""Chance-constrained orienteering with time-dependent stochastic travel times.

Select a maximum-reward simple path from a start to an exit vertex subject to
P(arrival at exit <= deadline) >= 1 - epsilon, where each edge's travel-time
distribution depends on the arrival time at its source.
"""

from .errors import (
    ConfigurationError,
    DsopError,
    EnumerationLimitError,
    GenerationError,
    InstanceFormatError,
    NoFeasibleSolution,
    SolverTimeout,
    UnsupportedDistributionError,
)
from .instances import (
    GeneratorConfig,
    generate_hard_variant,
    generate_oracle_instance,
    generate_synthetic,
)
from .model import (
    Band,
    DiscreteDist,
    Estimator,
    GammaDist,
    Instance,
    Path,
    SearchConfig,
    Solution,
    SolveRequest,
    TimeDependentEdge,
    Vertex,
    VertexId,
    Violation,
    load_instance,
    save_instance,
    validate_instance,
    validate_path,
)
from .probability import (
    PrefixProductCache,
    ProbabilityEstimate,
    RangeGrid,
    TransitionMatrixStore,
    build_range_grid,
    edge_transition_matrix,
    exact_completion_probability,
    expected_utility,
    initial_arrival_row,
    is_feasible,
    matrix_completion_probability,
    sampling_completion_probability,
    vertex_utility,
)
from .solver import (
    DEFAULT_METRIC,
    InsertionEvaluation,
    InsertionMetric,
    MatrixPathEvaluator,
    SamplingPathEvaluator,
    branch_and_bound,
    construction_heuristic,
    derive_sampler_seed,
    evaluate_insertion,
    insertion_phase,
    local_search,
    make_evaluator,
    removal_phase,
    sa_accept,
    temperature_at,
    two_opt,
)

__version__ = "0.1.0"

__all__ = [
    "Band",
    "ConfigurationError",
    "DEFAULT_METRIC",
    "DiscreteDist",
    "DsopError",
    "EnumerationLimitError",
    "Estimator",
    "GammaDist",
    "GenerationError",
    "GeneratorConfig",
    "Instance",
    "InsertionEvaluation",
    "InsertionMetric",
    "InstanceFormatError",
    "MatrixPathEvaluator",
    "NoFeasibleSolution",
    "Path",
    "PrefixProductCache",
    "ProbabilityEstimate",
    "RangeGrid",
    "SamplingPathEvaluator",
    "SearchConfig",
    "Solution",
    "SolveRequest",
    "SolverTimeout",
    "TimeDependentEdge",
    "TransitionMatrixStore",
    "UnsupportedDistributionError",
    "Vertex",
    "VertexId",
    "Violation",
    "branch_and_bound",
    "build_range_grid",
    "construction_heuristic",
    "derive_sampler_seed",
    "edge_transition_matrix",
    "evaluate_insertion",
    "exact_completion_probability",
    "expected_utility",
    "generate_hard_variant",
    "generate_oracle_instance",
    "generate_synthetic",
    "initial_arrival_row",
    "insertion_phase",
    "is_feasible",
    "load_instance",
    "local_search",
    "make_evaluator",
    "matrix_completion_probability",
    "removal_phase",
    "sa_accept",
    "temperature_at",
    "sampling_completion_probability",
    "save_instance",
    "two_opt",
    "validate_instance",
    "validate_path",
    "vertex_utility",
]
