"""Learning linear forward-problem costs from observed decisions.

The package fits the cost parameter of a parametric optimization problem
from (context, decision) pairs via a regularized Fenchel-Young loss, with
suboptimality, KKT-residual, and denoise-then-fit baselines, exact and
regularized solvers for box, ball, capped-simplex, and path-polytope
regions, and a benchmark-family generator plus shortest-path pipeline.
"""

from .errors import (
    DegenerateKernelError,
    DivergedError,
    FyinvError,
    NegativeCycleError,
    NonConvergenceError,
    ParseError,
    UnreachableError,
    UnsupportedRegionError,
)
from .graphs import Graph, shortest_path
from .model import (
    Ball,
    Box,
    CostJacobian,
    CostKind,
    CostMap,
    Dataset,
    FlowPolytope,
    ForwardProblem,
    Noiseless,
    NoisyDecision,
    NoisyObjective,
    NonNegL1Cap,
    Parameter,
    Sense,
    UniformContexts,
    as_parameter,
    cost,
    cost_jacobian,
    region_contains,
    rng_stream,
    sample_dataset,
)
from .solvers import (
    FwConfig,
    fw_project,
    project_ball,
    project_box,
    project_nonneg_l1cap,
    solve_exact,
    solve_regularized,
)
from .losses import (
    dist_loss_oracle,
    fy_grad,
    fy_loss,
    kka_dual_dim,
    kka_grad,
    kka_objective,
    subopt_loss,
    subopt_subgrad,
)
from .train import (
    FitResult,
    SgdConfig,
    SpaConfig,
    ThetaBox,
    UnitL2Sphere,
    fy_sgd_fit,
    kka_fit,
    nw_denoise,
    spa_fit,
    subopt_fit,
)
from .synth import EXAMPLE_KINDS, ExampleSpec, build_example, generate
from .metrics import (
    CalibrationReport,
    MetricsReport,
    RegretBoundReport,
    calibration_check,
    decision_error,
    parameter_error,
    regret,
    regret_bound_check,
    relative_regret_ratio,
)
from .spath import (
    SpDataset,
    TravelRecord,
    grid_graph,
    load_graph,
    load_records,
    planted_theta,
    sp_fit,
    sp_run,
    synth_graph_instance,
    train_test_split,
)

__version__ = "0.1.0"

__all__ = [
    "Ball",
    "Box",
    "CalibrationReport",
    "CostJacobian",
    "CostKind",
    "CostMap",
    "Dataset",
    "DegenerateKernelError",
    "DivergedError",
    "EXAMPLE_KINDS",
    "ExampleSpec",
    "FitResult",
    "FlowPolytope",
    "ForwardProblem",
    "FwConfig",
    "FyinvError",
    "Graph",
    "MetricsReport",
    "NegativeCycleError",
    "NoisyDecision",
    "NoisyObjective",
    "Noiseless",
    "NonConvergenceError",
    "NonNegL1Cap",
    "Parameter",
    "ParseError",
    "RegretBoundReport",
    "Sense",
    "SgdConfig",
    "SpaConfig",
    "SpDataset",
    "ThetaBox",
    "TravelRecord",
    "UniformContexts",
    "UnitL2Sphere",
    "UnreachableError",
    "UnsupportedRegionError",
    "as_parameter",
    "build_example",
    "calibration_check",
    "cost",
    "cost_jacobian",
    "decision_error",
    "dist_loss_oracle",
    "fw_project",
    "fy_grad",
    "fy_loss",
    "fy_sgd_fit",
    "generate",
    "grid_graph",
    "kka_dual_dim",
    "kka_fit",
    "kka_grad",
    "kka_objective",
    "load_graph",
    "load_records",
    "nw_denoise",
    "parameter_error",
    "planted_theta",
    "project_ball",
    "project_box",
    "project_nonneg_l1cap",
    "region_contains",
    "regret",
    "regret_bound_check",
    "relative_regret_ratio",
    "rng_stream",
    "sample_dataset",
    "shortest_path",
    "solve_exact",
    "solve_regularized",
    "sp_fit",
    "sp_run",
    "spa_fit",
    "subopt_fit",
    "subopt_loss",
    "subopt_subgrad",
    "synth_graph_instance",
    "train_test_split",
]
