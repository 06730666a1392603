"""kahlerflow: numerical laboratory for collapsing Kahler potential flows.

Integrates the parabolic complex Monge-Ampere flow on periodic torus factors
and exact homothety factors, solves the companion elliptic comparison family,
and verifies boundedness/decay monitors for curvature and potential bounds.
"""

from .errors import (
    BoundViolation,
    ConfigError,
    InequalityViolation,
    KahlerflowError,
    LinearSolveFailure,
    NewtonDivergence,
    NonpositiveValues,
    OptimalityFailure,
    PositivityLost,
    RescaleOnUnnormalized,
    SandwichViolation,
    StepFailure,
    ToleranceExceeded,
)
from .geometry import (
    Density,
    MetricField,
    ScalarField,
    TorusGrid,
    complex_hessian,
    gradient_norm_g,
    integrate,
    laplacian_g,
    ma_density,
    metric_from_potential,
    positivity_margin,
    scalar_curvature_direct,
)
from .model import (
    KIND_NEGATIVE_KE,
    KIND_RICCI_FLAT,
    KIND_TORUS,
    FactorSpec,
    FlowConfig,
    FlowState,
    ModelSpec,
    MonitorRecord,
    Trajectory,
)

__version__ = "0.1.0"

__all__ = [
    "BoundViolation",
    "ConfigError",
    "Density",
    "FactorSpec",
    "FlowConfig",
    "FlowState",
    "InequalityViolation",
    "KIND_NEGATIVE_KE",
    "KIND_RICCI_FLAT",
    "KIND_TORUS",
    "KahlerflowError",
    "LinearSolveFailure",
    "MetricField",
    "ModelSpec",
    "MonitorRecord",
    "NewtonDivergence",
    "NonpositiveValues",
    "OptimalityFailure",
    "PositivityLost",
    "RescaleOnUnnormalized",
    "SandwichViolation",
    "ScalarField",
    "StepFailure",
    "ToleranceExceeded",
    "TorusGrid",
    "Trajectory",
    "complex_hessian",
    "gradient_norm_g",
    "integrate",
    "laplacian_g",
    "ma_density",
    "metric_from_potential",
    "positivity_margin",
    "scalar_curvature_direct",
]
