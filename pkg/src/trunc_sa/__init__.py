"""Truncated stochastic approximation with moving bounds.

A library plus CLI for projected root-finding recursions with time-varying
convex truncation regions, matrix step sizes, recursive AR(m) estimators, and
Monte Carlo convergence-rate diagnostics.
"""

from .errors import ConfigError, DomainError, UnsupportedNoiseError
from .truncation import (
    TruncationRegion,
    TruncationSchedule,
    admissibility_horizon,
    cnorm_condition,
    project,
)
from .engine import (
    Diverged,
    NoiseField,
    RegressionField,
    RunStatus,
    SAProblem,
    StepSizePolicy,
    Trajectory,
    derive_seed,
    iter_replicates,
    replicate,
    run,
    sa_step,
)
from .diagnostics import (
    CONDITIONS,
    DriftReport,
    QuadraticLyapunov,
    RateAccumulator,
    RateReport,
    adt_partial_sum,
    check_drift,
    decrement_k,
    lyapunov_track,
    rate_fit,
)
from .estimators import (
    ARModel,
    ARSeries,
    EstimatorState,
    LinearProcedureSpec,
    g1_matrix,
    gaussian_score,
    huber_psi,
    initial_state,
    innovation_score,
    linear_step,
    rls_step,
    rml_step,
    robust_step,
    score_information,
    sherman_morrison_update,
    simulate_ar,
    student_score,
)
from .scenarios import (
    SCENARIOS,
    ScenarioConfig,
    ScenarioReport,
    run_scenario,
)

__version__ = "0.1.0"
