"""Occupation times of critical branching Brownian motion with site-dependent branching.

Modules: :mod:`special_functions`, :mod:`volterra` (the half-order Volterra
solver), :mod:`limit_laws`, :mod:`particle_sim`, :mod:`experiments` and the
batch runner :mod:`cli`.
"""

from .experiments import ExperimentReport, estimate_laplace, ergodic_experiment, moment_experiment
from .limit_laws import (
    ConfigurationError,
    complete_monotonicity_probe,
    degenerate_limit_curve,
    limit_law_report,
    log_laplace,
    small_s_slope_check,
    xi_cumulants,
)
from .particle_sim import (
    PopulationCapError,
    ReplicateResult,
    SigmaProfile,
    SimConfig,
    TestFunction,
    run_replicates,
    simulate_replicate,
)
from .special_functions import dawson_core, q_function
from .volterra import (
    IterationLimitError,
    LambdaGrid,
    LaplaceSpec,
    SolverError,
    SolverGrid,
    equation_residual,
    forcing_term,
    picard_solve,
    solve_lambda,
    solve_lambda_extended,
)

__version__ = "0.1.0"
