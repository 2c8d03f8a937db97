"""Streaming solvers for growing block-coupled optimization problems.

The objective grows one convex loss term at a time, each coupling two
consecutive frames of variables.  The package provides the incremental
block-tridiagonal LU machinery, a streaming least-squares solver with
full or truncated backward updates, an online Newton method for general
convex frame losses, conditioning diagnostics that quantify how fast
updates decay as they back-propagate, and two experiment testbeds
(level-crossing signal reconstruction and Poisson intensity estimation).
"""

from .blocktridiag import (
    FULL,
    BlockTridiagSystem,
    ConditioningReport,
    FactorizationBreakdownError,
    LuStreamCache,
    backward_sweep,
    conditioning_report,
    contractive_recursion_bound,
    epsilon_fixed_point,
    first_block_sensitivity,
    forward_step,
    lu_append,
    solve_dense,
    spectral_norm,
)
from .convex_frames import (
    AggregateObjective,
    ConvergenceError,
    ConvexRateReport,
    FixedPrev,
    FrameLoss,
    HeadLoss,
    QuadraticFrameLoss,
    QuadraticHeadLoss,
    aggregate_grad,
    aggregate_hessian,
    aggregate_value,
    batch_minimize,
    conditional_decoupling_check,
    isolated_minimizer,
    quadratic_stream,
    rate_report,
)
from .noa import (
    ISOLATED,
    TAIL_MIN,
    BarrierSchedule,
    NoaConfig,
    NoaState,
    advance,
    barrier_solve,
    newton_step,
    window_objective,
)
from .stream_ls import (
    LsBatch,
    LsStreamState,
    decay_profile,
    ingest,
    normal_equations,
    truncation_error,
    truncation_sweep,
)

__version__ = "0.1.0"
