"""Two-sided impulse control of one-dimensional diffusions when interventions
are only allowed at the arrival times of an independent Poisson process."""
from .config import RunConfig
from .diffusion import DiffusionModel, GbmModel, StateInterval
from .errors import (
    BracketingError,
    ConfigError,
    ControlError,
    DomainError,
    PastingError,
    QuadratureError,
    SimulationError,
    SolverError,
    TailDivergenceError,
)
from .functionals import (
    AssumptionReport,
    ControlProblem,
    CriticalPoints,
    Numerics,
    ProblemSpec,
    Side,
    K_functional,
    L_functional,
)
from .functions import PowerSum, Smooth
from .montecarlo import PolicySpec, SimConfig, SimResult, dt_refinement, simulate, validate
from .resolvent import QuadratureSettings, check_resolvent_equation, resolve, resolvent_function
from .thresholds import (
    Thresholds,
    fixed_point_map,
    grid_oracle,
    lambda_sweep,
    pair_residual,
    singular_thresholds,
    solve_thresholds,
)
from .value import ValueFunction, build, diagnostics, evaluate, hjb_residuals, pasting_errors

__all__ = [name for name in dir() if not name.startswith("_")]
