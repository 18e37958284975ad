"""arzctl: boundary-control toolkit for stop-and-go freeway traffic.

Simulates the second-order macroscopic traffic PDE on a freeway segment and
stabilizes it around a congested reference state with four Lyapunov-based
boundary controllers (setpoint, outlet backstepping, collocated P,
anti-collocated PI) and PPO-trained reinforcement-learning boundary
policies, plus the metrics and experiment harness to compare them.
"""

from .errors import (
    BlowUpError,
    BoundaryInfeasibleError,
    ConfigError,
    KernelConvergenceError,
    StateError,
    TrainingDivergenceError,
)
from .model import (
    LinearCoeffs,
    ModelParams,
    SteadyState,
    equilibrium_velocity,
    equilibrium_velocity_slope,
    is_congested,
    linearize,
    make_steady_state,
)
from .solver import (
    BoundaryCommand,
    ConservedState,
    Grid,
    TrafficState,
    Trajectory,
    apply_boundary,
    flux,
    from_conserved,
    lax_wendroff_step,
    make_grid,
    simulate,
    source,
    to_conserved,
)

__version__ = "0.1.0"
