"""Fault-tolerant receding-horizon Nash game planner with intent filtering."""

from .dynamics import AgentControl, AgentState, linearize, rollout, step_agent, step_joint
from .errors import (
    DimensionError,
    InvalidInputError,
    MaxIterationsExceeded,
    NonFiniteIterate,
    SingularKKTSystem,
    SolverError,
)
from .game import (
    ConstraintSet,
    GameDefinition,
    NashSolution,
    QuadraticCost,
    evaluate_constraints,
    constraint_jacobian,
    stage_cost,
    total_cost,
)
from .solver import (
    SolverParams,
    cost_gradient,
    nash_residual,
    shift_warm_start,
    solve_open_loop_nash,
)

__version__ = "0.1.0"
