"""Gradient-flow approximation for driftless nonholonomic systems with oscillating controls."""

from .control import ControllerParams, CoefficientVector, compute_a, eval_control, eval_dither
from .integrators import (
    SolverSettings,
    Trajectory,
    integrate_classical,
    integrate_gradient_flow,
    integrate_pi_eps,
)
from .kernels import BACKEND
from .potentials import (
    Potential,
    Workspace,
    make_artificial_khatib,
    make_artificial_ratio,
    make_navigation_potential,
    make_power_potential,
    make_tracking_potential,
)
from .system import (
    BracketScheme,
    ControlSystem,
    assemble_F,
    check_rank_condition,
    eval_lie_bracket,
    invert_F,
    unicycle,
    unicycle_scheme,
)

__version__ = "0.1.0"
