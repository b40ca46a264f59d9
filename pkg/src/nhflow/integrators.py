"""Sampled (pi_epsilon), classical and gradient-flow trajectories.

All three integrators share one fixed RK4 grid: ``substeps_per_period``
steps per sampling period ``epsilon`` and ``ceil(horizon / epsilon)``
periods. Sampling instants ``t0 + j * epsilon`` sit exactly on the grid, so
the coefficient jump at each instant is never straddled by a step.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from . import kernels
from .control import ControllerParams, CoefficientVector, compute_a, dither_signals, eval_control
from .potentials import DomainViolationError, Potential
from .system import BracketScheme, ControlSystem, RankDegeneracyError

log = logging.getLogger(__name__)

PI_EPSILON = "pi_epsilon"
CLASSICAL = "classical"
GRADIENT_FLOW = "gradient_flow"

MIN_SUBSTEPS = 20


@dataclass(frozen=True)
class SolverSettings:
    horizon: float
    substeps_per_period: int = 64
    domain_guard: Optional[Callable[[np.ndarray, float], bool]] = None

    def __post_init__(self):
        if self.substeps_per_period < MIN_SUBSTEPS:
            raise ValueError(f"substeps_per_period must be >= {MIN_SUBSTEPS}, got {self.substeps_per_period}")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    potential_values: np.ndarray
    controls: Optional[np.ndarray]
    kind: str
    epsilon: float
    stride: int
    exit: Optional[dict] = None
    coefficients: list = field(default_factory=list)

    def __len__(self):
        return len(self.times)

    @property
    def sample_indices(self) -> np.ndarray:
        """Row indices of the sampling instants ``t0 + j * epsilon``."""
        return np.arange(0, len(self.times), self.stride)

    def samples(self):
        idx = self.sample_indices
        return self.times[idx], self.states[idx], self.potential_values[idx]

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    @property
    def truncated(self) -> bool:
        return self.exit is not None


def n_periods(horizon: float, epsilon: float) -> int:
    # tolerate horizon/epsilon landing a hair above an integer
    return max(1, math.ceil(horizon / epsilon - 1e-9))


def _rk4_block(rhs, x0: np.ndarray, t_start: float, h: float, steps: int) -> np.ndarray:
    out = np.empty((steps + 1, x0.size))
    out[0] = x = x0
    for i in range(steps):
        ta = t_start + i * h
        tb = t_start + (i + 0.5) * h
        tc = t_start + (i + 1) * h
        k1 = rhs(x, ta)
        k2 = rhs(x + 0.5 * h * k1, tb)
        k3 = rhs(x + 0.5 * h * k2, tb)
        k4 = rhs(x + h * k3, tc)
        x = x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[i + 1] = x
    return out


class _Recorder:
    """Accumulates rows and stops at the first state that leaves the domain."""

    def __init__(self, potential: Potential, guard):
        self.potential = potential
        self.guard = guard
        self.times, self.states, self.P, self.controls = [], [], [], []
        self.exit = None

    def accept(self, t: float, x: np.ndarray, reason_prefix: str = "") -> Optional[float]:
        if not np.all(np.isfinite(x)):
            self.exit = {"time": t, "state": x.tolist(), "reason": "non-finite state"}
            return None
        if self.guard is not None and not self.guard(x, t):
            self.exit = {"time": t, "state": x.tolist(), "reason": "domain guard violated"}
            return None
        try:
            p = self.potential.value(x, t)
        except DomainViolationError as exc:
            self.exit = {"time": t, "state": x.tolist(), "reason": str(exc)}
            return None
        if not math.isfinite(p):
            self.exit = {"time": t, "state": x.tolist(), "reason": "non-finite potential"}
            return None
        return p

    def add(self, t, x, p, u=None):
        self.times.append(t)
        self.states.append(np.array(x, dtype=float))
        self.P.append(p)
        if u is not None:
            self.controls.append(np.array(u, dtype=float))

    def build(self, kind, eps, stride, coefficients=()) -> Trajectory:
        controls = np.array(self.controls) if self.controls else None
        if self.exit is not None:
            log.info("%s trajectory truncated at t=%.6g: %s", kind, self.exit["time"], self.exit["reason"])
        return Trajectory(
            np.array(self.times), np.array(self.states), np.array(self.P), controls, kind, eps, stride,
            self.exit, list(coefficients),
        )


def _is_unicycle_fast_path(sys: ControlSystem, scheme: BracketScheme, params: ControllerParams) -> bool:
    return (
        sys.kernel == "unicycle"
        and scheme.s1 == (1, 2)
        and scheme.s2 == ((1, 2),)
        and params.feedforward is None
    )


def _block_controls(sys, scheme, params, a: CoefficientVector, times: np.ndarray) -> np.ndarray:
    u = dither_signals(scheme, a.a_second, params.epsilon, times, sys.m)
    for i, ai in zip(scheme.s1, a.a_first):
        u[:, i - 1] += ai
    if params.feedforward is not None:
        u += np.array([params.feedforward(t) for t in times], dtype=float)
    return u


def integrate_pi_eps(sys: ControlSystem, scheme: BracketScheme, potential: Potential, params: ControllerParams,
                     x0, t0: float = 0.0, settings: Optional[SolverSettings] = None, *,
                     use_kernel: bool = True) -> Trajectory:
    """Sampled closed loop: coefficients frozen at ``t_j``, dithers in continuous time.

    Raises
    ------
    RankDegeneracyError
        If the bracket matrix is degenerate at a sampling instant.
    """
    settings = settings or SolverSettings(horizon=params.epsilon)
    scheme.validate(sys)
    eps, S = params.epsilon, settings.substeps_per_period
    h = eps / S
    N = n_periods(settings.horizon, eps)
    fast = use_kernel and _is_unicycle_fast_path(sys, scheme, params)
    rec = _Recorder(potential, settings.domain_guard)
    x = np.array(x0, dtype=float)
    if x.shape != (sys.n,):
        raise ValueError(f"initial state has shape {x.shape}, expected ({sys.n},)")
    p = rec.accept(t0, x)
    if p is None:
        raise ValueError(f"initial state not admissible: {rec.exit['reason']}")
    coeffs = []
    a = None
    offsets = np.arange(S + 1) * h
    for j in range(N):
        tj = t0 + j * eps
        try:
            a = compute_a(sys, scheme, potential, params.gamma, x, tj, params.cond_limit)
        except RankDegeneracyError as exc:
            raise RankDegeneracyError(exc.cond, exc.cond_limit, x, tj, context=f"sampling instant j={j}") from exc
        except DomainViolationError as exc:
            rec.add(tj, x, p, np.full(sys.m, np.nan))
            rec.exit = {"time": tj, "state": x.tolist(), "reason": str(exc)}
            break
        coeffs.append(a.vector)
        if fast:
            block = kernels.unicycle_hold(x, tj, eps, S, a.a_first[0], a.a_first[1], a.a_second[0], scheme.kappa[0])
        else:
            block = _rk4_block(
                lambda y, t: sys.velocity(y, t, eval_control(sys, scheme, params, a, t)), x, tj, h, S
            )
        btimes = tj + offsets
        btimes[-1] = t0 + (j + 1) * eps
        u = _block_controls(sys, scheme, params, a, btimes)
        rec.add(tj, x, p, u[0])
        for i in range(1, S):
            p = rec.accept(btimes[i], block[i])
            if p is None:
                break
            rec.add(btimes[i], block[i], p, u[i])
        if rec.exit is not None:
            break
        x = block[S]
        p = rec.accept(btimes[S], x)
        if p is None:
            break
        if j == N - 1:
            rec.add(btimes[S], x, p, u[S])
    return rec.build(PI_EPSILON, eps, S, coeffs)


def integrate_classical(sys: ControlSystem, scheme: BracketScheme, potential: Potential, params: ControllerParams,
                        x0, t0: float = 0.0, settings: Optional[SolverSettings] = None) -> Trajectory:
    """Closed loop with coefficients re-evaluated at every RK4 stage (no sampling)."""
    settings = settings or SolverSettings(horizon=params.epsilon)
    scheme.validate(sys)
    eps, S = params.epsilon, settings.substeps_per_period
    h = eps / S
    N = n_periods(settings.horizon, eps)

    def control(y, t):
        return eval_control(sys, scheme, params, compute_a(sys, scheme, potential, params.gamma, y, t, params.cond_limit), t)

    def rhs(y, t):
        return sys.velocity(y, t, control(y, t))

    rec = _Recorder(potential, settings.domain_guard)
    x = np.array(x0, dtype=float)
    p = rec.accept(t0, x)
    if p is None:
        raise ValueError(f"initial state not admissible: {rec.exit['reason']}")
    try:
        for j in range(N):
            tj = t0 + j * eps
            for i in range(S):
                t = tj + i * h
                u = control(x, t)
                rec.add(t, x, p, u)
                k1 = sys.velocity(x, t, u)
                k2 = rhs(x + 0.5 * h * k1, tj + (i + 0.5) * h)
                k3 = rhs(x + 0.5 * h * k2, tj + (i + 0.5) * h)
                tn = t0 + (j + 1) * eps if i == S - 1 else tj + (i + 1) * h
                k4 = rhs(x + h * k3, tn)
                x = x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
                p = rec.accept(tn, x)
                if p is None:
                    raise StopIteration
        rec.add(t0 + N * eps, x, p, control(x, t0 + N * eps))
    except StopIteration:
        pass
    except DomainViolationError as exc:
        rec.exit = {"time": rec.times[-1] if rec.times else t0, "state": x.tolist(), "reason": str(exc)}
    return rec.build(CLASSICAL, eps, S)


def integrate_gradient_flow(potential: Potential, gamma: float, x0, t0: float = 0.0,
                            settings: Optional[SolverSettings] = None, epsilon: float = 0.1) -> Trajectory:
    """Reference dynamics ``xdot = -gamma grad P(x, t)`` on the same RK4 grid.

    ``epsilon`` only fixes the grid spacing (``epsilon / substeps_per_period``)
    so the result lines up row-for-row with the closed-loop trajectories.
    """
    settings = settings or SolverSettings(horizon=epsilon)
    S = settings.substeps_per_period
    h = epsilon / S
    N = n_periods(settings.horizon, epsilon)

    def rhs(y, t):
        return -gamma * potential.gradient(y, t)

    rec = _Recorder(potential, settings.domain_guard)
    x = np.array(x0, dtype=float)
    p = rec.accept(t0, x)
    if p is None:
        raise ValueError(f"initial state not admissible: {rec.exit['reason']}")
    rec.add(t0, x, p)
    try:
        for j in range(N):
            tj = t0 + j * epsilon
            block = _rk4_block(rhs, x, tj, h, S)
            for i in range(1, S + 1):
                t = t0 + (j + 1) * epsilon if i == S else tj + i * h
                p = rec.accept(t, block[i])
                if p is None:
                    raise StopIteration
                rec.add(t, block[i], p)
            x = block[S]
    except StopIteration:
        pass
    except (DomainViolationError, FloatingPointError, ValueError) as exc:
        rec.exit = {"time": rec.times[-1], "state": rec.states[-1].tolist(), "reason": f"gradient evaluation failed: {exc}"}
    return rec.build(GRADIENT_FLOW, epsilon, S)


def sampled_descent_holds(traj: Trajectory, floor: float = 0.0, lower_bound: float = 0.0) -> bool:
    _, _, P = traj.samples()
    for j in range(len(P) - 1):
        if P[j] - lower_bound < floor:
            return True
        if P[j + 1] > P[j]:
            return False
    return True


def auto_epsilon(sys: ControlSystem, scheme: BracketScheme, potential: Potential, params: ControllerParams, x0,
                 t0: float = 0.0, settings: Optional[SolverSettings] = None, n_intervals: int = 20,
                 max_halvings: int = 8, floor: float = 1e-12) -> tuple[float, int]:
    """Halve epsilon until P is non-increasing over the first ``n_intervals`` sampling instants.

    Returns ``(epsilon, halvings)``; raises ``RuntimeError`` when ``max_halvings`` is exhausted.
    """
    settings = settings or SolverSettings(horizon=params.epsilon)
    lb = potential.lower_bound or 0.0
    for k in range(max_halvings + 1):
        trial = replace(params, epsilon=params.epsilon / 2**k)
        s = replace(settings, horizon=n_intervals * trial.epsilon)
        traj = integrate_pi_eps(sys, scheme, potential, trial, x0, t0, s)
        if traj.exit is None and sampled_descent_holds(traj, floor, lb):
            return trial.epsilon, k
    raise RuntimeError(f"sampled descent still violated after {max_halvings} halvings of epsilon")
