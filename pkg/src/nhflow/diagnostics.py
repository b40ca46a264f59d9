"""Numerical checks of the convergence guarantees on simulated trajectories.

Every check returns a :class:`Report`. ``passed`` is ``None`` for
report-only checks (recorded in summaries but never failing a run).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .control import ControllerParams, CoefficientVector, bracket_quadrature, compute_a
from .integrators import SolverSettings, Trajectory, integrate_gradient_flow, integrate_pi_eps
from .potentials import ConfigurationError, Potential, Workspace
from .system import BracketScheme, ControlSystem

TOL_ABS = 1e-3
TOL_REL = 0.05


@dataclass
class Report:
    check: str
    passed: Optional[bool]
    metrics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        status = "report" if self.passed is None else ("pass" if self.passed else "fail")
        return {"check": self.check, "status": status, **_jsonable(self.metrics)}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


@dataclass(frozen=True)
class EnvelopeSpec:
    """Decay-envelope constants: gradient domination ``(mu, nu)`` and sandwich ``(w11, w12, v1, v2)``."""

    kind: str
    mu: float
    nu: float
    gamma_star: float
    rho: float = 0.0
    sandwich: tuple = (1.0, 1.0, 2.0, 2.0)

    def __post_init__(self):
        if self.kind not in ("exponential", "polynomial"):
            raise ValueError(f"unknown envelope kind {self.kind!r}")
        if (self.kind == "exponential") != (self.nu == 1.0):
            raise ValueError("exponential envelopes need nu == 1, polynomial ones nu > 1")

    @classmethod
    def from_potential(cls, potential: Potential, gamma_star: float, rho: float = 0.0) -> "EnvelopeSpec":
        env = potential.envelope
        if env is None:
            raise ConfigurationError(f"potential {potential.kind!r} carries no envelope constants")
        kind = "exponential" if env.nu == 1.0 else "polynomial"
        return cls(kind, env.mu, env.nu, gamma_star, rho, (env.omega11, env.omega12, env.v1, env.v2))

    def bound(self, t, d0: float, t0: float, epsilon: float):
        """Upper bound on ``|x(t) - x*|`` (``inf`` where the bound is vacuous)."""
        w11, w12, v1, v2 = self.sandwich
        s = np.asarray(t, dtype=float) - t0 - epsilon
        if self.kind == "exponential":
            beta = (w12 / w11) ** (1.0 / v1)
            return beta * d0 ** (v2 / v1) * np.exp(-self.mu * self.gamma_star * s / v1) + self.rho
        nu = self.nu
        b1 = (w12 / w11) ** (1.0 - nu)
        b2 = self.mu * self.gamma_star * (nu - 1.0) / w11 ** (1.0 - nu)
        with np.errstate(divide="ignore"):
            base = b1 * d0 ** (v2 * (1.0 - nu)) + b2 * s
        safe = np.where(base > 0, base, 1.0)
        return np.where(base > 0, safe ** (1.0 / (v1 * (1.0 - nu))), np.inf) + self.rho


def _envelope_check(name, kind, traj, x_star, spec, params, tol_abs, tol_rel) -> Report:
    if spec.kind != kind:
        raise ConfigurationError(f"{name} needs a {kind} envelope, got {spec.kind}")
    x_star = np.asarray(x_star, dtype=float)
    ts, X, _ = traj.samples()
    t0 = traj.times[0]
    d0 = float(np.linalg.norm(traj.states[0] - x_star))
    dist = np.linalg.norm(X - x_star, axis=1)
    env = spec.bound(ts, d0, t0, params.epsilon)
    finite_env = np.where(np.isfinite(env), env, 0.0)
    slack = tol_abs + tol_rel * finite_env
    margin = np.where(np.isfinite(env), env + slack - dist, np.inf)
    worst = int(np.argmin(margin))
    # between sampling instants the bound is only controlled up to a Gronwall factor
    all_d = np.linalg.norm(traj.states - x_star, axis=1)
    all_env = spec.bound(traj.times, d0, t0, params.epsilon)
    over = np.where(np.isfinite(all_env), all_d - all_env, -np.inf)
    return Report(name, bool(np.all(margin >= 0)), {
        "worst_margin": float(margin[worst]),
        "worst_time": float(ts[worst]),
        "n_samples": int(len(ts)),
        "initial_distance": d0,
        "intra_period_max_excess": float(np.max(over)),
        "tol_abs": tol_abs,
        "tol_rel": tol_rel,
    })


def check_exponential_envelope(traj: Trajectory, x_star, spec: EnvelopeSpec, params: ControllerParams,
                               tol_abs: float = TOL_ABS, tol_rel: float = TOL_REL) -> Report:
    return _envelope_check("exponential_envelope", "exponential", traj, x_star, spec, params, tol_abs, tol_rel)


def check_polynomial_envelope(traj: Trajectory, x_star, spec: EnvelopeSpec, params: ControllerParams,
                              tol_abs: float = TOL_ABS, tol_rel: float = TOL_REL) -> Report:
    return _envelope_check("polynomial_envelope", "polynomial", traj, x_star, spec, params, tol_abs, tol_rel)


def check_sampled_descent(traj: Trajectory, lower_bound: float = 0.0, floor: float = 1e-4) -> Report:
    """``P`` non-increasing between consecutive sampling instants until ``P - m_P < floor``."""
    ts, _, P = traj.samples()
    violations = []
    last = len(P) - 1
    for j in range(len(P) - 1):
        if P[j] - lower_bound < floor:
            last = j
            break
        if P[j + 1] > P[j]:
            violations.append({"j": j, "time": float(ts[j]), "increase": float(P[j + 1] - P[j])})
    tail = P[-max(1, len(P) // 10):] - lower_bound
    return Report("sampled_descent", not violations, {
        "violations": len(violations),
        "first_violations": violations[:5],
        "checked_until_index": last,
        "floor": floor,
        "residual_band": float(np.max(tail)),
    })


def _fit_exponential(ts, dist, t_ref):
    ok = dist > 0
    if np.count_nonzero(ok) < 3:
        return None, None
    slope, icpt = np.polyfit(ts[ok] - t_ref, np.log(dist[ok]), 1)
    return float(-slope), float(math.exp(icpt))


def check_tube_attraction(traj: Trajectory, curve: Callable[[float], np.ndarray], rho: float,
                          min_dwell: float = 1.0, sandwich=(1.0, 1.0, 2.0, 2.0)) -> Report:
    """Distance to the moving ``rho``-tube around ``curve``, evaluated at sampling instants.

    Passes when the sampled distance becomes zero at some entry time and
    stays zero for the rest of the run, at least ``min_dwell`` seconds.
    The exponential bound is fitted by least squares on the log distance
    before entry; ``beta`` from the sandwich constants is reported as is.
    """
    ts, X, _ = traj.samples()
    dist = np.array([np.linalg.norm(x - curve(t)) for t, x in zip(ts, X)])
    excess = np.maximum(0.0, dist - rho)
    outside = np.nonzero(excess > 0)[0]
    entry_idx = 0 if outside.size == 0 else int(outside[-1]) + 1
    entered = entry_idx < len(ts)
    entry_time = float(ts[entry_idx]) if entered else None
    dwell = float(ts[-1] - ts[entry_idx]) if entered else 0.0
    passed = entered and dwell >= min_dwell

    all_d = np.array([np.linalg.norm(x - curve(t)) for t, x in zip(traj.times, traj.states)])
    after = traj.times >= (entry_time if entered else np.inf)
    excursion = float(np.max(all_d[after] - rho)) if np.any(after) else None

    pre = dist[: max(entry_idx, 1)] if entered else dist
    rate, amp = _fit_exponential(ts[: len(pre)], pre, traj.times[0] + traj.epsilon)
    w11, w12, v1, v2 = sandwich
    return Report("tube_attraction", bool(passed), {
        "rho": rho,
        "entry_time": entry_time,
        "dwell": dwell,
        "max_sampled_distance_after_entry": float(np.max(dist[entry_idx:])) if entered else None,
        "intra_period_max_excursion": excursion,
        "terminal_distance": float(dist[-1]),
        "min_sampled_distance": float(np.min(dist)),
        "fit_rate": rate,
        "fit_amplitude": amp,
        "beta": (w12 / w11) ** (1.0 / v1),
    })


def check_obstacle_run(traj: Trajectory, workspace: Workspace, x_star, tol: float) -> Report:
    """Collision-free (every constraint strictly positive on every row) and terminal distance within ``tol``."""
    x_star = np.asarray(x_star, dtype=float)
    phis = np.array([workspace.phis(x) for x in traj.states])
    min_phi = phis.min(axis=0)
    bad = np.nonzero(np.any(phis <= 0, axis=1))[0]
    first_violation = None
    if bad.size:
        i = int(bad[0])
        first_violation = {"time": float(traj.times[i]), "constraint": int(np.argmin(phis[i]))}
    terminal = float(np.linalg.norm(traj.states[-1] - x_star))
    collision_free = bad.size == 0 and traj.exit is None
    return Report("obstacle_run", bool(collision_free and terminal <= tol), {
        "collision_free": bool(collision_free),
        "min_phi": min_phi.tolist(),
        "first_violation": first_violation,
        "terminal_distance": terminal,
        "tol": tol,
        "truncated": traj.exit,
    })


def check_spurious_critical_points(traj: Trajectory, potential: Potential, x_star, grad_tol: float = 1e-6,
                                   radius: float = 0.1, polish_time: float = 200.0) -> Report:
    """Follow the gradient flow from the terminal state and report where it settles (report only).

    A settling point with vanishing gradient farther than ``radius`` from
    the target is a critical point of ``P`` other than the minimum.
    """
    x_star = np.asarray(x_star, dtype=float)
    t_end = float(traj.times[-1])
    flow = integrate_gradient_flow(potential, 1.0, traj.final_state, t_end,
                                   SolverSettings(horizon=polish_time, substeps_per_period=20), epsilon=1.0)
    x_c = flow.final_state
    g = float(np.linalg.norm(potential.gradient(x_c, float(flow.times[-1]))))
    dist = float(np.linalg.norm(x_c - x_star))
    return Report("spurious_critical_points", None, {
        "settling_point": x_c.tolist(),
        "settling_value": float(flow.potential_values[-1]),
        "settling_gradient_norm": g,
        "distance_to_target": dist,
        "spurious": bool(g < grad_tol and dist > radius),
        "terminal_gradient_norm": float(np.linalg.norm(potential.gradient(traj.final_state, t_end))),
    })


def _validate_eps_list(eps_list):
    eps = np.asarray(eps_list, dtype=float)
    if eps.size < 3:
        raise ValueError("order test needs at least three epsilon values")
    ratios = eps[1:] / eps[:-1]
    if np.any(ratios >= 1) or not np.allclose(ratios, ratios[0], rtol=1e-9):
        raise ValueError("epsilon values must form a decreasing geometric sequence")
    return eps


def one_step_errors(sys: ControlSystem, scheme: BracketScheme, potential: Potential, gamma: float, x0, t0: float,
                    eps_list, substeps: int = 64) -> np.ndarray:
    """``|x_pi(t0 + eps) - x0 + eps gamma grad P(x0, t0)|`` for each ``eps``."""
    x0 = np.asarray(x0, dtype=float)
    g = potential.gradient(x0, t0)
    errs = []
    for eps in eps_list:
        traj = integrate_pi_eps(sys, scheme, potential, ControllerParams(gamma, eps), x0, t0,
                                SolverSettings(horizon=eps, substeps_per_period=substeps))
        errs.append(float(np.linalg.norm(traj.states[-1] - x0 + eps * gamma * g)))
    return np.array(errs)


def order_test_one_step(sys: ControlSystem, scheme: BracketScheme, potential: Potential, gamma: float, x0,
                        t0: float = 0.0, eps_list: Sequence[float] = (0.1, 0.05, 0.025, 0.0125),
                        min_slope: float = 1.4, substeps: int = 64) -> Report:
    """Fitted order of the one-period gradient-step remainder (log-log least squares)."""
    eps = _validate_eps_list(eps_list)
    errs = one_step_errors(sys, scheme, potential, gamma, x0, t0, eps, substeps)
    scale = max(1.0, float(np.linalg.norm(x0)))
    usable = errs > 1e-13 * scale
    metrics = {"epsilons": eps.tolist(), "errors": errs.tolist(), "min_slope": min_slope}
    if np.count_nonzero(usable) < 2:
        metrics.update(slope=None, degenerate=True)
        return Report("order_test", None, metrics)
    slope = float(np.polyfit(np.log(eps[usable]), np.log(errs[usable]), 1)[0])
    pair = [math.log(errs[i] / errs[i + 1]) / math.log(eps[i] / eps[i + 1])
            for i in range(len(eps) - 1) if usable[i] and usable[i + 1]]
    metrics.update(slope=slope, pairwise_orders=pair, degenerate=False)
    return Report("order_test", slope >= min_slope, metrics)


def check_bracket_quadrature(scheme: BracketScheme, a_held, epsilon: float, m: int, rtol: float = 1e-8,
                             n_points: int = 20001) -> Report:
    """Iterated dither integrals over one period reproduce ``epsilon * a_pair`` along each bracket."""
    if not isinstance(a_held, CoefficientVector):
        a_held = CoefficientVector.from_vector(a_held, scheme)
    rows = bracket_quadrature(scheme, a_held, epsilon, m, n_points=n_points)
    worst = max((r.relative_error for r in rows), default=0.0)
    return Report("bracket_quadrature", bool(worst <= rtol), {
        "pairs": [
            {"pair": list(r.pair), "bracket_coefficient": r.bracket_coefficient, "expected": r.expected,
             "relative_error": r.relative_error, "symmetric_sum": r.forward + r.backward, "product": r.product}
            for r in rows
        ],
        "worst_relative_error": worst,
        "rtol": rtol,
        "n_points": n_points,
    })


def compare_trajectories(a: Trajectory, b: Trajectory) -> Report:
    """Max state gap between two trajectories on their common rows (report only)."""
    n = min(len(a), len(b))
    gap = np.linalg.norm(a.states[:n] - b.states[:n], axis=1)
    return Report(f"{a.kind}_vs_{b.kind}", None, {
        "max_gap": float(gap.max()),
        "terminal_gap": float(gap[-1]),
        "sqrt_epsilon": math.sqrt(a.epsilon),
    })
