"""Potential functions ``P(x, t)`` and the built-in constructions.

Every potential exposes ``value(x, t)`` and ``gradient(x, t)`` (spatial
gradient only). Obstacle-aware potentials are built from a :class:`Workspace`
whose boundary function is positive inside the workspace and whose obstacle
functions are negative inside each obstacle.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .system import fd_step

ValueFn = Callable[[np.ndarray, float], float]
GradFn = Callable[[np.ndarray, float], np.ndarray]


class DomainViolationError(ValueError):
    """Potential evaluated on or inside an obstacle (or outside the workspace)."""

    def __init__(self, x, index: int, phi_value: float):
        self.x = np.array(x, dtype=float)
        self.index = index
        self.phi_value = phi_value
        super().__init__(f"x={self.x.tolist()} violates constraint phi_{index} = {phi_value:.6g} <= 0")


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class EnvelopeMeta:
    """Gradient-domination and sandwich constants of a potential.

    ``|grad P|^2 >= mu (P - m_P)^nu`` and
    ``omega11 |x - x*|^v1 <= P - m_P <= omega12 |x - x*|^v2``.
    """

    mu: float
    nu: float
    omega11: float = 1.0
    omega12: float = 1.0
    v1: float = 2.0
    v2: float = 2.0


def fd_gradient(value: ValueFn, x, t: float = 0.0, h: Optional[float] = None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if h is None:
        h = fd_step(x)
    g = np.empty_like(x)
    for i in range(x.size):
        dx = np.zeros_like(x)
        dx[i] = h
        g[i] = (value(x + dx, t) - value(x - dx, t)) / (2.0 * h)
    return g


@dataclass
class Potential:
    value_fn: ValueFn
    gradient_fn: Optional[GradFn] = None
    lower_bound: Optional[float] = None
    envelope: Optional[EnvelopeMeta] = None
    kind: str = "custom"
    x_star: Optional[np.ndarray] = None
    curve: Optional[Callable[[float], np.ndarray]] = None
    workspace: Optional["Workspace"] = None
    info: dict = field(default_factory=dict)

    def value(self, x, t: float = 0.0) -> float:
        return float(self.value_fn(np.asarray(x, dtype=float), float(t)))

    def gradient(self, x, t: float = 0.0) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.gradient_fn is None:
            return fd_gradient(self.value_fn, x, float(t))
        return np.asarray(self.gradient_fn(x, float(t)), dtype=float)

    __call__ = value


# -- workspace -------------------------------------------------------------

class Disc:
    """Planar disc constraint acting on two state coordinates.

    As an obstacle (``boundary=False``) the function is
    ``|p - c|^2 - r^2`` (negative inside); as the workspace boundary it is
    ``r^2 - |p - c|^2`` (positive inside).
    """

    def __init__(self, center, radius: float, boundary: bool = False, axes=(0, 1)):
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)
        self.boundary = boundary
        self.axes = tuple(axes)
        if self.radius <= 0:
            raise ValueError("disc radius must be positive")

    def __call__(self, x) -> float:
        d = np.asarray(x, dtype=float)[list(self.axes)] - self.center
        v = float(d @ d) - self.radius**2
        return -v if self.boundary else v

    def grad(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        g = np.zeros_like(x)
        g[list(self.axes)] = 2.0 * (x[list(self.axes)] - self.center)
        return -g if self.boundary else g

    def hessian_min_eig(self) -> float:
        return -2.0 if self.boundary else 2.0

    def __repr__(self):
        role = "boundary" if self.boundary else "obstacle"
        return f"Disc({self.center.tolist()}, r={self.radius}, {role})"


def _phi_grad(phi, x) -> np.ndarray:
    if hasattr(phi, "grad"):
        return phi.grad(x)
    return fd_gradient(lambda y, t: phi(y), x)


@dataclass
class Workspace:
    """Free space ``{phi0 >= 0} minus union {phi_i < 0}``."""

    phi0: Callable
    obstacles: list = field(default_factory=list)

    @property
    def functions(self) -> list:
        return [self.phi0, *self.obstacles]

    def phis(self, x) -> np.ndarray:
        return np.array([phi(x) for phi in self.functions])

    def phi(self, x) -> float:
        """Product of the boundary and all obstacle functions."""
        return float(np.prod(self.phis(x)))

    def phi_and_grad(self, x) -> tuple[float, np.ndarray, np.ndarray]:
        vals = self.phis(x)
        grads = [_phi_grad(f, x) for f in self.functions]
        total = float(np.prod(vals))
        g = np.zeros(len(x))
        for i, gi in enumerate(grads):
            g += gi * np.prod(np.delete(vals, i))
        return total, g, vals

    def contains(self, x, strict: bool = True) -> bool:
        vals = self.phis(x)
        return bool(np.all(vals > 0) if strict else np.all(vals >= 0))

    def require_free(self, x, allow_boundary: bool = False):
        vals = self.phis(x)
        for i, v in enumerate(vals):
            if v < 0 or (v == 0 and not allow_boundary):
                raise DomainViolationError(x, i, float(v))
        return vals


@dataclass
class ValidityReport:
    passed: bool
    overlaps: list
    outside: list
    n_points: int

    def to_dict(self):
        return {
            "check": "workspace_validity",
            "passed": self.passed,
            "overlapping_pairs": [list(p) for p in self.overlaps],
            "obstacles_touching_boundary": self.outside,
            "n_points": self.n_points,
        }


def check_workspace_validity(ws: Workspace, axes_values: Sequence[Sequence[float]]) -> ValidityReport:
    """Grid test that obstacle closures are disjoint and inside the workspace.

    ``axes_values`` lists the sampled coordinates for every state dimension;
    the grid is their Cartesian product.
    """
    overlaps, outside = set(), set()
    count = 0
    for pt in itertools.product(*axes_values):
        count += 1
        x = np.asarray(pt, dtype=float)
        inside = [i for i, phi in enumerate(ws.obstacles, start=1) if phi(x) <= 0]
        if not inside:
            continue
        if ws.phi0(x) <= 0:
            outside.update(inside)
        for a, b in itertools.combinations(inside, 2):
            overlaps.add((a, b))
    return ValidityReport(not overlaps and not outside, sorted(overlaps), sorted(outside), count)


def check_navigation_condition(ws: Workspace, x_star, n_boundary: int = 64) -> dict:
    """Numeric test of ``grad phi_i(x)^T (x - x*) / |x - x*|^2 < c_phi_i`` on obstacle rims.

    Only disc obstacles are supported (their boundary is sampled directly and
    ``c_phi_i`` is the smallest Hessian eigenvalue in the disc plane). This is
    a diagnostic for the tuning-exponent requirement, not a guarantee.
    """
    x_star = np.asarray(x_star, dtype=float)
    worst = {}
    for i, obs in enumerate(ws.obstacles, start=1):
        if not isinstance(obs, Disc):
            worst[i] = None
            continue
        c_phi = obs.hessian_min_eig()
        ratio_max = -math.inf
        for th in np.linspace(0.0, 2 * np.pi, n_boundary, endpoint=False):
            x = x_star.copy()
            x[list(obs.axes)] = obs.center + obs.radius * np.array([math.cos(th), math.sin(th)])
            d = x - x_star
            ratio_max = max(ratio_max, float(obs.grad(x) @ d / (d @ d)))
        worst[i] = {"max_ratio": ratio_max, "c_phi": c_phi, "holds": ratio_max < c_phi}
    holds = all(v is None or v["holds"] for v in worst.values())
    return {"check": "navigation_condition", "passed": holds, "obstacles": worst}


# -- constructors ----------------------------------------------------------

def make_power_potential(x_star, p: int = 2) -> Potential:
    """``P(x) = |x - x*|^p`` for ``p`` in {2, 4}."""
    if p not in (2, 4):
        raise ValueError(f"unsupported exponent p={p}; expected 2 or 4")
    xs = np.asarray(x_star, dtype=float)
    half = p // 2

    def value(x, t):
        d = x - xs
        return float(d @ d) ** half

    def grad(x, t):
        d = x - xs
        return p * float(d @ d) ** (half - 1) * d

    # |grad P|^2 = p^2 |d|^(2p-2) = p^2 P^((2p-2)/p)
    env = EnvelopeMeta(mu=float(p * p), nu=(2.0 * p - 2.0) / p, omega11=1.0, omega12=1.0, v1=float(p), v2=float(p))
    return Potential(value, grad, lower_bound=0.0, envelope=env, kind=f"power{p}", x_star=xs)


def make_tracking_potential(curve: Callable[[float], np.ndarray]) -> Potential:
    """``P(x, t) = |x - curve(t)|^2`` with spatial gradient ``2 (x - curve(t))``."""

    def ref(t):
        try:
            c = np.asarray(curve(t), dtype=float)
        except Exception as exc:
            raise ConfigurationError(f"reference curve failed at t={t}: {exc}") from exc
        if not np.all(np.isfinite(c)):
            raise ConfigurationError(f"reference curve is not finite at t={t}")
        return c

    def value(x, t):
        d = x - ref(t)
        return float(d @ d)

    def grad(x, t):
        return 2.0 * (x - ref(t))

    env = EnvelopeMeta(mu=4.0, nu=1.0, omega11=1.0, omega12=1.0, v1=2.0, v2=2.0)
    return Potential(value, grad, lower_bound=0.0, envelope=env, kind="tracking", curve=ref)


def make_navigation_potential(workspace: Workspace, x_star, K: int = 4) -> Potential:
    """``P = |x - x*|^2 / (|x - x*|^(2K) + phi(x))^(1/K)`` with ``phi`` the product of all constraints."""
    if K < 1 or int(K) != K:
        raise ValueError("K must be a positive integer")
    K = int(K)
    xs = np.asarray(x_star, dtype=float)
    vals = workspace.phis(xs)
    if np.any(vals <= 0):
        bad = int(np.argmin(vals))
        raise DomainViolationError(xs, bad, float(vals[bad]))

    def value(x, t):
        d = x - xs
        r2 = float(d @ d)
        phi = workspace.phi(x)
        s = r2**K + phi
        if r2 == 0.0:
            return 0.0
        if s <= 0:
            raise DomainViolationError(x, int(np.argmin(workspace.phis(x))), phi)
        return r2 / s ** (1.0 / K)

    def grad(x, t):
        workspace.require_free(x, allow_boundary=True)
        d = x - xs
        r2 = float(d @ d)
        phi, gphi, _ = workspace.phi_and_grad(x)
        s = r2**K + phi
        gs = 2.0 * K * r2 ** (K - 1) * d + gphi
        sk = s ** (-1.0 / K)
        return 2.0 * d * sk - (r2 / K) * sk / s * gs

    return Potential(value, grad, lower_bound=0.0, kind="navigation", x_star=xs, workspace=workspace, info={"K": K})


def make_artificial_khatib(x_star, workspace: Workspace, K: float, xi_level: float) -> Potential:
    """Attractive/repulsive potential switching at ``phi(x) = xi_level``.

    Inside the influence zone ``|x - x*|^2 + K (1/phi - 1/xi_level)^2``,
    outside ``K |x - x*|^2``. The two branches disagree on the switching
    surface unless ``K == 1``; :func:`khatib_jump` reports the gap.
    """
    if K <= 0 or xi_level <= 0:
        raise ValueError("K and xi_level must be positive")
    xs = np.asarray(x_star, dtype=float)

    def value(x, t):
        workspace.require_free(x)
        d = x - xs
        r2 = float(d @ d)
        phi = workspace.phi(x)
        if phi <= xi_level:
            return r2 + K * (1.0 / phi - 1.0 / xi_level) ** 2
        return K * r2

    def grad(x, t):
        workspace.require_free(x)
        d = x - xs
        phi, gphi, _ = workspace.phi_and_grad(x)
        if phi <= xi_level:
            return 2.0 * d - 2.0 * K * (1.0 / phi - 1.0 / xi_level) * gphi / phi**2
        return 2.0 * K * d

    lb = 0.0 if workspace.phi(xs) > 0 else None
    return Potential(
        value, grad, lower_bound=lb, kind="artificial_khatib", x_star=xs, workspace=workspace,
        info={"K": K, "xi_level": xi_level},
    )


def khatib_jump(potential: Potential, x) -> float:
    """Value jump across the switching surface at ``x``: ``(K - 1) |x - x*|^2``."""
    d = np.asarray(x, dtype=float) - potential.x_star
    return abs(potential.info["K"] - 1.0) * float(d @ d)


def make_artificial_ratio(x_star, workspace: Workspace, K: float) -> Potential:
    """``P = |x - x*|^2 (1 + K / phi(x))``."""
    if K <= 0:
        raise ValueError("K must be positive")
    xs = np.asarray(x_star, dtype=float)

    def value(x, t):
        workspace.require_free(x)
        d = x - xs
        return float(d @ d) * (1.0 + K / workspace.phi(x))

    def grad(x, t):
        workspace.require_free(x)
        d = x - xs
        r2 = float(d @ d)
        phi, gphi, _ = workspace.phi_and_grad(x)
        return 2.0 * d * (1.0 + K / phi) - r2 * K * gphi / phi**2

    if workspace.phi(xs) <= 0:
        warnings.warn("target lies outside the free space; lower bound unknown", stacklevel=2)
        lb = None
    else:
        lb = 0.0
    return Potential(value, grad, lower_bound=lb, kind="artificial_ratio", x_star=xs, workspace=workspace, info={"K": K})


# -- bundled workspaces ----------------------------------------------------

SEVEN_OBSTACLES = {
    "boundary": {"center": [0.0, 0.0], "radius": 3.5},
    "obstacles": [
        {"center": [2.0, 1.0], "radius": 1.0},
        {"center": [0.0, -0.25], "radius": 0.5},
        {"center": [-1.5, 2.0], "radius": 0.75},
        {"center": [-2.0, 0.0], "radius": 0.75},
        {"center": [1.5, -2.0], "radius": 0.75},
        {"center": [0.5, 2.5], "radius": 0.5},
        {"center": [-1.0, -2.0], "radius": 1.0},
    ],
}

WORKSPACES = {"seven_obstacles": SEVEN_OBSTACLES}


def disc_workspace(spec: dict) -> Workspace:
    b = spec["boundary"]
    phi0 = Disc(b["center"], b["radius"], boundary=True)
    obstacles = [Disc(o["center"], o["radius"]) for o in spec.get("obstacles", [])]
    return Workspace(phi0, obstacles)


def named_workspace(name: str) -> Workspace:
    try:
        return disc_workspace(WORKSPACES[name])
    except KeyError:
        raise ConfigurationError(f"unknown workspace {name!r}; known: {sorted(WORKSPACES)}") from None
