"""Oscillating feedback controls built from a potential gradient.

The coefficient vector ``a = -gamma F^{-1} grad P`` has one entry per column
of the bracket matrix. Entries for single fields enter the controls
directly; entries for bracket pairs set the amplitude of a sine/cosine dither
pair with period ``epsilon / kappa``, scaled so that the second-order
(Lie-bracket) motion over one period is ``epsilon * a_pair`` along the
bracket.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.integrate import cumulative_simpson, simpson

from .potentials import Potential
from .system import DEFAULT_COND_LIMIT, BracketScheme, ControlSystem, RankDegeneracyError, assemble_F, invert_F


@dataclass(frozen=True)
class ControllerParams:
    gamma: float
    epsilon: float
    feedforward: Optional[Callable[[float], np.ndarray]] = None
    cond_limit: float = DEFAULT_COND_LIMIT

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gain gamma must be positive, got {self.gamma}")
        if not self.epsilon > 0:
            raise ValueError(f"sampling period epsilon must be positive, got {self.epsilon}")


@dataclass(frozen=True)
class CoefficientVector:
    a_first: np.ndarray
    a_second: np.ndarray

    @classmethod
    def from_vector(cls, a, scheme: BracketScheme) -> "CoefficientVector":
        a = np.asarray(a, dtype=float)
        if a.size != scheme.size:
            raise ValueError(f"coefficient vector has {a.size} entries, scheme needs {scheme.size}")
        k = len(scheme.s1)
        return cls(a[:k].copy(), a[k:].copy())

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.a_first, self.a_second])

    def __len__(self):
        return self.a_first.size + self.a_second.size


def compute_a(sys: ControlSystem, scheme: BracketScheme, potential: Potential, gamma: float, x, t: float = 0.0,
              cond_limit: float = DEFAULT_COND_LIMIT) -> CoefficientVector:
    x = np.asarray(x, dtype=float)
    F = assemble_F(sys, scheme, x, t)
    try:
        Finv = invert_F(F, cond_limit, x=x, t=t)
    except RankDegeneracyError as exc:
        raise RankDegeneracyError(exc.cond, cond_limit, x, t, context="computing control coefficients") from exc
    a = -gamma * (Finv @ potential.gradient(x, t))
    return CoefficientVector.from_vector(a, scheme)


def _sign(v: float) -> float:
    return 1.0 if v > 0 else (-1.0 if v < 0 else 0.0)


def eval_dither(scheme: BracketScheme, pair, k: int, a_pair: float, t: float, epsilon: float) -> float:
    """Unit-amplitude dither of control ``k`` for a bracket pair.

    ``2 sqrt(pi kappa) (d_{k,j1} sign(a) cos(w t) + d_{k,j2} sin(w t))`` with
    ``w = 2 pi kappa / epsilon``.
    """
    j1, j2 = pair
    kappa = scheme.kappa_of(pair)
    w = 2.0 * math.pi * kappa / epsilon
    amp = 2.0 * math.sqrt(math.pi * kappa)
    out = 0.0
    if k == j1:
        out += _sign(a_pair) * math.cos(w * t)
    if k == j2:
        out += math.sin(w * t)
    return amp * out


def eval_control(sys: ControlSystem, scheme: BracketScheme, params: ControllerParams, a_held: CoefficientVector,
                 t: float) -> np.ndarray:
    """Control vector at time ``t`` for coefficients frozen at the last sampling instant."""
    u = np.zeros(sys.m)
    for i, ai in zip(scheme.s1, a_held.a_first):
        u[i - 1] += ai
    eps = params.epsilon
    for (j1, j2), kappa, ap in zip(scheme.s2, scheme.kappa, a_held.a_second):
        if ap == 0.0:
            continue
        amp = 2.0 * math.sqrt(math.pi * kappa * abs(ap) / eps)
        wt = 2.0 * math.pi * kappa * t / eps
        u[j1 - 1] += amp * _sign(ap) * math.cos(wt)
        u[j2 - 1] += amp * math.sin(wt)
    if params.feedforward is not None:
        u += np.asarray(params.feedforward(t), dtype=float)
    return u


def dither_signals(scheme: BracketScheme, a_second, epsilon: float, times: np.ndarray, m: int) -> np.ndarray:
    """Oscillating part of every control on a time grid, shape ``(len(times), m)``."""
    u = np.zeros((len(times), m))
    for (j1, j2), kappa, ap in zip(scheme.s2, scheme.kappa, a_second):
        amp = 2.0 * math.sqrt(math.pi * kappa * abs(ap) / epsilon)
        wt = 2.0 * math.pi * kappa * times / epsilon
        u[:, j1 - 1] += amp * _sign(ap) * np.cos(wt)
        u[:, j2 - 1] += amp * np.sin(wt)
    return u


def iterated_integral(u_outer: np.ndarray, u_inner: np.ndarray, times: np.ndarray) -> float:
    """``int_0^T u_outer(s1) int_0^s1 u_inner(s2) ds2 ds1`` by nested Simpson rules."""
    inner = cumulative_simpson(u_inner, x=times, initial=0.0)
    return float(simpson(u_outer * inner, x=times))


@dataclass
class BracketQuadrature:
    pair: tuple
    forward: float   # int u_j1 int u_j2
    backward: float  # int u_j2 int u_j1
    product: float   # (int u_j1)(int u_j2)
    bracket_coefficient: float
    expected: float

    @property
    def relative_error(self) -> float:
        if self.expected == 0.0:
            return abs(self.bracket_coefficient)
        return abs(self.bracket_coefficient - self.expected) / abs(self.expected)


def bracket_quadrature(scheme: BracketScheme, a_held: CoefficientVector, epsilon: float, m: int,
                       t_start: float = 0.0, n_points: int = 20001) -> list[BracketQuadrature]:
    """Second-order iterated integrals of the dithers over one sampling period.

    For each pair, ``bracket_coefficient = (backward - forward) / 2`` is the
    coefficient multiplying ``[f_j1, f_j2]`` in the second-order expansion of
    the flow; it should equal ``epsilon * a_pair``.
    """
    times = np.linspace(t_start, t_start + epsilon, n_points)
    u = dither_signals(scheme, a_held.a_second, epsilon, times, m)
    out = []
    for (j1, j2), ap in zip(scheme.s2, a_held.a_second):
        f = iterated_integral(u[:, j1 - 1], u[:, j2 - 1], times)
        b = iterated_integral(u[:, j2 - 1], u[:, j1 - 1], times)
        prod = float(simpson(u[:, j1 - 1], x=times) * simpson(u[:, j2 - 1], x=times))
        out.append(BracketQuadrature((j1, j2), f, b, prod, 0.5 * (b - f), epsilon * ap))
    return out


def cross_pair_integrals(scheme: BracketScheme, a_held: CoefficientVector, epsilon: float, m: int,
                         n_points: int = 20001) -> dict:
    """Iterated integrals between dither channels of *different* pairs over one period."""
    times = np.linspace(0.0, epsilon, n_points)
    chans = []
    for idx, ((j1, j2), kappa, ap) in enumerate(zip(scheme.s2, scheme.kappa, a_held.a_second)):
        amp = 2.0 * math.sqrt(math.pi * kappa * abs(ap) / epsilon)
        wt = 2.0 * math.pi * kappa * times / epsilon
        chans.append((idx, amp * _sign(ap) * np.cos(wt)))
        chans.append((idx, amp * np.sin(wt)))
    result = {}
    for (ia, ua), (ib, ub) in ((p, q) for p in chans for q in chans):
        if ia == ib:
            continue
        key = (scheme.s2[ia], scheme.s2[ib])
        result[key] = max(result.get(key, 0.0), abs(iterated_integral(ua, ub, times)))
    return result
