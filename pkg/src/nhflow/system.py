"""Driftless control-affine systems, Lie brackets and the bracket matrix.

Control indices are 1-based throughout (``k in 1..m``) so that schemes can
be written the same way they appear in the usual textbook notation, e.g.
``s1=[1, 2], s2=[(1, 2)]`` for the unicycle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.linalg import lapack, lu_solve

FieldFn = Callable[[int, np.ndarray, float], np.ndarray]
JacobianFn = Callable[[int, np.ndarray, float], np.ndarray]

DEFAULT_COND_LIMIT = 1e8
_FD_BASE = np.finfo(float).eps ** (1.0 / 3.0)


class EvaluationError(ValueError):
    """A vector field returned a non-finite value."""

    def __init__(self, k: int, x, t: float, what: str = "field"):
        self.k = k
        self.x = np.array(x, dtype=float)
        self.t = float(t)
        super().__init__(f"non-finite {what} value for k={k} at x={self.x.tolist()}, t={self.t}")


class RankDegeneracyError(ValueError):
    """The bracket matrix is (numerically) singular at a state."""

    def __init__(self, cond: float, cond_limit: float, x=None, t=None, context: str = ""):
        self.cond = cond
        self.cond_limit = cond_limit
        self.x = None if x is None else np.array(x, dtype=float)
        self.t = t
        where = ""
        if self.x is not None:
            where = f" at x={self.x.tolist()}, t={t}"
        extra = f" ({context})" if context else ""
        super().__init__(
            f"bracket matrix condition number {cond:.3e} exceeds limit {cond_limit:.3e}{where}{extra}"
        )


def fd_step(x: np.ndarray) -> float:
    """Central-difference step ``max(1, |x|) * eps**(1/3)``."""
    return max(1.0, float(np.linalg.norm(x))) * _FD_BASE


def central_jacobian(fn: Callable[[np.ndarray], np.ndarray], x: np.ndarray, h: Optional[float] = None) -> np.ndarray:
    """Central finite-difference Jacobian of a vector function, columns = d/dx_i."""
    x = np.asarray(x, dtype=float)
    if h is None:
        h = fd_step(x)
    cols = []
    for i in range(x.size):
        dx = np.zeros_like(x)
        dx[i] = h
        cols.append((np.asarray(fn(x + dx), dtype=float) - np.asarray(fn(x - dx), dtype=float)) / (2.0 * h))
    return np.column_stack(cols)


@dataclass(frozen=True)
class ControlSystem:
    """A driftless control-affine system ``xdot = sum_k f_k(x, t) u_k``.

    ``kernel`` names an optional compiled fast path (currently only
    ``"unicycle"``); systems without one are integrated by the generic loop.
    """

    n: int
    m: int
    field_eval: FieldFn
    jacobian_eval: Optional[JacobianFn] = None
    time_varying: bool = False
    name: str = "custom"
    kernel: Optional[str] = None

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise ValueError("state and control dimensions must be positive")
        if self.m > self.n:
            raise ValueError(f"control dimension m={self.m} exceeds state dimension n={self.n}")

    def field(self, k: int, x, t: float = 0.0) -> np.ndarray:
        self._check_index(k)
        v = np.asarray(self.field_eval(k, np.asarray(x, dtype=float), float(t)), dtype=float)
        if v.shape != (self.n,):
            raise ValueError(f"field f_{k} returned shape {v.shape}, expected ({self.n},)")
        if not np.all(np.isfinite(v)):
            raise EvaluationError(k, x, t)
        return v

    def jacobian(self, k: int, x, t: float = 0.0) -> np.ndarray:
        """``d f_k / dx``; analytic when provided, central differences otherwise."""
        self._check_index(k)
        x = np.asarray(x, dtype=float)
        if self.jacobian_eval is not None:
            J = np.asarray(self.jacobian_eval(k, x, float(t)), dtype=float)
        else:
            J = central_jacobian(lambda y: self.field(k, y, t), x)
        if not np.all(np.isfinite(J)):
            raise EvaluationError(k, x, t, what="jacobian")
        return J

    def velocity(self, x, t: float, u: Sequence[float]) -> np.ndarray:
        out = np.zeros(self.n)
        for k in range(1, self.m + 1):
            uk = u[k - 1]
            if uk != 0.0:
                out += self.field(k, x, t) * uk
        return out

    def _check_index(self, k: int):
        if not 1 <= k <= self.m:
            raise IndexError(f"control index {k} outside 1..{self.m}")


@dataclass(frozen=True)
class BracketScheme:
    """Index sets selecting the columns of the bracket matrix.

    ``kappa`` holds one dither frequency multiplier per pair in ``s2`` (same
    order). When omitted the minimal assignment ``1, 2, ..., |s2|`` is used.
    """

    s1: tuple
    s2: tuple = ()
    kappa: tuple = field(default=())

    def __init__(self, s1, s2=(), kappa=None):
        s1 = tuple(int(i) for i in s1)
        s2 = tuple((int(a), int(b)) for a, b in s2)
        if kappa is None or len(kappa) == 0:
            kappa = tuple(range(1, len(s2) + 1))
        elif isinstance(kappa, dict):
            kappa = tuple(int(kappa[p]) for p in s2)
        else:
            kappa = tuple(int(k) for k in kappa)
        object.__setattr__(self, "s1", s1)
        object.__setattr__(self, "s2", s2)
        object.__setattr__(self, "kappa", kappa)
        if len(kappa) != len(s2):
            raise ValueError(f"need one kappa per bracket pair, got {len(kappa)} for {len(s2)} pairs")
        if any(k < 1 for k in kappa):
            raise ValueError("kappa values must be positive integers")
        if len(set(kappa)) != len(kappa):
            raise ValueError(f"kappa values must be pairwise distinct, got {kappa}")
        if len(set(s2)) != len(s2):
            raise ValueError("duplicate bracket pair in s2")

    @property
    def size(self) -> int:
        return len(self.s1) + len(self.s2)

    def validate(self, sys: ControlSystem):
        if self.size != sys.n:
            raise ValueError(
                f"|s1| + |s2| = {len(self.s1)} + {len(self.s2)} = {self.size} must equal n = {sys.n}"
            )
        for i in self.s1:
            if not 1 <= i <= sys.m:
                raise ValueError(f"s1 index {i} outside 1..{sys.m}")
        for j1, j2 in self.s2:
            if not (1 <= j1 <= sys.m and 1 <= j2 <= sys.m):
                raise ValueError(f"s2 pair {(j1, j2)} outside 1..{sys.m}")

    def kappa_of(self, pair) -> int:
        return self.kappa[self.s2.index(tuple(pair))]


def eval_lie_bracket(sys: ControlSystem, j1: int, j2: int, x, t: float = 0.0) -> np.ndarray:
    """``[f_j1, f_j2](x, t) = (df_j2/dx) f_j1 - (df_j1/dx) f_j2``."""
    x = np.asarray(x, dtype=float)
    if j1 == j2:
        sys._check_index(j1)
        return np.zeros(sys.n)
    f1 = sys.field(j1, x, t)
    f2 = sys.field(j2, x, t)
    return sys.jacobian(j2, x, t) @ f1 - sys.jacobian(j1, x, t) @ f2


def assemble_F(sys: ControlSystem, scheme: BracketScheme, x, t: float = 0.0) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    cols = [sys.field(i, x, t) for i in scheme.s1]
    cols += [eval_lie_bracket(sys, j1, j2, x, t) for j1, j2 in scheme.s2]
    return np.column_stack(cols)


def condition_number(F: np.ndarray) -> float:
    """1-norm condition estimate from LAPACK ``dgecon``; ``inf`` if singular."""
    F = np.asarray(F, dtype=float)
    lu, _, info = lapack.dgetrf(F)
    if info != 0 or np.any(np.diag(lu) == 0.0):
        return math.inf
    return _cond_from_lu(F, lu)


def _cond_from_lu(F: np.ndarray, lu: np.ndarray) -> float:
    anorm = float(np.max(np.sum(np.abs(F), axis=0)))
    rcond, info = lapack.dgecon(lu, anorm, norm="1")
    if info != 0 or rcond == 0.0:
        return math.inf
    return 1.0 / rcond


def invert_F(F, cond_limit: float = DEFAULT_COND_LIMIT, x=None, t=None, return_cond: bool = False):
    """Invert the bracket matrix by LU with one step of iterative refinement.

    Raises
    ------
    RankDegeneracyError
        If the 1-norm condition estimate exceeds ``cond_limit``.
    """
    F = np.asarray(F, dtype=float)
    if not np.all(np.isfinite(F)):
        raise ValueError("bracket matrix has non-finite entries")
    n = F.shape[0]
    lu, piv, info = lapack.dgetrf(F)
    if info != 0 or np.any(np.diag(lu) == 0.0):
        raise RankDegeneracyError(math.inf, cond_limit, x, t)
    cond = _cond_from_lu(F, lu)
    if cond > cond_limit:
        raise RankDegeneracyError(cond, cond_limit, x, t)
    eye = np.eye(n)
    Finv = lu_solve((lu, piv), eye)
    Finv += lu_solve((lu, piv), eye - F @ Finv)
    if return_cond:
        return Finv, cond
    return Finv


@dataclass
class RankReport:
    conditions: list
    cond_limit: float
    passed: bool
    worst_index: Optional[int]

    @property
    def max_condition(self) -> float:
        return max(self.conditions) if self.conditions else math.nan

    def to_dict(self) -> dict:
        return {
            "check": "rank_condition",
            "passed": self.passed,
            "max_condition": self.max_condition,
            "cond_limit": self.cond_limit,
            "worst_sample": self.worst_index,
            "n_samples": len(self.conditions),
        }


def check_rank_condition(sys: ControlSystem, scheme: BracketScheme, samples, cond_limit: float = DEFAULT_COND_LIMIT) -> RankReport:
    """Condition number of the bracket matrix at each ``(x, t)`` sample."""
    samples = list(samples)
    if not samples:
        raise ValueError("rank check needs at least one sample")
    scheme.validate(sys)
    conds = []
    for x, t in samples:
        F = assemble_F(sys, scheme, x, t)
        conds.append(condition_number(F))
    worst = int(np.argmax(conds))
    return RankReport(conds, cond_limit, bool(max(conds) <= cond_limit), worst)


# -- bundled systems -------------------------------------------------------

def _unicycle_field(k, x, t):
    if k == 1:
        return np.array([math.cos(x[2]), math.sin(x[2]), 0.0])
    return np.array([0.0, 0.0, 1.0])


def _unicycle_jacobian(k, x, t):
    J = np.zeros((3, 3))
    if k == 1:
        J[0, 2] = -math.sin(x[2])
        J[1, 2] = math.cos(x[2])
    return J


def unicycle() -> ControlSystem:
    """Kinematic unicycle: ``x1' = u1 cos x3, x2' = u1 sin x3, x3' = u2``."""
    return ControlSystem(3, 2, _unicycle_field, _unicycle_jacobian, name="unicycle", kernel="unicycle")


def unicycle_scheme(kappa: int = 1) -> BracketScheme:
    return BracketScheme([1, 2], [(1, 2)], [kappa])


def fully_actuated(n: int) -> ControlSystem:
    """``xdot = u`` in R^n with coordinate fields ``f_k = e_k``."""

    def f(k, x, t):
        e = np.zeros(n)
        e[k - 1] = 1.0
        return e

    return ControlSystem(n, n, f, lambda k, x, t: np.zeros((n, n)), name=f"fully_actuated_{n}")


def fully_actuated_scheme(n: int) -> BracketScheme:
    return BracketScheme(range(1, n + 1))


SYSTEMS = {
    "unicycle": (unicycle, unicycle_scheme),
}
