import math

import numpy as np
import pytest

from nhflow.system import ControlSystem, fd_step


def nonlinear_planar() -> ControlSystem:
    """Fully actuated planar system with state-dependent fields ``f1 = (1, 0)``, ``f2 = (x1, 1)``."""

    def f(k, x, t):
        return np.array([1.0, 0.0]) if k == 1 else np.array([x[0], 1.0])

    return ControlSystem(2, 2, f, name="nonlinear_planar")


def time_varying_chain() -> ControlSystem:
    """Chained-form system with a time-varying second field, no analytic Jacobian."""

    def f(k, x, t):
        if k == 1:
            return np.array([1.0, 0.0, x[1]])
        return np.array([0.0, 1.0 + 0.3 * math.sin(t), 0.2 * x[0] ** 2])

    return ControlSystem(3, 2, f, time_varying=True, name="chain")


def fd_tolerance(x) -> float:
    h = fd_step(np.asarray(x, dtype=float))
    return 10.0 * h * h


@pytest.fixture
def rng():
    return np.random.default_rng(20260917)


ACCEPTANCE: dict = {}


def record(number: int, title: str, passed: bool, detail: str = "") -> bool:
    line = f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {title}" + (f"  [{detail}]" if detail else "")
    ACCEPTANCE[number] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
