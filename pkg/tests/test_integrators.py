import math

import numpy as np
import pytest

from nhflow.control import ControllerParams
from nhflow.integrators import (
    SolverSettings,
    auto_epsilon,
    integrate_classical,
    integrate_gradient_flow,
    integrate_pi_eps,
    n_periods,
    sampled_descent_holds,
)
from nhflow.potentials import (
    DomainViolationError,
    Potential,
    make_artificial_ratio,
    make_navigation_potential,
    make_power_potential,
    named_workspace,
)
from nhflow.system import (
    BracketScheme,
    ControlSystem,
    RankDegeneracyError,
    fully_actuated,
    fully_actuated_scheme,
    unicycle,
    unicycle_scheme,
)

X_STAR = np.array([1.0, -1.0, math.pi])


def one_dim():
    return fully_actuated(1), fully_actuated_scheme(1), make_power_potential([0.0])


class TestPiEpsilon:
    def test_linear_hold_recursion(self):
        sys, sc, P = one_dim()
        eps = 0.05
        tr = integrate_pi_eps(sys, sc, P, ControllerParams(1.0, eps), [1.5], 0.0, SolverSettings(2.0, 32))
        _, X, _ = tr.samples()
        expected = 1.5 * (1 - 2 * eps) ** np.arange(len(X))
        np.testing.assert_allclose(X[:, 0], expected, rtol=0, atol=1e-10)

    def test_stationary_at_target(self):
        tr = integrate_pi_eps(unicycle(), unicycle_scheme(), make_power_potential(X_STAR), ControllerParams(1.0, 0.1),
                              X_STAR, 0.0, SolverSettings(1.0))
        assert np.all(tr.states == X_STAR)
        assert np.all(tr.controls == 0)

    def test_unicycle_converges(self):
        tr = integrate_pi_eps(unicycle(), unicycle_scheme(), make_power_potential(X_STAR), ControllerParams(1.0, 0.1),
                              [0, 0, 0], 0.0, SolverSettings(10.0))
        d = np.linalg.norm(tr.states - X_STAR, axis=1)
        assert np.any(d[tr.times < 10.0] < 0.1)

    def test_grid(self):
        eps, S = 0.1, 64
        tr = integrate_pi_eps(unicycle(), unicycle_scheme(), make_power_potential(X_STAR), ControllerParams(1.0, eps),
                              [0, 0, 0], 0.7, SolverSettings(10.0, S))
        assert len(tr) == S * n_periods(10.0, eps) + 1 == 6401
        assert np.all(np.diff(tr.times) > 0)
        assert np.all(np.isfinite(tr.states))
        ts, _, _ = tr.samples()
        np.testing.assert_array_equal(ts, 0.7 + np.arange(101) * eps)
        assert tr.controls.shape == (6401, 2)
        assert len(tr.coefficients) == 100

    def test_controls_constant_in_degree_one(self):
        sys, sc = fully_actuated(2), fully_actuated_scheme(2)
        tr = integrate_pi_eps(sys, sc, make_power_potential([1.0, 2.0]), ControllerParams(1.0, 0.01), [0, 0], 0.0,
                              SolverSettings(0.1, 20))
        for j in range(10):
            block = tr.controls[j * 20:(j + 1) * 20]
            assert np.all(block == block[0])

    def test_rank_failure_names_instant(self):
        # bracket vanishes at x1 = 0
        def f(k, x, t):
            return np.array([1.0, 0.0]) if k == 1 else np.array([0.0, x[0] ** 2])

        sys = ControlSystem(2, 2, f)
        with pytest.raises(RankDegeneracyError, match="sampling instant j=0"):
            integrate_pi_eps(sys, BracketScheme([1], [(1, 2)]), make_power_potential([1.0, 1.0]),
                             ControllerParams(1.0, 0.1), [0.0, 0.0])

    def test_domain_exit_truncates(self):
        ws = named_workspace("seven_obstacles")
        P = make_artificial_ratio([-2.0, 1.0, 0.0], ws, K=0.5)
        # a large gain pushes the coarse sampled loop through the boundary of obstacle 2
        tr = integrate_pi_eps(unicycle(), unicycle_scheme(), P, ControllerParams(40.0, 0.25), [0.0, -0.8, 1.2], 0.0,
                              SolverSettings(10.0))
        assert tr.truncated
        assert set(tr.exit) == {"time", "state", "reason"}
        assert all(ws.contains(x) for x in tr.states)

    def test_domain_guard(self):
        guard = lambda x, t: x[0] < 0.5
        tr = integrate_pi_eps(unicycle(), unicycle_scheme(), make_power_potential(X_STAR), ControllerParams(1.0, 0.1),
                              [0, 0, 0], 0.0, SolverSettings(10.0, domain_guard=guard))
        assert tr.exit["reason"] == "domain guard violated"
        assert np.all(tr.states[:, 0] < 0.5)

    def test_bad_initial_state(self):
        with pytest.raises(ValueError, match="shape"):
            integrate_pi_eps(unicycle(), unicycle_scheme(), make_power_potential(X_STAR), ControllerParams(1.0, 0.1),
                             [0, 0])

    def test_substep_floor(self):
        with pytest.raises(ValueError, match=">= 20"):
            SolverSettings(1.0, 19)

    def test_period_count_tolerates_rounding(self):
        assert n_periods(0.3, 0.1) == 3
        assert n_periods(10.05, 0.1) == 101


class TestClassical:
    def test_stationary(self):
        tr = integrate_classical(unicycle(), unicycle_scheme(), make_power_potential(X_STAR), ControllerParams(1.0, 0.1),
                                 X_STAR, 0.0, SolverSettings(0.5))
        assert np.all(tr.states == X_STAR)

    def test_linear_exact(self):
        sys, sc, P = one_dim()
        tr = integrate_classical(sys, sc, P, ControllerParams(1.0, 0.05), [1.5], 0.0, SolverSettings(2.0, 32))
        np.testing.assert_allclose(tr.states[:, 0], 1.5 * np.exp(-2 * tr.times), rtol=0, atol=1e-8)
        assert len(tr) == 32 * 40 + 1


class TestGradientFlow:
    def test_exact_linear_flow(self):
        P = make_power_potential(X_STAR)
        tr = integrate_gradient_flow(P, 1.0, [0, 0, 0], 0.0, SolverSettings(5.0), epsilon=0.1)
        expected = X_STAR + np.outer(np.exp(-2 * tr.times), -X_STAR)
        assert np.max(np.abs(tr.states - expected)) <= 1e-8
        assert tr.controls is None

    def test_stationary(self):
        tr = integrate_gradient_flow(make_power_potential(X_STAR), 1.0, X_STAR, 0.0, SolverSettings(1.0))
        assert np.all(tr.states == X_STAR)

    def test_navigation_monotone(self):
        P = make_navigation_potential(named_workspace("seven_obstacles"), [-2.0, 1.0, 0.0])
        tr = integrate_gradient_flow(P, 1.0, [1.0, -1.0, 0.0], 0.0, SolverSettings(20.0), epsilon=0.1)
        assert tr.exit is None
        assert np.all(np.diff(tr.potential_values) <= 0)


class TestAutoEpsilon:
    def test_accepts_valid_period(self):
        eps, k = auto_epsilon(unicycle(), unicycle_scheme(), make_power_potential(X_STAR), ControllerParams(1.0, 0.1),
                              [0, 0, 0])
        assert (eps, k) == (0.1, 0)

    def test_halves_until_descent(self):
        eps, k = auto_epsilon(unicycle(), unicycle_scheme(), make_power_potential(X_STAR), ControllerParams(1.0, 1.6),
                              [0, 0, 0])
        assert k >= 1 and eps == 1.6 / 2**k
        tr = integrate_pi_eps(unicycle(), unicycle_scheme(), make_power_potential(X_STAR), ControllerParams(1.0, eps),
                              [0, 0, 0], 0.0, SolverSettings(20 * eps))
        assert sampled_descent_holds(tr, 1e-12)

    def test_gives_up(self):
        sys, sc, P = one_dim()
        # the hold map x -> (1 - 2 gamma eps) x overshoots for every eps tried
        with pytest.raises(RuntimeError, match="halvings"):
            auto_epsilon(sys, sc, P, ControllerParams(1000.0, 1.0), [1.0], max_halvings=3)
