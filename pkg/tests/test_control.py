import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import simpson

from nhflow.control import (
    CoefficientVector,
    ControllerParams,
    bracket_quadrature,
    compute_a,
    cross_pair_integrals,
    dither_signals,
    eval_control,
    eval_dither,
)
from nhflow.potentials import make_power_potential
from nhflow.system import BracketScheme, RankDegeneracyError, fully_actuated, fully_actuated_scheme, unicycle, unicycle_scheme

X_STAR = [1.0, -1.0, math.pi]
A_HELD = [2.0, 2.0 * math.pi, 2.0]


class TestCoefficients:
    def test_unicycle_example(self):
        a = compute_a(unicycle(), unicycle_scheme(), make_power_potential(X_STAR), 1.0, [0, 0, 0])
        np.testing.assert_allclose(a.vector, A_HELD, rtol=1e-15)

    def test_zero_at_target(self):
        a = compute_a(unicycle(), unicycle_scheme(), make_power_potential(X_STAR), 1.0, X_STAR)
        assert np.all(a.vector == 0)

    @given(st.floats(0.01, 50), st.floats(-3, 3))
    def test_linear_in_gain(self, gamma, th):
        x = [0.3, 0.1, th]
        P = make_power_potential(X_STAR)
        a1 = compute_a(unicycle(), unicycle_scheme(), P, gamma, x).vector
        a2 = compute_a(unicycle(), unicycle_scheme(), P, 2 * gamma, x).vector
        np.testing.assert_allclose(a2, 2 * a1, rtol=1e-14, atol=1e-300)

    def test_closed_form_unicycle(self, rng):
        # a1 = -g (P1 cos + P2 sin), a2 = -g P3, a12 = -g (P1 sin - P2 cos)
        P = make_power_potential(X_STAR)
        for x in rng.uniform(-3, 3, (10, 3)):
            g = P.gradient(x)
            c, s = math.cos(x[2]), math.sin(x[2])
            expected = -1.5 * np.array([g[0] * c + g[1] * s, g[2], g[0] * s - g[1] * c])
            np.testing.assert_allclose(compute_a(unicycle(), unicycle_scheme(), P, 1.5, x).vector, expected,
                                       rtol=1e-12, atol=1e-14)

    def test_degenerate_matrix(self):
        from nhflow.system import ControlSystem

        sys = ControlSystem(2, 2, lambda k, x, t: np.array([1.0, 0.0]))
        with pytest.raises(RankDegeneracyError, match="computing control coefficients"):
            compute_a(sys, BracketScheme([1, 2]), make_power_potential([1.0, 1.0]), 1.0, [0.0, 0.0])

    def test_vector_roundtrip(self):
        sc = BracketScheme([1], [(1, 2), (2, 3)])
        cv = CoefficientVector.from_vector([1, 2, 3], sc)
        assert cv.a_first.tolist() == [1] and cv.a_second.tolist() == [2, 3] and len(cv) == 3
        with pytest.raises(ValueError):
            CoefficientVector.from_vector([1, 2], sc)

    def test_params_validation(self):
        with pytest.raises(ValueError):
            ControllerParams(0.0, 0.1)
        with pytest.raises(ValueError):
            ControllerParams(1.0, -0.1)


class TestDither:
    def test_other_channel_zero(self):
        sc = BracketScheme([1], [(1, 2), (1, 3)])
        assert eval_dither(sc, (1, 2), 3, 1.0, 0.37, 0.1) == 0.0

    def test_quarter_period(self):
        v = eval_dither(unicycle_scheme(), (1, 2), 2, 5.0, 0.025, 0.1)
        assert v == pytest.approx(2 * math.sqrt(math.pi), rel=1e-15)
        assert 2 * math.sqrt(math.pi) == pytest.approx(3.5449, abs=5e-5)

    @pytest.mark.parametrize("k", [1, 2])
    def test_zero_mean(self, k):
        t = np.linspace(0, 0.1, 4001)
        vals = [eval_dither(unicycle_scheme(), (1, 2), k, -1.0, s, 0.1) for s in t]
        assert abs(simpson(vals, x=t)) <= 1e-10

    def test_sign_zero(self):
        assert eval_dither(unicycle_scheme(), (1, 2), 1, 0.0, 0.0, 0.1) == 0.0


class TestControl:
    def test_unicycle_at_zero(self):
        sc = unicycle_scheme()
        u = eval_control(unicycle(), sc, ControllerParams(1.0, 0.1), CoefficientVector.from_vector(A_HELD, sc), 0.0)
        assert u[0] == pytest.approx(2 + 2 * math.sqrt(20 * math.pi), rel=1e-15)
        assert u[0] == pytest.approx(17.853309190424042, rel=1e-15)
        assert u[1] == pytest.approx(2 * math.pi, rel=1e-15)

    def test_no_oscillation_without_bracket_amplitude(self):
        sc = unicycle_scheme()
        a = CoefficientVector.from_vector([0.5, -0.25, 0.0], sc)
        for t in (0.0, 0.013, 0.07):
            assert eval_control(unicycle(), sc, ControllerParams(1.0, 0.1), a, t).tolist() == [0.5, -0.25]

    def test_degree_one_time_invariant(self):
        sc = fully_actuated_scheme(2)
        a = CoefficientVector.from_vector([0.3, -0.7], sc)
        us = {tuple(eval_control(fully_actuated(2), sc, ControllerParams(1.0, 0.01), a, t)) for t in np.linspace(0, 0.01, 9)}
        assert us == {(0.3, -0.7)}

    def test_feedforward_additive(self):
        sc = unicycle_scheme()
        a = CoefficientVector.from_vector(A_HELD, sc)
        base = eval_control(unicycle(), sc, ControllerParams(1.0, 0.1), a, 0.03)
        ff = eval_control(unicycle(), sc, ControllerParams(1.0, 0.1, lambda t: np.array([t, -1.0])), a, 0.03)
        np.testing.assert_allclose(ff - base, [0.03, -1.0], atol=1e-14)

    def test_dither_signals_match_pointwise(self):
        sc = BracketScheme([1], [(1, 2), (1, 3)])
        a = CoefficientVector.from_vector([0.0, 0.8, -1.7], sc)
        t = np.linspace(0.2, 0.3, 17)
        U = dither_signals(sc, a.a_second, 0.1, t, 3)
        for i, s in enumerate(t):
            np.testing.assert_allclose(U[i], eval_control(fully_actuated(3), sc, ControllerParams(1.0, 0.1), a, s),
                                       rtol=1e-13, atol=1e-13)


class TestQuadrature:
    def test_unicycle_identity(self):
        sc = unicycle_scheme()
        (q,) = bracket_quadrature(sc, CoefficientVector.from_vector(A_HELD, sc), 0.1, 2, n_points=10001)
        assert q.relative_error <= 1e-8
        assert q.forward + q.backward == pytest.approx(q.product, abs=1e-12)

    def test_sign_flip(self):
        sc = unicycle_scheme()
        pos = bracket_quadrature(sc, CoefficientVector.from_vector([0, 0, 1.3], sc), 0.1, 2)[0]
        neg = bracket_quadrature(sc, CoefficientVector.from_vector([0, 0, -1.3], sc), 0.1, 2)[0]
        assert neg.bracket_coefficient == pytest.approx(-pos.bracket_coefficient, rel=1e-12)
        assert neg.relative_error <= 1e-8
        t = np.linspace(0, 0.1, 5)
        np.testing.assert_allclose(dither_signals(sc, [-1.3], 0.1, t, 2)[:, 0], -dither_signals(sc, [1.3], 0.1, t, 2)[:, 0])

    @given(st.lists(st.floats(0.05, 5).flatmap(lambda v: st.sampled_from([v, -v])), min_size=3, max_size=3),
           st.floats(0.01, 0.5), st.floats(0, 3))
    def test_three_pairs(self, amps, eps, t_start):
        sc = BracketScheme([1, 2, 3], [(1, 2), (1, 3), (2, 3)])
        a = CoefficientVector.from_vector([0, 0, 0, *amps], sc)
        for q in bracket_quadrature(sc, a, eps, 3, t_start=t_start * eps):
            assert q.relative_error <= 1e-8

    def test_distinct_kappa_orthogonal(self):
        sc = BracketScheme([1], [(1, 2), (1, 3), (2, 3)], [1, 3, 2])
        a = CoefficientVector.from_vector([0, 1.0, -2.0, 3.0], sc)
        assert max(cross_pair_integrals(sc, a, 0.1, 3).values()) <= 1e-8

    def test_equal_frequencies_would_couple(self):
        # equal frequencies: int cos(ws) int sin = -eps / (2 w), which does not vanish
        from nhflow.control import iterated_integral

        t = np.linspace(0, 0.1, 20001)
        w = 2 * math.pi / 0.1
        assert iterated_integral(np.cos(w * t), np.sin(w * t), t) == pytest.approx(-0.1 / (2 * w), rel=1e-10)
