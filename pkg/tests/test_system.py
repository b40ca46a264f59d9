import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nhflow.system import (
    BracketScheme,
    ControlSystem,
    EvaluationError,
    RankDegeneracyError,
    assemble_F,
    central_jacobian,
    check_rank_condition,
    condition_number,
    eval_lie_bracket,
    fd_step,
    fully_actuated,
    fully_actuated_scheme,
    invert_F,
    unicycle,
    unicycle_scheme,
)

from conftest import fd_tolerance, nonlinear_planar, time_varying_chain

finite = st.floats(-5, 5, allow_nan=False)
states3 = st.tuples(finite, finite, finite).map(np.array)


def fd_bracket(sys, j1, j2, x, t):
    J1 = central_jacobian(lambda y: sys.field(j1, y, t), x)
    J2 = central_jacobian(lambda y: sys.field(j2, y, t), x)
    return J2 @ sys.field(j1, x, t) - J1 @ sys.field(j2, x, t)


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(1.0, np.linalg.norm(b))


class TestLieBracket:
    def test_unicycle_at_zero_heading(self):
        np.testing.assert_allclose(eval_lie_bracket(unicycle(), 1, 2, [0, 0, 0]), [0, -1, 0], atol=1e-15)

    def test_unicycle_at_right_angle_matches_fd(self):
        sys = unicycle()
        x = np.array([0.3, -0.2, math.pi / 2])
        b = eval_lie_bracket(sys, 1, 2, x)
        np.testing.assert_allclose(b, [1, 0, 0], atol=1e-15)
        np.testing.assert_allclose(fd_bracket(sys, 1, 2, x, 0.0), [1, 0, 0], atol=1e-8)

    def test_same_index_is_zero(self):
        assert np.all(eval_lie_bracket(time_varying_chain(), 2, 2, [1.0, 2.0, 3.0], 0.4) == 0)

    def test_out_of_range_index(self):
        with pytest.raises(IndexError):
            eval_lie_bracket(unicycle(), 1, 3, [0, 0, 0])

    def test_nonfinite_field_names_location(self):
        sys = ControlSystem(2, 1, lambda k, x, t: np.array([np.nan, 1.0]))
        with pytest.raises(EvaluationError) as info:
            sys.field(1, [0.5, 1.0], 2.0)
        assert info.value.k == 1 and info.value.t == 2.0
        assert "k=1" in str(info.value) and "0.5" in str(info.value)

    def test_wrong_shape_rejected(self):
        sys = ControlSystem(2, 1, lambda k, x, t: np.zeros(3))
        with pytest.raises(ValueError, match="shape"):
            sys.field(1, [0.0, 0.0])

    @given(states3, st.floats(0, 10))
    def test_antisymmetry(self, x, t):
        sys = time_varying_chain()
        np.testing.assert_allclose(eval_lie_bracket(sys, 1, 2, x, t), -eval_lie_bracket(sys, 2, 1, x, t),
                                   rtol=1e-12, atol=1e-12)

    @given(states3)
    def test_analytic_matches_fd(self, x):
        sys = unicycle()
        assert rel_err(eval_lie_bracket(sys, 1, 2, x), fd_bracket(sys, 1, 2, x, 0.0)) <= fd_tolerance(x)

    def test_chain_bracket_closed_form(self, rng):
        # [f1, f2] = (df2/dx) f1 - (df1/dx) f2 = (0, 0, 0.4 x1) - (0, 0, 1 + 0.3 sin t)
        sys = time_varying_chain()
        for _ in range(20):
            x, t = rng.uniform(-3, 3, 3), rng.uniform(0, 10)
            expected = np.array([0.0, 0.0, 0.4 * x[0] - (1.0 + 0.3 * math.sin(t))])
            assert rel_err(eval_lie_bracket(sys, 1, 2, x, t), expected) <= fd_tolerance(x)


class TestBracketMatrix:
    def test_unicycle_columns_at_zero(self):
        F = assemble_F(unicycle(), unicycle_scheme(), [0, 0, 0])
        np.testing.assert_allclose(F, [[1, 0, 0], [0, 0, -1], [0, 1, 0]], atol=1e-15)

    @given(finite)
    def test_third_column_is_bracket(self, th):
        x = np.array([0.1, 0.2, th])
        F = assemble_F(unicycle(), unicycle_scheme(), x)
        np.testing.assert_array_equal(F[:, 2], eval_lie_bracket(unicycle(), 1, 2, x))

    def test_fully_actuated_identity(self):
        np.testing.assert_array_equal(assemble_F(fully_actuated(2), fully_actuated_scheme(2), [3.0, -1.0]), np.eye(2))

    def test_inverse_at_zero_heading(self):
        Finv = invert_F(assemble_F(unicycle(), unicycle_scheme(), [0, 0, 0]))
        np.testing.assert_allclose(Finv, [[1, 0, 0], [0, 0, 1], [0, -1, 0]], atol=1e-15)

    def test_identity_inverse(self):
        np.testing.assert_array_equal(invert_F(np.eye(4)), np.eye(4))

    def test_residual_at_0_7(self):
        F = assemble_F(unicycle(), unicycle_scheme(), [0.0, 0.0, 0.7])
        assert np.max(np.abs(invert_F(F) @ F - np.eye(3))) <= 1e-12

    def test_singular_raises(self):
        with pytest.raises(RankDegeneracyError) as info:
            invert_F(np.array([[1.0, 2.0], [2.0, 4.0]]), x=[1, 2], t=0.5)
        assert math.isinf(info.value.cond)

    def test_ill_conditioned_raises(self):
        F = np.diag([1.0, 1e-9])
        with pytest.raises(RankDegeneracyError, match="exceeds limit"):
            invert_F(F)
        assert invert_F(F, cond_limit=1e10)[1, 1] == pytest.approx(1e9)

    def test_condition_number_matches_numpy(self, rng):
        for _ in range(10):
            A = rng.normal(size=(4, 4))
            exact = np.linalg.cond(A, 1)
            est = condition_number(A)
            # the LAPACK estimator is a lower bound within a small factor
            assert exact / 3 <= est <= exact * (1 + 1e-12)

    @settings(max_examples=50)
    @given(st.lists(st.floats(-3, 3), min_size=9, max_size=9))
    def test_inversion_residual_property(self, entries):
        F = np.array(entries).reshape(3, 3) + 4 * np.eye(3)
        try:
            Finv = invert_F(F)
        except RankDegeneracyError:
            return
        assert np.max(np.abs(Finv @ F - np.eye(3))) <= 1e-10 * condition_number(F)

    def test_column_order_follows_declaration(self):
        sys = nonlinear_planar()
        F12 = assemble_F(sys, BracketScheme([1, 2]), [0.5, 0.0])
        F21 = assemble_F(sys, BracketScheme([2, 1]), [0.5, 0.0])
        np.testing.assert_array_equal(F12[:, ::-1], F21)


class TestScheme:
    def test_default_kappa(self):
        assert BracketScheme([1], [(1, 2), (1, 3), (2, 3)]).kappa == (1, 2, 3)

    def test_kappa_mapping(self):
        s = BracketScheme([1], [(1, 2), (2, 3)], {(2, 3): 5, (1, 2): 2})
        assert s.kappa == (2, 5) and s.kappa_of((2, 3)) == 5

    def test_duplicate_kappa_rejected(self):
        with pytest.raises(ValueError, match="distinct"):
            BracketScheme([1], [(1, 2), (1, 3)], [1, 1])

    def test_nonpositive_kappa_rejected(self):
        with pytest.raises(ValueError, match="positive"):
            BracketScheme([1], [(1, 2)], [0])

    def test_cardinality(self):
        with pytest.raises(ValueError, match="must equal n"):
            BracketScheme([1, 2]).validate(unicycle())


class TestRankCondition:
    def test_unicycle_grid(self):
        samples = [(np.array([0.0, 0.0, k * math.pi / 4]), 0.0) for k in range(9)]
        rep = check_rank_condition(unicycle(), unicycle_scheme(), samples)
        assert rep.passed and rep.max_condition <= 2.0 + 1e-12

    def test_dependent_fields_fail(self):
        sys = ControlSystem(2, 2, lambda k, x, t: np.array([1.0, x[0]]))
        rep = check_rank_condition(sys, BracketScheme([1], [(1, 2)]), [(np.array([0.3, 0.1]), 0.0)])
        assert not rep.passed

    def test_constant_full_rank(self):
        rep = check_rank_condition(fully_actuated(3), fully_actuated_scheme(3), [(np.zeros(3), 0.0)])
        assert rep.passed and rep.max_condition == 1.0

    def test_invert_composes_to_identity_on_samples(self, rng):
        sys, scheme = time_varying_chain(), BracketScheme([1, 2], [(1, 2)])
        for _ in range(30):
            x, t = rng.uniform(-2, 2, 3), rng.uniform(0, 5)
            F = assemble_F(sys, scheme, x, t)
            try:
                Finv = invert_F(F)
            except RankDegeneracyError:
                continue
            assert np.max(np.abs(Finv @ F - np.eye(3))) <= 1e-10


def test_fd_step_rule():
    eps3 = np.finfo(float).eps ** (1 / 3)
    assert fd_step(np.zeros(3)) == eps3
    assert fd_step(np.array([3.0, 4.0])) == pytest.approx(5 * eps3)


@given(states3)
def test_analytic_jacobian_matches_fd(x):
    sys = unicycle()
    for k in (1, 2):
        J = sys.jacobian(k, x)
        Jfd = central_jacobian(lambda y: sys.field(k, y), x)
        assert np.linalg.norm(J - Jfd) / max(1.0, np.linalg.norm(J)) <= fd_tolerance(x)
