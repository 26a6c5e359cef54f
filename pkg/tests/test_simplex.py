from fractions import Fraction

import numpy as np
import pytest
from scipy.optimize import linprog

from lemonsignal.simplex import InfeasibleError, UnboundedError, solve, solve_exact


def _slack_form(A_ub, b_ub):
    m, n = A_ub.shape
    return np.hstack([A_ub, np.eye(m)]), b_ub


def test_small_lp_against_highs():
    rng = np.random.default_rng(7)
    for _ in range(20):
        A = rng.uniform(0, 1, (4, 6))
        b = rng.uniform(1, 2, 4)
        c = rng.uniform(0, 1, 6)
        Aeq, beq = _slack_form(A, b)
        res = solve(Aeq, beq, np.concatenate([c, np.zeros(4)]))
        ref = linprog(-c, A_ub=A, b_ub=b, method="highs")
        assert res.value == pytest.approx(-ref.fun, abs=1e-10)


@pytest.mark.parametrize("pricing", ["bland", "dantzig"])
def test_beale_cycling_example(pricing):
    # Beale's example cycles under the largest-coefficient rule without anti-cycling
    A = np.array([[0.25, -60, -1 / 25, 9], [0.5, -90, -1 / 50, 3], [0, 0, 1, 0]])
    c = np.array([0.75, -150, 1 / 50, -6])
    Aeq, beq = _slack_form(A, np.array([0.0, 0.0, 1.0]))
    res = solve(Aeq, beq, np.concatenate([c, np.zeros(3)]), pricing=pricing, stall=3)
    assert res.value == pytest.approx(0.05, abs=1e-12)


def test_phase_one_from_artificials():
    # x1 + x2 = 1, x1 - x2 = 0 -> x = (1/2, 1/2)
    res = solve(np.array([[1.0, 1.0], [1.0, -1.0]]), np.array([1.0, 0.0]), np.array([1.0, 2.0]))
    np.testing.assert_allclose(res.x, [0.5, 0.5])
    assert res.value == pytest.approx(1.5)


def test_infeasible_and_unbounded():
    with pytest.raises(InfeasibleError):
        solve(np.array([[1.0, 1.0], [1.0, 1.0]]), np.array([1.0, 2.0]), np.array([1.0, 1.0]))
    with pytest.raises(UnboundedError):
        solve(np.array([[1.0, -1.0]]), np.array([1.0]), np.array([1.0, 0.0]))


def test_bad_crash_basis():
    with pytest.raises(ValueError, match="crash"):
        solve(np.array([[-1.0, 1.0]]), np.array([1.0]), np.array([1.0, 1.0]), crash={0: 0})


def test_exact_rational_optimum():
    A = [[1, 1, 0], [0, 1, 1]]
    b = [Fraction(1, 3), Fraction(1, 2)]
    c = [1, 2, 1]
    res = solve_exact(A, b, c)
    assert res.value == Fraction(5, 6)
    assert all(isinstance(v, Fraction) for v in res.x)


def test_exact_infeasible():
    with pytest.raises(InfeasibleError):
        solve_exact([[1, 1]], [-1], [1, 1])
