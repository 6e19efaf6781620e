import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings, strategies as st

from parastab.errors import InvalidArgument, NoConvergence, NotPositiveDefinite, NotStabilizingGuess, NotStable
from parastab.mateq import (AreProblem, cholesky_factor, default_tol, homotopy_are,
                            newton_kleinman, solve_lyapunov,
                            spectral_abscissa, sym_norm)


def test_cholesky_examples():
    np.testing.assert_array_equal(cholesky_factor(np.eye(3)), np.eye(3))
    np.testing.assert_allclose(cholesky_factor(np.array([[4.0, 2.0], [2.0, 5.0]])),
                               [[2.0, 1.0], [0.0, 2.0]])
    with pytest.raises(NotPositiveDefinite):
        cholesky_factor(np.array([[1.0, 2.0], [2.0, 1.0]]))


@settings(max_examples=30, deadline=None)
@given(n=st.integers(1, 8), seed=st.integers(0, 2 ** 31 - 1))
def test_cholesky_reconstructs(n, seed):
    A = np.random.default_rng(seed).standard_normal((n, n))
    Z = A @ A.T + n * np.eye(n)
    Zc = cholesky_factor(Z)
    np.testing.assert_allclose(Zc.T @ Zc, Z, rtol=1e-12, atol=1e-12)
    assert np.all(np.diag(Zc) > 0) and np.allclose(Zc, np.triu(Zc))


def test_spectral_abscissa():
    assert spectral_abscissa(-np.eye(3)) == pytest.approx(-1.0)
    assert spectral_abscissa(np.array([[0.0, 1.0], [-1.0, 0.0]])) == pytest.approx(0.0, abs=1e-15)
    assert spectral_abscissa(np.diag([-1.0, 2.0])) == pytest.approx(2.0)
    with pytest.raises(InvalidArgument):
        spectral_abscissa(np.ones((2, 3)))


def test_lyapunov_closed_forms():
    np.testing.assert_allclose(solve_lyapunov(-np.eye(2), np.eye(2)), np.eye(2) / 2)
    np.testing.assert_allclose(solve_lyapunov(np.diag([-1.0, -2.0]), np.ones((2, 2))),
                               [[1 / 2, 1 / 3], [1 / 3, 1 / 4]], rtol=1e-14)
    with pytest.raises(NotStable):
        solve_lyapunov(np.eye(2), np.eye(2))


def test_lyapunov_diagonal_8x8(rng):
    lam = rng.uniform(0.5, 5.0, 8)
    B = rng.standard_normal((8, 8))
    Q = B @ B.T
    X = solve_lyapunov(np.diag(-lam), Q)
    np.testing.assert_allclose(X, Q / (lam[:, None] + lam[None, :]), atol=1e-10)


def _stable_problem(seed, n=8, m=2):
    g = np.random.default_rng(seed)
    A = g.standard_normal((n, n))
    A -= (spectral_abscissa(A) + 0.5) * np.eye(n)
    B = g.standard_normal((n, m))
    C = g.standard_normal((n, n))
    return A, B, C @ C.T


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2 ** 31 - 1))
def test_lyapunov_residual_and_sign(seed):
    A, _, Q = _stable_problem(seed)
    X = solve_lyapunov(A, Q)
    np.testing.assert_array_equal(X, X.T)
    assert sym_norm(A.T @ X + X @ A + Q) / max(1, sym_norm(X)) <= default_tol(8)
    assert np.linalg.eigvalsh(X).min() >= -1e-10 * sym_norm(X)


def test_scalar_are_roots():
    one = np.ones((1, 1))
    sol = newton_kleinman(AreProblem(-one, one, one, np.zeros((1, 1))), tol=1e-14)
    assert sol.Pi[0, 0] == pytest.approx(np.sqrt(2) - 1, abs=1e-10)
    sol = newton_kleinman(AreProblem(one, one, one, 3 * one), tol=1e-14)
    assert sol.Pi[0, 0] == pytest.approx(1 + np.sqrt(2), abs=1e-10)
    with pytest.raises(NotStabilizingGuess):
        newton_kleinman(AreProblem(one, one, one, np.zeros((1, 1))))


def test_are_problem_validation():
    with pytest.raises(InvalidArgument):
        AreProblem(np.eye(2), np.ones((3, 1)), np.eye(2))
    with pytest.raises(InvalidArgument):
        AreProblem(np.eye(2), np.ones((2, 1)), np.array([[1.0, 1.0], [0.0, 1.0]]))


def test_max_iter_exceeded():
    A, B, Q = _stable_problem(1)
    with pytest.raises(NoConvergence):
        newton_kleinman(AreProblem(A, B, Q), max_iter=1)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2 ** 31 - 1))
def test_newton_kleinman_against_scipy(seed):
    A, B, Q = _stable_problem(seed)
    sol = newton_kleinman(AreProblem(A, B, Q))
    ref = sla.solve_continuous_are(A, B, Q, np.eye(B.shape[1]))
    assert sym_norm(sol.Pi - ref) <= 1e-8 * max(1.0, sym_norm(ref))
    assert sol.residual <= default_tol(8)
    assert spectral_abscissa(A - B @ B.T @ sol.Pi) < 0
    # monotone residuals after the first step
    h = np.asarray(sol.residual_history)
    assert np.all(np.diff(h[1:]) <= 1e-12 * h[1])
    np.testing.assert_allclose(sol.Pi, sol.Pi.T, atol=1e-10 * max(1, sym_norm(sol.Pi)))


def test_diagonal_oracle(rng):
    x = rng.uniform(-3, 3, 6)
    sol = newton_kleinman(AreProblem(np.diag(x), np.eye(6), np.eye(6), 10.0 * np.eye(6)))
    # per entry: 2 x p - p^2 + 1 = 0, positive root
    np.testing.assert_allclose(sol.Pi, np.diag(x + np.sqrt(x ** 2 + 1)), atol=1e-10)


def _unstable_problem():
    n = 6
    A_diff = np.diag(np.arange(1.0, n + 1))        # -A_diff is stable
    X = -A_diff + np.diag([1.2, 0.5, 0, 0, 0, 0]) + 0.3 * np.triu(np.ones((n, n)), 1)
    return X, A_diff, np.eye(n)[:, :2], np.eye(n)


def test_homotopy_collapses_when_R_zero():
    _, A_diff, B, C = _unstable_problem()
    sol = homotopy_are(-A_diff, B, C, 0.25, A_diff)
    ref = newton_kleinman(AreProblem(-A_diff, B, C))
    np.testing.assert_allclose(sol.Pi, ref.Pi, atol=1e-12)


@pytest.mark.parametrize("delta, expected", [(1.0, (0.0, 1.0)), (0.4, (0.0, 0.4, 0.8, 1.0)),
                                             (0.5, (0.0, 0.5, 1.0))])
def test_homotopy_trace(delta, expected):
    X, A_diff, B, C = _unstable_problem()
    sol = homotopy_are(X, B, C, delta, A_diff)
    np.testing.assert_allclose(sol.s_values, expected)
    assert spectral_abscissa(X) > 0
    assert sol.residual <= default_tol(6)
    assert spectral_abscissa(X - B @ B.T @ sol.Pi) < 0
    ref = sla.solve_continuous_are(X, B, C, np.eye(2))
    assert sym_norm(sol.Pi - ref) <= 1e-8 * sym_norm(ref)


def test_homotopy_bisects_on_failure():
    # a weakly coupled unstable mode: too large a jump leaves the old gain non-stabilizing
    X = np.diag([-1.0, -2.0]) + np.array([[0.0, 0.0], [0.0, 6.0]])
    A_diff = np.diag([1.0, 2.0])
    B = np.array([[1.0], [0.02]])
    sol = homotopy_are(X, B, np.eye(2), 1.0, A_diff)
    assert len(sol.s_values) > 2 and sol.s_values[-1] == 1.0
    assert np.all(np.diff(sol.s_values) > 0)
    ref = sla.solve_continuous_are(X, B, np.eye(2), np.eye(1))
    assert sym_norm(sol.Pi - ref) <= 1e-8 * sym_norm(ref)


def test_homotopy_failure_reports_s():
    X = np.diag([-1.0, 1.0])
    B = np.array([[1.0], [0.0]])            # unstable mode not controllable
    with pytest.raises(NotStabilizingGuess) as info:
        homotopy_are(X, B, np.eye(2), 0.25, np.diag([1.0, 1.0]))
    assert 0 < info.value.s <= 1
    with pytest.raises(InvalidArgument):
        homotopy_are(X, B, np.eye(2), 0.0, np.eye(2))
    with pytest.raises(InvalidArgument):
        homotopy_are(X, B, np.eye(2), 0.5)
