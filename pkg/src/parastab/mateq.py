"""Dense Lyapunov and algebraic Riccati solvers.

The Riccati equation handled here is

    X^T P + P X - P B B^T P + Csq = 0,   P >= 0,

solved by Newton-Kleinman from a stabilizing guess, with an optional
homotopy in the reaction-convection part of ``X`` to manufacture such a guess.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import (InvalidArgument, NoConvergence, NotPositiveDefinite, NotStabilizingGuess,
                     NotStable, NumericalError)

EPS = np.finfo(float).eps


def default_tol(n: int) -> float:
    """sqrt(N * eps), the stopping tolerance used for every Riccati solve."""
    return float(np.sqrt(n * EPS))


def sym_norm(Z: np.ndarray) -> float:
    """Spectral norm of a symmetric matrix."""
    if Z.size == 0:
        return 0.0
    w = np.linalg.eigvalsh(0.5 * (Z + Z.T))
    return float(max(abs(w[0]), abs(w[-1])))


def cholesky_factor(Z: np.ndarray) -> np.ndarray:
    """Upper-triangular ``Zc`` with ``Z = Zc^T Zc``.

    Raises :class:`NotPositiveDefinite` when ``Z`` is not (numerically)
    positive definite; callers use this as a definiteness test.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    try:
        return sla.cholesky(Z, lower=False, check_finite=True)
    except (sla.LinAlgError, ValueError) as err:
        raise NotPositiveDefinite(str(err)) from None


def spectral_abscissa(A: np.ndarray) -> float:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[0] != A.shape[1]:
        raise InvalidArgument("spectral abscissa needs a square matrix")
    try:
        return float(np.max(np.linalg.eigvals(A).real))
    except np.linalg.LinAlgError as err:
        raise NumericalError(f"eigenvalue computation failed: {err}") from None


def lyapunov_residual(A, X, Q) -> np.ndarray:
    AtX = A.T @ X
    return AtX + AtX.T + Q


def solve_lyapunov(A: np.ndarray, Q: np.ndarray, check_stable: bool = True) -> np.ndarray:
    """Solve A^T X + X A + Q = 0 for symmetric X (Bartels-Stewart via scipy)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    n = A.shape[0]
    if check_stable:
        alpha = spectral_abscissa(A)
        if alpha >= 0:
            raise NotStable(f"Lyapunov operator is not stable (spectral abscissa {alpha:.3e})")
    X = sla.solve_continuous_lyapunov(A.T, -Q)
    X = 0.5 * (X + X.T)
    if not np.all(np.isfinite(X)):
        raise NumericalError("Lyapunov solution is not finite")
    res = sym_norm(lyapunov_residual(A, X, Q)) / max(1.0, sym_norm(X))
    if res > default_tol(n):
        raise NumericalError(f"Lyapunov residual {res:.3e} above tolerance")
    return X


def riccati_residual(X, B, Csq, P) -> np.ndarray:
    XtP = X.T @ P
    PB = P @ B
    return XtP + XtP.T - PB @ PB.T + Csq


@dataclass(frozen=True)
class AreProblem:
    X: np.ndarray
    B: np.ndarray
    Csq: np.ndarray
    guess: np.ndarray | None = None

    def __post_init__(self):
        n = self.X.shape[0]
        if self.X.shape != (n, n) or self.B.shape[0] != n or self.Csq.shape != (n, n):
            raise InvalidArgument("inconsistent Riccati data dimensions")
        if np.max(np.abs(self.Csq - self.Csq.T)) > 1e-12 * max(1.0, np.max(np.abs(self.Csq))):
            raise InvalidArgument("state weighting must be symmetric")


@dataclass(frozen=True)
class AreSolution:
    Pi: np.ndarray
    residual: float
    newton_steps: int
    residual_history: tuple = ()
    s_values: tuple = field(default=())


def newton_kleinman(prob: AreProblem, tol: float | None = None, max_iter: int = 50) -> AreSolution:
    X = np.atleast_2d(np.asarray(prob.X, dtype=float))
    B = np.atleast_2d(np.asarray(prob.B, dtype=float))
    Csq = np.atleast_2d(np.asarray(prob.Csq, dtype=float))
    n = X.shape[0]
    tol = default_tol(n) if tol is None else tol
    P = np.zeros((n, n)) if prob.guess is None else np.atleast_2d(np.asarray(prob.guess, float))
    P = 0.5 * (P + P.T)

    alpha = spectral_abscissa(X - B @ (B.T @ P))
    if alpha >= 0:
        raise NotStabilizingGuess(
            f"initial guess is not stabilizing (closed-loop abscissa {alpha:.3e})")

    history = []
    res = sym_norm(riccati_residual(X, B, Csq, P)) / max(1.0, sym_norm(P))
    history.append(res)
    steps = 0
    while res >= tol:
        if steps >= max_iter:
            raise NoConvergence(f"Newton-Kleinman stalled at residual {res:.3e}", history)
        K = B.T @ P
        Xi = X - B @ K
        P = solve_lyapunov(Xi, K.T @ K + Csq, check_stable=False)
        steps += 1
        res = sym_norm(riccati_residual(X, B, Csq, P)) / max(1.0, sym_norm(P))
        if not np.isfinite(res):
            raise NumericalError("Newton-Kleinman iterate diverged")
        history.append(res)
    return AreSolution(Pi=P, residual=res, newton_steps=steps, residual_history=tuple(history))


def homotopy_are(X_target: np.ndarray, B: np.ndarray, Csq: np.ndarray, delta_s: float = 0.2,
                 A_diffusion: np.ndarray | None = None, tol: float | None = None,
                 max_iter: int = 50, min_bisect_exponent: int = 12) -> AreSolution:
    """Continuation from the pure-diffusion equation to ``X_target``.

    With ``R = -X_target - A_diffusion`` the chain solves the equations for
    ``-A_diffusion - s R`` at s = 0, delta_s, 2 delta_s, ... <= 1, each seeded
    with the previous solution (zero at s = 0), and closes with s = 1 if the
    grid missed it. A grid point whose predecessor's solution is not a
    stabilizing guess is approached by bisection from the last solved s, down
    to gaps of ``delta_s * 2**-min_bisect_exponent``; ``s_values`` lists every
    s actually solved.
    """
    if not 0.0 < delta_s <= 1.0:
        raise InvalidArgument(f"homotopy step must lie in (0, 1], got {delta_s!r}")
    if A_diffusion is None:
        raise InvalidArgument("homotopy needs the diffusion part A_diffusion")
    A_diffusion = np.asarray(A_diffusion, dtype=float)
    R = -np.asarray(X_target, dtype=float) - A_diffusion

    s_grid = []
    i = 0
    while i * delta_s <= 1.0 + 1e-12:
        s_grid.append(min(i * delta_s, 1.0))
        i += 1
    if s_grid[-1] < 1.0 - 1e-12:
        s_grid.append(1.0)

    min_gap = delta_s * 2.0 ** -min_bisect_exponent
    guess = None
    sol = None
    s_done = 0.0
    solved = []
    for s_next in s_grid:
        pending = [s_next]
        while pending:
            s = pending[-1]
            try:
                sol = newton_kleinman(AreProblem(-A_diffusion - s * R, B, Csq, guess), tol,
                                      max_iter)
            except NotStabilizingGuess as err:
                # previous gain too weak for this jump: insert the midpoint
                if guess is None or s - s_done < 2 * min_gap:
                    err.args = (f"homotopy failed at s={s:.6g}: {err}",)
                    err.s = s
                    raise
                pending.append(0.5 * (s_done + s))
                continue
            except (NoConvergence, NumericalError) as err:
                err.args = (f"homotopy failed at s={s:.6g}: {err}",)
                err.s = s
                raise
            pending.pop()
            guess, s_done = sol.Pi, s
            solved.append(s)
    return AreSolution(Pi=sol.Pi, residual=sol.residual, newton_steps=sol.newton_steps,
                       residual_history=sol.residual_history, s_values=tuple(solved))
