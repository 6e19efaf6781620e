"""IMEX time integration of the semidiscrete closed loop, costs and decay fits.

The scheme is Crank-Nicolson in the diffusion and reaction terms and
second-order Adams-Bashforth in convection and feedback forcing:

    (2M + k S_nu + k L0_{j+1}) y_{j+1} = (2M - k S_nu - k L0_j) y_j
        - k (3 L1_j y_j - L1_{j-1} y_{j-1}) + k (3 F_j - F_{j-1}).
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .coefficients import CoefficientSet, autonomous_const
from .errors import InvalidArgument, InvalidWindow, NumericalError
from .fem import FemOperators, assemble_operators, convection_matrix, reaction_matrix
from .feedback import FeedbackLaw, control_to_forcing, oblique_input, riccati_input
from .mesh import RestrictionMap, Triangulation
from .spaces import build_actuator_basis


@dataclass(frozen=True)
class SimulationTrace:
    times: np.ndarray
    norms: np.ndarray
    inputs: np.ndarray          # shape (n_times, M0); (n_times, 0) for free dynamics
    cost: np.ndarray
    states: np.ndarray | None = None
    beta: float = 1.0
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def horizon(self) -> float:
        return float(self.times[-1])


@dataclass(frozen=True)
class DecayFit:
    rho: float
    mu: float
    window: float
    residual: float


def imex_step(M, S_nu, L0_next, L0_cur, L1_cur, L1_prev, F_cur, F_prev, y_cur, y_prev,
              k: float, solve=None) -> np.ndarray:
    """One IMEX step; ``solve`` optionally reuses a factorization of the left-hand side."""
    rhs = (2.0 * (M @ y_cur) - k * (S_nu @ y_cur) - k * (L0_cur @ y_cur)
           - k * (3.0 * (L1_cur @ y_cur) - L1_prev @ y_prev)
           + k * (3.0 * F_cur - F_prev))
    if solve is None:
        solve = _factorize(2.0 * M + k * S_nu + k * L0_next)
    y = solve(rhs)
    if not np.all(np.isfinite(y)):
        raise NumericalError("IMEX step produced non-finite values")
    return y


def _factorize(A):
    try:
        lu = spla.splu(sp.csc_matrix(A))
    except RuntimeError as err:
        raise NumericalError(f"IMEX system matrix is singular: {err}") from None
    return lu.solve


def _uniform_grid(horizon: float, k: float) -> np.ndarray:
    if not horizon > 0 or not k > 0 or k > horizon * (1 + 1e-12):
        raise InvalidArgument(f"need T > 0 and 0 < k <= T, got T={horizon!r}, k={k!r}")
    n = int(round(horizon / k))
    if abs(n * k - horizon) > 1e-9 * horizon:
        raise InvalidArgument(f"step {k!r} does not divide the horizon {horizon!r}")
    return k * np.arange(n + 1)


def run_simulation(coeffs: CoefficientSet, mesh: Triangulation, law: FeedbackLaw,
                   horizon: float, k: float, nu: float = 0.1, beta: float = 1.0,
                   keep_states: bool = False, ops: FemOperators | None = None) -> SimulationTrace:
    """Integrate the closed loop from the nodal interpolant of ``coeffs.y0``.

    The two-step scheme is started with ghost values equal to the data at
    t = 0: state, input and convection matrix.
    """
    if not beta > 0:
        raise InvalidArgument("beta must be positive")
    times = _uniform_grid(horizon, k)
    ops = assemble_operators(mesh, nu) if ops is None else ops
    M, S_nu = ops.mass, ops.s_nu
    gx1, gx2 = ops.g_x
    x = mesh.nodes

    basis = build_actuator_basis(mesh, M, law.m, law.r, beta)
    Xi = None
    if law.kind == "riccati":
        nc = law.table.coarse_node_count
        if nc > mesh.n_nodes:
            raise InvalidArgument("gain table lives on a finer mesh than the simulation")
        Xi = RestrictionMap(nc, mesh.n_nodes)
    n_in = 0 if law.kind == "none" else basis.count

    def operators(t):
        b = coeffs.b(x, t)
        return reaction_matrix(M, coeffs.a(x, t)), convection_matrix(gx1, gx2, b[:, 0], b[:, 1])

    def control(t, y, L0, L1):
        if law.kind == "oblique":
            return oblique_input(basis, ops, L0, L1, law.lam, y)
        if law.kind == "riccati":
            return riccati_input(law.table, Xi, y, t)
        return np.zeros(0)

    def forcing(u):
        if u.size == 0:
            return np.zeros(mesh.n_nodes)
        return control_to_forcing(basis.U, M, u)

    nt = times.size
    norms = np.empty(nt)
    inputs = np.empty((nt, n_in))
    states = np.empty((nt, mesh.n_nodes)) if keep_states else None

    y = np.asarray(coeffs.y0(x), dtype=float)
    L0, L1 = operators(times[0])
    u = control(times[0], y, L0, L1)
    F = forcing(u)
    y_prev, L1_prev, F_prev = y, L1, F

    solve = _factorize(2.0 * M + k * S_nu + k * L0) if coeffs.autonomous else None

    def record(j, y, u):
        norms[j] = math.sqrt(max(float(y @ (M @ y)), 0.0))
        inputs[j] = u
        if states is not None:
            states[j] = y

    record(0, y, u)
    for j in range(nt - 1):
        t_next = times[j + 1]
        if coeffs.autonomous:
            L0_next, L1_next = L0, L1
        else:
            L0_next, L1_next = operators(t_next)
        try:
            y_next = imex_step(M, S_nu, L0_next, L0, L1, L1_prev, F, F_prev, y, y_prev, k,
                               solve)
        except NumericalError as err:
            raise NumericalError(f"t={t_next:.6g}: {err}") from None
        y_prev, L1_prev, F_prev = y, L1, F
        y, L0, L1 = y_next, L0_next, L1_next
        u = control(t_next, y, L0, L1)
        F = forcing(u)
        record(j + 1, y, u)

    f = 0.5 * norms ** 2 + 0.5 * beta * np.sum(inputs ** 2, axis=1)
    cost = np.concatenate([[0.0], np.cumsum(0.5 * k * (f[1:] + f[:-1]))])
    meta = {"mesh_level": mesh.level, "M0": n_in, "law": law.kind}
    return SimulationTrace(times=times, norms=norms, inputs=inputs, cost=cost, states=states,
                           beta=float(beta), meta=meta)


def truncated_cost(trace: SimulationTrace, beta: float | None = None) -> float:
    """Trapezoidal 1/2 int |y|_H^2 + beta/2 int |u|^2 over the trace grid."""
    if trace.times.size == 0:
        raise InvalidArgument("empty trace")
    beta = trace.beta if beta is None else beta
    f = 0.5 * trace.norms ** 2
    if trace.inputs.size:
        f = f + 0.5 * beta * np.sum(trace.inputs ** 2, axis=1)
    return float(np.trapezoid(f, trace.times))


def fit_log_linear(times: np.ndarray, values: np.ndarray, window: float = 0.5) -> DecayFit:
    """Least-squares fit values ~ rho exp(-mu t) on the trailing ``window`` of [t0, tN]."""
    if not 0.0 < window <= 1.0:
        raise InvalidWindow(f"window must lie in (0, 1], got {window!r}")
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    t0, t1 = times[0], times[-1]
    sel = times >= t1 - window * (t1 - t0) - 1e-12 * max(1.0, abs(t1))
    if sel.sum() < 2:
        raise InvalidWindow("fewer than two samples in the fit window")
    v = values[sel]
    if np.any(~(v > 0)):
        raise InvalidWindow("nonpositive norm inside the fit window")
    slope, intercept = np.polyfit(times[sel], np.log(v), 1)
    resid = np.log(v) - (slope * times[sel] + intercept)
    return DecayFit(rho=float(np.exp(intercept)), mu=float(-slope), window=float(window),
                    residual=float(np.sqrt(np.mean(resid ** 2))))


def fit_decay_rate(trace: SimulationTrace, window: float = 0.5) -> DecayFit:
    return fit_log_linear(trace.times, trace.norms, window)


def discrete_mode(mesh: Triangulation, ops: FemOperators) -> np.ndarray:
    """Eigenvector of S v = lambda M v closest to z0 = cos(pi x1) cos(pi x2).

    The nodal interpolant of z0 is only approximately M-orthogonal to the other
    Neumann modes; the discrete eigenvector decouples exactly from them under
    autonomous reaction a = c.
    """
    x = mesh.nodes
    z0 = np.cos(np.pi * x[:, 0]) * np.cos(np.pi * x[:, 1])
    n_eig = min(4, mesh.n_nodes - 1)
    if n_eig < 1:
        return z0
    _, V = spla.eigsh(ops.stiffness.tocsc(), k=n_eig, M=ops.mass.tocsc(),
                      sigma=2.0 * np.pi ** 2, v0=z0)
    overlap = np.abs(V.T @ (ops.mass @ z0))
    v = V[:, int(np.argmax(overlap))]
    return v if float(v @ (ops.mass @ z0)) >= 0 else -v


def mode_projection(direction: np.ndarray, M, states: np.ndarray) -> np.ndarray:
    """M-orthogonal coefficients of each state along ``direction``."""
    Md = M @ direction
    return states @ Md / float(direction @ Md)


def uncontrollable_mode_check(c: float, r: float, mesh: Triangulation, horizon: float, k: float,
                              law: str = "none", nu: float = 0.1, lam: float = 1.0,
                              window: float = 0.5) -> float:
    """Growth rate of the z0 component under a single centered actuator.

    The centered box is symmetric under x_i -> 1 - x_i while z0 is odd in each
    coordinate, so the actuator cannot move this mode (up to quadrature error);
    the expected rate is -2 pi^2 nu - 1 - c.
    """
    if law not in ("none", "oblique"):
        raise InvalidArgument("the mode check runs with the zero or the oblique law")
    fl = FeedbackLaw.none(1, r) if law == "none" else FeedbackLaw.oblique(1, lam, r)
    ops = assemble_operators(mesh, nu)
    trace = run_simulation(autonomous_const(c), mesh, fl, horizon, k, nu=nu, keep_states=True,
                           ops=ops)
    coef = np.abs(mode_projection(discrete_mode(mesh, ops), ops.mass, trace.states))
    return -fit_log_linear(trace.times, coef, window).mu


def trace_csv(trace: SimulationTrace) -> str:
    """CSV text with header t,norm_H,J,u_1..u_M0; floats in shortest round-trip form."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    n_in = trace.inputs.shape[1]
    w.writerow(["t", "norm_H", "J"] + [f"u_{i + 1}" for i in range(n_in)])
    for j in range(trace.times.size):
        w.writerow([repr(float(trace.times[j])), repr(float(trace.norms[j])),
                    repr(float(trace.cost[j]))] + [repr(float(v)) for v in trace.inputs[j]])
    return buf.getvalue()


def summary(trace: SimulationTrace, window: float = 0.5) -> dict:
    """Summary record; the fitted rate is None when the norm vanishes in the window."""
    try:
        fit = fit_decay_rate(trace, window)
        mu, rho = fit.mu, fit.rho
    except InvalidWindow:
        mu = rho = None
    return {
        "J_total": float(trace.cost[-1]),
        "fitted_mu": mu,
        "fitted_rho": rho,
        "mesh_level": int(trace.meta.get("mesh_level", 0)),
        "M0": int(trace.meta.get("M0", trace.inputs.shape[1])),
        "law": trace.meta.get("law", ""),
    }
