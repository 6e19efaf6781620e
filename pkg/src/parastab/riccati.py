"""Backward differential Riccati sweeps and the periodic fixed-point iteration.

The differential equation

    dP/dt + X(t)^T P + P X(t) - P B B^T P + Csq = 0

is marched backward from ``tau + varpi`` to ``tau`` with a Crank-Nicolson
step. Each step is itself an algebraic Riccati equation in the unknown
``P(t_r)``, whose constant term must be positive definite; when it is not,
the step is halved.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg as sla

from .errors import InvalidArgument, NoConvergence, NotPositiveDefinite, StepCollapse
from .fem import FemOperators, convection_matrix, reaction_matrix
from .mateq import (AreProblem, cholesky_factor, default_tol, homotopy_are, newton_kleinman)

GAIN_TABLE_FORMAT = "parastab-gain-table/1"
_MAGIC = b"PSGT"
_HALVING_FLOOR = 2.0 ** -20


def _dense(A) -> np.ndarray:
    return A.toarray() if hasattr(A, "toarray") else np.asarray(A, dtype=float)


def system_matrix(ops: FemOperators, L0, L1, mu_bar: float, mass_factor=None) -> np.ndarray:
    """Dense -M^-1 (S_nu + L0 + L1) + mu_bar I.

    ``mass_factor`` is an optional ``scipy.linalg.cho_factor`` of the dense mass
    matrix, reused across calls.
    """
    if mass_factor is None:
        mass_factor = sla.cho_factor(_dense(ops.mass))
    rhs = _dense(ops.s_nu + L0 + L1)
    X = -sla.cho_solve(mass_factor, rhs)
    X[np.diag_indices_from(X)] += mu_bar
    return X


def system_function(ops: FemOperators, mesh, coeffs, mu_bar: float) -> Callable:
    """t -> X(t) for a coefficient set evaluated at the mesh nodes."""
    factor = sla.cho_factor(_dense(ops.mass))
    x = mesh.nodes
    gx1, gx2 = ops.g_x

    def Xfun(t):
        b = coeffs.b(x, t)
        L0 = reaction_matrix(ops.mass, coeffs.a(x, t))
        L1 = convection_matrix(gx1, gx2, b[:, 0], b[:, 1])
        return system_matrix(ops, L0, L1, mu_bar, factor)

    return Xfun


def diffusion_generator(ops: FemOperators) -> np.ndarray:
    """Dense M^-1 S_nu, the stable part used to start the homotopy."""
    return sla.cho_solve(sla.cho_factor(_dense(ops.mass)), _dense(ops.s_nu))


def base_step(varpi: float, k_ric: float) -> float:
    """Largest step <= varpi that divides the period and is >= k_ric."""
    if not 0 < k_ric <= varpi:
        raise InvalidArgument(f"need 0 < k_ric <= varpi, got k_ric={k_ric!r}, varpi={varpi!r}")
    n = max(1, math.floor(varpi / k_ric * (1.0 + 1e-12)))
    return varpi / n


@dataclass(frozen=True)
class DreSweep:
    times: np.ndarray
    Pi_list: list
    k_requested: float
    k_base: float
    n_halvings: int = 0
    tau: float = 0.0
    varpi: float = 0.0


def _quadratic_part(X, B, P):
    XtP = X.T @ P
    PB = P @ B
    return XtP + XtP.T - PB @ PB.T


def dre_backward(Xfun: Callable, B: np.ndarray, Csq: np.ndarray, Pi_end: np.ndarray,
                 tau: float, varpi: float, k_ric: float, tol: float | None = None,
                 max_iter: int = 50) -> DreSweep:
    kb = base_step(varpi, k_ric)
    k_min = kb * _HALVING_FLOOR
    n = Csq.shape[0]
    eye = np.eye(n)

    T = tau + varpi
    P_old = 0.5 * (Pi_end + Pi_end.T)
    X_old = Xfun(T)
    times = [T]
    Pis = [P_old]
    halvings = 0
    # Node spacing below this is treated as landing on tau.
    seam = kb * 1e-9

    while T - tau > seam:
        remaining = T - tau
        k = kb if remaining > kb + seam else remaining
        F_old = _quadratic_part(X_old, B, P_old)
        while True:
            Q = F_old + 2.0 * Csq + (2.0 / k) * P_old
            Q = 0.5 * (Q + Q.T)
            try:
                cholesky_factor(Q)
                break
            except NotPositiveDefinite:
                k *= 0.5
                halvings += 1
                if k < k_min:
                    raise StepCollapse(
                        f"Riccati step fell below {k_min:.3e} at t={T:.6f}") from None
        T_new = tau if k >= remaining else T - k
        X_new = Xfun(T_new)
        # the Cholesky factor only certifies definiteness; Q itself is Cbar^T Cbar
        sol = newton_kleinman(AreProblem(X_new - eye / k, B, Q, guess=P_old), tol, max_iter)
        T, P_old, X_old = T_new, sol.Pi, X_new
        times.append(T)
        Pis.append(P_old)

    times.reverse()
    Pis.reverse()
    return DreSweep(times=np.array(times), Pi_list=Pis, k_requested=float(k_ric),
                    k_base=kb, n_halvings=halvings, tau=float(tau), varpi=float(varpi))


@dataclass(frozen=True)
class RiccatiGainTable:
    """Gains K(t_r) = -beta^-1 U^T P(t_r) over one period, shape (n_times, M0, N)."""

    times: np.ndarray
    K: np.ndarray
    Pi_tau: np.ndarray
    period: float
    tau: float
    beta: float

    @property
    def coarse_node_count(self) -> int:
        return self.K.shape[2]

    @property
    def m0(self) -> int:
        return self.K.shape[1]


def gain_table(sweep: DreSweep, U: np.ndarray, beta: float) -> RiccatiGainTable:
    if not beta > 0:
        raise InvalidArgument("beta must be positive")
    K = np.stack([-(U.T @ P) / beta for P in sweep.Pi_list])
    return RiccatiGainTable(times=np.asarray(sweep.times, dtype=float), K=K,
                            Pi_tau=np.array(sweep.Pi_list[0]), period=sweep.varpi,
                            tau=sweep.tau, beta=float(beta))


@dataclass(frozen=True)
class PeriodicResult:
    table: RiccatiGainTable
    history: list
    sweeps: int
    halvings: list


def periodic_riccati(Xfun: Callable, B: np.ndarray, Csq: np.ndarray, tau: float, varpi: float,
                     k_ric: float, epsilon: float | None = None, n_max: int = 200,
                     delta_s: float = 0.2, A_diffusion: np.ndarray | None = None,
                     beta: float = 1.0, progress: Callable | None = None) -> PeriodicResult:
    """Fixed-point iteration P(tau + varpi) <- P(tau) over repeated backward sweeps.

    ``B`` is the scaled input matrix beta^(-1/2) U; the gains use U = sqrt(beta) B.
    The error history holds the spectral norm of P(tau) minus the final
    condition for each sweep.
    """
    if n_max < 1:
        raise InvalidArgument("n_max must be at least 1")
    n = Csq.shape[0]
    epsilon = default_tol(n) if epsilon is None else epsilon
    if not epsilon > 0:
        raise InvalidArgument("epsilon must be positive")
    U = B * math.sqrt(beta)

    Pi_R = homotopy_are(Xfun(tau + varpi), B, Csq, delta_s, A_diffusion).Pi
    sweep = dre_backward(Xfun, B, Csq, Pi_R, tau, varpi, k_ric)
    P_L = sweep.Pi_list[0]
    history = [float(np.linalg.norm(P_L - Pi_R, 2))]
    halvings = [sweep.n_halvings]
    if progress:
        progress(0, history[-1])
    it = 0
    while history[-1] > epsilon and it < n_max:
        P_R = P_L
        sweep = dre_backward(Xfun, B, Csq, P_R, tau, varpi, k_ric)
        P_L = sweep.Pi_list[0]
        history.append(float(np.linalg.norm(P_L - P_R, 2)))
        halvings.append(sweep.n_halvings)
        it += 1
        if progress:
            progress(it, history[-1])

    result = PeriodicResult(table=gain_table(sweep, U, beta), history=history,
                            sweeps=len(history), halvings=halvings)
    if history[-1] > epsilon:
        raise NoConvergence(f"periodic Riccati iteration: error {history[-1]:.3e} after "
                            f"{len(history)} sweeps", history, result)
    return result


def save_gain_table(table: RiccatiGainTable, path) -> None:
    """Binary file: magic, uint64 header length, JSON header, little-endian float64 blocks.

    Blocks follow in order: times (n_times), gains (n_times x M0 x N, row-major)
    and P(tau) (N x N, row-major).
    """
    header = {
        "format": GAIN_TABLE_FORMAT,
        "tau": table.tau,
        "varpi": table.period,
        "beta": table.beta,
        "n_coarse": table.coarse_node_count,
        "m0": table.m0,
        "n_times": int(table.times.size),
        "dtype": "<f8",
    }
    raw = json.dumps(header, sort_keys=True).encode()
    blocks = [np.ascontiguousarray(a, dtype="<f8").tobytes()
              for a in (table.times, table.K, table.Pi_tau)]
    with open(path, "wb") as fh:
        fh.write(_MAGIC + struct.pack("<Q", len(raw)) + raw)
        for b in blocks:
            fh.write(b)


def load_gain_table(path) -> RiccatiGainTable:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != _MAGIC:
        raise InvalidArgument(f"{path}: not a gain-table file")
    (hlen,) = struct.unpack("<Q", data[4:12])
    header = json.loads(data[12:12 + hlen])
    if header.get("format") != GAIN_TABLE_FORMAT:
        raise InvalidArgument(f"{path}: unsupported format {header.get('format')!r}")
    nt, m0, nc = header["n_times"], header["m0"], header["n_coarse"]
    off = 12 + hlen
    sizes = [nt, nt * m0 * nc, nc * nc]
    arrays = []
    for s in sizes:
        arrays.append(np.frombuffer(data, dtype="<f8", count=s, offset=off).astype(float))
        off += 8 * s
    if off != len(data):
        raise InvalidArgument(f"{path}: trailing or missing bytes")
    return RiccatiGainTable(times=arrays[0], K=arrays[1].reshape(nt, m0, nc),
                            Pi_tau=arrays[2].reshape(nc, nc), period=header["varpi"],
                            tau=header["tau"], beta=header["beta"])
