"""Actuators, auxiliary eigenfunctions and the projections built from them."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import (DegenerateActuator, InvalidArgument, InvalidBasis,
                     ObliqueProjectionUndefined)
from .mesh import Triangulation

# closed-box membership tolerance for nodes sitting on an actuator edge
_BOX_TOL = 1e-12
_RCOND_MIN = np.sqrt(np.finfo(float).eps)


@dataclass(frozen=True)
class ActuatorLayout:
    """m x m rectangles, each a rescaled copy of a centered box with side r/m.

    ``rectangles[j] = (x_lo, x_hi, y_lo, y_hi)``, ordered with the x-index
    outer and the y-index inner.
    """

    m: int
    r: float
    rectangles: tuple

    @property
    def count(self) -> int:
        return self.m * self.m

    def total_area(self) -> float:
        return float(sum((x1 - x0) * (y1 - y0) for x0, x1, y0, y1 in self.rectangles))


def _intervals(m: int, r: float):
    return [((2 * j - 1) / (2 * m) - r / (2 * m), (2 * j - 1) / (2 * m) + r / (2 * m))
            for j in range(1, m + 1)]


def actuator_layout(m: int, r: float = 0.5) -> ActuatorLayout:
    if int(m) != m or m < 1:
        raise InvalidArgument(f"per-axis actuator count must be a positive integer, got {m!r}")
    if not 0.0 < r < 1.0:
        raise InvalidArgument(f"coverage fraction must lie in (0, 1), got {r!r}")
    m = int(m)
    iv = _intervals(m, r)
    rects = tuple((x0, x1, y0, y1) for (x0, x1) in iv for (y0, y1) in iv)
    return ActuatorLayout(m=m, r=float(r), rectangles=rects)


def actuator_matrix(mesh: Triangulation, layout: ActuatorLayout) -> np.ndarray:
    """Nodal indicators of the closed actuator boxes, one column per actuator."""
    x, y = mesh.nodes[:, 0], mesh.nodes[:, 1]
    U = np.zeros((mesh.n_nodes, layout.count))
    for j, (x0, x1, y0, y1) in enumerate(layout.rectangles):
        inside = ((x >= x0 - _BOX_TOL) & (x <= x1 + _BOX_TOL)
                  & (y >= y0 - _BOX_TOL) & (y <= y1 + _BOX_TOL))
        if not inside.any():
            raise DegenerateActuator(f"actuator {j} contains no mesh node; refine the mesh")
        U[inside, j] = 1.0
    return U


def eigenfunction_matrix(mesh: Triangulation, m: int) -> np.ndarray:
    """Neumann cosines cos((j1-1) pi x1) cos((j2-1) pi x2), (j1, j2) in {1..m}^2."""
    if int(m) != m or m < 1:
        raise InvalidArgument(f"m must be a positive integer, got {m!r}")
    x, y = mesh.nodes[:, 0], mesh.nodes[:, 1]
    cx = [np.cos(j * np.pi * x) for j in range(int(m))]
    cy = [np.cos(j * np.pi * y) for j in range(int(m))]
    return np.column_stack([a * b for a in cx for b in cy])


def _check_conditioning(V: np.ndarray, exc, what: str, scale: float = 0.0) -> None:
    """Reject V when s_min <= sqrt(eps) * max(s_max, scale).

    ``scale`` bounds the largest attainable entry size; it makes the test
    meaningful for 1x1 couplings, where the plain condition number is always 1.
    """
    if V.size == 0 or not np.all(np.isfinite(V)):
        raise exc(f"{what} is empty or not finite")
    s = np.linalg.svd(V, compute_uv=False)
    ref = max(s[0], scale)
    if s[-1] <= _RCOND_MIN * ref:
        raise exc(f"{what} is numerically singular (rcond={s[-1] / ref:.3e})")


def _max_m_norm(M, Z: np.ndarray) -> float:
    return float(np.sqrt(np.max(np.einsum("ij,ij->j", Z, np.asarray(M @ Z)))))


def oblique_coupling(E: np.ndarray, M, U: np.ndarray) -> np.ndarray:
    """Coupling matrix with entries e_i^T M Phi_j."""
    if E.shape[1] != U.shape[1]:
        raise InvalidArgument("E and U must have the same number of columns")
    Vt = np.asarray(E.T @ (M @ U))
    _check_conditioning(Vt, ObliqueProjectionUndefined, "oblique coupling matrix",
                        _max_m_norm(M, E) * _max_m_norm(M, U))
    return Vt


@dataclass(frozen=True)
class ActuatorBasis:
    U: np.ndarray
    E: np.ndarray
    Vt: np.ndarray
    beta: float = 1.0

    @property
    def count(self) -> int:
        return self.U.shape[1]

    @property
    def B(self) -> np.ndarray:
        """Riccati input matrix beta^(-1/2) U."""
        return self.U / np.sqrt(self.beta)


def build_actuator_basis(mesh: Triangulation, M, m: int, r: float = 0.5,
                         beta: float = 1.0) -> ActuatorBasis:
    if not beta > 0:
        raise InvalidArgument("control weight beta must be positive")
    U = actuator_matrix(mesh, actuator_layout(m, r))
    if np.linalg.matrix_rank(U) < U.shape[1]:
        raise DegenerateActuator("actuator columns are linearly dependent")
    E = eigenfunction_matrix(mesh, m)
    return ActuatorBasis(U=U, E=E, Vt=oblique_coupling(E, M, U), beta=float(beta))


def oblique_project(basis: ActuatorBasis, M, y: np.ndarray) -> np.ndarray:
    """Projection onto span(U) along the M-orthogonal complement of span(E)."""
    coef = sla.solve(basis.Vt, basis.E.T @ (M @ y))
    return basis.U @ coef


def orthogonal_projection_matrix(Ef: np.ndarray, M) -> np.ndarray:
    """M-orthogonal projector Ef V^-1 Ef^T M onto span(Ef), as a dense matrix."""
    MEf = np.asarray(M @ Ef)
    V = Ef.T @ MEf
    _check_conditioning(V, InvalidBasis, "Gram matrix of the eigenfunction basis",
                        _max_m_norm(M, Ef) ** 2)
    return Ef @ sla.solve(V, MEf.T, assume_a="sym")


def state_weight(M, kind: str = "identity", Ef: np.ndarray | None = None) -> np.ndarray:
    """Dense state weighting C^T C for the quadratic cost.

    ``identity`` weights the full H-norm (C^T C = M); ``projection`` weights only
    the component in span(Ef), giving M Ef V^-1 Ef^T M.
    """
    Md = M.toarray() if hasattr(M, "toarray") else np.asarray(M)
    if kind == "identity":
        return Md.copy()
    if kind == "projection":
        if Ef is None:
            raise InvalidArgument("projection weighting needs the eigenfunction matrix")
        W = Md @ orthogonal_projection_matrix(Ef, M)
        return 0.5 * (W + W.T)
    raise InvalidArgument(f"unknown weighting {kind!r}")
