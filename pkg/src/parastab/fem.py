"""P1 finite-element matrices on a triangulation.

Everything is integrated exactly per element; coefficient fields enter only
through nodal diagonal matrices (see :func:`reaction_matrix` and
:func:`convection_matrix`). Boundary conditions are homogeneous Neumann, so no
rows are modified.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import InvalidArgument
from .mesh import Triangulation


def _geometry(mesh: Triangulation):
    """Areas and hat-function gradients, gradients shaped (K, 3, 2)."""
    p = mesh.nodes[mesh.triangles]
    x, y = p[..., 0], p[..., 1]
    # gradient of the barycentric coordinate lambda_i is (y_j - y_k, x_k - x_j) / (2|K|)
    dy = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
    dx = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
    area2 = (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0])
    area = 0.5 * area2
    grads = np.stack([dy, dx], axis=2) / area2[:, None, None]
    return area, grads


def _scatter(mesh: Triangulation, local: np.ndarray) -> sp.csr_matrix:
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    n = mesh.n_nodes
    mat = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    mat.sum_duplicates()
    return mat


def assemble_mass(mesh: Triangulation) -> sp.csr_matrix:
    area, _ = _geometry(mesh)
    ref = (np.ones((3, 3)) + np.eye(3)) / 12.0
    return _scatter(mesh, area[:, None, None] * ref[None])


def assemble_stiffness(mesh: Triangulation) -> sp.csr_matrix:
    area, grads = _geometry(mesh)
    local = area[:, None, None] * np.einsum("kid,kjd->kij", grads, grads)
    return _scatter(mesh, local)


def assemble_directional(mesh: Triangulation, axis: int) -> sp.csr_matrix:
    """Entry (m, n) is the integral of d(h_n)/dx_axis times h_m, axis in {1, 2}."""
    if axis not in (1, 2):
        raise InvalidArgument(f"axis must be 1 or 2, got {axis!r}")
    area, grads = _geometry(mesh)
    # each hat integrates to |K|/3 over its element
    local = (area / 3.0)[:, None, None] * np.broadcast_to(
        grads[:, None, :, axis - 1], (area.size, 3, 3))
    return _scatter(mesh, local)


@dataclass(frozen=True)
class FemOperators:
    mass: sp.csr_matrix
    stiffness: sp.csr_matrix
    s_nu: sp.csr_matrix
    g_x: tuple
    nu: float

    @property
    def n(self) -> int:
        return self.mass.shape[0]


def assemble_operators(mesh: Triangulation, nu: float) -> FemOperators:
    if not nu > 0:
        raise InvalidArgument(f"diffusion coefficient must be positive, got {nu!r}")
    M = assemble_mass(mesh)
    S = assemble_stiffness(mesh)
    return FemOperators(
        mass=M,
        stiffness=S,
        s_nu=(nu * S + M).tocsr(),
        g_x=(assemble_directional(mesh, 1), assemble_directional(mesh, 2)),
        nu=float(nu),
    )


def reaction_matrix(M, a_bar: np.ndarray) -> sp.csr_matrix:
    """(M D_a + D_a M) / 2, symmetric by construction."""
    D = sp.diags(np.asarray(a_bar, dtype=float))
    MD = (M @ D).tocsr()
    return (0.5 * (MD + MD.T)).tocsr()


def convection_matrix(g_x1, g_x2, b1: np.ndarray, b2: np.ndarray) -> sp.csr_matrix:
    return (sp.diags(np.asarray(b1, dtype=float)) @ g_x1
            + sp.diags(np.asarray(b2, dtype=float)) @ g_x2).tocsr()
