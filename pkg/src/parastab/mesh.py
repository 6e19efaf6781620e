"""Triangulations of the unit square and their regular (red) refinements."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import InvalidArgument


@dataclass(frozen=True)
class Triangulation:
    """P1 mesh of (0, 1)^2.

    Attributes
    ----------
    nodes : (N, 2) float array
    triangles : (K, 3) int array, counter-clockwise
    level : number of regular refinements applied to the base grid
    parent_node_count : node count of the previous level (0 at level 0)
    """

    nodes: np.ndarray
    triangles: np.ndarray
    level: int = 0
    parent_node_count: int = 0

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    def signed_areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def build_unit_square_mesh(n: int) -> Triangulation:
    """Uniform (n+1) x (n+1) grid, every cell split along its lower-left to upper-right diagonal."""
    if int(n) != n or n < 1:
        raise InvalidArgument(f"subdivisions per side must be a positive integer, got {n!r}")
    n = int(n)
    x = np.arange(n + 1) / n
    xx, yy = np.meshgrid(x, x)
    nodes = np.column_stack([xx.ravel(), yy.ravel()])

    i, j = np.meshgrid(np.arange(n), np.arange(n))
    v00 = (j * (n + 1) + i).ravel()
    v10 = v00 + 1
    v01 = v00 + n + 1
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.empty((2 * n * n, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper
    return Triangulation(nodes=nodes, triangles=triangles, level=0, parent_node_count=0)


def refine_regular(mesh: Triangulation) -> Triangulation:
    """Split each triangle into 4 congruent children through its edge midpoints.

    Parent nodes keep their indices; midpoints are appended after them in the
    order of the sorted unique edge list, so the result is deterministic.
    """
    t = mesh.triangles
    n_old = mesh.n_nodes
    # local edges (0,1), (1,2), (2,0)
    edges = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    edges = np.sort(edges, axis=1)
    uniq, inverse = np.unique(edges, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    mids = 0.5 * (mesh.nodes[uniq[:, 0]] + mesh.nodes[uniq[:, 1]])
    nodes = np.vstack([mesh.nodes, mids])

    k = t.shape[0]
    m01 = n_old + inverse[:k]
    m12 = n_old + inverse[k:2 * k]
    m20 = n_old + inverse[2 * k:]
    a, b, c = t[:, 0], t[:, 1], t[:, 2]
    children = np.stack(
        [
            np.column_stack([a, m01, m20]),
            np.column_stack([m01, b, m12]),
            np.column_stack([m20, m12, c]),
            np.column_stack([m01, m12, m20]),
        ],
        axis=1,
    ).reshape(-1, 3)
    return Triangulation(nodes=nodes, triangles=children, level=mesh.level + 1,
                         parent_node_count=n_old)


def refine(mesh: Triangulation, times: int) -> Triangulation:
    for _ in range(times):
        mesh = refine_regular(mesh)
    return mesh


@dataclass(frozen=True)
class RestrictionMap:
    """Selection of the first ``n_coarse`` entries of a fine nodal vector."""

    n_coarse: int
    n_fine: int

    def __call__(self, y: np.ndarray) -> np.ndarray:
        if y.shape[0] != self.n_fine:
            raise InvalidArgument(f"expected a vector of length {self.n_fine}, got {y.shape[0]}")
        return y[: self.n_coarse]

    def matrix(self) -> sp.csr_matrix:
        return sp.eye(self.n_coarse, self.n_fine, format="csr")

    @property
    def is_identity(self) -> bool:
        return self.n_coarse == self.n_fine


def coarse_to_fine_restriction(coarse: Triangulation, fine: Triangulation) -> RestrictionMap:
    nc = coarse.n_nodes
    if fine.n_nodes < nc or fine.level < coarse.level:
        raise InvalidArgument("fine mesh is not a refinement of the coarse mesh")
    if not np.array_equal(fine.nodes[:nc], coarse.nodes):
        raise InvalidArgument("meshes are not nested: leading fine nodes differ from coarse nodes")
    return RestrictionMap(n_coarse=nc, n_fine=fine.n_nodes)


def write_mesh(mesh: Triangulation, path) -> None:
    """Plain-text export: a node table ``index x y`` then a triangle table."""
    lines = [f"# nodes {mesh.n_nodes}"]
    lines += [f"{i} {x!r} {y!r}" for i, (x, y) in enumerate(mesh.nodes.tolist())]
    lines.append(f"# triangles {mesh.n_triangles}")
    lines += [f"{a} {b} {c}" for a, b, c in mesh.triangles.tolist()]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_mesh(path) -> Triangulation:
    with open(path) as fh:
        rows = [ln.split() for ln in fh if ln.strip()]
    n_nodes = int(rows[0][2])
    nodes = np.array([[float(r[1]), float(r[2])] for r in rows[1:1 + n_nodes]])
    tri = np.array([[int(v) for v in r] for r in rows[2 + n_nodes:]], dtype=np.int64)
    return Triangulation(nodes=nodes, triangles=tri.reshape(-1, 3))
