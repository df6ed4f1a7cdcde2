"""Criss-cross triangulation of the unit square and its boundary ring.

The boundary Gamma is handled as a closed 1D chain parametrized by arc
length s in [0, 4), starting at the origin and running counterclockwise.
Refined chains are always nested in the bulk trace partition: every bulk
boundary vertex is also a node of the refined chain.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

PERIMETER = 4.0


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class BulkMesh:
    """Conforming P1 triangulation of [0, 1]^2.

    Attributes
    ----------
    vertices : (N, 2) float array
    triangles : (T, 3) int array, counterclockwise
    boundary_vertices : (B,) int array
        Vertex indices on the boundary, ordered counterclockwise from (0, 0).
    n : int
        Cells per side; the mesh size is ``1 / n``.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_vertices: np.ndarray
    n: int

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def to_csv(self, path: str | Path) -> None:
        """Dump vertices and triangles as sectioned plain-text CSV."""
        lines = ["[vertices]"]
        lines += [f"{x!r},{y!r}" for x, y in self.vertices.tolist()]
        lines.append("[triangles]")
        lines += [f"{i},{j},{k}" for i, j, k in self.triangles.tolist()]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def from_csv(cls, path: str | Path) -> "BulkMesh":
        verts, tris, section = [], [], None
        for line in Path(path).read_text().splitlines():
            line = line.strip()
            if not line:
                continue
            if line.startswith("["):
                section = line
            elif section == "[vertices]":
                verts.append([float(v) for v in line.split(",")])
            elif section == "[triangles]":
                tris.append([int(v) for v in line.split(",")])
        vertices = np.array(verts)
        n = int(round((np.sqrt(2 * len(vertices) - 1) - 1) / 2))  # 2n^2 + 2n + 1 vertices
        return cls(
            vertices=_frozen(vertices),
            triangles=_frozen(np.array(tris, dtype=np.int64)),
            boundary_vertices=_frozen(_boundary_loop(n)),
            n=n,
        )


@dataclass(frozen=True)
class BoundaryMesh:
    """Closed P1 chain on Gamma, possibly a refinement of the bulk trace.

    ``nodes`` holds arc-length positions. Node ``k`` lies on root edge
    ``parent_edge[k]`` (an edge of the bulk boundary chain) at local
    coordinate ``parent_local[k]`` in [0, 1). Edges join node ``k`` to node
    ``k + 1`` with wraparound.
    """

    nodes: np.ndarray
    parent_edge: np.ndarray
    parent_local: np.ndarray
    root_size: int
    factor: int

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    @property
    def edges(self) -> np.ndarray:
        k = np.arange(self.num_nodes)
        return np.stack([k, (k + 1) % self.num_nodes], axis=1)

    @property
    def edge_lengths(self) -> np.ndarray:
        s = self.nodes
        return np.diff(np.append(s, s[0] + PERIMETER))

    @property
    def h(self) -> float:
        return float(self.edge_lengths.max())

    @property
    def parent_map(self) -> np.ndarray:
        """(N, 2) array of (root edge, local barycentric coordinate)."""
        return np.stack([self.parent_edge.astype(float), self.parent_local], axis=1)

    def coordinates(self) -> np.ndarray:
        """Cartesian positions of the nodes on the unit square."""
        return arc_to_xy(self.nodes)

    def root_nodes(self) -> np.ndarray:
        """Indices of nodes that coincide with bulk boundary vertices."""
        return np.arange(0, self.num_nodes, self.factor)


def arc_to_xy(s: np.ndarray) -> np.ndarray:
    s = np.mod(np.asarray(s, dtype=float), PERIMETER)
    xy = np.empty((len(s), 2))
    side = np.minimum(np.floor(s).astype(int), 3)
    t = s - side
    xy[side == 0] = np.c_[t[side == 0], np.zeros((side == 0).sum())]
    xy[side == 1] = np.c_[np.ones((side == 1).sum()), t[side == 1]]
    xy[side == 2] = np.c_[1.0 - t[side == 2], np.ones((side == 2).sum())]
    xy[side == 3] = np.c_[np.zeros((side == 3).sum()), 1.0 - t[side == 3]]
    return xy


def _boundary_loop(n: int) -> np.ndarray:
    def g(i, j):
        return j * (n + 1) + i

    loop = [g(i, 0) for i in range(n)]
    loop += [g(n, j) for j in range(n)]
    loop += [g(i, n) for i in range(n, 0, -1)]
    loop += [g(0, j) for j in range(n, 0, -1)]
    return np.array(loop, dtype=np.int64)


def build_unit_square_crisscross(n: int) -> BulkMesh:
    """Split each of the n^2 cells into four triangles by both diagonals."""
    if int(n) != n or n < 1:
        raise ValueError(f"cells per side must be a positive integer, got {n!r}")
    n = int(n)
    x = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(x, x)
    corners = np.c_[X.ravel(), Y.ravel()]
    c = (np.arange(n) + 0.5) / n
    CX, CY = np.meshgrid(c, c)
    centers = np.c_[CX.ravel(), CY.ravel()]
    vertices = np.vstack([corners, centers])

    i, j = np.meshgrid(np.arange(n), np.arange(n))
    i, j = i.ravel(), j.ravel()
    a = j * (n + 1) + i
    b = a + 1
    cc = a + n + 2
    d = a + n + 1
    e = (n + 1) ** 2 + j * n + i
    tris = np.concatenate(
        [np.c_[a, b, e], np.c_[b, cc, e], np.c_[cc, d, e], np.c_[d, a, e]]
    )
    return BulkMesh(
        vertices=_frozen(vertices),
        triangles=_frozen(tris.astype(np.int64)),
        boundary_vertices=_frozen(_boundary_loop(n)),
        n=n,
    )


def extract_boundary_chain(mesh: BulkMesh) -> BoundaryMesh:
    """Boundary ring whose nodes are exactly the bulk boundary vertices."""
    nb = len(mesh.boundary_vertices)
    return BoundaryMesh(
        nodes=_frozen(np.arange(nb) * (PERIMETER / nb)),
        parent_edge=_frozen(np.arange(nb, dtype=np.int64)),
        parent_local=_frozen(np.zeros(nb)),
        root_size=nb,
        factor=1,
    )


def refine_boundary_chain(bmesh: BoundaryMesh, factor: int) -> BoundaryMesh:
    """Split every edge of ``bmesh`` into ``factor`` equal sub-edges."""
    if int(factor) != factor or factor < 1:
        raise ValueError(f"refinement factor must be a positive integer, got {factor!r}")
    factor = int(factor)
    total = bmesh.factor * factor
    nr = bmesh.root_size
    k = np.arange(nr * total)
    # integer bookkeeping keeps nested refinements bit-identical
    edge, sub = np.divmod(k, total)
    return BoundaryMesh(
        nodes=_frozen(edge * (PERIMETER / nr) + sub * (PERIMETER / (nr * total))),
        parent_edge=_frozen(edge.astype(np.int64)),
        parent_local=_frozen(sub / total),
        root_size=nr,
        factor=total,
    )


def boundary_mesh(mesh: BulkMesh, factor: int = 1) -> BoundaryMesh:
    return refine_boundary_chain(extract_boundary_chain(mesh), factor)
