"""P1 assembly for the bulk, the boundary ring, and the trace coupling."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import BoundaryMesh, BulkMesh, boundary_mesh, build_unit_square_crisscross


class Space(str, Enum):
    BULK = "bulk"
    BOUNDARY = "boundary"
    MULTIPLIER = "multiplier"


@dataclass(frozen=True)
class FieldVector:
    """Nodal coefficients tagged with the space they live in."""

    space: Space
    values: np.ndarray
    factor: int = 1

    def __post_init__(self):
        if np.ndim(self.values) != 1:
            raise ValueError("field values must be one-dimensional")

    def __len__(self):
        return len(self.values)


def _triangle_data(mesh: BulkMesh):
    p = mesh.vertices[mesh.triangles]
    area = mesh.signed_areas()
    # grad(lambda_i) = rot90(p_j - p_k) / 2A for the opposite edge (j, k)
    opp = np.stack([p[:, 1] - p[:, 2], p[:, 2] - p[:, 0], p[:, 0] - p[:, 1]], axis=1)
    grads = np.stack([opp[..., 1], -opp[..., 0]], axis=-1) / (2.0 * area[:, None, None])
    return area, grads


def _scatter(tri: np.ndarray, local: np.ndarray, n: int) -> sp.csr_matrix:
    rows = np.repeat(tri, tri.shape[1], axis=1).ravel()
    cols = np.tile(tri, (1, tri.shape[1])).ravel()
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))


def lumped_weights(mesh: BulkMesh) -> np.ndarray:
    """Vertex quadrature weights: one third of the adjacent triangle areas."""
    area = mesh.signed_areas()
    return np.bincount(
        mesh.triangles.ravel(), weights=np.repeat(area / 3.0, 3), minlength=mesh.num_vertices
    )


def assemble_bulk_mass(mesh: BulkMesh, lumped: bool = False) -> sp.csr_matrix:
    if lumped:
        return sp.diags(lumped_weights(mesh)).tocsr()
    area = mesh.signed_areas()
    ref = (np.ones((3, 3)) + np.eye(3)) / 12.0
    return _scatter(mesh.triangles, area[:, None, None] * ref, mesh.num_vertices)


def assemble_bulk_stiffness(mesh: BulkMesh) -> sp.csr_matrix:
    area, grads = _triangle_data(mesh)
    local = area[:, None, None] * np.einsum("tid,tjd->tij", grads, grads)
    K = _scatter(mesh.triangles, local, mesh.num_vertices)
    return ((K + K.T) * 0.5).tocsr()


def _ring_edges(bmesh: BoundaryMesh):
    e = bmesh.edges
    return e, bmesh.edge_lengths


def boundary_lumped_weights(bmesh: BoundaryMesh) -> np.ndarray:
    e, L = _ring_edges(bmesh)
    return np.bincount(e.ravel(), weights=np.repeat(L / 2.0, 2), minlength=bmesh.num_nodes)


def assemble_boundary_mass(bmesh: BoundaryMesh, lumped: bool = False) -> sp.csr_matrix:
    if lumped:
        return sp.diags(boundary_lumped_weights(bmesh)).tocsr()
    e, L = _ring_edges(bmesh)
    ref = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
    return _scatter(e, L[:, None, None] * ref, bmesh.num_nodes)


def assemble_boundary_stiffness(bmesh: BoundaryMesh) -> sp.csr_matrix:
    """Periodic 1D Laplacian in arc length (corner angles are ignored)."""
    e, L = _ring_edges(bmesh)
    ref = np.array([[1.0, -1.0], [-1.0, 1.0]])
    return _scatter(e, ref[None] / L[:, None, None], bmesh.num_nodes)


def assemble_trace_coupling(mesh: BulkMesh, bmesh: BoundaryMesh):
    """Mortar pairing of the bulk trace and the boundary field.

    The multiplier space is the bulk trace space, i.e. P1 hats on the root
    boundary chain. Returns ``(T_u, T_p)`` with ``T_u[q, v] = int (B v) q``
    and ``T_p[q, m] = int m q``, both integrated exactly on the (nested)
    fine partition. The discrete constraint reads ``T_u u - T_p p = 0``.
    """
    nb = len(mesh.boundary_vertices)
    if bmesh.root_size != nb:
        raise ValueError(
            f"boundary mesh is not nested in the bulk trace: root chain has "
            f"{bmesh.root_size} edges, bulk boundary has {nb}"
        )
    xy_root = mesh.vertices[mesh.boundary_vertices]
    xy_b = bmesh.coordinates()[bmesh.root_nodes()]
    if not np.allclose(xy_root, xy_b, atol=1e-12):
        raise ValueError("boundary mesh nodes do not match the bulk boundary vertices")

    # T_u is the root-chain mass matrix embedded in bulk columns
    root = boundary_mesh(mesh, 1)
    Mr = assemble_boundary_mass(root).tocoo()
    Tu = sp.csr_matrix(
        (Mr.data, (Mr.row, mesh.boundary_vertices[Mr.col])), shape=(nb, mesh.num_vertices)
    )

    # T_p: loop over fine edges, each contained in a single root edge
    e, L = _ring_edges(bmesh)
    par = bmesh.parent_edge[e[:, 0]]
    t0 = bmesh.parent_local[e[:, 0]]
    t1 = t0 + 1.0 / bmesh.factor
    rows, cols, vals = [], [], []
    for q, phi0, phi1 in ((par, 1.0 - t0, 1.0 - t1), ((par + 1) % nb, t0, t1)):
        # exact integral of (linear coarse hat) x (linear fine hat)
        rows += [q, q]
        cols += [e[:, 0], e[:, 1]]
        vals += [L / 6.0 * (2 * phi0 + phi1), L / 6.0 * (phi0 + 2 * phi1)]
    Tp = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(nb, bmesh.num_nodes),
    )
    Tp.eliminate_zeros()
    return Tu, Tp


def prolongate_trace(mesh: BulkMesh, bmesh: BoundaryMesh, u: np.ndarray) -> np.ndarray:
    """Nodal values on ``bmesh`` of the piecewise linear trace of ``u``."""
    tr = np.asarray(u)[mesh.boundary_vertices]
    a = tr[bmesh.parent_edge]
    b = tr[(bmesh.parent_edge + 1) % len(tr)]
    return (1.0 - bmesh.parent_local) * a + bmesh.parent_local * b


def restrict_boundary(values: np.ndarray, factor_from: int, factor_to: int) -> np.ndarray:
    """Nodal restriction between nested boundary chains (fine -> coarse)."""
    if factor_from % factor_to:
        raise ValueError(f"boundary factor {factor_to} is not nested in {factor_from}")
    return np.asarray(values)[:: factor_from // factor_to]


@dataclass(frozen=True)
class Discretization:
    """All matrices a time step needs, assembled once.

    ``m`` and ``m_gamma`` are the vertex-quadrature weights used for the
    nonlinear terms and the potential part of the energies.
    """

    mesh: BulkMesh
    bmesh: BoundaryMesh
    M: sp.csr_matrix
    K: sp.csr_matrix
    m: np.ndarray
    M_gamma: sp.csr_matrix
    K_gamma: sp.csr_matrix
    m_gamma: np.ndarray
    T_u: sp.csr_matrix
    T_p: sp.csr_matrix

    @classmethod
    def build(cls, n: int, boundary_factor: int = 1) -> "Discretization":
        mesh = build_unit_square_crisscross(n)
        bmesh = boundary_mesh(mesh, boundary_factor)
        Tu, Tp = assemble_trace_coupling(mesh, bmesh)
        return cls(
            mesh=mesh,
            bmesh=bmesh,
            M=assemble_bulk_mass(mesh),
            K=assemble_bulk_stiffness(mesh),
            m=lumped_weights(mesh),
            M_gamma=assemble_boundary_mass(bmesh),
            K_gamma=assemble_boundary_stiffness(bmesh),
            m_gamma=boundary_lumped_weights(bmesh),
            T_u=Tu,
            T_p=Tp,
        )

    @property
    def n_u(self) -> int:
        return self.mesh.num_vertices

    @property
    def n_p(self) -> int:
        return self.bmesh.num_nodes

    @property
    def n_lambda(self) -> int:
        return self.T_u.shape[0]

    def constraint_residual(self, u: np.ndarray, p: np.ndarray) -> np.ndarray:
        return self.T_u @ u - self.T_p @ p

    def consistent_boundary_data(self, u0_fn):
        """Consistent pair (u0, p0) from a function of (x, y).

        p0 interpolates ``u0_fn`` on the boundary chain. The bulk boundary
        values of u0 are the L2 projection of p0 onto the trace space, which
        makes ``T_u u0 = T_p p0`` hold exactly; interior values interpolate.
        With matching meshes this is plain nodal interpolation.
        """
        xy = self.mesh.vertices
        u0 = np.asarray(u0_fn(xy[:, 0], xy[:, 1]), dtype=float) * np.ones(self.n_u)
        bxy = self.bmesh.coordinates()
        p0 = np.asarray(u0_fn(bxy[:, 0], bxy[:, 1]), dtype=float) * np.ones(self.n_p)
        if self.bmesh.factor == 1:
            u0[self.mesh.boundary_vertices] = p0
        else:
            Mr = self.T_u[:, self.mesh.boundary_vertices]
            u0[self.mesh.boundary_vertices] = spla.spsolve(Mr.tocsc(), self.T_p @ p0)
        return u0, p0
