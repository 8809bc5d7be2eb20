"""Loop masks and the one-step subdivision operator."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..errors import LevelTooLarge, NonManifold
from ..mesh import TriMesh


def loop_beta(n):
    """Neighbour weight of Loop's vertex mask for interior valence ``n``."""
    return (5.0 / 8.0 - (3.0 / 8.0 + 0.25 * np.cos(2.0 * np.pi / n)) ** 2) / n


def limit_neighbor_weight(n):
    """Neighbour weight of the interior limit stencil (centre gets 1 - n*w)."""
    return 1.0 / (3.0 / (8.0 * loop_beta(n)) + n)


@dataclass(frozen=True)
class ControlMesh:
    """Fixed connectivity, optimized positions, and the ARAP rest pose."""

    mesh: TriMesh
    positions: np.ndarray
    rest_positions: np.ndarray

    def __post_init__(self):
        p = np.array(self.positions, dtype=float, copy=True)
        r = np.array(self.rest_positions, dtype=float, copy=True)
        if p.shape != (self.mesh.n_vertices, 3) or r.shape != p.shape:
            raise ValueError("positions must match the mesh vertex count")
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(r))):
            raise ValueError("non-finite control positions")
        p.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "positions", p)
        object.__setattr__(self, "rest_positions", r)

    @classmethod
    def from_mesh(cls, mesh):
        return cls(mesh, mesh.vertices, mesh.vertices)

    def with_positions(self, positions):
        return ControlMesh(self.mesh, positions, self.rest_positions)

    def current_mesh(self):
        return self.mesh.with_vertices(self.positions)


@dataclass(frozen=True)
class SubdivisionStep:
    """``S`` maps coarse positions to the vertices of the refined mesh.

    Fine vertex ``i < n_coarse`` is the vertex point of coarse vertex ``i``;
    fine vertex ``n_coarse + e`` is the edge point of coarse edge ``e``.
    Fine face ``4 f + k`` is the corner child at corner ``k`` of coarse face
    ``f`` (k = 0, 1, 2) or the centre child (k = 3).
    """

    S: sp.csr_matrix
    mesh: TriMesh
    n_coarse: int


def _step_rows(mesh):
    """COO triplets of the Loop step for a validated mesh."""
    n = mesh.n_vertices
    edges = mesh.edges
    ef = mesh.edge_faces
    faces = mesh.faces
    rows, cols, vals = [], [], []

    # vertex points
    bnd = mesh.is_boundary_vertex
    inner = np.flatnonzero(~bnd)
    for v in inner:
        ring = mesh.rings[v]
        b = loop_beta(len(ring))
        rows.append(np.full(len(ring) + 1, v))
        cols.append(np.concatenate([[v], ring]))
        vals.append(np.concatenate([[1.0 - len(ring) * b], np.full(len(ring), b)]))
    for v in np.flatnonzero(bnd):
        ring = mesh.rings[v]
        rows.append(np.full(3, v))
        cols.append(np.array([v, ring[0], ring[-1]]))
        vals.append(np.array([0.75, 0.125, 0.125]))

    # edge points
    e_idx = np.arange(len(edges))
    interior = ef[:, 1] >= 0
    fe = faces[ef[:, 0]]
    # vertex of the first incident face opposite the edge
    opp0 = fe.sum(axis=1) - edges.sum(axis=1)
    fe1 = faces[np.where(interior, ef[:, 1], ef[:, 0])]
    opp1 = fe1.sum(axis=1) - edges.sum(axis=1)
    ie = e_idx[interior]
    rows += [n + ie] * 4
    cols += [edges[ie, 0], edges[ie, 1], opp0[ie], opp1[ie]]
    vals += [np.full(len(ie), 0.375)] * 2 + [np.full(len(ie), 0.125)] * 2
    be = e_idx[~interior]
    rows += [n + be] * 2
    cols += [edges[be, 0], edges[be, 1]]
    vals += [np.full(len(be), 0.5)] * 2
    return (np.concatenate(rows), np.concatenate(cols), np.concatenate(vals),
            n + len(edges))


def _refined_faces(mesh):
    n = mesh.n_vertices
    fe = mesh.face_edges + n  # fine index of edge points: (01, 12, 20)
    f = mesh.faces
    a, b, c = f[:, 0], f[:, 1], f[:, 2]
    m_ab, m_bc, m_ca = fe[:, 0], fe[:, 1], fe[:, 2]
    out = np.stack([
        np.stack([a, m_ab, m_ca], axis=1),
        np.stack([b, m_bc, m_ab], axis=1),
        np.stack([c, m_ca, m_bc], axis=1),
        np.stack([m_ab, m_bc, m_ca], axis=1),
    ], axis=1)
    return out.reshape(-1, 3)


def subdivision_matrix(mesh):
    """Sparse Loop step matrix and refined connectivity for ``mesh``."""
    if not mesh.report.ok:
        raise NonManifold("; ".join(mesh.report.issues), report=mesh.report)
    r, c, v, n_fine = _step_rows(mesh)
    S = sp.csr_matrix((v, (r, c)), shape=(n_fine, mesh.n_vertices))
    S.sum_duplicates()
    return S, _refined_faces(mesh)


def subdivide_once(control):
    """One Loop step applied to a control mesh (or bare TriMesh)."""
    mesh = control.mesh if isinstance(control, ControlMesh) else control
    positions = control.positions if isinstance(control, ControlMesh) else mesh.vertices
    S, faces = subdivision_matrix(mesh)
    fine = TriMesh(S @ positions, faces)
    return SubdivisionStep(S=S, mesh=fine, n_coarse=mesh.n_vertices)


def limit_matrix(mesh):
    """Sparse matrix projecting every vertex to its limit position."""
    rows, cols, vals = [], [], []
    for v in range(mesh.n_vertices):
        ring = mesh.rings[v]
        if mesh.is_boundary_vertex[v]:
            rows += [v] * 3
            cols += [v, ring[0], ring[-1]]
            vals += [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0]
        else:
            w = limit_neighbor_weight(len(ring))
            rows += [v] * (len(ring) + 1)
            cols += [v, *ring]
            vals += [1.0 - len(ring) * w] + [w] * len(ring)
    return sp.csr_matrix((vals, (rows, cols)), shape=(mesh.n_vertices,) * 2)


MAX_LEVEL = 6


def subdivide_to_level(control, k, limit=False):
    """Apply ``k`` Loop steps; optionally push the result to the limit."""
    if k < 1:
        raise ValueError("level must be at least 1")
    if k > MAX_LEVEL:
        raise LevelTooLarge(f"level {k} exceeds the memory guard ({MAX_LEVEL})")
    mesh = control.current_mesh() if isinstance(control, ControlMesh) else control
    for _ in range(k):
        S, faces = subdivision_matrix(mesh)
        mesh = TriMesh(S @ mesh.vertices, faces)
    if limit:
        mesh = mesh.with_vertices(limit_matrix(mesh) @ mesh.vertices)
    return mesh
