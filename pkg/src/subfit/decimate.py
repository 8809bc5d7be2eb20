"""Quadric error metric edge-collapse decimation."""

from __future__ import annotations

import heapq
import logging

import numpy as np

from .errors import TargetUnreachable
from .mesh import TriMesh

log = logging.getLogger(__name__)

BOUNDARY_WEIGHT = 100.0
MIN_NORMAL_COS = 1e-3


class Quadric:
    """Sum of squared distances to a set of planes, as a symmetric 4x4 matrix."""

    def __init__(self, matrix=None):
        self.matrix = np.zeros((4, 4)) if matrix is None else np.array(matrix, dtype=float)

    @classmethod
    def from_plane(cls, normal, offset, weight=1.0):
        p = np.append(np.asarray(normal, dtype=float), offset)
        return cls(weight * np.outer(p, p))

    def __add__(self, other):
        return Quadric(self.matrix + other.matrix)

    def error(self, x):
        h = np.append(np.asarray(x, dtype=float), 1.0)
        return float(h @ self.matrix @ h)

    def optimum(self, fallback):
        return _place(self.matrix, fallback)


def _place(Q, fallback):
    A, b = Q[:3, :3], Q[:3, 3]
    scale = np.trace(A) / 3.0
    det = np.linalg.det(A)
    if scale <= 0 or abs(det) < 1e-12 * scale ** 3:
        return np.asarray(fallback, dtype=float)
    return np.linalg.solve(A, -b)


def _batch_candidates(Qs, fallback):
    """Vectorized placement and cost for stacked quadrics (same rules as ``_place``)."""
    A, b = Qs[:, :3, :3], Qs[:, :3, 3]
    scale = np.trace(A, axis1=1, axis2=2) / 3.0
    det = np.linalg.det(A)
    ok = (scale > 0) & (np.abs(det) >= 1e-12 * np.maximum(scale, 0) ** 3)
    x = fallback.copy()
    if ok.any():
        x[ok] = np.linalg.solve(A[ok], -b[ok][:, :, None])[:, :, 0]
    h = np.hstack([x, np.ones((len(x), 1))])
    return np.maximum(np.einsum("ni,nij,nj->n", h, Qs, h), 0.0), x


def vertex_quadrics(mesh, preserve_boundary=False):
    """Area-weighted plane quadrics per vertex, plus boundary constraint planes."""
    V, F = mesh.vertices, mesh.faces
    n = np.cross(V[F[:, 1]] - V[F[:, 0]], V[F[:, 2]] - V[F[:, 0]])
    area2 = np.linalg.norm(n, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        unit = np.where(area2[:, None] > 0, n / area2[:, None], 0.0)
    d = -np.einsum("ij,ij->i", unit, V[F[:, 0]])
    planes = np.hstack([unit, d[:, None]])
    Kp = 0.5 * area2[:, None, None] * planes[:, :, None] * planes[:, None, :]
    Q = np.zeros((mesh.n_vertices, 4, 4))
    for k in range(3):
        np.add.at(Q, F[:, k], Kp)
    if preserve_boundary:
        ef = mesh.edge_faces
        for e in np.flatnonzero(ef[:, 1] < 0):
            p, q = mesh.edges[e]
            fn = unit[ef[e, 0]]
            t = V[q] - V[p]
            m = np.cross(t, fn)
            nm = np.linalg.norm(m)
            if nm == 0:
                continue
            m /= nm
            plane = np.append(m, -m @ V[p])
            K = BOUNDARY_WEIGHT * (t @ t) * np.outer(plane, plane)
            Q[p] += K
            Q[q] += K
    return Q


class _State:
    def __init__(self, mesh, preserve_boundary):
        self.V = np.array(mesh.vertices, dtype=float)
        self.faces = [list(f) for f in mesh.faces.tolist()]
        self.alive_face = [True] * len(self.faces)
        self.vf = [set() for _ in range(mesh.n_vertices)]
        for fi, f in enumerate(self.faces):
            for v in f:
                self.vf[v].add(fi)
        self.alive = np.ones(mesh.n_vertices, dtype=bool)
        self.Q = vertex_quadrics(mesh, preserve_boundary)
        self.n_alive = mesh.n_vertices

    def neighbours(self, v):
        out = set()
        for fi in self.vf[v]:
            out.update(self.faces[fi])
        out.discard(v)
        return out

    def edge_faces(self, u, v):
        return [fi for fi in self.vf[u] if v in self.faces[fi]]

    def is_boundary_vertex(self, v):
        count = {}
        for fi in self.vf[v]:
            for w in self.faces[fi]:
                if w != v:
                    count[w] = count.get(w, 0) + 1
        return any(c == 1 for c in count.values())

    def legal(self, u, v, p):
        shared = self.edge_faces(u, v)
        if not shared:
            return False
        opp = {w for fi in shared for w in self.faces[fi] if w not in (u, v)}
        if self.neighbours(u) & self.neighbours(v) != opp:
            return False
        if len(shared) == 2:
            if len(opp) != 2:
                return False      # both faces share every vertex
            if self.is_boundary_vertex(u) and self.is_boundary_vertex(v):
                return False
            x, y = opp
            # u, v, x, y bounding a tetrahedron would leave duplicate faces
            if all(any(set(self.faces[fi]) == {w, x, y} for fi in self.vf[w])
                   for w in (u, v)):
                return False
        # remaining faces around u and v must keep their orientation and area
        moved = [fi for fi in (self.vf[u] | self.vf[v]) if fi not in shared]
        if not moved:
            return False
        tri = np.array([self.faces[fi] for fi in moved])
        P_old = self.V[tri]
        P_new = P_old.copy()
        P_new[(tri == u) | (tri == v)] = p
        n_old = np.cross(P_old[:, 1] - P_old[:, 0], P_old[:, 2] - P_old[:, 0])
        n_new = np.cross(P_new[:, 1] - P_new[:, 0], P_new[:, 2] - P_new[:, 0])
        len_old = np.linalg.norm(n_old, axis=1)
        len_new = np.linalg.norm(n_new, axis=1)
        scale = max(float(np.max(len_old)), 1e-300)
        if np.any(len_new <= 1e-12 * scale):
            return False
        cos = np.einsum("ij,ij->i", n_old, n_new) / np.maximum(len_old * len_new, 1e-300)
        return bool(np.all(cos > MIN_NORMAL_COS))

    def collapse(self, u, v, p):
        """Merge v into u at position p."""
        for fi in list(self.vf[v]):
            f = self.faces[fi]
            if u in f:
                self.alive_face[fi] = False
                for w in f:
                    self.vf[w].discard(fi)
            else:
                f[f.index(v)] = u
                self.vf[u].add(fi)
        self.vf[v] = set()
        self.alive[v] = False
        self.V[u] = p
        self.Q[u] = self.Q[u] + self.Q[v]
        self.n_alive -= 1

    def edges(self):
        out = set()
        for fi, f in enumerate(self.faces):
            if self.alive_face[fi]:
                for k in range(3):
                    a, b = f[k], f[(k + 1) % 3]
                    out.add((min(a, b), max(a, b)))
        return sorted(out)

    def to_mesh(self):
        keep = np.flatnonzero(self.alive)
        remap = np.full(len(self.alive), -1)
        remap[keep] = np.arange(len(keep))
        F = np.array([f for fi, f in enumerate(self.faces) if self.alive_face[fi]])
        return TriMesh(self.V[keep], remap[F])


def decimate_qem(mesh, target_vertices, preserve_boundary=False):
    """Collapse edges in order of quadric error until ``target_vertices`` remain.

    Raises TargetUnreachable (carrying the partial mesh) when no legal
    collapse is left before the target is reached.
    """
    if target_vertices < 1:
        raise ValueError("target_vertices must be positive")
    mesh.validate()
    if target_vertices >= mesh.n_vertices:
        return mesh
    st = _State(mesh, preserve_boundary)
    heap = []
    current = {}

    def push(pairs):
        E = np.array(pairs, dtype=np.int64).reshape(-1, 2)
        E.sort(axis=1)
        costs, places = _batch_candidates(st.Q[E[:, 0]] + st.Q[E[:, 1]],
                                          0.5 * (st.V[E[:, 0]] + st.V[E[:, 1]]))
        for (a, b), c, x in zip(E.tolist(), costs.tolist(), places):
            current[a, b] = (c, x)
            heapq.heappush(heap, (c, a, b))

    def push_all():
        current.clear()
        heap.clear()
        push(st.edges())

    push_all()
    collapsed_since_rebuild = 0
    while st.n_alive > target_vertices:
        if not heap:
            if collapsed_since_rebuild == 0:
                break
            # legality changes away from collapsed vertices are only seen on a rebuild
            push_all()
            collapsed_since_rebuild = 0
            continue
        cost, a, b = heapq.heappop(heap)
        entry = current.get((a, b))
        if entry is None or entry[0] != cost or not (st.alive[a] and st.alive[b]):
            continue
        del current[a, b]
        p = entry[1]
        if not st.legal(a, b, p):
            continue
        st.collapse(a, b, p)
        collapsed_since_rebuild += 1
        push([(a, w) for w in st.neighbours(a)])
    out = st.to_mesh()
    if st.n_alive > target_vertices:
        raise TargetUnreachable(
            f"no legal collapse left at {st.n_alive} vertices (target {target_vertices})",
            mesh=out)
    out.validate()
    return out
