"""Triangle meshes, oriented point clouds and unit-box normalization."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import DegenerateInput, NonManifold


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass
class ValidationReport:
    issues: list = field(default_factory=list)
    n_vertices: int = 0
    n_edges: int = 0
    n_faces: int = 0
    n_boundary_edges: int = 0
    components: int = 0

    @property
    def ok(self):
        return not self.issues

    @property
    def euler(self):
        return self.n_vertices - self.n_edges + self.n_faces

    @property
    def closed(self):
        return self.n_boundary_edges == 0

    @property
    def genus(self):
        """Genus summed over components; only meaningful for closed meshes."""
        if not self.closed:
            return None
        return (2 * self.components - self.euler) // 2


class TriMesh:
    """Indexed triangle mesh with lazily built adjacency.

    Faces are counterclockwise vertex triples. Arrays are read-only; all
    derived data is computed on first access and cached.
    """

    def __init__(self, vertices, faces):
        vertices = np.asarray(vertices, dtype=float)
        faces = np.asarray(faces, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise ValueError("vertices must have shape (n, 3)")
        faces = faces.reshape(-1, 3)
        self.vertices = _frozen(vertices, float)
        self.faces = _frozen(faces, np.int64)

    def __repr__(self):
        return f"TriMesh(n_vertices={self.n_vertices}, n_faces={self.n_faces})"

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_faces(self):
        return len(self.faces)

    def with_vertices(self, vertices):
        """Same connectivity, new positions (adjacency is shared, not rebuilt)."""
        out = TriMesh.__new__(TriMesh)
        out.vertices = _frozen(vertices, float)
        out.faces = self.faces
        for name in ("_halfedges", "edges", "face_edges", "edge_faces",
                     "_fans", "rings", "is_boundary_vertex", "valence",
                     "connectivity_hash"):
            if name in self.__dict__:
                out.__dict__[name] = self.__dict__[name]
        if out.vertices.shape != self.vertices.shape:
            raise ValueError("vertex array shape changed")
        return out

    # -- adjacency -----------------------------------------------------

    @cached_property
    def _halfedges(self):
        f = self.faces
        src = f.reshape(-1)
        dst = np.roll(f, -1, axis=1).reshape(-1)
        lo = np.minimum(src, dst)
        hi = np.maximum(src, dst)
        keys = lo * max(self.n_vertices, 1) + hi
        uniq, inverse, counts = np.unique(keys, return_inverse=True,
                                          return_counts=True)
        return src, dst, uniq, inverse.reshape(-1), counts

    @cached_property
    def edges(self):
        """(E, 2) unique undirected edges, smaller index first."""
        n = max(self.n_vertices, 1)
        uniq = self._halfedges[2]
        return np.stack([uniq // n, uniq % n], axis=1)

    @cached_property
    def face_edges(self):
        """(F, 3) edge index of the edge from corner k to corner k+1."""
        return self._halfedges[3].reshape(-1, 3)

    @cached_property
    def edge_faces(self):
        """(E, 2) incident faces per edge, -1 where absent.

        Only the first two incident faces are recorded; non-manifold edges
        are reported by :meth:`validate`.
        """
        inverse = self._halfedges[3]
        out = np.full((len(self.edges), 2), -1, dtype=np.int64)
        face_of = np.repeat(np.arange(self.n_faces), 3)
        order = np.argsort(inverse, kind="stable")
        e_sorted = inverse[order]
        first = np.ones(len(order), dtype=bool)
        first[1:] = e_sorted[1:] != e_sorted[:-1]
        out[e_sorted[first], 0] = face_of[order[first]]
        second = ~first
        out[e_sorted[second], 1] = face_of[order[second]]
        return out

    @cached_property
    def _fans(self):
        """Per vertex: ordered ring, boundary flag, and fan problems."""
        n = self.n_vertices
        f = self.faces
        a = f.reshape(-1)
        b = np.roll(f, -1, axis=1).reshape(-1)
        c = np.roll(f, -2, axis=1).reshape(-1)
        order = np.argsort(a, kind="stable")
        starts = np.searchsorted(a[order], np.arange(n + 1))
        rings = [None] * n
        boundary = np.zeros(n, dtype=bool)
        problems = {}
        bl, cl = b[order].tolist(), c[order].tolist()
        for v in range(n):
            lo, hi = starts[v], starts[v + 1]
            if lo == hi:
                problems[v] = "isolated vertex"
                rings[v] = np.zeros(0, dtype=np.int64)
                continue
            nxt = {}
            for bb, cc in zip(bl[lo:hi], cl[lo:hi]):
                if bb in nxt:
                    problems[v] = "inconsistent orientation around vertex"
                nxt[bb] = cc
            targets = set(nxt.values())
            heads = [k for k in nxt if k not in targets]
            if len(heads) > 1:
                problems[v] = "vertex fan is not a single disk"
            start = heads[0] if heads else next(iter(nxt))
            ring = [start]
            cur = start
            while cur in nxt:
                cur = nxt[cur]
                if cur == start:
                    break
                ring.append(cur)
                if len(ring) > hi - lo + 1:
                    break
            if heads:
                boundary[v] = True
                if len(ring) != hi - lo + 1:
                    problems.setdefault(v, "vertex fan is not a single disk")
            elif len(ring) != hi - lo:
                problems.setdefault(v, "vertex fan is not a single disk")
            rings[v] = np.asarray(ring, dtype=np.int64)
        return rings, boundary, problems

    @cached_property
    def rings(self):
        """Ordered one-ring per vertex, counterclockwise.

        For boundary vertices the ring starts at the boundary neighbour that
        opens the fan and ends at the one that closes it.
        """
        return self._fans[0]

    @cached_property
    def is_boundary_vertex(self):
        return self._fans[1]

    @cached_property
    def valence(self):
        return np.array([len(r) for r in self.rings], dtype=np.int64)

    @property
    def boundary_edge_mask(self):
        return self.edge_faces[:, 1] < 0

    @cached_property
    def connectivity_hash(self):
        h = hashlib.sha256()
        h.update(np.int64(self.n_vertices).tobytes())
        h.update(np.ascontiguousarray(self.faces, dtype="<i8").tobytes())
        return h.hexdigest()

    # -- validation ----------------------------------------------------

    @cached_property
    def report(self):
        rep = ValidationReport(n_vertices=self.n_vertices,
                               n_faces=self.n_faces)
        f = self.faces
        if f.size:
            if f.min() < 0 or f.max() >= self.n_vertices:
                rep.issues.append("face index out of range")
                return rep
            if np.any((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2])
                      | (f[:, 0] == f[:, 2])):
                rep.issues.append("degenerate face (repeated vertex)")
                return rep
        if not np.all(np.isfinite(self.vertices)):
            rep.issues.append("non-finite vertex coordinate")
        src, dst, _, inverse, counts = self._halfedges
        rep.n_edges = len(counts)
        rep.n_boundary_edges = int(np.sum(counts == 1))
        if np.any(counts > 2):
            rep.issues.append(f"{int(np.sum(counts > 2))} non-manifold edges")
        directed = src * max(self.n_vertices, 1) + dst
        if len(np.unique(directed)) != len(directed):
            rep.issues.append("inconsistent face orientation")
        for v, msg in sorted(self._fans[2].items())[:10]:
            rep.issues.append(f"vertex {v}: {msg}")
        if len(self._fans[2]) > 10:
            rep.issues.append(f"... {len(self._fans[2]) - 10} more vertex problems")
        n = self.n_vertices
        if n:
            e = self.edges
            adj = coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n))
            rep.components = connected_components(adj, directed=False)[0]
        return rep

    def validate(self):
        """Raise :class:`NonManifold` unless the mesh passes every check."""
        rep = self.report
        if not rep.ok:
            raise NonManifold("; ".join(rep.issues), report=rep)
        return rep

    # -- geometry ------------------------------------------------------

    def face_normals(self, unit=True):
        v = self.vertices[self.faces]
        n = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
        if unit:
            ln = np.linalg.norm(n, axis=1, keepdims=True)
            n = n / np.where(ln > 0, ln, 1.0)
        return n

    def face_areas(self):
        return 0.5 * np.linalg.norm(self.face_normals(unit=False), axis=1)

    def bbox_diagonal(self):
        return float(np.linalg.norm(np.ptp(self.vertices, axis=0)))


class PointCloud:
    """Points with unit normals."""

    def __init__(self, points, normals):
        points = np.asarray(points, dtype=float).reshape(-1, 3)
        normals = np.asarray(normals, dtype=float).reshape(-1, 3)
        if len(points) != len(normals):
            raise ValueError("points and normals differ in length")
        if not (np.all(np.isfinite(points)) and np.all(np.isfinite(normals))):
            raise ValueError("non-finite coordinate in point cloud")
        ln = np.linalg.norm(normals, axis=1)
        if np.any(np.abs(ln - 1.0) > 1e-6):
            raise ValueError("normals must have unit length")
        self.points = _frozen(points, float)
        self.normals = _frozen(normals, float)

    def __len__(self):
        return len(self.points)

    def __repr__(self):
        return f"PointCloud(n={len(self)})"

    @classmethod
    def from_unnormalized(cls, points, normals):
        normals = np.asarray(normals, dtype=float).reshape(-1, 3)
        ln = np.linalg.norm(normals, axis=1, keepdims=True)
        if np.any(ln[:, 0] == 0) or not np.all(np.isfinite(ln)):
            raise ValueError("zero-length normal")
        return cls(points, normals / ln)

    def bbox_diagonal(self):
        return float(np.linalg.norm(np.ptp(self.points, axis=0)))


@dataclass(frozen=True)
class NormalizeTransform:
    """x' = scale * (x + translation)."""

    scale: float
    translation: tuple

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("scale must be positive")

    def apply(self, x):
        return self.scale * (np.asarray(x, dtype=float) + np.asarray(self.translation))

    def invert(self, y):
        return np.asarray(y, dtype=float) / self.scale - np.asarray(self.translation)

    def inverse(self):
        """The inverse as another transform of the same form."""
        t = np.asarray(self.translation)
        return NormalizeTransform(1.0 / self.scale, tuple(-self.scale * t))

    def then(self, other):
        """Composition: apply self, then other."""
        s = self.scale * other.scale
        t = np.asarray(self.translation) + np.asarray(other.translation) / self.scale
        return NormalizeTransform(s, tuple(t))

    @classmethod
    def identity(cls):
        return cls(1.0, (0.0, 0.0, 0.0))


def unit_box_transform(points):
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(points) == 0 or not np.all(np.isfinite(points)):
        raise DegenerateInput("need a non-empty set of finite points")
    lo = points.min(axis=0)
    extent = float(np.max(points.max(axis=0) - lo))
    if extent <= 0:
        raise DegenerateInput("all points coincide; bounding box is empty")
    return NormalizeTransform(1.0 / extent, tuple(-lo))


def transform_geometry(obj, transform):
    """Apply a transform to a mesh, cloud or raw point array."""
    if isinstance(obj, TriMesh):
        return obj.with_vertices(transform.apply(obj.vertices))
    if isinstance(obj, PointCloud):
        # uniform scale: normals are unchanged
        return PointCloud(transform.apply(obj.points), obj.normals)
    return transform.apply(obj)


def normalize_to_unit_box(obj):
    """Uniformly scale and translate into [0, 1]^3, longest axis spanning it.

    Returns ``(normalized_copy, transform)``.
    """
    if isinstance(obj, TriMesh):
        pts = obj.vertices
    elif isinstance(obj, PointCloud):
        pts = obj.points
    else:
        pts = np.asarray(obj, dtype=float)
    t = unit_box_transform(pts)
    return transform_geometry(obj, t), t
