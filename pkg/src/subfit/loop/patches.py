"""Exact evaluation of Loop patches on the once-refined mesh.

Faces of the refined mesh fall into three kinds:

* regular: all corners interior with valence 6; evaluated with the quartic
  box-spline basis over 12 control points;
* irregular: one interior corner of valence N != 6, the others regular;
  evaluated with Stam's scheme over N + 6 control points (the extraordinary
  vertex first);
* boundary: any corner on the mesh boundary; evaluated by exact local
  refinement until the point falls in a regular or irregular sub-patch.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field

import numpy as np

from ..errors import DomainError, PatchConditionViolated
from . import boxspline
from .local import (CHILD_MAPS, LocalMesh, child_barycentric, irregular_controls,
                    irregular_template, refine, regular_controls, select_child)
from .masks import limit_neighbor_weight

MAX_VALENCE = 50
MAX_LEVEL = 32        # deepest ring used near an extraordinary vertex
MAX_DEPTH = 24        # refinement cap for boundary patches
_DOMAIN_TOL = 1e-12


# -- per-valence tables -------------------------------------------------------

class StamTables:
    """Local subdivision structure of an irregular patch of valence ``n``.

    ``A`` maps the N + 6 patch control points to those of the sub-patch at
    the extraordinary vertex one level down; ``picks[k]`` maps them to the 12
    control points of regular sub-patch k (corner v, corner w, centre).
    """

    def __init__(self, n):
        self.n = n
        tmpl = irregular_template(n)
        fine, S, children = refine(tmpl)
        a, b, c = fine.faces[children[0][0]]     # corner child at the EV
        ring_from = fine.ring_from
        ids = irregular_controls(ring_from, a, b, c)
        self.A = S[ids]
        t = [fine.faces[k] for k in children[0][1:]]
        # t[0] = (b', m_bc, m_ab), t[1] = (c', m_ca, m_bc), t[2] = (m_ab, m_bc, m_ca)
        p1 = regular_controls(ring_from, t[0][2], t[0][0], t[0][1])
        p2 = regular_controls(ring_from, t[1][1], t[1][2], t[1][0])
        p3 = regular_controls(ring_from, t[2][1], t[2][2], t[2][0])
        self.picks = [S[p] for p in (p1, p2, p3)]
        w = limit_neighbor_weight(n)
        self.limit_stencil = np.concatenate([[1.0 - n * w], np.full(n, w), np.zeros(5)])
        self.eigenvalues, self.eigenvectors = np.linalg.eig(self.A)
        order = np.argsort(-np.abs(self.eigenvalues))
        self.eigenvalues = self.eigenvalues[order]
        self.eigenvectors = self.eigenvectors[:, order]
        self._powers = [np.eye(n + 6)]
        self._picked = {}

    @property
    def size(self):
        return self.n + 6

    def dominant_left_eigenvector(self):
        vals, vecs = np.linalg.eig(self.A.T)
        i = int(np.argmin(np.abs(vals - 1.0)))
        v = np.real(vecs[:, i])
        return v / v.sum()

    def power(self, k):
        while len(self._powers) <= k:
            self._powers.append(self.A @ self._powers[-1])
        return self._powers[k]

    def picked(self, sub, level):
        """12 x (N+6) map to regular sub-patch ``sub`` at ring ``level``."""
        key = (sub, level)
        m = self._picked.get(key)
        if m is None:
            m = self.picks[sub] @ self.power(level - 1)
            self._picked[key] = m
        return m


_tables = {}
_tables_lock = threading.Lock()


def stam_tables(n):
    if n < 3 or n > MAX_VALENCE:
        raise PatchConditionViolated(f"valence {n} outside supported range 3..{MAX_VALENCE}")
    t = _tables.get(n)
    if t is None:
        with _tables_lock:
            t = _tables.get(n)
            if t is None:
                t = StamTables(n)
                _tables[n] = t
    return t


def _check_domain(v, w):
    if v < -_DOMAIN_TOL or w < -_DOMAIN_TOL or v + w > 1 + _DOMAIN_TOL \
            or not (math.isfinite(v) and math.isfinite(w)):
        raise DomainError(f"(v, w) = ({v}, {w}) outside the patch triangle")
    v = min(max(v, 0.0), 1.0)
    w = min(max(w, 0.0), 1.0 - v)
    return v, w


def stam_weights(tables, v, w, derivatives=False):
    """Weights over the N + 6 control points at (v, w); EV at (0, 0)."""
    if v == 0.0 and w == 0.0:
        if derivatives:
            raise DomainError("derivatives are not evaluated at the extraordinary vertex")
        return tables.limit_stencil.copy()
    s = v + w
    # subnormal s would overflow 2**level; the ring projection below covers it
    level = min(max(1, int(math.floor(1.0 - math.log2(s)))), MAX_LEVEL)
    while level > 1 and s * 2.0 ** (level - 1) > 1.0:
        level -= 1
    while s * 2.0 ** (level - 1) < 0.5 and level < MAX_LEVEL:
        level += 1
    level = min(level, MAX_LEVEL)
    scale = 2.0 ** (level - 1)
    vv, ww = v * scale, w * scale
    if vv + ww < 0.5:
        # closer than the deepest ring: project onto it
        vv, ww = 0.5 * (v / s), 0.5 * (w / s)
    if vv >= 0.5:
        sub, p, q, jac = 0, 2 * vv - 1, 2 * ww, 2.0
    elif ww >= 0.5:
        sub, p, q, jac = 1, 2 * vv, 2 * ww - 1, 2.0
    else:
        sub, p, q, jac = 2, 1 - 2 * vv, 1 - 2 * ww, -2.0
    m = tables.picked(sub, level)
    if not derivatives:
        return boxspline.basis(p, q) @ m
    dp, dq = boxspline.basis_derivatives(p, q)
    f = scale * jac
    return (dp @ m) * f, (dq @ m) * f


# -- patch table ---------------------------------------------------------------

@dataclass
class Patch:
    face: int
    kind: str                 # "regular" | "irregular" | "boundary"
    rotation: int             # corners of the patch are face[rotation:] + face[:rotation]
    valence: int
    control: np.ndarray       # control point indices into the refined mesh
    local: LocalMesh | None = field(default=None, repr=False)
    corners: tuple = ()       # local ids of the face corners (boundary only)

    def to_patch_params(self, bary):
        """(v, w) for barycentric coordinates given in face corner order."""
        r = self.rotation
        return bary[(r + 1) % 3], bary[(r + 2) % 3]


def _corner_kinds(mesh, face):
    bnd = mesh.is_boundary_vertex[face]
    val = mesh.valence[face]
    return bnd, val


def patch_rotation(mesh, face_idx):
    """Corner that must come first: the extraordinary one, if any."""
    face = mesh.faces[face_idx]
    bnd, val = _corner_kinds(mesh, face)
    if bnd.any():
        return 0
    ev = np.flatnonzero(val != 6)
    return int(ev[0]) if len(ev) == 1 else 0


class PatchTable:
    """Classification and control lists of every face of the refined mesh."""

    def __init__(self, mesh, patches, vertex_faces):
        self.mesh = mesh
        self.patches = patches
        self._vertex_faces = vertex_faces

    def __len__(self):
        return len(self.patches)

    def __getitem__(self, i):
        return self.patches[i]

    def counts(self):
        out = {"regular": 0, "irregular": 0, "boundary": 0}
        for p in self.patches:
            out[p.kind] += 1
        return out


def _vertex_faces(mesh):
    vf = [[] for _ in range(mesh.n_vertices)]
    for fi, f in enumerate(mesh.faces.tolist()):
        for v in f:
            vf[v].append(fi)
    return vf


def _global_ring_from(mesh):
    rings = mesh.rings

    def ring_from(v, start):
        r = rings[v].tolist()
        i = r.index(start)
        return r[i:] + r[:i]
    return ring_from


def _boundary_local(mesh, vf, face):
    corners = [int(x) for x in face]
    verts = set(corners)
    for c in corners:
        verts.update(int(x) for x in mesh.rings[c])
    faces = sorted({fi for v in verts for fi in vf[v]})
    old = sorted({int(v) for fi in faces for v in mesh.faces[fi]})
    new_of = {o: n for n, o in enumerate(old)}
    lf = [tuple(new_of[int(v)] for v in mesh.faces[fi]) for fi in faces]
    nfaces = [len(vf[o]) for o in old]
    bnd = [bool(mesh.is_boundary_vertex[o]) for o in old]
    bmask = mesh.boundary_edge_mask
    bedges = [(new_of[int(p)], new_of[int(q)]) for p, q in mesh.edges[bmask]
              if int(p) in new_of and int(q) in new_of]
    local = LocalMesh(lf, nfaces, bnd, bedges)
    return local, np.asarray(old, dtype=np.int64), tuple(new_of[c] for c in corners)


def build_patch_table(step):
    """Classify every face of the refined mesh of ``step``."""
    mesh = step.mesh if hasattr(step, "mesh") else step
    ring_from = _global_ring_from(mesh)
    vf = _vertex_faces(mesh)
    bnd_v = mesh.is_boundary_vertex
    val = mesh.valence
    patches = []
    for fi, face in enumerate(mesh.faces.tolist()):
        bnd = bnd_v[face]
        if bnd.any():
            local, ctrl, corners = _boundary_local(mesh, vf, face)
            patches.append(Patch(fi, "boundary", 0, 0, ctrl, local, corners))
            continue
        ev = [k for k in range(3) if val[face[k]] != 6]
        if not ev:
            ctrl = regular_controls(ring_from, *face)
            patches.append(Patch(fi, "regular", 0, 6, np.asarray(ctrl)))
        elif len(ev) == 1:
            r = ev[0]
            a, b, c = face[r], face[(r + 1) % 3], face[(r + 2) % 3]
            n = int(val[a])
            if n > MAX_VALENCE:
                raise PatchConditionViolated(
                    f"face {fi}: valence {n} exceeds {MAX_VALENCE}")
            ctrl = irregular_controls(ring_from, a, b, c)
            patches.append(Patch(fi, "irregular", r, n, np.asarray(ctrl)))
        else:
            raise PatchConditionViolated(
                f"face {fi} has {len(ev)} extraordinary corners; "
                "patches may contain at most one")
    return PatchTable(mesh, patches, vf)


# -- evaluation ------------------------------------------------------------------

def _local_controls(local, a, b, c):
    """(kind, rotation, valence, control list) for a sub-patch inside a local mesh."""
    corners = (a, b, c)
    for x in corners:
        if not local.complete(x):
            raise RuntimeError("local crop lost the star of a patch corner")
    if any(local.true_bnd[x] for x in corners):
        return "boundary", 0, 0, None
    val = [local.valence(x) for x in corners]
    ev = [k for k in range(3) if val[k] != 6]
    if not ev:
        return "regular", 0, 6, regular_controls(local.ring_from, a, b, c)
    if len(ev) == 1:
        r = ev[0]
        rot = (corners[r], corners[(r + 1) % 3], corners[(r + 2) % 3])
        return "irregular", r, val[r], irregular_controls(local.ring_from, *rot)
    return "boundary", 0, 0, None  # refinement separates the extraordinary corners


def _rotated(bary, r):
    return bary[(r + 1) % 3], bary[(r + 2) % 3]


def _rotation_jacobian(r):
    """d(v', w')/d(v, w) when corner r becomes the first corner."""
    # barycentrics as affine functions of (v, w): u = 1 - v - w
    d = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    return d[[(r + 1) % 3, (r + 2) % 3]]


def _eval_boundary(patch, v, w, derivatives):
    local = patch.local
    corners = patch.corners
    bary = np.array([1.0 - v - w, v, w])
    L = np.eye(3)             # current barycentrics = L @ original barycentrics
    M = np.eye(local.nv)      # current local points in terms of the initial ones
    d_orig = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    for depth in range(MAX_DEPTH + 1):
        a, b, c = corners
        if not derivatives:
            for k in range(3):
                if bary[k] == 1.0:
                    row = local.limit_row(corners[k])
                    return sum(val * M[j] for j, val in row.items())
        kind, r, n, ctrl = _local_controls(local, a, b, c)
        # d(current bary)/d(original v, w)
        J = L @ d_orig
        if kind == "regular":
            pv, pw = bary[1], bary[2]
            m = M[ctrl]
            if not derivatives:
                return boxspline.basis(pv, pw) @ m
            dv, dw = boxspline.basis_derivatives(pv, pw)
            jac = J[[1, 2]]
            gv, gw = dv @ m, dw @ m
            return gv * jac[0, 0] + gw * jac[1, 0], gv * jac[0, 1] + gw * jac[1, 1]
        if kind == "irregular":
            pv, pw = _rotated(bary, r)
            pv, pw = max(pv, 0.0), max(pw, 0.0)
            m = M[ctrl]
            tables = stam_tables(n)
            if not derivatives:
                return stam_weights(tables, pv, pw) @ m
            gv, gw = stam_weights(tables, pv, pw, derivatives=True)
            gv, gw = gv @ m, gw @ m
            jac = J[[(r + 1) % 3, (r + 2) % 3]]
            return gv * jac[0, 0] + gw * jac[1, 0], gv * jac[0, 1] + gw * jac[1, 1]
        if depth == MAX_DEPTH:
            break
        fine, S, children = refine(local)
        fi = local.faces.index((a, b, c))
        k = select_child(bary)
        cf = children[fi][k]
        if cf < 0:
            raise RuntimeError("local crop lost a child face")
        bary = np.array(child_barycentric(bary, k))
        L = CHILD_MAPS[k] @ L
        M = S @ M
        keep = fine.region_around(fine.faces[cf])
        tri = fine.faces[cf]
        local, old = fine.crop(keep)
        M = M[old]
        new_of = {int(o): i for i, o in enumerate(old)}
        corners = tuple(new_of[x] for x in tri)
    # deepest level: interpolate the limit positions of the corners
    rows = []
    for x in corners:
        row = np.zeros(M.shape[1])
        for j, val in local.limit_row(x).items():
            row += val * M[j]
        rows.append(row)
    rows = np.array(rows)
    if not derivatives:
        # every child map doubles the rounding in bary; keep the weights affine
        return (bary / bary.sum()) @ rows
    J = L @ d_orig
    g = rows.T @ J          # d/d(original v, w)
    return g[:, 0], g[:, 1]


def eval_basis(patch, v, w):
    """Weights over ``patch.control`` giving the limit point at (v, w)."""
    v, w = _check_domain(v, w)
    if patch.kind == "regular":
        return boxspline.basis(v, w)
    if patch.kind == "irregular":
        return stam_weights(stam_tables(patch.valence), v, w)
    return _eval_boundary(patch, v, w, derivatives=False)


def eval_basis_derivatives(patch, v, w):
    """(d/dv, d/dw) of the weights of :func:`eval_basis`."""
    v, w = _check_domain(v, w)
    if patch.kind == "regular":
        return boxspline.basis_derivatives(v, w)
    if patch.kind == "irregular":
        return stam_weights(stam_tables(patch.valence), v, w, derivatives=True)
    return _eval_boundary(patch, v, w, derivatives=True)
