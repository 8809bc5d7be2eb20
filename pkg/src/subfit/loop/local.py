"""Small local meshes and exact local Loop refinement.

A :class:`LocalMesh` is a cropped neighbourhood of a larger mesh. Each local
vertex remembers how many faces it has in the full mesh and whether it lies
on the true boundary, so refinement can tell which vertices have their
complete stencil available. Points whose stencil is cut off by the crop are
simply not produced.
"""

import numpy as np

from .masks import limit_neighbor_weight, loop_beta

UNKNOWN = 1 << 30  # face count of vertices whose full star is never present


class LocalMesh:
    def __init__(self, faces, true_nfaces, true_bnd, bnd_edges=()):
        self.faces = [tuple(f) for f in faces]
        self.nv = len(true_nfaces)
        self.true_nfaces = list(true_nfaces)
        self.true_bnd = list(true_bnd)
        self.bnd_edges = {(min(p, q), max(p, q)) for p, q in bnd_edges}
        self._vf = [[] for _ in range(self.nv)]
        for fi, f in enumerate(self.faces):
            for k in range(3):
                self._vf[f[k]].append((fi, k))

    def n_local_faces(self, v):
        return len(self._vf[v])

    def complete(self, v):
        return len(self._vf[v]) == self.true_nfaces[v]

    def valence(self, v):
        return self.true_nfaces[v] + (1 if self.true_bnd[v] else 0)

    def ring(self, v):
        """Ordered counterclockwise neighbours within the local fan."""
        nxt = {}
        for fi, k in self._vf[v]:
            f = self.faces[fi]
            nxt[f[(k + 1) % 3]] = f[(k + 2) % 3]
        targets = set(nxt.values())
        heads = [b for b in nxt if b not in targets]
        start = heads[0] if heads else next(iter(nxt))
        out = [start]
        cur = start
        while cur in nxt:
            cur = nxt[cur]
            if cur == start:
                break
            out.append(cur)
        return out

    def ring_from(self, v, start):
        r = self.ring(v)
        i = r.index(start)
        return r[i:] + r[:i]

    def neighbours(self, v):
        out = set()
        for fi, _ in self._vf[v]:
            out.update(self.faces[fi])
        out.discard(v)
        return out

    def faces_at(self, v):
        return [fi for fi, _ in self._vf[v]]

    def limit_row(self, v):
        """Limit stencil of a complete vertex as a dict {local id: weight}."""
        ring = self.ring(v)
        if self.true_bnd[v]:
            return {v: 2.0 / 3.0, ring[0]: 1.0 / 6.0, ring[-1]: 1.0 / 6.0}
        w = limit_neighbor_weight(len(ring))
        row = {v: 1.0 - len(ring) * w}
        for r in ring:
            row[r] = row.get(r, 0.0) + w
        return row

    def crop(self, keep_faces):
        """Sub-mesh on the given faces; returns (mesh, old ids of new vertices)."""
        keep_faces = sorted(set(keep_faces))
        old = sorted({v for fi in keep_faces for v in self.faces[fi]})
        new_of = {o: n for n, o in enumerate(old)}
        faces = [tuple(new_of[v] for v in self.faces[fi]) for fi in keep_faces]
        bnd = [(new_of[p], new_of[q]) for p, q in self.bnd_edges
               if p in new_of and q in new_of]
        sub = LocalMesh(faces, [self.true_nfaces[o] for o in old],
                        [self.true_bnd[o] for o in old], bnd)
        return sub, np.asarray(old, dtype=np.int64)

    def region_around(self, corners):
        """Faces touching the closed one-rings of ``corners``."""
        verts = set(corners)
        for c in corners:
            verts |= self.neighbours(c)
        faces = set()
        for v in verts:
            faces.update(self.faces_at(v))
        return faces


def refine(local):
    """One exact Loop step on a local mesh.

    Returns ``(fine, S, children)``: the refined local mesh, the dense matrix
    expressing fine points in coarse ones, and for each coarse face the four
    fine face indices (corner 0, 1, 2, centre) with -1 where a child could not
    be produced.
    """
    rows = []
    vpoint = {}
    true_nf, true_bnd = [], []
    for v in range(local.nv):
        if not local.complete(v):
            continue
        ring = local.ring(v)
        if local.true_bnd[v]:
            row = {v: 0.75, ring[0]: 0.125}
            row[ring[-1]] = row.get(ring[-1], 0.0) + 0.125
        else:
            n = len(ring)
            b = loop_beta(n)
            row = {v: 1.0 - n * b}
            for r in ring:
                row[r] = row.get(r, 0.0) + b
        vpoint[v] = len(rows)
        rows.append(row)
        true_nf.append(local.true_nfaces[v])
        true_bnd.append(local.true_bnd[v])

    opposite = {}
    for f in local.faces:
        for k in range(3):
            p, q, r = f[k], f[(k + 1) % 3], f[(k + 2) % 3]
            opposite.setdefault((min(p, q), max(p, q)), []).append(r)
    epoint = {}
    for e, opp in opposite.items():
        p, q = e
        if len(opp) == 2:
            row = {p: 0.375, q: 0.375}
            row[opp[0]] = row.get(opp[0], 0.0) + 0.125
            row[opp[1]] = row.get(opp[1], 0.0) + 0.125
            nf, bnd = 6, False
        elif e in local.bnd_edges:
            row = {p: 0.5, q: 0.5}
            nf, bnd = 3, True
        else:
            continue
        epoint[e] = len(rows)
        rows.append(row)
        true_nf.append(nf)
        true_bnd.append(bnd)

    S = np.zeros((len(rows), local.nv))
    for i, row in enumerate(rows):
        for j, val in row.items():
            S[i, j] += val

    def mid(p, q):
        return epoint.get((min(p, q), max(p, q)))

    faces, children = [], []
    for a, b, c in local.faces:
        A, B, C = vpoint.get(a), vpoint.get(b), vpoint.get(c)
        ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
        kids = []
        for tri in ((A, ab, ca), (B, bc, ab), (C, ca, bc), (ab, bc, ca)):
            if None in tri:
                kids.append(-1)
            else:
                kids.append(len(faces))
                faces.append(tri)
        children.append(kids)

    bnd_edges = []
    for p, q in local.bnd_edges:
        m = epoint.get((p, q))
        if m is None:
            continue
        if p in vpoint:
            bnd_edges.append((vpoint[p], m))
        if q in vpoint:
            bnd_edges.append((vpoint[q], m))
    fine = LocalMesh(faces, true_nf, true_bnd, bnd_edges)
    return fine, S, children


def child_barycentric(bary, k):
    """Barycentric coordinates of a point inside child ``k`` of a face."""
    b0, b1, b2 = bary
    if k == 0:
        return (2 * b0 - 1, 2 * b1, 2 * b2)
    if k == 1:
        return (2 * b1 - 1, 2 * b2, 2 * b0)
    if k == 2:
        return (2 * b2 - 1, 2 * b0, 2 * b1)
    return (1 - 2 * b2, 1 - 2 * b0, 1 - 2 * b1)


# linear maps on barycentric vectors equivalent to child_barycentric
CHILD_MAPS = [
    np.array([[1, -1, -1], [0, 2, 0], [0, 0, 2]], dtype=float),
    np.array([[-1, 1, -1], [0, 0, 2], [2, 0, 0]], dtype=float),
    np.array([[-1, -1, 1], [2, 0, 0], [0, 2, 0]], dtype=float),
    np.array([[1, 1, -1], [-1, 1, 1], [1, -1, 1]], dtype=float),
]


def select_child(bary):
    """Child face holding the point; ties go to the lower child index."""
    for k in range(3):
        if bary[k] >= 0.5:
            return k
    return 3


# -- control-point extraction -----------------------------------------------
# ``ring_from(v, start)`` must return the complete counterclockwise ring of v
# rotated to begin at ``start``.

def regular_controls(ring_from, a, b, c):
    """The 12 control points of the regular patch (a, b, c), in box-spline order."""
    ra = ring_from(a, b)
    rb = ring_from(b, c)
    rc = ring_from(c, a)
    if len(ra) != 6 or len(rb) != 6 or len(rc) != 6 or ra[1] != c:
        raise ValueError("corners of a regular patch must have valence 6")
    return [ra[4], ra[3], ra[5], a, ra[2], rb[3], b, c, rc[4], rb[4], rb[5], rc[3]]


def irregular_controls(ring_from, a, b, c):
    """N + 6 control points of a patch whose corner ``a`` has valence N.

    Order: a, the ring of a starting at b (so b, c first), then the five
    outer points seen from b and c.
    """
    ra = ring_from(a, b)
    rb = ring_from(b, c)
    rc = ring_from(c, a)
    if len(rb) != 6 or len(rc) != 6 or ra[1] != c:
        raise ValueError("the non-extraordinary corners must have valence 6")
    return [a, *ra, rb[3], rb[4], rb[5], rc[3], rc[4]]


# position of each regular-patch label inside the irregular ordering for N=6
REGULAR_TO_IRREGULAR6 = [5, 4, 6, 0, 3, 7, 1, 2, 11, 8, 9, 10]


def irregular_template(n):
    """Canonical local mesh of an irregular patch with valence ``n``."""
    if n < 3:
        raise ValueError("valence must be at least 3")
    ring = list(range(1, n + 1))
    faces = [(0, ring[i], ring[(i + 1) % n]) for i in range(n)]
    s6, s10, s11, s12, s9 = n + 1, n + 2, n + 3, n + 4, n + 5
    b, c, x, r2 = 1, 2, n, 3
    faces += [(b, x, s6), (b, s6, s10), (b, s10, s11), (b, s11, c),
              (c, s11, s12), (c, s12, s9), (c, s9, r2)]
    true_nf = [n, 6, 6] + [UNKNOWN] * (n + 3)
    return LocalMesh(faces, true_nf, [False] * (n + 6))
