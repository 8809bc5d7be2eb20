"""Surface sampling and exact point-to-mesh distances."""

import numpy as np
from scipy.spatial import cKDTree

from .mesh import PointCloud


def sample_mesh_to_cloud(mesh, n=100_000, seed=0):
    """``n`` area-uniform random points with their face normals."""
    rng = np.random.default_rng(seed)
    areas = mesh.face_areas()
    total = areas.sum()
    if not total > 0:
        raise ValueError("mesh has zero area")
    face = rng.choice(len(areas), size=n, p=areas / total)
    r1, r2 = rng.random(n), rng.random(n)
    s = np.sqrt(r1)
    b = np.stack([1.0 - s, s * (1.0 - r2), s * r2], axis=1)
    tri = mesh.vertices[mesh.faces[face]]
    pts = np.einsum("ij,ijk->ik", b, tri)
    normals = mesh.face_normals()[face]
    return PointCloud(pts, normals)


def closest_points_on_triangles(p, a, b, c):
    """Closest point to each ``p[i]`` on triangle ``(a[i], b[i], c[i])``."""
    ab, ac, ap = b - a, c - a, p - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = p - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = p - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    out = np.empty_like(p)
    done = np.zeros(len(p), dtype=bool)

    def put(mask, value):
        m = mask & ~done
        out[m] = value[m] if value.ndim == 2 else value
        done[m] = True

    with np.errstate(divide="ignore", invalid="ignore"):
        put((d1 <= 0) & (d2 <= 0), a)
        put((d3 >= 0) & (d4 <= d3), b)
        v = d1 / (d1 - d3)
        put((vc <= 0) & (d1 >= 0) & (d3 <= 0), a + v[:, None] * ab)
        put((d6 >= 0) & (d5 <= d6), c)
        w = d2 / (d2 - d6)
        put((vb <= 0) & (d2 >= 0) & (d6 <= 0), a + w[:, None] * ac)
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        put((va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0), b + w[:, None] * (c - b))
        denom = 1.0 / (va + vb + vc)
        v, w = vb * denom, vc * denom
        put(np.ones(len(p), dtype=bool), a + v[:, None] * ab + w[:, None] * ac)
    return out


def point_mesh_distance(points, mesh, chunk=20_000):
    """Exact unsigned distance from each point to the triangle set of ``mesh``."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    V, F = mesh.vertices, mesh.faces
    tri = V[F]
    cent = tri.mean(axis=1)
    # no triangle point is farther than the longest edge from its centroid
    reach = np.max(np.linalg.norm(tri - cent[:, None, :], axis=2))
    vtree = cKDTree(V)
    ctree = cKDTree(cent)
    out = np.empty(len(points))
    for lo in range(0, len(points), chunk):
        P = points[lo:lo + chunk]
        dv, _ = vtree.query(P)
        lists = ctree.query_ball_point(P, dv + reach + 1e-12)
        counts = np.fromiter((len(li) for li in lists), dtype=np.int64, count=len(lists))
        fid = np.fromiter((j for li in lists for j in li), dtype=np.int64,
                          count=int(counts.sum()))
        rows = np.repeat(np.arange(len(P)), counts)
        q = closest_points_on_triangles(P[rows], tri[fid, 0], tri[fid, 1], tri[fid, 2])
        d = np.linalg.norm(P[rows] - q, axis=1)
        best = np.full(len(P), np.inf)
        np.minimum.at(best, rows, d)
        out[lo:lo + chunk] = np.minimum(best, dv)
    return out


def surface_samples(mesh, n, seed=0):
    """Vertices plus ``n`` random area-uniform surface points."""
    if n <= 0:
        return mesh.vertices.copy()
    return np.vstack([mesh.vertices, sample_mesh_to_cloud(mesh, n, seed).points])


def hausdorff(a, b, samples=20_000, seed=0):
    """Symmetric sampled Hausdorff distance as a fraction of the joint bbox diagonal."""
    pa = surface_samples(a, samples, seed)
    pb = surface_samples(b, samples, seed + 1)
    d = max(point_mesh_distance(pa, b).max(), point_mesh_distance(pb, a).max())
    allv = np.vstack([a.vertices, b.vertices])
    diag = float(np.linalg.norm(allv.max(axis=0) - allv.min(axis=0)))
    return float(d / diag) if diag > 0 else 0.0
