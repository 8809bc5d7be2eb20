"""Procedural test shapes: platonic seeds, spheres, tori and sphere clouds."""

import numpy as np

from .mesh import PointCloud, TriMesh


def tetrahedron():
    v = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float)
    f = np.array([[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]])
    return TriMesh(v, f)


def icosahedron(radius=1.0):
    t = (1.0 + 5 ** 0.5) / 2.0
    v = np.array([
        [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
        [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
        [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
    ], dtype=float)
    f = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ])
    v *= radius / np.linalg.norm(v, axis=1, keepdims=True)
    return TriMesh(v, f)


def geodesic_sphere(frequency, radius=1.0, center=(0.0, 0.0, 0.0)):
    """Icosahedron with each face split into ``frequency**2`` triangles, projected.

    Vertex count is ``10 * frequency**2 + 2``.
    """
    ico = icosahedron()
    n = int(frequency)
    if n < 1:
        raise ValueError("frequency must be positive")
    verts = list(ico.vertices)
    key_of = {}

    def edge_point(a, b, k):
        # k-th interior point along edge a->b, shared between both faces
        if a < b:
            key = (a, b, k)
        else:
            key = (b, a, n - k)
        idx = key_of.get(key)
        if idx is None:
            p, q = ico.vertices[key[0]], ico.vertices[key[1]]
            idx = len(verts)
            verts.append(p + (q - p) * key[2] / n)
            key_of[key] = idx
        return idx

    faces = []
    for a, b, c in ico.faces.tolist():
        pa, pb, pc = ico.vertices[[a, b, c]]
        grid = {}
        for i in range(n + 1):
            for j in range(n + 1 - i):
                k = n - i - j
                # barycentric (k, i, j)/n on (a, b, c)
                if i == 0 and j == 0:
                    idx = a
                elif i == n:
                    idx = b
                elif j == n:
                    idx = c
                elif j == 0:
                    idx = edge_point(a, b, i)
                elif i == 0:
                    idx = edge_point(a, c, j)
                elif k == 0:
                    idx = edge_point(b, c, j)
                else:
                    idx = len(verts)
                    verts.append((k * pa + i * pb + j * pc) / n)
                grid[i, j] = idx
        for i in range(n):
            for j in range(n - i):
                faces.append((grid[i, j], grid[i + 1, j], grid[i, j + 1]))
                if i + j + 1 < n:
                    faces.append((grid[i + 1, j], grid[i + 1, j + 1], grid[i, j + 1]))
    v = np.asarray(verts)
    v = v / np.linalg.norm(v, axis=1, keepdims=True) * radius + np.asarray(center)
    return TriMesh(v, np.asarray(faces))


def icosphere(level, radius=1.0, center=(0.0, 0.0, 0.0)):
    """Icosahedron refined ``level`` times by edge midpoints (12, 42, 162, 642, ...)."""
    return geodesic_sphere(2 ** level, radius, center)


def torus(n_major=12, n_minor=8, major=1.0, minor=0.35):
    """Regular triangulated torus: every vertex has valence 6."""
    verts = []
    for i in range(n_major):
        th = 2 * np.pi * i / n_major
        for j in range(n_minor):
            ph = 2 * np.pi * j / n_minor
            r = major + minor * np.cos(ph)
            verts.append([r * np.cos(th), r * np.sin(th), minor * np.sin(ph)])
    faces = []
    for i in range(n_major):
        for j in range(n_minor):
            a = i * n_minor + j
            b = ((i + 1) % n_major) * n_minor + j
            c = ((i + 1) % n_major) * n_minor + (j + 1) % n_minor
            d = i * n_minor + (j + 1) % n_minor
            faces += [(a, b, c), (a, c, d)]
    return TriMesh(np.asarray(verts), np.asarray(faces))


def bipyramid(n, height=1.0):
    """Double pyramid over an n-gon; the two apexes have valence n."""
    ang = 2 * np.pi * np.arange(n) / n
    ring = np.stack([np.cos(ang), np.sin(ang), np.zeros(n)], axis=1)
    v = np.vstack([ring, [[0, 0, height], [0, 0, -height]]])
    top, bot = n, n + 1
    f = []
    for i in range(n):
        j = (i + 1) % n
        f += [(i, j, top), (j, i, bot)]
    return TriMesh(v, np.asarray(f))


def grid_patch(nx, ny, size=1.0):
    """Flat triangulated square with boundary."""
    xs = np.linspace(0, size, nx + 1)
    ys = np.linspace(0, size, ny + 1)
    v = np.array([[x, y, 0.0] for y in ys for x in xs])
    f = []
    for j in range(ny):
        for i in range(nx):
            a = j * (nx + 1) + i
            b, c, d = a + 1, a + nx + 2, a + nx + 1
            f += [(a, b, c), (a, c, d)]
    return TriMesh(v, np.asarray(f))


def flip_edges(mesh, count, rng, max_valence=12):
    """Randomly flip interior edges, keeping the mesh manifold and valences >= 3."""
    faces = [list(f) for f in mesh.faces.tolist()]
    for _ in range(count * 10):
        if count <= 0:
            break
        m = TriMesh(mesh.vertices, np.asarray(faces))
        ef = m.edge_faces
        interior = np.flatnonzero(ef[:, 1] >= 0)
        e = int(rng.choice(interior))
        p, q = m.edges[e]
        f0, f1 = ef[e]
        r = (set(faces[f0]) - {p, q}).pop()
        s = (set(faces[f1]) - {p, q}).pop()
        val = m.valence
        if r == s or val[p] <= 3 or val[q] <= 3 or val[r] >= max_valence \
                or val[s] >= max_valence:
            continue
        if s in set(m.rings[r].tolist()):
            continue
        # orient the new faces like the old ones
        fa = faces[f0]
        k = fa.index(r)
        a, b = fa[(k + 1) % 3], fa[(k + 2) % 3]   # edge (a, b) seen from r
        new0, new1 = [r, a, s], [s, b, r]
        trial = [f for i, f in enumerate(faces) if i not in (f0, f1)] + [new0, new1]
        if not TriMesh(mesh.vertices, np.asarray(trial)).report.ok:
            continue
        faces = trial
        count -= 1
    return TriMesh(mesh.vertices, np.asarray(faces))


def fibonacci_sphere_cloud(n, radius=1.0, center=(0.0, 0.0, 0.0)):
    """``n`` near-uniform points on a sphere with outward normals."""
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    th = np.pi * (1.0 + 5 ** 0.5) * i
    nrm = np.stack([r * np.cos(th), r * np.sin(th), z], axis=1)
    return PointCloud(nrm * radius + np.asarray(center), nrm)
