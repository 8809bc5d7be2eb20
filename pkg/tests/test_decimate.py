import numpy as np
import pytest

from subfit.decimate import Quadric, decimate_qem, vertex_quadrics
from subfit.errors import NonManifold, TargetUnreachable
from subfit.mesh import TriMesh
from subfit.shapes import geodesic_sphere, grid_patch, icosphere, tetrahedron, torus


def test_quadric_plane_distance(rng):
    n = rng.normal(size=3)
    n /= np.linalg.norm(n)
    Q = Quadric.from_plane(n, -0.3)
    x = rng.normal(size=3)
    assert Q.error(x) == pytest.approx((n @ x - 0.3) ** 2)
    both = Q + Quadric.from_plane([0, 0, 1.0], 0.0, weight=2.0)
    assert both.error(x) == pytest.approx((n @ x - 0.3) ** 2 + 2 * x[2] ** 2)


def test_quadric_optimum_is_plane_intersection():
    Q = (Quadric.from_plane([1, 0, 0], -1) + Quadric.from_plane([0, 1, 0], -2)
         + Quadric.from_plane([0, 0, 1], -3))
    np.testing.assert_allclose(Q.optimum(np.zeros(3)), [1, 2, 3])
    # a single plane is rank-deficient: fall back to the given point
    single = Quadric.from_plane([0, 0, 1], 0)
    np.testing.assert_array_equal(single.optimum([5, 6, 7]), [5, 6, 7])


def test_vertex_quadrics_vanish_on_own_surface():
    m = icosphere(2)
    Q = vertex_quadrics(m)
    h = np.c_[m.vertices, np.ones(m.n_vertices)]
    assert np.abs(np.einsum("ni,nij,nj->n", h, Q, h)).max() < 1e-15


@pytest.mark.parametrize("mesh, target", [(icosphere(3), 162), (geodesic_sphere(6), 40)])
def test_sphere_keeps_topology(mesh, target):
    out = decimate_qem(mesh, target)
    rep = out.validate()
    assert out.n_vertices == target and rep.genus == 0 and rep.closed
    r = np.linalg.norm(out.vertices, axis=1)
    assert np.abs(r - 1).max() < 0.1


def test_torus_keeps_genus():
    out = decimate_qem(torus(20, 12), 60)
    assert out.n_vertices == 60 and out.validate().genus == 1


def test_orientation_kept(rng):
    m = icosphere(3)
    out = decimate_qem(m, 100)
    c = out.vertices[out.faces].mean(axis=1)
    assert np.all(np.einsum("ij,ij->i", out.face_normals(), c) > 0)


def test_boundary_preserved():
    m = grid_patch(10, 10)
    v = m.vertices.copy()
    v[:, 2] = 0.05 * np.sin(3 * v[:, 0]) * np.cos(2 * v[:, 1])
    m = m.with_vertices(v)
    out = decimate_qem(m, 40, preserve_boundary=True)
    assert out.n_vertices == 40
    rep = out.validate()
    bnd = out.vertices[out.is_boundary_vertex]
    # the boundary planes pin the outline up to the surface's bending
    side = np.minimum(np.abs(bnd[:, :2]), np.abs(bnd[:, :2] - 1)).min(axis=1)
    on_side = side < 1e-3
    assert on_side.all() and not rep.closed


def test_unreachable_target_returns_partial_mesh():
    with pytest.raises(TargetUnreachable) as info:
        decimate_qem(tetrahedron(), 3)
    assert info.value.mesh is not None and info.value.mesh.n_vertices == 4


def test_noop_and_argument_checks():
    m = icosphere(1)
    assert decimate_qem(m, m.n_vertices) is m
    with pytest.raises(ValueError):
        decimate_qem(m, 0)
    v = np.random.default_rng(0).normal(size=(5, 3))
    with pytest.raises(NonManifold):
        decimate_qem(TriMesh(v, [(0, 1, 2), (0, 3, 4)]), 3)
    # two faces glued along all three edges: valid, but nothing can collapse
    with pytest.raises(TargetUnreachable):
        decimate_qem(TriMesh(np.eye(3), [(0, 1, 2), (0, 2, 1)]), 2)


def test_deterministic():
    m = geodesic_sphere(8)
    a = decimate_qem(m, 100)
    b = decimate_qem(m, 100)
    assert a.vertices.tobytes() == b.vertices.tobytes()
    np.testing.assert_array_equal(a.faces, b.faces)
