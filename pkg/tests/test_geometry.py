import numpy as np
import pytest
from oracles import point_triangle_distance_brute

from subfit.geometry import (closest_points_on_triangles, hausdorff, point_mesh_distance,
                             sample_mesh_to_cloud)
from subfit.shapes import geodesic_sphere, grid_patch, icosahedron


def test_closest_point_regions(rng):
    a, b, c = np.array([0.0, 0, 0]), np.array([1.0, 0, 0]), np.array([0.0, 1, 0])
    P = rng.uniform(-1, 2, size=(300, 3))
    q = closest_points_on_triangles(P, *(np.tile(x, (300, 1)) for x in (a, b, c)))
    d = np.linalg.norm(P - q, axis=1)
    for p, di in zip(P[:40], d[:40]):
        assert di == pytest.approx(point_triangle_distance_brute(p, a, b, c), abs=1e-2)
        assert di <= point_triangle_distance_brute(p, a, b, c) + 1e-12


def test_point_mesh_distance_on_sphere(rng):
    m = geodesic_sphere(6)
    X = rng.normal(size=(200, 3))
    X *= rng.uniform(0.5, 2.0, size=(200, 1)) / np.linalg.norm(X, axis=1, keepdims=True)
    d = point_mesh_distance(X, m)
    brute = np.array([min(np.linalg.norm(x - q) for q in closest_points_on_triangles(
        np.tile(x, (m.n_faces, 1)), *(m.vertices[m.faces[:, k]] for k in range(3))))
        for x in X[:20]])
    np.testing.assert_allclose(d[:20], brute, atol=1e-14)
    # a polyhedron inscribed in the unit sphere is within its sag of it
    assert np.abs(d - np.abs(np.linalg.norm(X, axis=1) - 1)).max() < 0.02


def test_sampling_is_area_uniform_and_seeded():
    m = grid_patch(4, 4)
    c1 = sample_mesh_to_cloud(m, 20000, seed=3)
    c2 = sample_mesh_to_cloud(m, 20000, seed=3)
    assert c1.points.tobytes() == c2.points.tobytes()
    hist, _, _ = np.histogram2d(c1.points[:, 0], c1.points[:, 1], bins=4, range=[[0, 1]] * 2)
    assert np.abs(hist / hist.mean() - 1).max() < 0.1
    np.testing.assert_allclose(np.abs(c1.normals[:, 2]), 1.0)


def test_hausdorff_identity_and_scale():
    a = geodesic_sphere(4)
    assert hausdorff(a, a, samples=2000) < 1e-15
    b = a.with_vertices(a.vertices * 1.01)
    h = hausdorff(a, b, samples=2000)
    assert h == pytest.approx(0.01 / (2 * np.sqrt(3) * 1.01), rel=0.05)


def test_hausdorff_is_symmetric():
    a, b = icosahedron(), geodesic_sphere(3)
    assert hausdorff(a, b, 3000) == pytest.approx(hausdorff(b, a, 3000), rel=0.05)
