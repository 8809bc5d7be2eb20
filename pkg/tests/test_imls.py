import numpy as np
import pytest

from subfit.errors import AllSamplesEmpty, EmptyNeighborhood
from subfit.imls import (ImlsSurface, SpatialIndex, dist_terms, energy_dist,
                         energy_dist_gradient, imls_gradient, imls_value, kernel)
from subfit.mesh import PointCloud
from subfit.shapes import fibonacci_sphere_cloud


def brute_imls(points, normals, h, x):
    """Direct loop over every cloud point; the reference for the vectorized code."""
    num = den = 0.0
    for p, n in zip(points, normals):
        r = np.linalg.norm(x - p)
        if r < h:
            phi = (1 - r * r / (h * h)) ** 4
            num += phi * np.dot(n, x - p)
            den += phi
    return num / den


def test_kernel_support_is_strict():
    assert kernel(0.0, 1.0) == 1.0
    assert kernel(1.0, 1.0) == 0.0
    assert kernel(1.5, 1.0) == 0.0
    assert kernel(0.5, 1.0) == pytest.approx(0.75 ** 4)
    with pytest.raises(ValueError):
        kernel(0.1, 0.0)


def test_index_excludes_points_at_exactly_h():
    pts = np.array([[0.0, 0, 0], [0.5, 0, 0], [0.25, 0, 0]])
    idx = SpatialIndex(pts, 0.5)
    assert idx.query(np.zeros(3)).tolist() == [0, 2]
    rows, cols = idx.query_many(np.zeros((1, 3)))
    assert cols.tolist() == [0, 2] and rows.tolist() == [0, 0]


def test_matches_brute_force(rng):
    cloud = fibonacci_sphere_cloud(400)
    normals = cloud.normals + 0.2 * rng.normal(size=cloud.normals.shape)
    cloud = PointCloud.from_unnormalized(cloud.points, normals)
    s = ImlsSurface(cloud, 0.4)
    X = rng.normal(size=(30, 3))
    X = X / np.linalg.norm(X, axis=1, keepdims=True) * rng.uniform(0.85, 1.15, (30, 1))
    ev = s.evaluate(X)
    for x, f in zip(X, ev.f):
        assert f == pytest.approx(brute_imls(cloud.points, cloud.normals, 0.4, x), abs=1e-13)


def test_sphere_sign_and_distance():
    s = ImlsSurface(fibonacci_sphere_cloud(5000), 0.15)
    for r in (0.95, 1.0, 1.05):
        x = np.array([0.0, r, 0.0]) / np.linalg.norm([0.0, 1.0, 0.0])
        assert imls_value(s, x) == pytest.approx(r - 1.0, abs=2e-3)
    g = imls_gradient(s, np.array([0.0, 0.0, 1.02]))
    np.testing.assert_allclose(g / np.linalg.norm(g), [0, 0, 1], atol=1e-2)


def test_empty_neighbourhood_errors():
    s = ImlsSurface(fibonacci_sphere_cloud(100), 0.1)
    with pytest.raises(EmptyNeighborhood):
        imls_value(s, np.zeros(3))
    with pytest.raises(EmptyNeighborhood):
        imls_gradient(s, np.zeros(3))


def test_skip_and_error_policies():
    s = ImlsSurface(fibonacci_sphere_cloud(2000), 0.1)
    Q = np.array([[0, 0, 1.0], [0, 0, 0], [1.0, 0, 0]])
    e, g, diag = dist_terms(s, Q)
    assert diag.skipped == 1 and diag.n_samples == 3
    assert np.isnan(diag.f[1]) and not diag.valid[1]
    assert np.all(g[1] == 0)
    assert diag.skipped_fraction == pytest.approx(1 / 3)
    assert e == pytest.approx(np.nansum(diag.f ** 2))
    with pytest.raises(EmptyNeighborhood):
        dist_terms(s, Q, empty_policy="error")
    with pytest.raises(ValueError):
        dist_terms(s, Q, empty_policy="ignore")


def test_all_samples_empty_reports_distance():
    s = ImlsSurface(fibonacci_sphere_cloud(500), 0.05)
    with pytest.raises(AllSamplesEmpty) as info:
        dist_terms(s, np.array([[0, 0, 0.0], [0, 0, 0.1]]))
    assert info.value.max_nearest_distance == pytest.approx(1.0, abs=0.05)


def test_energy_gradient_finite_differences(rng):
    s = ImlsSurface(fibonacci_sphere_cloud(3000), 0.3)
    Q = rng.normal(size=(20, 3))
    Q = Q / np.linalg.norm(Q, axis=1, keepdims=True) * 1.05
    g = energy_dist_gradient(s, Q)
    eps = 1e-6
    for i in range(0, 20, 4):
        for a in range(3):
            Qp, Qm = Q.copy(), Q.copy()
            Qp[i, a] += eps
            Qm[i, a] -= eps
            fd = (energy_dist(s, Qp)[0] - energy_dist(s, Qm)[0]) / (2 * eps)
            assert fd == pytest.approx(g[i, a], rel=1e-6, abs=1e-10)


def test_threaded_queries_are_bitwise_identical(rng):
    cloud = fibonacci_sphere_cloud(20000)
    X = rng.normal(size=(3000, 3))
    X = X / np.linalg.norm(X, axis=1, keepdims=True)
    a = ImlsSurface(cloud, 0.05).evaluate(X)
    b = ImlsSurface(cloud, 0.05, workers=4).evaluate(X)
    assert a.f.tobytes() == b.f.tobytes()
    assert a.grad.tobytes() == b.grad.tobytes()


def test_vanishing_weight_counts_as_empty():
    # a single neighbour just inside h has kernel weight below the guard
    h = 1.0
    pts = np.array([[1 - 1e-5, 0, 0]])
    s = ImlsSurface(PointCloud(pts, np.array([[1.0, 0, 0]])), h)
    ev = s.evaluate(np.zeros((1, 3)))
    assert not ev.valid[0]
