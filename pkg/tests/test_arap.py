import logging

import numpy as np
import pytest
from oracles import random_rotation

from subfit.arap import (ArapState, cotangent_weights, energy_reg, energy_reg_gradient,
                         fit_rotations)
from subfit.errors import DegenerateTriangle
from subfit.mesh import TriMesh
from subfit.shapes import bipyramid, geodesic_sphere, grid_patch


def test_equilateral_weights():
    s = np.sqrt(3) / 2
    m = TriMesh([[0, 0, 0], [1, 0, 0], [0.5, s, 0], [0.5, -s, 0]], [(0, 1, 2), (1, 0, 3)])
    w = dict(zip(map(tuple, m.edges.tolist()), cotangent_weights(m)))
    cot60 = 1 / np.sqrt(3)
    assert w[(0, 1)] == pytest.approx(cot60)          # interior: both angles
    assert w[(0, 2)] == pytest.approx(cot60 / 2)      # boundary: one angle


def test_right_angle_gives_zero():
    m = TriMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [(0, 1, 2)])
    w = dict(zip(map(tuple, m.edges.tolist()), cotangent_weights(m)))
    assert w[(1, 2)] == pytest.approx(0.0, abs=1e-15)


def test_degenerate_triangle_rejected():
    m = TriMesh([[0, 0, 0], [1, 0, 0], [2, 0, 0]], [(0, 1, 2)])
    with pytest.raises(DegenerateTriangle):
        cotangent_weights(m)


def test_negative_weights_clamped(caplog):
    # push one grid vertex almost onto the segment joining two of its neighbours,
    # so the angle it opens there is nearly 180 degrees
    n = 20
    m = grid_patch(n, n)
    i, j = 10, 10
    v, a, b = j * (n + 1) + i, (j - 1) * (n + 1) + i, j * (n + 1) + i + 1
    P = m.vertices.copy()
    mid = 0.5 * (P[a] + P[b])
    P[v] = mid + 5e-5 * (P[v] - mid) / np.linalg.norm(P[v] - mid)
    m = m.with_vertices(P)
    with caplog.at_level(logging.INFO, logger="subfit"):
        w = cotangent_weights(m)
    assert "clamped" in caplog.text
    e = next(k for k, (p, q) in enumerate(m.edges.tolist()) if {p, q} == {a, b})
    # half of cot(pi - 2 atan(5e-5 / 0.0354)) is about -177 before clamping
    assert w[e] == w.min()
    assert -20 < w[e] < -10


def test_zero_energy_at_rest():
    m = geodesic_sphere(3)
    st = ArapState.from_rest(m)
    fit_rotations(m.vertices, st)
    assert energy_reg(m.vertices, st) < 1e-25
    np.testing.assert_allclose(st.rotations, np.broadcast_to(np.eye(3), st.rotations.shape),
                               atol=1e-12)


def test_rotations_are_proper_under_reflection(rng):
    m = bipyramid(6)
    st = ArapState.from_rest(m)
    P = m.vertices * np.array([1, 1, -1.0]) + 0.05 * rng.normal(size=m.vertices.shape)
    R = fit_rotations(P, st)
    np.testing.assert_allclose(np.linalg.det(R), 1.0, atol=1e-12)
    np.testing.assert_allclose(R @ R.transpose(0, 2, 1), np.broadcast_to(np.eye(3), R.shape),
                               atol=1e-12)


def test_gradient_matches_finite_differences(rng):
    m = geodesic_sphere(2)
    st = ArapState.from_rest(m, m.vertices + 0.02 * rng.normal(size=m.vertices.shape))
    P = m.vertices @ random_rotation(rng).T + 0.05 * rng.normal(size=m.vertices.shape)
    fit_rotations(P, st)
    g = energy_reg_gradient(P, st)
    eps = 1e-6
    fd = np.zeros_like(P)
    for i in range(len(P)):
        for a in range(3):
            Pp, Pm = P.copy(), P.copy()
            Pp[i, a] += eps
            Pm[i, a] -= eps
            fd[i, a] = (energy_reg(Pp, st) - energy_reg(Pm, st)) / (2 * eps)
    assert np.linalg.norm(g - fd) < 1e-7 * np.linalg.norm(fd)


def test_refit_never_increases_energy(rng):
    m = geodesic_sphere(3)
    st = ArapState.from_rest(m)
    P = m.vertices + 0.1 * rng.normal(size=m.vertices.shape)
    fit_rotations(m.vertices, st)
    before = energy_reg(P, st)
    fit_rotations(P, st)
    assert energy_reg(P, st) <= before


def test_copy_keeps_rotations_separate(rng):
    m = bipyramid(5)
    st = ArapState.from_rest(m)
    c = st.copy()
    fit_rotations(m.vertices @ random_rotation(rng).T, c)
    np.testing.assert_array_equal(st.rotations, np.broadcast_to(np.eye(3), st.rotations.shape))
    assert c.src is st.src
