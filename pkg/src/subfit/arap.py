"""As-rigid-as-possible regularizer on the control mesh."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateTriangle

log = logging.getLogger(__name__)

MIN_ANGLE = 1e-6
CLAMP_FACTOR = 10.0


def cotangent_weights(mesh):
    """w_ij = 1/2 (cot a + cot b) per edge of ``mesh.edges``; one term on the boundary."""
    V = mesh.vertices
    F = mesh.faces
    fe = mesh.face_edges
    w = np.zeros(len(mesh.edges))
    for k in range(3):
        # the angle at corner k faces the edge from corner k+1 to k+2
        o = V[F[:, k]]
        u = V[F[:, (k + 1) % 3]] - o
        v = V[F[:, (k + 2) % 3]] - o
        cross = np.linalg.norm(np.cross(u, v), axis=1)
        dot = np.einsum("ij,ij->i", u, v)
        lens = np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            sin = cross / lens
        bad = ~(sin > np.sin(MIN_ANGLE))
        if bad.any():
            raise DegenerateTriangle(
                f"{int(bad.sum())} faces have an angle below {MIN_ANGLE} rad "
                f"(first: face {int(np.flatnonzero(bad)[0])})")
        np.add.at(w, fe[:, (k + 1) % 3], 0.5 * dot / cross)
    floor = -CLAMP_FACTOR * np.mean(np.abs(w))
    low = w < floor
    if low.any():
        log.info("clamped %d negative cotangent weights to %.3g", int(low.sum()), floor)
        w = np.maximum(w, floor)
    return w


@dataclass
class ArapState:
    """Rest-pose edges, weights and current per-vertex rotations.

    Edges are stored in both directions: ``src[k] -> dst[k]`` with weight
    ``weights[k]`` and rest vector ``rest_edges[k] = rest[src] - rest[dst]``.
    """

    rest: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    weights: np.ndarray
    rest_edges: np.ndarray
    rotations: np.ndarray = field(repr=False)

    @classmethod
    def from_rest(cls, mesh, rest_positions=None):
        rest = np.asarray(mesh.vertices if rest_positions is None else rest_positions,
                          dtype=float)
        w = cotangent_weights(mesh.with_vertices(rest))
        i, j = mesh.edges[:, 0], mesh.edges[:, 1]
        src = np.concatenate([i, j])
        dst = np.concatenate([j, i])
        ww = np.concatenate([w, w])
        R = np.broadcast_to(np.eye(3), (len(rest), 3, 3)).copy()
        return cls(rest, src, dst, ww, rest[src] - rest[dst], R)

    @property
    def n_vertices(self):
        return len(self.rest)

    def copy(self):
        return ArapState(self.rest, self.src, self.dst, self.weights, self.rest_edges,
                         self.rotations.copy())


def _edges(positions, state):
    P = np.asarray(positions, dtype=float)
    return P[state.src] - P[state.dst]


def fit_rotations(positions, state):
    """Best rotation per vertex from the SVD of its weighted edge covariance.

    Updates ``state.rotations`` in place and returns them.
    """
    e = _edges(positions, state)
    outer = state.weights[:, None, None] * e[:, :, None] * state.rest_edges[:, None, :]
    S = np.zeros((state.n_vertices, 3, 3))
    np.add.at(S, state.src, outer)
    U, sig, Vt = np.linalg.svd(S)
    det = np.linalg.det(U @ Vt)
    D = np.ones((len(S), 3))
    D[:, 2] = np.sign(det)
    D[det == 0, 2] = 1.0
    R = (U * D[:, None, :]) @ Vt
    deficient = sig[:, 1] <= 1e-12 * np.maximum(sig[:, 0], 1e-300)
    if deficient.any():
        log.debug("%d vertices with rank-deficient ARAP covariance", int(deficient.sum()))
    state.rotations = R
    return R


def _residuals(positions, state):
    e = _edges(positions, state)
    Rbar = np.einsum("kab,kb->ka", state.rotations[state.src], state.rest_edges)
    return e, e - Rbar


def energy_reg(positions, state):
    """sum_i sum_j w_ij ||(V_i - V_j) - R_i (Vbar_i - Vbar_j)||^2 with current rotations."""
    _, r = _residuals(positions, state)
    return float(np.sum(state.weights * np.einsum("ij,ij->i", r, r)))


def energy_reg_gradient(positions, state):
    """Gradient with the rotations held fixed."""
    e = _edges(positions, state)
    Rsum = state.rotations[state.src] + state.rotations[state.dst]
    term = 2.0 * state.weights[:, None] * (
        2.0 * e - np.einsum("kab,kb->ka", Rsum, state.rest_edges))
    g = np.zeros((state.n_vertices, 3))
    # the pair (i, j) carries both the i-cell and the j-cell terms
    np.add.at(g, state.src, term)
    return g
