"""Implicit moving least squares surface of an oriented point cloud.

f(x) = sum_k n_k . (x - p_k) phi_k(x) / sum_k phi_k(x), with the compactly
supported kernel phi(r) = (1 - r^2/h^2)^4 for r < h.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import AllSamplesEmpty, EmptyNeighborhood

log = logging.getLogger(__name__)

DENOM_EPS = 1e-12


def kernel(r, h):
    """(1 - r^2/h^2)^4 inside the support, exactly 0 outside."""
    if h <= 0:
        raise ValueError("support radius must be positive")
    r = np.asarray(r, dtype=float)
    t = 1.0 - (r / h) ** 2
    out = np.where(r < h, t ** 4, 0.0)
    return float(out) if out.ndim == 0 else out


class SpatialIndex:
    """Radius queries over cloud points with the strict bound ||x - p|| < h."""

    def __init__(self, points, h):
        if not h > 0:
            raise ValueError("support radius must be positive")
        self.points = np.asarray(points, dtype=float)
        self.h = float(h)
        self.tree = cKDTree(self.points)

    def query(self, x):
        idx = np.asarray(self.tree.query_ball_point(x, self.h), dtype=np.int64)
        if idx.size:
            d = np.linalg.norm(self.points[idx] - x, axis=1)
            idx = np.sort(idx[d < self.h])
        return idx

    def query_many(self, X, workers=1):
        """Flattened (sample id, point id) pairs, sorted by sample then point."""
        lists = self.tree.query_ball_point(X, self.h, workers=workers)
        counts = np.fromiter((len(li) for li in lists), dtype=np.int64, count=len(lists))
        pts = np.fromiter((j for li in lists for j in sorted(li)), dtype=np.int64,
                          count=int(counts.sum()))
        rows = np.repeat(np.arange(len(X)), counts)
        d2 = np.einsum("ij,ij->i", X[rows] - self.points[pts], X[rows] - self.points[pts])
        keep = d2 < self.h * self.h
        return rows[keep], pts[keep]

    def nearest_distance(self, X, workers=1):
        d, _ = self.tree.query(X, workers=workers)
        return d


@dataclass
class ImlsEvaluation:
    """Per-sample values; ``valid`` is False where the neighbourhood is empty."""

    f: np.ndarray
    grad: np.ndarray
    valid: np.ndarray

    @property
    def skipped(self):
        return int((~self.valid).sum())


class ImlsSurface:
    def __init__(self, cloud, h, workers=1):
        self.cloud = cloud
        self.h = float(h)
        self.index = SpatialIndex(cloud.points, h)
        self.workers = workers

    def evaluate(self, X, gradient=True):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        n = len(X)
        rows, pts = self.index.query_many(X, workers=self.workers)
        P = self.cloud.points[pts]
        N = self.cloud.normals[pts]
        d = X[rows] - P
        t = 1.0 - np.einsum("ij,ij->i", d, d) / (self.h * self.h)
        phi = t ** 4
        nd = np.einsum("ij,ij->i", N, d)
        den = np.bincount(rows, phi, minlength=n)
        num = np.bincount(rows, nd * phi, minlength=n)
        valid = den >= DENOM_EPS
        safe = np.where(valid, den, 1.0)
        f = np.where(valid, num / safe, np.nan)
        grad = None
        if gradient:
            dphi = (-8.0 / (self.h * self.h)) * (t ** 3)[:, None] * d
            term = N * phi[:, None] + nd[:, None] * dphi
            fr = np.where(valid, f, 0.0)[rows]
            term -= fr[:, None] * dphi
            grad = np.stack([np.bincount(rows, term[:, k], minlength=n) for k in range(3)], 1)
            grad = np.where(valid[:, None], grad / safe[:, None], np.nan)
        return ImlsEvaluation(f, grad, valid)

    def max_nearest_distance(self, X):
        return float(np.max(self.index.nearest_distance(np.atleast_2d(X), self.workers)))


def imls_value(surface, x):
    ev = surface.evaluate(np.asarray(x, dtype=float)[None], gradient=False)
    if not ev.valid[0]:
        raise EmptyNeighborhood(f"no cloud point within h={surface.h} of {tuple(x)}")
    return float(ev.f[0])


def imls_gradient(surface, x):
    ev = surface.evaluate(np.asarray(x, dtype=float)[None])
    if not ev.valid[0]:
        raise EmptyNeighborhood(f"no cloud point within h={surface.h} of {tuple(x)}")
    return ev.grad[0]


@dataclass
class DistDiagnostics:
    f: np.ndarray           # NaN where skipped
    valid: np.ndarray
    skipped: int
    n_samples: int

    @property
    def skipped_fraction(self):
        return self.skipped / max(self.n_samples, 1)


def _check_policy(surface, Q, ev, empty_policy):
    if empty_policy not in ("skip", "error"):
        raise ValueError(f"unknown empty-neighbourhood policy {empty_policy!r}")
    if ev.valid.all():
        return
    if not ev.valid.any():
        dmax = surface.max_nearest_distance(Q)
        raise AllSamplesEmpty(
            f"all {len(Q)} samples are farther than h={surface.h:g} from the cloud "
            f"(largest nearest-point distance {dmax:.6g})", max_nearest_distance=dmax)
    if empty_policy == "error":
        raise EmptyNeighborhood(f"{ev.skipped} of {len(Q)} samples have no neighbours")


def dist_terms(surface, Q, empty_policy="skip", gradient=True):
    """Energy, per-sample gradients (zero where skipped) and diagnostics."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    ev = surface.evaluate(Q, gradient=gradient)
    _check_policy(surface, Q, ev, empty_policy)
    fv = np.where(ev.valid, ev.f, 0.0)
    energy = float(np.sum(fv * fv))    # numpy's pairwise summation, fixed order
    diag = DistDiagnostics(ev.f, ev.valid, ev.skipped, len(Q))
    g = None
    if gradient:
        g = np.where(ev.valid[:, None], 2.0 * fv[:, None] * ev.grad, 0.0)
    return energy, g, diag


def energy_dist(surface, Q, empty_policy="skip"):
    """E_dist = sum of squared IMLS values over samples with neighbours."""
    energy, _, diag = dist_terms(surface, Q, empty_policy, gradient=False)
    return energy, diag


def energy_dist_gradient(surface, Q, empty_policy="skip"):
    """Per-sample gradients 2 f(Q_i) grad f(Q_i); zero rows for skipped samples."""
    _, g, _ = dist_terms(surface, Q, empty_policy)
    return g
