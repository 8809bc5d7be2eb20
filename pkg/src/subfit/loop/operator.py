"""The sparse sample operator W: control positions -> limit-surface samples."""

from __future__ import annotations

import hashlib
import logging
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from ..errors import DimensionMismatch
from .local import child_barycentric, select_child
from .masks import ControlMesh, limit_matrix, subdivide_once
from .patches import build_patch_table, eval_basis, patch_rotation

log = logging.getLogger(__name__)

CACHE_ENV = "SUBFIT_CACHE_DIR"
_MAGIC = b"SUBFITW\0"
_VERSION = 1
_TRIPLET = np.dtype([("row", "<i8"), ("col", "<i8"), ("val", "<f8")])


@dataclass(frozen=True)
class SampleSpec:
    """A point on face ``face`` of the control mesh, in barycentric coordinates."""

    face: int
    bary: tuple

    def __post_init__(self):
        b = tuple(float(x) for x in self.bary)
        if len(b) != 3 or min(b) < 0.0 or abs(sum(b) - 1.0) > 1e-12:
            raise ValueError(f"invalid barycentric coordinates {self.bary}")
        object.__setattr__(self, "bary", b)


def vertex_samples(mesh):
    """One sample per control vertex (the default sample set)."""
    first = np.full(mesh.n_vertices, -1)
    corner = np.zeros(mesh.n_vertices, dtype=int)
    for fi, f in enumerate(mesh.faces.tolist()):
        for k, v in enumerate(f):
            if first[v] < 0:
                first[v], corner[v] = fi, k
    out = []
    for v in range(mesh.n_vertices):
        b = [0.0, 0.0, 0.0]
        b[corner[v]] = 1.0
        out.append(SampleSpec(int(first[v]), tuple(b)))
    return out


def level1_samples(mesh):
    """Samples at every vertex of the once-refined mesh: vertices, then edge midpoints."""
    out = vertex_samples(mesh)
    ef = mesh.edge_faces[:, 0]
    fe = mesh.face_edges
    for e, fi in enumerate(ef):
        k = int(np.flatnonzero(fe[fi] == e)[0])  # edge runs from corner k to k+1
        b = [0.0, 0.0, 0.0]
        b[k] = b[(k + 1) % 3] = 0.5
        out.append(SampleSpec(int(fi), tuple(b)))
    return out


def samples_for_level(mesh, level):
    if level == 0:
        return vertex_samples(mesh)
    if level == 1:
        return level1_samples(mesh)
    raise ValueError("samples_level must be 0 or 1")


def _child_sample(sample):
    k = select_child(sample.bary)
    return 4 * sample.face + k, child_barycentric(sample.bary, k)


def map_sample_to_patch(sample, step, table=None):
    """(refined face index, v, w) of a control-mesh sample."""
    fine_face, bary = _child_sample(sample)
    if table is None:
        r = patch_rotation(step.mesh, fine_face)
    else:
        r = table[fine_face].rotation
    return fine_face, bary[(r + 1) % 3], bary[(r + 2) % 3]


@dataclass(frozen=True)
class SampleOperator:
    """``W`` (samples x control vertices); Q = W @ V."""

    W: sp.csr_matrix
    samples: tuple
    connectivity_hash: str

    @property
    def n_samples(self):
        return self.W.shape[0]

    @property
    def n_controls(self):
        return self.W.shape[1]


def eval_points(op, positions):
    positions = np.asarray(positions, dtype=float)
    if positions.ndim != 2 or positions.shape[0] != op.W.shape[1]:
        raise DimensionMismatch(
            f"operator expects {op.W.shape[1]} control points, got {positions.shape}")
    return op.W @ positions


def _samples_bytes(samples):
    arr = np.array([(s.face, *s.bary) for s in samples], dtype=float)
    return arr.astype("<f8").tobytes()


def operator_key(mesh, samples):
    h = hashlib.sha256()
    h.update(mesh.connectivity_hash.encode())
    h.update(_samples_bytes(samples))
    return h.digest()


def _cache_path(key):
    root = os.environ.get(CACHE_ENV)
    if not root:
        return None
    return Path(root) / f"W-{key.hex()[:40]}.bin"


def save_operator_file(path, W, key):
    coo = W.tocoo()
    trip = np.empty(coo.nnz, dtype=_TRIPLET)
    trip["row"], trip["col"], trip["val"] = coo.row, coo.col, coo.data
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", _VERSION))
        fh.write(key)
        fh.write(struct.pack("<qqq", W.shape[0], W.shape[1], coo.nnz))
        fh.write(trip.tobytes())


def load_operator_file(path, key):
    """The cached matrix, or None if the file is missing, stale, or corrupt."""
    try:
        data = Path(path).read_bytes()
    except OSError:
        return None
    head = len(_MAGIC) + 4 + 32 + 24
    if len(data) < head or data[:len(_MAGIC)] != _MAGIC:
        return None
    off = len(_MAGIC)
    (version,) = struct.unpack_from("<I", data, off)
    if version != _VERSION or data[off + 4:off + 36] != key:
        return None
    nrows, ncols, nnz = struct.unpack_from("<qqq", data, off + 36)
    body = data[head:]
    if len(body) != nnz * _TRIPLET.itemsize:
        return None
    trip = np.frombuffer(body, dtype=_TRIPLET)
    return sp.csr_matrix((trip["val"], (trip["row"], trip["col"])), shape=(nrows, ncols))


def assemble_operator(mesh, samples):
    """Rows of W for ``samples`` on control connectivity ``mesh``."""
    step = subdivide_once(mesh)
    fine = step.mesh
    S = step.S.tocsr()
    table = build_patch_table(step)
    L1 = None
    rows, cols, vals = [], [], []
    for i, s in enumerate(samples):
        fine_face, bary = _child_sample(s)
        hot = [k for k in range(3) if bary[k] == 1.0]
        if hot:
            # the sample is a refined-mesh vertex: use its limit stencil
            if L1 is None:
                L1 = limit_matrix(fine).tocsr()
            v = fine.faces[fine_face][hot[0]]
            lo, hi = L1.indptr[v], L1.indptr[v + 1]
            ctrl, w = L1.indices[lo:hi], L1.data[lo:hi]
        else:
            patch = table[fine_face]
            pv, pw = patch.to_patch_params(bary)
            w = eval_basis(patch, pv, pw)
            ctrl = patch.control
        row = sp.csr_matrix((w, (np.zeros(len(ctrl), dtype=int), ctrl)),
                            shape=(1, fine.n_vertices)) @ S
        rows.append(np.full(row.nnz, i))
        cols.append(row.indices)
        vals.append(row.data)
    W = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(len(samples), mesh.n_vertices))
    W.sum_duplicates()
    return W


def build_sample_operator(control, samples=None):
    """Assemble W for a control mesh; ``samples`` defaults to its vertices.

    When ``SUBFIT_CACHE_DIR`` is set the matrix is cached there, keyed by a
    hash of the connectivity and the sample list.
    """
    mesh = control.mesh if isinstance(control, ControlMesh) else control
    if samples is None:
        samples = vertex_samples(mesh)
    samples = tuple(samples)
    key = operator_key(mesh, samples)
    path = _cache_path(key)
    W = load_operator_file(path, key) if path is not None else None
    if W is not None and W.shape == (len(samples), mesh.n_vertices):
        log.debug("loaded sample operator from %s", path)
    else:
        W = assemble_operator(mesh, samples)
        if path is not None:
            try:
                path.parent.mkdir(parents=True, exist_ok=True)
                save_operator_file(path, W, key)
            except OSError as exc:
                log.warning("could not write operator cache %s: %s", path, exc)
    return SampleOperator(W, samples, mesh.connectivity_hash)
