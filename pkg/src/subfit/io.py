"""OBJ / PLY reading and writing."""

import logging
from pathlib import Path

import numpy as np
from plyfile import PlyData, PlyElement, PlyParseError

from .errors import IoError, MissingNormals, NonManifold, ParseError
from .mesh import PointCloud, TriMesh

log = logging.getLogger(__name__)


def _format_of(path, fmt):
    if fmt is None:
        fmt = Path(path).suffix.lstrip(".")
    fmt = fmt.lower()
    if fmt not in ("obj", "ply"):
        raise ParseError(f"unsupported format {fmt!r} (expected obj or ply)")
    return fmt


def _triangulate(polys, source):
    tris = []
    n_split = 0
    for poly in polys:
        if len(poly) < 3:
            raise ParseError(f"{source}: face with fewer than 3 vertices")
        if len(poly) > 3:
            n_split += 1
        for k in range(1, len(poly) - 1):
            tris.append((poly[0], poly[k], poly[k + 1]))
    if n_split:
        log.warning("%s: fan-triangulated %d polygons with more than 3 sides",
                    source, n_split)
    return np.asarray(tris, dtype=np.int64).reshape(-1, 3)


def _read_obj(path):
    verts, polys = [], []
    try:
        fh = open(path, "r")
    except OSError as exc:
        raise IoError(f"cannot open {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, 1):
            tok = line.split()
            if not tok or tok[0].startswith("#"):
                continue
            try:
                if tok[0] == "v":
                    verts.append([float(x) for x in tok[1:4]])
                    if len(verts[-1]) != 3:
                        raise ValueError("vertex needs 3 coordinates")
                elif tok[0] == "f":
                    idx = []
                    for t in tok[1:]:
                        i = int(t.split("/")[0])
                        if i == 0:
                            raise ValueError("OBJ indices are 1-based; got 0")
                        # negative indices are relative to the current end
                        idx.append(i - 1 if i > 0 else len(verts) + i)
                    polys.append(idx)
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from exc
    faces = _triangulate(polys, path)
    v = np.asarray(verts, dtype=float).reshape(-1, 3)
    if faces.size and (faces.min() < 0 or faces.max() >= len(v)):
        raise ParseError(f"{path}: face index out of range")
    return v, faces


def _read_ply(path):
    try:
        ply = PlyData.read(str(path))
    except FileNotFoundError as exc:
        raise IoError(f"cannot open {path}: {exc}") from exc
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    except (PlyParseError, ValueError, IndexError, KeyError) as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if "vertex" not in ply:
        raise ParseError(f"{path}: no vertex element")
    vx = ply["vertex"].data
    names = vx.dtype.names
    try:
        v = np.stack([vx["x"], vx["y"], vx["z"]], axis=1).astype(float)
    except (ValueError, KeyError) as exc:
        raise ParseError(f"{path}: vertex element lacks x/y/z") from exc
    normals = None
    if all(k in names for k in ("nx", "ny", "nz")):
        normals = np.stack([vx["nx"], vx["ny"], vx["nz"]], axis=1).astype(float)
    faces = np.zeros((0, 3), dtype=np.int64)
    if "face" in ply:
        fd = ply["face"].data
        key = next((k for k in ("vertex_indices", "vertex_index")
                    if k in fd.dtype.names), None)
        if key is None:
            raise ParseError(f"{path}: face element lacks vertex_indices")
        faces = _triangulate([list(map(int, p)) for p in fd[key]], path)
        if faces.size and (faces.min() < 0 or faces.max() >= len(v)):
            raise ParseError(f"{path}: face index out of range")
    return v, faces, normals


def load_mesh(path, fmt=None, allow_nonmanifold=False):
    """Read a triangle mesh; the validation report is ``mesh.report``."""
    fmt = _format_of(path, fmt)
    if fmt == "obj":
        v, f = _read_obj(path)
    else:
        v, f, _ = _read_ply(path)
    if len(f) == 0:
        raise ParseError(f"{path}: no faces")
    mesh = TriMesh(v, f)
    if not mesh.report.ok:
        if allow_nonmanifold:
            log.warning("%s: %s", path, "; ".join(mesh.report.issues))
        else:
            raise NonManifold(f"{path}: " + "; ".join(mesh.report.issues),
                              report=mesh.report)
    return mesh


def load_point_cloud(path, fmt="ply"):
    """Read an oriented cloud. Normals are re-normalized; zero ones rejected."""
    fmt = _format_of(path, fmt)
    if fmt != "ply":
        raise ParseError("point clouds are read from PLY only")
    v, _, n = _read_ply(path)
    if n is None:
        raise MissingNormals(f"{path}: vertex element has no nx/ny/nz")
    try:
        return PointCloud.from_unnormalized(v, n)
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from exc


def _check_dir(path):
    parent = Path(path).resolve().parent
    if not parent.is_dir():
        raise IoError(f"directory does not exist: {parent}")


def write_mesh(mesh, path, fmt=None, transform=None, binary=False):
    """Write a mesh; ``transform`` is a NormalizeTransform undone on export."""
    fmt = _format_of(path, fmt)
    _check_dir(path)
    v = mesh.vertices if transform is None else transform.invert(mesh.vertices)
    try:
        if fmt == "obj":
            with open(path, "w") as fh:
                fh.write(f"# {len(v)} vertices, {len(mesh.faces)} faces\n")
                np.savetxt(fh, v, fmt="v %.17g %.17g %.17g")
                np.savetxt(fh, mesh.faces + 1, fmt="f %d %d %d")
        else:
            vert = np.empty(len(v), dtype=[("x", "<f8"), ("y", "<f8"), ("z", "<f8")])
            vert["x"], vert["y"], vert["z"] = v.T
            face = np.empty(len(mesh.faces), dtype=[("vertex_indices", "<i4", (3,))])
            face["vertex_indices"] = mesh.faces
            PlyData([PlyElement.describe(vert, "vertex"),
                     PlyElement.describe(face, "face")],
                    text=not binary).write(str(path))
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def write_point_cloud(cloud, path, transform=None, binary=True):
    _check_dir(path)
    p = cloud.points if transform is None else transform.invert(cloud.points)
    names = ("x", "y", "z", "nx", "ny", "nz")
    vert = np.empty(len(p), dtype=[(k, "<f8") for k in names])
    for k, col in zip(names, np.hstack([p, cloud.normals]).T):
        vert[k] = col
    try:
        PlyData([PlyElement.describe(vert, "vertex")], text=not binary).write(str(path))
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
