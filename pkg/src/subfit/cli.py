"""Command-line front end: ``subfit <subcommand> ...``.

Failures print one line ``error class=<Name> message=<text>`` to stderr and
exit with status 1; usage errors exit with status 2.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from .decimate import decimate_qem
from .errors import ConfigError, IoError, MissingNormals, SubfitError
from .geometry import hausdorff, sample_mesh_to_cloud
from .imls import ImlsSurface
from .io import load_mesh, load_point_cloud, write_mesh
from .loop import ControlMesh, subdivide_to_level
from .mesh import transform_geometry, unit_box_transform
from .optimize import PRESETS, FitConfig, fit_sequence, fit_static

log = logging.getLogger("subfit")

# flag destination -> FitConfig field
CONFIG_FLAGS = {
    "h0": "h0",
    "alpha": "alpha",
    "lr": "learning_rate",
    "iters": "max_iters",
    "tol": "convergence_tol",
    "samples_level": "samples_level",
    "optimizer": "optimizer_kind",
    "seed": "seed",
    "h_schedule": "h_schedule",
    "line_search": "line_search",
    "arap_refit_every": "arap_refit_every",
    "threads": "threads",
    "empty_policy": "empty_policy",
    "frame_iters": "seq_iters",
    "target_samples": "target_samples",
    "normalize": "normalize",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error class=UsageError message={message}", file=sys.stderr)
        sys.exit(2)


def _add_fit_flags(p):
    g = p.add_argument_group("fit configuration")
    g.add_argument("--preset", choices=sorted(PRESETS))
    g.add_argument("--config", type=Path, help="key = value file (as written by --dump-config)")
    g.add_argument("--dump-config", action="store_true",
                   help="print the resolved configuration and exit")
    g.add_argument("--h0", type=float)
    g.add_argument("--alpha", type=float)
    g.add_argument("--lr", type=float)
    g.add_argument("--iters", type=int)
    g.add_argument("--tol", type=float)
    g.add_argument("--samples-level", type=int, choices=(0, 1))
    g.add_argument("--optimizer", choices=("adam", "gd"))
    g.add_argument("--seed", type=int)
    g.add_argument("--h-schedule", nargs="?", const="geometric", choices=("off", "geometric"))
    g.add_argument("--line-search", action="store_const", const=True)
    g.add_argument("--arap-refit-every", type=int)
    g.add_argument("--threads", type=int)
    g.add_argument("--empty-policy", choices=("skip", "error"))
    g.add_argument("--frame-iters", type=int)
    g.add_argument("--target-samples", type=int)
    g.add_argument("--normalize", choices=("shared", "per-frame"))


def build_parser():
    p = _Parser(prog="subfit", description="Fit Loop subdivision control meshes to "
                "oriented point clouds.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    d = sub.add_parser("decimate", help="QEM-decimate a dense mesh into a control mesh")
    d.add_argument("--in", dest="inp", required=True, type=Path)
    d.add_argument("--out", required=True, type=Path)
    d.add_argument("--target-vertices", required=True, type=int)
    d.add_argument("--preserve-boundary", action="store_true")
    d.add_argument("--allow-nonmanifold", action="store_true")

    f = sub.add_parser("fit", help="fit a control mesh to one target")
    src = f.add_mutually_exclusive_group()
    src.add_argument("--cloud", type=Path)
    src.add_argument("--target-mesh", type=Path)
    f.add_argument("--init", type=Path)
    f.add_argument("--out", type=Path)
    f.add_argument("--allow-nonmanifold", action="store_true")
    _add_fit_flags(f)

    s = sub.add_parser("fit-seq", help="fit a frame sequence with warm starts")
    s.add_argument("--frames", type=Path, help="directory of per-frame .ply/.obj files")
    s.add_argument("--init", type=Path)
    s.add_argument("--out", type=Path, help="output directory")
    s.add_argument("--allow-nonmanifold", action="store_true")
    _add_fit_flags(s)

    v = sub.add_parser("subdivide", help="Loop-subdivide a control mesh")
    v.add_argument("--in", dest="inp", required=True, type=Path)
    v.add_argument("--out", required=True, type=Path)
    v.add_argument("--level", type=int, default=3)
    v.add_argument("--limit", action="store_true")
    v.add_argument("--allow-nonmanifold", action="store_true")

    e = sub.add_parser("eval-imls", help="evaluate the IMLS function at query points")
    e.add_argument("--cloud", required=True, type=Path)
    e.add_argument("--query", required=True, type=Path, help="mesh or cloud whose vertices are queried")
    e.add_argument("--h0", type=float, required=True)
    e.add_argument("--out", type=Path, help="text output (default: stdout)")

    h = sub.add_parser("hausdorff", help="sampled symmetric Hausdorff distance")
    h.add_argument("a", type=Path)
    h.add_argument("b", type=Path)
    h.add_argument("--samples", type=int, default=20_000)
    h.add_argument("--seed", type=int, default=0)
    h.add_argument("--allow-nonmanifold", action="store_true")
    return p


def resolve_config(args):
    """defaults < preset < config file < explicit flags."""
    cfg = FitConfig()
    if args.preset:
        cfg = FitConfig.preset(args.preset)
    if args.config is not None:
        try:
            text = args.config.read_text()
        except OSError as exc:
            raise IoError(f"cannot read config {args.config}: {exc}") from exc
        cfg = FitConfig.from_text(text, base=cfg)
    changes = {field: getattr(args, dest) for dest, field in CONFIG_FLAGS.items()
               if getattr(args, dest, None) is not None}
    if changes:
        try:
            cfg = dataclasses.replace(cfg, **changes)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
    return cfg


def _load_target(path, args, config, index=0):
    """A point cloud from a .ply with normals, or sampled from a mesh file."""
    if path.suffix.lower() == ".ply":
        try:
            return load_point_cloud(path)
        except MissingNormals:
            pass
    mesh = load_mesh(path, allow_nonmanifold=args.allow_nonmanifold)
    return sample_mesh_to_cloud(mesh, config.target_samples, seed=config.seed + index)


def _report_path(out):
    return out.with_name(out.stem + ".report.txt")


def _write_text(path, text):
    if not path.parent.is_dir():
        raise IoError(f"directory does not exist: {path.parent}")
    try:
        path.write_text(text)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def _require(args, *names):
    missing = [f"--{n.replace('_', '-')}" for n in names if getattr(args, n) is None]
    if missing:
        raise ConfigError("missing required option(s): " + ", ".join(missing))


def cmd_decimate(args):
    mesh = load_mesh(args.inp, allow_nonmanifold=args.allow_nonmanifold)
    out = decimate_qem(mesh, args.target_vertices, preserve_boundary=args.preserve_boundary)
    write_mesh(out, args.out)
    log.info("decimated %d -> %d vertices", mesh.n_vertices, out.n_vertices)


def cmd_fit(args, config):
    if args.cloud is None and args.target_mesh is None:
        raise ConfigError("one of --cloud or --target-mesh is required")
    _require(args, "init", "out")
    if args.cloud is not None:
        cloud = load_point_cloud(args.cloud)
        target_mesh = None
    else:
        target_mesh = load_mesh(args.target_mesh, allow_nonmanifold=args.allow_nonmanifold)
        cloud = sample_mesh_to_cloud(target_mesh, config.target_samples, seed=config.seed)
    init = load_mesh(args.init, allow_nonmanifold=args.allow_nonmanifold)
    tf = unit_box_transform(cloud.points)
    cloud_n = transform_geometry(cloud, tf)
    control = ControlMesh.from_mesh(transform_geometry(init, tf))
    tgt_n = transform_geometry(target_mesh, tf) if target_mesh is not None else None
    fitted, report = fit_static(cloud_n, control, config, target_mesh=tgt_n,
                                auto_normalize=False)
    write_mesh(fitted.current_mesh(), args.out, transform=tf)
    _write_text(_report_path(args.out), report.to_text())


def _frame_files(directory):
    if not directory.is_dir():
        raise IoError(f"frame directory does not exist: {directory}")
    files = sorted(p for p in directory.iterdir()
                   if p.is_file() and p.suffix.lower() in (".ply", ".obj"))
    if not files:
        raise IoError(f"no .ply or .obj frames in {directory}")
    return files


def cmd_fit_seq(args, config):
    _require(args, "frames", "init", "out")
    files = _frame_files(args.frames)
    if not args.out.parent.is_dir():
        raise IoError(f"directory does not exist: {args.out.parent}")
    clouds = [_load_target(f, args, config, i) for i, f in enumerate(files)]
    init = load_mesh(args.init, allow_nonmanifold=args.allow_nonmanifold)
    if config.normalize == "shared":
        shared = unit_box_transform(np.vstack([c.points for c in clouds]))
        tfs = [shared] * len(clouds)
        per_frame = None
    else:
        tfs = [unit_box_transform(c.points) for c in clouds]
        per_frame = tfs
    frames = [transform_geometry(c, t) for c, t in zip(clouds, tfs)]
    template = ControlMesh.from_mesh(transform_geometry(init, tfs[0]))
    results = fit_sequence(frames, template, config, transforms=per_frame)
    args.out.mkdir(exist_ok=True)
    combined = []
    for (fitted, report), f, t in zip(results, files, tfs):
        write_mesh(fitted.current_mesh(), args.out / f"{f.stem}.obj", transform=t)
        combined.append(f"# source = {f.name}\n" + report.to_text())
    _write_text(args.out / "sequence.report.txt", "\n".join(combined))


def cmd_subdivide(args):
    mesh = load_mesh(args.inp, allow_nonmanifold=args.allow_nonmanifold)
    out = subdivide_to_level(mesh, args.level, limit=args.limit)
    write_mesh(out, args.out)


def cmd_eval_imls(args):
    cloud = load_point_cloud(args.cloud)
    if args.query.suffix.lower() == ".ply":
        try:
            q = load_point_cloud(args.query).points
        except SubfitError:
            q = load_mesh(args.query, allow_nonmanifold=True).vertices
    else:
        q = load_mesh(args.query, allow_nonmanifold=True).vertices
    ev = ImlsSurface(cloud, args.h0).evaluate(q)
    lines = ["x y z f gx gy gz"]
    for x, f, g in zip(q, ev.f, ev.grad):
        lines.append(" ".join(f"{v:.17g}" for v in (*x, f, *g)))
    text = "\n".join(lines) + "\n"
    if args.out is None:
        sys.stdout.write(text)
    else:
        _write_text(args.out, text)
    if ev.skipped:
        log.warning("%d of %d queries have no neighbour within h (reported as nan)",
                    ev.skipped, len(q))


def cmd_hausdorff(args):
    a = load_mesh(args.a, allow_nonmanifold=args.allow_nonmanifold)
    b = load_mesh(args.b, allow_nonmanifold=args.allow_nonmanifold)
    print(f"{hausdorff(a, b, args.samples, args.seed):.10g}")


def run(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command in ("fit", "fit-seq"):
            config = resolve_config(args)
            if args.dump_config:
                sys.stdout.write(config.to_text())
                return 0
            (cmd_fit if args.command == "fit" else cmd_fit_seq)(args, config)
        elif args.command == "decimate":
            cmd_decimate(args)
        elif args.command == "subdivide":
            cmd_subdivide(args)
        elif args.command == "eval-imls":
            cmd_eval_imls(args)
        else:
            cmd_hausdorff(args)
    except SubfitError as exc:
        msg = str(exc).replace("\n", " ")
        print(f"error class={exc.error_class} message={msg}", file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
