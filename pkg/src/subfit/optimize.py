"""Fitting: total energy, first-order descent, and warm-started sequences."""

from __future__ import annotations

import dataclasses
import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .arap import ArapState, energy_reg, energy_reg_gradient, fit_rotations
from .errors import AllSamplesEmpty, ConfigError, Diverged, FrameError, SubfitError
from .geometry import hausdorff, sample_mesh_to_cloud
from .imls import ImlsSurface, dist_terms
from .loop import ControlMesh, build_sample_operator, samples_for_level, subdivide_to_level
from .mesh import PointCloud, TriMesh, normalize_to_unit_box, transform_geometry

log = logging.getLogger(__name__)

PRESETS = {
    "clean": {"h0": 0.0005, "alpha": 0.01},
    "noisy": {"h0": 0.05, "alpha": 0.1},
}

WINDOW = 10
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8
MAX_HALVINGS = 30


@dataclass
class FitConfig:
    h0: float = 0.0005
    alpha: float = 0.01
    learning_rate: float = 1e-3
    max_iters: int = 2000
    convergence_tol: float = 1e-6
    samples_level: int = 0
    optimizer_kind: str = "adam"          # "adam" | "gd"
    seed: int = 0
    h_schedule: str = "off"               # "off" | "geometric"
    line_search: bool = False
    arap_refit_every: int = 1
    threads: int = 1
    empty_policy: str = "skip"            # "skip" | "error"
    seq_iters: int = 0                    # per-frame budget after frame 0; 0 = max_iters // 4
    target_samples: int = 100_000         # points drawn from mesh targets
    normalize: str = "shared"             # "shared" | "per-frame"

    def __post_init__(self):
        self.validate()

    def validate(self):
        problems = []
        if not self.h0 > 0:
            problems.append("h0 must be > 0")
        if not self.alpha >= 0:
            problems.append("alpha must be >= 0")
        if not self.learning_rate > 0:
            problems.append("learning_rate must be > 0")
        if self.max_iters < 1:
            problems.append("max_iters must be >= 1")
        if self.convergence_tol < 0:
            problems.append("convergence_tol must be >= 0")
        if self.samples_level not in (0, 1):
            problems.append("samples_level must be 0 or 1")
        if self.optimizer_kind not in ("adam", "gd"):
            problems.append("optimizer_kind must be adam or gd")
        if self.h_schedule not in ("off", "geometric"):
            problems.append("h_schedule must be off or geometric")
        if self.arap_refit_every < 1:
            problems.append("arap_refit_every must be >= 1")
        if self.threads < 1:
            problems.append("threads must be >= 1")
        if self.empty_policy not in ("skip", "error"):
            problems.append("empty_policy must be skip or error")
        if self.seq_iters < 0:
            problems.append("seq_iters must be >= 0")
        if self.target_samples < 1:
            problems.append("target_samples must be >= 1")
        if self.normalize not in ("shared", "per-frame"):
            problems.append("normalize must be shared or per-frame")
        if problems:
            raise ConfigError("; ".join(problems))

    @classmethod
    def preset(cls, name, **overrides):
        if name not in PRESETS:
            raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
        return cls(**{**PRESETS[name], **overrides})

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    @property
    def frame_iters(self):
        return self.seq_iters or max(1, self.max_iters // 4)

    def to_text(self):
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            lines.append(f"{f.name} = {repr(v) if isinstance(v, float) else v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text, base=None):
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        values = dataclasses.asdict(base) if base is not None else {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected key = value")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in types:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            values[key] = _coerce(key, val, types[key])
        return cls(**values)


def _coerce(key, text, typ):
    try:
        if typ == "bool":
            low = text.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return low in ("true", "1", "yes")
        if typ == "int":
            return int(text)
        if typ == "float":
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"bad value for {key}: {text!r}") from None


@dataclass
class FitReport:
    config: FitConfig
    iterations: list = field(default_factory=list)   # (iter, E_dist, E_reg, total, skipped, elapsed_ms)
    h_history: list = field(default_factory=list)
    stop_reason: str = ""
    wall_time: float = 0.0
    final_energy: float = float("nan")
    hausdorff: float | None = None
    frame: int | None = None
    optimizer_state: dict | None = field(default=None, repr=False)
    final_gradient: np.ndarray | None = field(default=None, repr=False)

    @property
    def converged(self):
        return self.stop_reason in ("converged", "stationary", "unchanged")

    @property
    def energies(self):
        return [r[3] for r in self.iterations]

    @property
    def n_iterations(self):
        return len(self.iterations)

    def to_text(self):
        out = ["# fit report"]
        if self.frame is not None:
            out.append(f"# frame = {self.frame}")
        out += [f"# {ln}" for ln in self.config.to_text().splitlines()]
        out.append(f"# stop_reason = {self.stop_reason}")
        out.append(f"# iterations = {self.n_iterations}")
        out.append(f"# final_energy = {self.final_energy!r}")
        out.append(f"# wall_time_s = {self.wall_time:.3f}")
        if self.hausdorff is not None:
            out.append(f"# hausdorff_bbox_fraction = {self.hausdorff!r}")
        out.append("iter E_dist E_reg total skipped elapsed_ms")
        for it, ed, er, tot, sk, ms in self.iterations:
            out.append(f"{it} {ed!r} {er!r} {tot!r} {sk} {ms:.3f}")
        return "\n".join(out) + "\n"


# -- energy ---------------------------------------------------------------------

@dataclass
class EnergyTerms:
    e_dist: float
    e_reg: float
    total: float
    gradient: np.ndarray
    skipped: int
    n_samples: int


def energy_terms(positions, op, surface, arap, alpha, empty_policy="skip"):
    Q = op.W @ positions
    ed, gq, diag = dist_terms(surface, Q, empty_policy)
    er = energy_reg(positions, arap)
    g = op.W.T @ gq
    if alpha:
        g = g + alpha * energy_reg_gradient(positions, arap)
    return EnergyTerms(ed, er, ed + alpha * er, np.asarray(g), diag.skipped, diag.n_samples)


def total_energy_and_gradient(control, op, surface, arap, config):
    """E_dist(W V) + alpha E_reg(V) and its gradient over V, rotations held fixed."""
    t = energy_terms(np.asarray(control.positions), op, surface, arap, config.alpha,
                     config.empty_policy)
    return t.total, t.gradient


# -- optimization -----------------------------------------------------------------

def _is_unit_box(points, tol=1e-6):
    lo, hi = points.min(axis=0), points.max(axis=0)
    return bool(lo.min() >= -tol and hi.max() <= 1 + tol
                and abs((hi - lo).max() - 1.0) <= tol)


def median_spacing(points):
    d, _ = cKDTree(points).query(points, k=2)
    return float(np.median(d[:, 1]))


class _Adam:
    def __init__(self, shape, state=None):
        if state is None:
            self.m = np.zeros(shape)
            self.v = np.zeros(shape)
            self.t = 0
        else:
            self.m, self.v, self.t = state["m"].copy(), state["v"].copy(), state["t"]

    def direction(self, g):
        """Step direction for gradient ``g`` (moments are committed separately)."""
        b1, b2 = ADAM_BETAS
        t = self.t + 1
        m = b1 * self.m + (1 - b1) * g
        v = b2 * self.v + (1 - b2) * g * g
        mhat = m / (1 - b1 ** t)
        vhat = v / (1 - b2 ** t)
        return -mhat / (np.sqrt(vhat) + ADAM_EPS), (m, v, t)

    def commit(self, pending):
        self.m, self.v, self.t = pending

    def reset(self):
        self.m[:] = 0
        self.v[:] = 0
        self.t = 0

    def state(self):
        return {"m": self.m.copy(), "v": self.v.copy(), "t": self.t}


def _plateau(history, tol):
    """True when the energy moved by less than ``tol`` (relative) over the window.

    Increases count as movement, so momentum overshoots do not end a fit.
    """
    if len(history) <= WINDOW:
        return False
    old, new = history[-WINDOW - 1], history[-1]
    return abs(old - new) <= tol * max(abs(old), 1e-300)


def _unchanged(terms, prior, tol):
    e0, g0 = prior
    return (abs(terms.total - e0) <= tol * abs(e0)
            and np.linalg.norm(terms.gradient - g0) <= tol * np.linalg.norm(g0))


def fit_static(cloud, initial, config=None, target_mesh=None, op=None,
               optimizer_state=None, max_iters=None, prior=None, auto_normalize=True):
    """Minimize E_dist + alpha E_reg over the control positions.

    Returns ``(ControlMesh, FitReport)``. The cloud should already be in the
    unit box; otherwise cloud and control mesh are normalized together and
    the result is mapped back.

    ``prior`` is the (energy, gradient) at which an earlier converged run
    stopped; if the start point reproduces both within the tolerance, the
    earlier convergence verdict is reused and no step is taken.
    """
    config = config or FitConfig()
    if not isinstance(initial, ControlMesh):
        initial = ControlMesh.from_mesh(initial)
    if auto_normalize and not _is_unit_box(cloud.points):
        log.warning("cloud is not normalized to the unit box; normalizing cloud and "
                    "control mesh together for the fit")
        cloud_n, tf = normalize_to_unit_box(cloud)
        init_n = ControlMesh(initial.mesh, tf.apply(initial.positions),
                             tf.apply(initial.rest_positions))
        tgt = transform_geometry(target_mesh, tf) if target_mesh is not None else None
        res, report = fit_static(cloud_n, init_n, config, tgt, op, optimizer_state, max_iters,
                                 prior)
        out = ControlMesh(initial.mesh, tf.invert(res.positions), initial.rest_positions)
        return out, report

    initial.mesh.validate()
    t_start = time.perf_counter()
    report = FitReport(config)
    if op is None:
        op = build_sample_operator(initial, samples_for_level(initial.mesh, config.samples_level))
    arap = ArapState.from_rest(initial.mesh, initial.rest_positions)
    h = config.h0
    surface = ImlsSurface(cloud, h, workers=config.threads)
    h_floor = 4.0 * median_spacing(cloud.points) if config.h_schedule == "geometric" else h
    P = np.array(initial.positions, dtype=float)
    adam = _Adam(P.shape, optimizer_state) if config.optimizer_kind == "adam" else None
    budget = config.max_iters if max_iters is None else max_iters
    history = []
    warned = False
    terms = None
    stop = "max_iters"

    def evaluate(X, it):
        try:
            return energy_terms(X, op, surface, arap, config.alpha, config.empty_policy)
        except AllSamplesEmpty as exc:
            if it == 0:
                raise
            raise Diverged(f"iteration {it}: every sample left the cloud support "
                           f"({exc})") from exc

    it = 0
    while it < budget:
        refit = it % config.arap_refit_every == 0
        if refit:
            fit_rotations(P, arap)
        if refit or terms is None:
            terms = evaluate(P, it)
        if not np.isfinite(terms.total) or not np.all(np.isfinite(terms.gradient)):
            raise Diverged(f"iteration {it}: non-finite energy or gradient")
        if not warned and terms.skipped > 0.1 * terms.n_samples:
            log.warning("%d of %d samples have no cloud point within h=%g",
                        terms.skipped, terms.n_samples, h)
            warned = True
        report.iterations.append((it, terms.e_dist, terms.e_reg, terms.total, terms.skipped,
                                  1000.0 * (time.perf_counter() - t_start)))
        report.h_history.append(h)
        history.append(terms.total)
        g = terms.gradient
        if terms.total == 0.0 or not np.any(g):
            stop = "stationary"
            break
        if it == 0 and prior is not None and _unchanged(terms, prior, config.convergence_tol):
            stop = "unchanged"
            break
        if _plateau(history, config.convergence_tol):
            if config.h_schedule == "geometric" and h > h_floor * (1 + 1e-12):
                h = max(0.5 * h, h_floor)
                log.info("iteration %d: plateau, shrinking h to %g", it, h)
                surface = ImlsSurface(cloud, h, workers=config.threads)
                history = []
                terms = None
                it += 1
                continue
            stop = "converged"
            break

        if adam is not None:
            d, pending = adam.direction(g)
            step = config.learning_rate * d
        else:
            pending = None
            step = -config.learning_rate * g

        if config.line_search:
            # backtrack with rotations frozen until the energy decreases
            accepted, scale = None, 1.0
            for _ in range(MAX_HALVINGS):
                try:
                    trial = energy_terms(P + scale * step, op, surface, arap,
                                         config.alpha, config.empty_policy)
                except AllSamplesEmpty:
                    trial = None
                if trial is not None and trial.total < terms.total:
                    accepted = trial
                    break
                scale *= 0.5
            if accepted is None:
                if adam is not None and adam.t > 0:
                    adam.reset()
                    it += 1
                    continue
                stop = "line_search_stalled"
                break
            P = P + scale * step
            terms = accepted
        else:
            P = P + step
            terms = None
        if pending is not None:
            adam.commit(pending)
        it += 1

    fit_rotations(P, arap)
    terms = evaluate(P, max(it, 1))
    report.final_energy = terms.total
    report.final_gradient = terms.gradient
    report.stop_reason = stop
    report.optimizer_state = adam.state() if adam is not None else None
    result = initial.with_positions(P)
    if target_mesh is not None:
        report.hausdorff = hausdorff(subdivide_to_level(result, 3, limit=True), target_mesh)
    report.wall_time = time.perf_counter() - t_start
    log.info("fit finished after %d iterations (%s), energy %.6g",
             report.n_iterations, stop, report.final_energy)
    return result, report


# -- sequences ------------------------------------------------------------------------

def _as_cloud(frame, config, index):
    if isinstance(frame, PointCloud):
        return frame
    if isinstance(frame, TriMesh):
        return sample_mesh_to_cloud(frame, config.target_samples, seed=config.seed + index)
    raise TypeError(f"frame {index}: expected PointCloud or TriMesh")


def fit_sequence(frames, template, config=None, transforms=None):
    """Fit each frame in turn, starting frame ``i + 1`` from frame ``i``'s result.

    The ARAP rest pose stays the template's for the whole sequence. Frame 0
    gets ``max_iters`` iterations; later frames get ``config.frame_iters``.

    By default all frames share the template's normalization. With
    per-frame normalization, ``transforms[i]`` is the transform already
    applied to frame ``i`` (the template lives in frame 0's coordinates);
    positions, rest pose and optimizer moments are carried between frames
    through these transforms, and result ``i`` is in frame ``i``'s coordinates.
    Returns a list of ``(ControlMesh, FitReport)``.
    """
    config = config or FitConfig()
    if not isinstance(template, ControlMesh):
        template = ControlMesh.from_mesh(template)
    op = build_sample_operator(template, samples_for_level(template.mesh, config.samples_level))
    results = []
    current = template
    state = prior = None
    for i, frame in enumerate(frames):
        try:
            cloud = _as_cloud(frame, config, i)
            if transforms is not None and i > 0:
                step = transforms[i - 1].inverse().then(transforms[i])
                rest = transforms[0].inverse().then(transforms[i]).apply(template.rest_positions)
                current = ControlMesh(template.mesh, step.apply(current.positions), rest)
                if state is not None:
                    # moments are gradients of squared lengths: rescale accordingly
                    state = {"m": state["m"] * step.scale, "v": state["v"] * step.scale ** 2,
                             "t": state["t"]}
                if step.scale != 1.0 or np.any(np.asarray(step.translation) != 0):
                    prior = None
            budget = config.max_iters if i == 0 else config.frame_iters
            fitted, report = fit_static(cloud, current, config, op=op,
                                        optimizer_state=state, max_iters=budget,
                                        prior=prior, auto_normalize=False)
        except SubfitError as exc:
            raise FrameError(i, exc) from exc
        report.frame = i
        state = report.optimizer_state
        prior = (report.final_energy, report.final_gradient) if report.converged else None
        results.append((fitted, report))
        current = fitted
        log.info("frame %d: %d iterations, energy %.6g", i, report.n_iterations,
                 report.final_energy)
    return results
