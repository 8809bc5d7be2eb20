import logging

import numpy as np
import pytest

from subfit.errors import (AllSamplesEmpty, ConfigError, Diverged, EmptyNeighborhood,
                           FrameError)
from subfit.loop import ControlMesh
from subfit.mesh import PointCloud, normalize_to_unit_box, unit_box_transform
from subfit.optimize import (PRESETS, FitConfig, FitReport, fit_sequence, fit_static,
                             median_spacing)
from subfit.shapes import fibonacci_sphere_cloud, grid_patch, icosphere

CENTER = np.array([0.5, 0.5, 0.5])


def small_problem(rng, noise=0.03):
    cloud = fibonacci_sphere_cloud(3000, 0.5, CENTER)
    ctrl = icosphere(1, 0.5, CENTER)
    ctrl = ctrl.with_vertices(ctrl.vertices + noise * rng.normal(size=ctrl.vertices.shape))
    return cloud, ctrl


def config(**kw):
    base = dict(h0=0.1, alpha=0.01, learning_rate=2e-3, max_iters=150)
    return FitConfig(**{**base, **kw})


def test_presets():
    assert FitConfig.preset("clean").h0 == 0.0005 and FitConfig.preset("clean").alpha == 0.01
    assert FitConfig.preset("noisy").h0 == 0.05 and FitConfig.preset("noisy").alpha == 0.1
    assert FitConfig.preset("noisy", alpha=0.3).alpha == 0.3
    assert set(PRESETS) == {"clean", "noisy"}
    with pytest.raises(ConfigError):
        FitConfig.preset("shiny")


@pytest.mark.parametrize("bad", [dict(h0=0), dict(alpha=-1), dict(learning_rate=0),
                                 dict(max_iters=0), dict(samples_level=2),
                                 dict(optimizer_kind="lbfgs"), dict(h_schedule="cosine"),
                                 dict(threads=0), dict(empty_policy="drop"),
                                 dict(normalize="global"), dict(arap_refit_every=0)])
def test_config_validation(bad):
    with pytest.raises(ConfigError):
        FitConfig(**bad)


def test_config_text_roundtrip():
    c = FitConfig(h0=0.0123456789, alpha=0.3, line_search=True, optimizer_kind="gd",
                  seq_iters=7, normalize="per-frame")
    assert FitConfig.from_text(c.to_text()) == c
    assert FitConfig.from_text("# comment\nalpha = 0.5\n", base=c).alpha == 0.5
    with pytest.raises(ConfigError, match="unknown key"):
        FitConfig.from_text("beta = 1")
    with pytest.raises(ConfigError, match="bad value"):
        FitConfig.from_text("max_iters = many")
    with pytest.raises(ConfigError, match="key = value"):
        FitConfig.from_text("alpha 0.5")


def test_frame_iters_default():
    assert FitConfig(max_iters=100).frame_iters == 25
    assert FitConfig(max_iters=100, seq_iters=9).frame_iters == 9


def test_fit_reduces_energy_and_reports(rng):
    cloud, ctrl = small_problem(rng)
    result, report = fit_static(cloud, ctrl, config())
    E = report.energies
    assert report.final_energy < 0.05 * E[0]
    assert report.n_iterations == len(report.h_history)
    assert report.stop_reason in ("converged", "max_iters")
    r = np.linalg.norm(result.positions - CENTER, axis=1)
    assert np.all(r > 0.45) and np.all(r < 0.6)
    np.testing.assert_array_equal(result.rest_positions, ctrl.vertices)
    lines = report.to_text().splitlines()
    assert "iter E_dist E_reg total skipped elapsed_ms" in lines
    first = lines[lines.index("iter E_dist E_reg total skipped elapsed_ms") + 1].split()
    assert int(first[0]) == 0 and float(first[3]) == E[0]


@pytest.mark.parametrize("kind", ["adam", "gd"])
def test_line_search_is_monotone(rng, kind):
    cloud, ctrl = small_problem(rng)
    lr = 2e-3 if kind == "adam" else 1.0
    _, report = fit_static(cloud, ctrl, config(line_search=True, optimizer_kind=kind,
                                               learning_rate=lr, max_iters=60))
    E = np.array(report.energies)
    assert np.all(np.diff(E) <= 1e-15 * E[:-1]) or report.stop_reason == "line_search_stalled"
    assert E[-1] < E[0]


def test_gd_without_line_search(rng):
    cloud, ctrl = small_problem(rng)
    _, report = fit_static(cloud, ctrl, config(optimizer_kind="gd", learning_rate=0.5))
    assert report.energies[-1] < 0.2 * report.energies[0]
    assert report.optimizer_state is None


def test_convergence_stops_on_plateau(rng):
    cloud, ctrl = small_problem(rng, noise=0.01)
    _, report = fit_static(cloud, ctrl, config(max_iters=5000, convergence_tol=1e-3))
    assert report.stop_reason == "converged" and report.converged
    assert report.n_iterations < 5000


def test_geometric_h_schedule(rng):
    cloud, ctrl = small_problem(rng)
    _, report = fit_static(cloud, ctrl, config(h0=0.2, h_schedule="geometric",
                                               convergence_tol=1e-3, max_iters=600))
    hs = np.array(report.h_history)
    assert hs[0] == 0.2 and np.all(np.diff(hs) <= 0)
    assert hs[-1] < 0.2
    assert hs.min() >= 4 * median_spacing(cloud.points) - 1e-15


def test_stationary_when_already_exact():
    g = grid_patch(4, 4)
    pts = np.random.default_rng(0).uniform(0, 1, size=(4000, 2))
    cloud = PointCloud(np.c_[pts, np.zeros(4000)], np.tile([0, 0, 1.0], (4000, 1)))
    _, report = fit_static(cloud, g, config(h0=0.2), auto_normalize=False)
    assert report.stop_reason == "stationary" and report.n_iterations == 1


def test_all_samples_empty_at_start(rng):
    cloud, ctrl = small_problem(rng)
    with pytest.raises(AllSamplesEmpty):
        fit_static(cloud, ctrl, config(h0=1e-4))


def test_error_policy(rng):
    cloud, ctrl = small_problem(rng)
    far = ctrl.vertices.copy()
    far[0] = CENTER
    with pytest.raises(EmptyNeighborhood):
        fit_static(cloud, ctrl.with_vertices(far), config(empty_policy="error"))


def test_divergence_detected(rng):
    cloud, ctrl = small_problem(rng)
    with pytest.raises(Diverged):
        fit_static(cloud, ctrl, config(optimizer_kind="gd", learning_rate=1e6))


def test_skipped_samples_warning(rng, caplog):
    cloud, ctrl = small_problem(rng)
    far = ctrl.vertices.copy()
    far[:10] = CENTER + 0.01 * rng.normal(size=(10, 3))
    with caplog.at_level(logging.WARNING, logger="subfit"):
        fit_static(cloud, ctrl.with_vertices(far), config(max_iters=3))
    assert "have no cloud point" in caplog.text


def test_auto_normalization_maps_back(rng, caplog):
    cloud, ctrl = small_problem(rng)
    scale, shift = 40.0, np.array([100.0, -3.0, 7.0])
    big_cloud = PointCloud(cloud.points * scale + shift, cloud.normals)
    big_ctrl = ctrl.with_vertices(ctrl.vertices * scale + shift)
    with caplog.at_level(logging.WARNING, logger="subfit"):
        big, _ = fit_static(big_cloud, big_ctrl, config(max_iters=40))
    assert "not normalized" in caplog.text
    # the fit runs in unit-box coordinates; compare there
    tf = unit_box_transform(big_cloud.points)
    small, _ = fit_static(normalize_to_unit_box(cloud)[0],
                          ControlMesh(ctrl, unit_box_transform(cloud.points).apply(ctrl.vertices),
                                      unit_box_transform(cloud.points).apply(ctrl.vertices)),
                          config(max_iters=40))
    np.testing.assert_allclose(tf.apply(big.positions), small.positions, atol=1e-9)
    np.testing.assert_array_equal(big.rest_positions, big_ctrl.vertices)


def test_hausdorff_against_target(rng):
    cloud, ctrl = small_problem(rng)
    _, report = fit_static(cloud, ctrl, config(), target_mesh=icosphere(4, 0.5, CENTER))
    assert 0 < report.hausdorff < 0.02
    assert "hausdorff_bbox_fraction" in report.to_text()


def test_sequence_warm_start_and_budgets(rng):
    cloud, ctrl = small_problem(rng)
    frames = [PointCloud(cloud.points + [0.01 * i, 0, 0], cloud.normals) for i in range(3)]
    frames = [normalize_to_unit_box(f)[0] if i == 0 else f for i, f in enumerate(frames)]
    cfg = config(max_iters=120, seq_iters=30)
    out = fit_sequence(frames, ctrl, cfg)
    assert [r.frame for _, r in out] == [0, 1, 2]
    assert all(r.n_iterations <= 30 for _, r in out[1:])
    # later frames start where the previous one ended
    assert out[1][1].energies[0] < out[0][1].energies[0]
    for res, _ in out:
        np.testing.assert_array_equal(res.rest_positions, ctrl.vertices)


def test_sequence_frame_error(rng):
    cloud, ctrl = small_problem(rng)
    far = PointCloud(cloud.points + 5.0, cloud.normals)
    with pytest.raises(FrameError) as info:
        fit_sequence([cloud, far], ctrl, config(max_iters=20))
    assert info.value.frame == 1 and info.value.error_class == "AllSamplesEmpty"


def test_sequence_accepts_meshes(rng):
    _, ctrl = small_problem(rng)
    target = icosphere(3, 0.5, CENTER)
    out = fit_sequence([target, target], ctrl, config(max_iters=30, target_samples=3000))
    assert len(out) == 2


def test_per_frame_transforms_match_shared(rng):
    cloud, ctrl = small_problem(rng)
    frames = [PointCloud(cloud.points * s, cloud.normals) for s in (1.0, 0.9)]
    # h is relative to each frame's box, so only converged fits are comparable
    cfg = config(h0=0.2, max_iters=400, seq_iters=400)
    shared = fit_sequence(frames, ctrl, cfg)
    tfs = [unit_box_transform(f.points) for f in frames]
    local = [PointCloud(t.apply(f.points), f.normals) for f, t in zip(frames, tfs)]
    template = ControlMesh(ctrl, tfs[0].apply(ctrl.vertices), tfs[0].apply(ctrl.vertices))
    per = fit_sequence(local, template, cfg, transforms=tfs)
    for (a, _), (b, _), t in zip(shared, per, tfs):
        gap = np.abs(t.invert(b.positions) - a.positions).max()
        assert gap < 0.01


def test_report_defaults():
    r = FitReport(FitConfig())
    assert not r.converged and r.n_iterations == 0 and r.energies == []
