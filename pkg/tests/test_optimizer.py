"""Descent behavior: monotonicity, fixed points, recovery, determinism."""

import numpy as np
import pytest

from skelfit import (
    EnergyParams,
    ImageGrid,
    OptimizationError,
    OptimizeOptions,
    RenderSettings,
    Skeleton,
    evaluate_outlines,
    optimize,
    optimize_eroded,
    render_synthetic,
)

from conftest import straight_cell


@pytest.fixture(scope="module")
def stadium_scene():
    gt = [straight_cell(25, 30, 0.0, 36, 4.0)]
    img = render_synthetic(gt, RenderSettings(90, 60))
    return gt, img


def _jitter(colony, rng, pos=2.0, rad=0.2):
    out = []
    for s in colony:
        pts = s.points + rng.uniform(-pos, pos, s.points.shape)
        radii = s.radii * rng.uniform(1 - rad, 1 + rad, s.n)
        out.append(s.with_data(pts, radii))
    return out


def test_trace_totals_non_increasing(stadium_scene, rng):
    gt, img = stadium_scene
    init = _jitter(gt, rng)
    _, trace = optimize(img, init, EnergyParams(), OptimizeOptions())
    totals = trace.totals()
    assert len(totals) >= 2
    assert np.all(np.diff(totals) <= 0.0)
    assert totals[-1] <= totals[0]


def test_recovers_jittered_stadium(stadium_scene, rng):
    gt, img = stadium_scene
    init = _jitter(gt, rng)
    fitted, _ = optimize(img, init, EnergyParams(), OptimizeOptions())
    report = evaluate_outlines(gt, fitted)
    assert report.mean_symmetric_distance <= 0.2


def test_fixed_point_of_converged_run(stadium_scene, rng):
    gt, img = stadium_scene
    init = _jitter(gt, rng)
    opts = OptimizeOptions(min_rel_decrease=1e-9, max_iters=4000)
    once, _ = optimize(img, init, EnergyParams(), opts)
    twice, trace = optimize(img, once, EnergyParams(), opts)
    accepted = trace.entries[-1].iteration
    assert accepted <= 1
    for a, b in zip(once, twice):
        assert np.abs(a.points - b.points).max() <= 1e-3
        assert np.abs(a.radii - b.radii).max() <= 1e-3


def test_result_validity_and_radius_floor(stadium_scene, rng):
    gt, img = stadium_scene
    init = _jitter(gt, rng)
    opts = OptimizeOptions(radius_floor=0.5)
    fitted, _ = optimize(img, init, EnergyParams(), opts)
    for s in fitted:
        assert np.all(s.radii >= opts.radius_floor)
        assert np.all(s.segment_lengths() >= 0.25)


def test_determinism(stadium_scene, rng):
    gt, img = stadium_scene
    init = _jitter(gt, rng)
    a, trace_a = optimize(img, init, EnergyParams(), OptimizeOptions())
    b, trace_b = optimize(img, init, EnergyParams(), OptimizeOptions())
    for sa, sb in zip(a, b):
        assert np.array_equal(sa.points, sb.points)
        assert np.array_equal(sa.radii, sb.radii)
    assert trace_a.totals().tolist() == trace_b.totals().tolist()


def test_translation_equivariance(rng):
    gt = [straight_cell(20, 22, 0.0, 30, 4.0)]
    img = render_synthetic(gt, RenderSettings(120, 100))
    shift = np.array([23.0, 31.0])
    shifted_gt = [gt[0].with_data(points=gt[0].points + shift)]
    img_shifted = render_synthetic(shifted_gt, RenderSettings(120, 100))
    init = _jitter(gt, np.random.default_rng(4), pos=1.5)
    init_shifted = [init[0].with_data(points=init[0].points + shift)]
    a, _ = optimize(img, init, EnergyParams(), OptimizeOptions())
    b, _ = optimize(img_shifted, init_shifted, EnergyParams(), OptimizeOptions())
    assert np.abs(b[0].points - shift - a[0].points).max() < 1e-6
    assert np.abs(b[0].radii - a[0].radii).max() < 1e-6


def test_off_grid_init_aborts(stadium_scene):
    _, img = stadium_scene
    far = [straight_cell(400, 400, 0.0, 30, 4.0)]
    with pytest.raises(OptimizationError):
        optimize(img, far, EnergyParams(), OptimizeOptions())


def test_eroded_zero_offset_identical(stadium_scene, rng):
    gt, img = stadium_scene
    init = _jitter(gt, rng)
    a, _ = optimize(img, init, EnergyParams(), OptimizeOptions())
    b, _ = optimize_eroded(img, init, EnergyParams(), OptimizeOptions())
    for sa, sb in zip(a, b):
        assert np.array_equal(sa.points, sb.points)
        assert np.array_equal(sa.radii, sb.radii)


def test_eroded_adds_offset_to_radii(rng):
    r, gap = 3.5, 3.6
    y2 = 30.0 + 2 * r + gap
    gt = [
        straight_cell(20, 30, 0.0, 40, r),
        straight_cell(20, y2, 0.0, 40, r),
    ]
    img = render_synthetic(gt, RenderSettings(100, 80))
    params = EnergyParams(erosion_offset=1.5)
    init = _jitter(gt, rng, pos=1.0, rad=0.1)
    thin, _ = optimize(img, init, params, OptimizeOptions())
    fat, _ = optimize_eroded(img, init, params, OptimizeOptions())
    for a, b in zip(thin, fat):
        assert np.array_equal(a.points, b.points)
        assert np.allclose(b.radii, a.radii + 1.5)


def test_options_validation():
    with pytest.raises(ValueError):
        OptimizeOptions(max_iters=0)
    with pytest.raises(ValueError):
        OptimizeOptions(step_shrink=1.0)
    with pytest.raises(ValueError):
        OptimizeOptions(radius_floor=0.0)
