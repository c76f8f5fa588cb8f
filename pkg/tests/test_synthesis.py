"""Rendering, noise and contour scoring against brute-force checks."""

import math

import numpy as np
import pytest

from skelfit import (
    Contour,
    ImageGrid,
    RenderSettings,
    Skeleton,
    add_noise,
    dilation_outline,
    evaluate_outlines,
    hausdorff,
    noise_sweep,
    rasterize_dilation,
    render_synthetic,
    sweep_table,
)

from conftest import random_skeleton, straight_cell


# ---------------------------------------------------------------------------
# rendering


def test_render_settings_validation():
    with pytest.raises(ValueError):
        RenderSettings(0, 10)
    with pytest.raises(ValueError):
        RenderSettings(10, 10, edge_softness=0.0)
    with pytest.raises(ValueError):
        RenderSettings(10, 10, foreground=0.9, background=0.1)


def test_render_levels():
    cell = straight_cell(10, 15, 0.0, 20, 4.0)
    settings = RenderSettings(40, 30, edge_softness=0.05)
    img = render_synthetic([cell], settings)
    # pixel (14.5, 15.5) sits essentially on the axis
    on_axis = img.pixels[15, 14]
    assert on_axis == pytest.approx(settings.foreground, abs=1e-9)
    far = img.pixels[2, 38]
    assert far == pytest.approx(settings.background, abs=1e-6)


def test_render_mid_level_on_boundary():
    # place the boundary exactly on a pixel center: axis y = 15.5, r = 4
    cell = Skeleton.from_xyr([(5, 15, 4.0), (25, 15, 4.0)])
    shifted = cell.with_data(points=cell.points + np.array([0.5, 0.5]))
    settings = RenderSettings(40, 30)
    img = render_synthetic([shifted], settings)
    # pixel (15, 19): center (15.5, 19.5), distance 4.0 from the axis
    mid = 0.5 * (settings.foreground + settings.background)
    assert img.pixels[19, 15] == pytest.approx(mid, abs=1e-12)


def test_render_monotone_in_normalized_distance(rng):
    colony = [random_skeleton(rng, (20, 20), n=4)]
    settings = RenderSettings(64, 64)
    img = render_synthetic(colony, settings)
    # recompute the normalized distance per pixel and check ordering
    xs, ys = np.meshgrid(np.arange(64) + 0.5, np.arange(64) + 0.5)
    ratio = np.full(xs.shape, np.inf)
    skel = colony[0]
    for i in range(skel.segment_count):
        a, b = skel.points[i], skel.points[i + 1]
        e = b - a
        lam = np.clip(((xs - a[0]) * e[0] + (ys - a[1]) * e[1]) / (e @ e), 0, 1)
        d = np.hypot(xs - a[0] - lam * e[0], ys - a[1] - lam * e[1])
        r = skel.radii[i] + lam * (skel.radii[i + 1] - skel.radii[i])
        ratio = np.minimum(ratio, d / r)
    order = np.argsort(ratio.ravel())
    vals = img.pixels.ravel()[order]
    assert np.all(np.diff(vals) >= -1e-12)


def test_render_threshold_recovers_mask():
    cell = straight_cell(12, 16, 0.2, 30, 4.0)
    settings = RenderSettings(64, 40)
    img = render_synthetic([cell], settings)
    mid = 0.5 * (settings.foreground + settings.background)
    recovered = img.pixels < mid
    truth = rasterize_dilation(cell, 64, 40)
    disagree = recovered ^ truth
    if disagree.any():
        # disagreements must hug the outline: within a 1-px band
        from skelfit.geometry import project_points

        rows, cols = np.nonzero(disagree)
        pts = np.column_stack([cols + 0.5, rows + 0.5])
        proj = project_points(pts, cell)
        assert np.all(np.abs(proj.distance - proj.interp_radius) < 1.0)


# ---------------------------------------------------------------------------
# noise


def test_add_noise_zero_sigma_identity(rng):
    img = ImageGrid(rng.uniform(0, 1, (32, 32)))
    out = add_noise(img, 0.0, seed=3)
    assert np.array_equal(out.pixels, img.pixels)


def test_add_noise_deterministic(rng):
    img = ImageGrid(rng.uniform(0, 1, (32, 32)))
    a = add_noise(img, 0.05, seed=11)
    b = add_noise(img, 0.05, seed=11)
    c = add_noise(img, 0.05, seed=12)
    assert np.array_equal(a.pixels, b.pixels)
    assert not np.array_equal(a.pixels, c.pixels)


def test_add_noise_sample_std():
    img = ImageGrid(np.full((400, 400), 0.5))
    sigma = 0.08
    noisy = add_noise(img, sigma, seed=2)
    delta = noisy.pixels - img.pixels
    assert delta.std() == pytest.approx(sigma, rel=0.05)


def test_add_noise_clamps():
    img = ImageGrid(np.full((64, 64), 0.98))
    noisy = add_noise(img, 0.2, seed=1)
    assert noisy.pixels.max() <= 1.0
    assert noisy.pixels.min() >= 0.0


def test_add_noise_rejects_negative_sigma(rng):
    img = ImageGrid(rng.uniform(0, 1, (8, 8)))
    with pytest.raises(ValueError):
        add_noise(img, -0.1, seed=0)


# ---------------------------------------------------------------------------
# hausdorff


def test_hausdorff_identical_contours():
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]])
    res = hausdorff(pts, pts)
    assert res == (0.0, 0.0)


def test_hausdorff_shifted_square():
    square = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], float)
    res = hausdorff(square, square + [1.0, 0.0])
    assert res.hausdorff == pytest.approx(1.0)


def test_hausdorff_matches_double_loop(rng):
    a = rng.uniform(0, 20, (37, 2))
    b = rng.uniform(0, 20, (23, 2))
    res = hausdorff(a, b)
    d = np.hypot(a[:, None, 0] - b[None, :, 0], a[:, None, 1] - b[None, :, 1])
    d_ab = d.min(axis=1)
    d_ba = d.min(axis=0)
    assert res.hausdorff == max(d_ab.max(), d_ba.max())
    assert res.mean_symmetric == pytest.approx(0.5 * (d_ab.mean() + d_ba.mean()),
                                               abs=1e-12)


def test_hausdorff_symmetric_and_ordered(rng):
    for _ in range(10):
        a = rng.uniform(0, 10, (15, 2))
        b = rng.uniform(0, 10, (12, 2))
        ab = hausdorff(a, b)
        ba = hausdorff(b, a)
        assert ab.hausdorff == ba.hausdorff
        assert ab.mean_symmetric == ba.mean_symmetric
        assert ab.hausdorff >= ab.mean_symmetric >= 0.0


def test_hausdorff_triangle_inequality_spot(rng):
    for _ in range(10):
        a = rng.uniform(0, 10, (15, 2))
        b = rng.uniform(0, 10, (14, 2))
        c = rng.uniform(0, 10, (13, 2))
        hab = hausdorff(a, b).hausdorff
        hbc = hausdorff(b, c).hausdorff
        hac = hausdorff(a, c).hausdorff
        assert hac <= hab + hbc + 1e-12


def test_hausdorff_rejects_empty():
    pts = np.array([[0.0, 0.0], [1.0, 1.0]])
    with pytest.raises(ValueError):
        hausdorff(pts, np.empty((0, 2)))


def test_hausdorff_accepts_contours():
    c = dilation_outline(straight_cell(10, 10, 0.0, 15, 3.0))
    assert hausdorff(c, c) == (0.0, 0.0)


# ---------------------------------------------------------------------------
# evaluation and sweep


def test_evaluate_outlines_self_is_zero():
    colony = [straight_cell(10, 12, 0.1, 20, 3.0),
              straight_cell(12, 30, -0.2, 22, 3.5)]
    report = evaluate_outlines(colony, colony)
    assert report.hausdorff == 0.0
    assert report.mean_symmetric_distance == 0.0
    assert len(report.per_cell) == 2


def test_evaluate_outlines_size_mismatch():
    colony = [straight_cell(10, 12, 0.1, 20, 3.0)]
    with pytest.raises(ValueError):
        evaluate_outlines(colony, colony * 2)


def test_noise_sweep_rows_and_determinism():
    gt = [straight_cell(14, 16, 0.2, 26, 3.2),
          straight_cell(16, 40, -0.1, 28, 3.6)]
    settings = RenderSettings(72, 64)
    sigmas = [0.0, 0.08]
    rows_a = noise_sweep(gt, settings, sigmas, jitter=1.5, seed=9)
    rows_b = noise_sweep(gt, settings, sigmas, jitter=1.5, seed=9)
    assert [r.sigma for r in rows_a] == sigmas
    for ra, rb in zip(rows_a, rows_b):
        assert ra.report.hausdorff == rb.report.hausdorff
        assert ra.report.mean_symmetric_distance == rb.report.mean_symmetric_distance
    for row in rows_a:
        assert row.report.hausdorff >= row.report.mean_symmetric_distance
    assert rows_a[0].report.mean_symmetric_distance <= 0.2


def test_sweep_table_format():
    gt = [straight_cell(14, 16, 0.0, 24, 3.2)]
    rows = noise_sweep(gt, RenderSettings(56, 40), [0.0], jitter=1.0, seed=4)
    text = sweep_table(rows)
    lines = text.strip().split("\n")
    assert lines[0] == "# sigma\thausdorff_px\tmean_px"
    assert len(lines) == 2
    fields = lines[1].split("\t")
    assert float(fields[0]) == 0.0
    assert float(fields[1]) >= float(fields[2])
