"""Shared factories for random skeletons, colonies and images, plus the
hazard-aware sampler used by the finite-difference gradient checks."""

import numpy as np
import pytest

from skelfit import EnergyParams, ImageGrid, Skeleton
from skelfit.energy import _data_fields, _evaluation_box
from skelfit.geometry import _eval_segment, project_points


def random_skeleton(rng, origin, n=None, radius_range=(2.0, 3.5),
                    step_range=(5.0, 8.0), max_turn=0.4):
    """Gently bent polyline starting near ``origin`` with moderate radii."""
    if n is None:
        n = int(rng.integers(3, 9))
    pts = [np.asarray(origin, dtype=float)]
    ang = rng.uniform(0.0, 2.0 * np.pi)
    for _ in range(n - 1):
        ang += rng.uniform(-max_turn, max_turn)
        step = rng.uniform(*step_range)
        pts.append(pts[-1] + step * np.array([np.cos(ang), np.sin(ang)]))
    radii = rng.uniform(*radius_range, n)
    return Skeleton(np.array(pts), radii)


def straight_cell(x0, y0, angle, length, radius, n=5):
    """Straight constant-radius skeleton, the canonical synthetic cell."""
    direction = np.array([np.cos(angle), np.sin(angle)])
    ts = np.linspace(0.0, length, n)
    pts = np.asarray([x0, y0], dtype=float) + ts[:, None] * direction
    return Skeleton(pts, np.full(n, float(radius)))


def random_image(rng, width=96, height=96):
    return ImageGrid(rng.uniform(0.0, 1.0, (height, width)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


# ---------------------------------------------------------------------------
# hazard-aware sampling for finite-difference gradient checks
#
# Central differences with step h are meaningless when a branch of the
# piecewise-smooth energy switches inside the stencil: a pixel entering or
# leaving the outside-ring domain, a projection crossing its clamp, the
# minimizing segment changing, or a repulsion margin crossing its corner.
# The margins below are the FD step times the largest relevant sensitivity,
# with an order-of-magnitude safety factor on top.

_RING_MARGIN = 2e-3
_LAMBDA_MARGIN = 1e-3
_TIE_MARGIN = 1e-3
_CORNER_MARGIN = 1e-3


def _segment_distance_table(points, skel, model):
    """Distances, raw lambdas and foot points of every point against every
    segment."""
    dists = []
    raws = []
    feet = []
    for i in range(skel.segment_count):
        a = skel.points[i]
        e = skel.points[i + 1] - a
        raw, cl, dist, _ = _eval_segment(
            points, a, skel.points[i + 1], skel.radii[i], skel.radii[i + 1], model
        )
        dists.append(dist)
        raws.append(raw)
        feet.append(a + cl[:, None] * e)
    return np.column_stack(dists), np.column_stack(raws), np.stack(feet, axis=1)


def _tie_hazard(dists, feet):
    """A near-tie in segment distance is hazardous only when the competing
    feet differ; adjacent segments clamped onto their shared node give the
    same value and derivative, which is harmless."""
    if dists.shape[1] < 2:
        return False
    order = np.argsort(dists, axis=1)
    rows = np.arange(dists.shape[0])
    best, second = order[:, 0], order[:, 1]
    close = dists[rows, second] - dists[rows, best] < _TIE_MARGIN
    if not np.any(close):
        return False
    f1 = feet[rows[close], best[close]]
    f2 = feet[rows[close], second[close]]
    return bool(np.any(np.hypot(*(f1 - f2).T) > 1e-9))


def _data_hazards(img, skel, params):
    fields = _data_fields(img, skel, params)
    g = fields.margin
    if np.any(np.abs(g - params.ring_width) < _RING_MARGIN):
        return True
    active = np.abs(g) < 1.05
    if not np.any(active):
        return False
    pts = fields.points[active]
    dists, raws, feet = _segment_distance_table(pts, skel, params.model)
    if _tie_hazard(dists, feet):
        return True
    seg = fields.projection.segment_index[active]
    raw = raws[np.arange(len(pts)), seg]
    dr = np.abs(np.diff(skel.radii))[seg]
    near_clamp = np.minimum(np.abs(raw), np.abs(raw - 1.0)) < _LAMBDA_MARGIN
    return bool(np.any(near_clamp & (dr > 1e-9)))


def _repulsion_hazards(colony, params):
    gap = params.effective_gap
    for l, skel_l in enumerate(colony):
        for k, skel_k in enumerate(colony):
            if k == l:
                continue
            proj = project_points(skel_l.points, skel_k, params.model)
            t = proj.distance - skel_l.radii - proj.interp_radius
            if np.any(np.abs(t - gap) < _CORNER_MARGIN):
                return True
            near = t < gap + _CORNER_MARGIN
            if not np.any(near):
                continue
            if np.any(proj.distance[near] < 0.05):
                return True
            raw = proj.lambda_raw[near]
            if np.any(np.minimum(np.abs(raw), np.abs(raw - 1.0)) < _LAMBDA_MARGIN):
                return True
            dists, _, feet = _segment_distance_table(
                skel_l.points[near], skel_k, params.model
            )
            if _tie_hazard(dists, feet):
                return True
    return False


def has_fd_hazards(img, colony, params) -> bool:
    """Whether any branch of the energy could switch within an FD stencil."""
    return any(_data_hazards(img, s, params) for s in colony) or _repulsion_hazards(
        colony, params
    )


def _placed_skeleton(rng, lo, hi):
    """Random skeleton translated so its node bounding box sits inside the
    (lo, hi) square."""
    shape = random_skeleton(rng, (0.0, 0.0))
    bmin = shape.points.min(axis=0)
    bmax = shape.points.max(axis=0)
    target = np.array(
        [rng.uniform(lo, hi - (bmax[0] - bmin[0])),
         rng.uniform(lo, hi - (bmax[1] - bmin[1]))]
    )
    return shape.with_data(points=shape.points - bmin + target)


def sample_fd_colony(rng, interacting=False, max_tries=500):
    """Random two-cell colony over a random 96x96 image, resampled until it
    sits clear of every finite-difference hazard for both distance models."""
    from skelfit import DistanceModel

    for _ in range(max_tries):
        img = random_image(rng, 96, 96)
        first = _placed_skeleton(rng, 12.0, 84.0)
        if interacting:
            # slide a copy of a second shape alongside the first so the
            # repulsion term is active
            shape = random_skeleton(rng, (0.0, 0.0))
            angle = rng.uniform(0, 2 * np.pi)
            shift = rng.uniform(8.0, 11.0) * np.array([np.cos(angle), np.sin(angle)])
            second = shape.with_data(
                points=shape.points - shape.points.mean(axis=0)
                + first.points.mean(axis=0) + shift
            )
        else:
            second = _placed_skeleton(rng, 12.0, 84.0)
        colony = [first, second]
        allp = np.concatenate([s.points for s in colony])
        if np.any(allp < 10.0) or np.any(allp > 86.0):
            continue
        hazardous = False
        for model in (DistanceModel.SIMPLIFIED, DistanceModel.ORIENTED):
            if has_fd_hazards(img, colony, EnergyParams(model=model)):
                hazardous = True
                break
        if not hazardous:
            return img, colony
    raise RuntimeError("could not sample a hazard-free configuration")
