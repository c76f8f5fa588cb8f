"""Cell shape measurements and the cell-centered coordinate frame.

Length includes the two end-cap radii so it matches the physical extent of
the outline; width is twice the median radius, robust against tapered
ends.  The local frame expresses a point as a normalized arc-length
coordinate along the long axis (poles at -1 and +1) and a signed
perpendicular offset in pixels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .energy import Colony
from .geometry import (
    DistanceModel,
    Skeleton,
    dilation_outline,
    project_points,
)

__all__ = [
    "CellLocalCoord",
    "CellMeasurements",
    "assign_points",
    "localize",
    "measure",
]


@dataclass(frozen=True)
class CellMeasurements:
    length: float       # px, polyline plus both end caps
    width: float        # px, twice the median radius
    perimeter: float    # px, outline arc length
    orientation: float  # degrees in [0, 180)


class CellLocalCoord(NamedTuple):
    x_norm: float  # in [-1, 1]; poles map to the ends
    y_px: float    # signed perpendicular offset


def _axis_direction(skel: Skeleton) -> np.ndarray:
    vec = skel.points[-1] - skel.points[0]
    if np.hypot(vec[0], vec[1]) < 1e-9:
        vec = skel.points[1] - skel.points[0]
    return vec


def measure(skel: Skeleton, outline_step: float = 0.25) -> CellMeasurements:
    """Length, width, perimeter and orientation of one cell.

    The perimeter is sampled from the dilation outline in a canonical pose
    (first node at the origin, long axis along +x) so the value does not
    depend on where the cell sits on the grid.
    """
    lengths = skel.segment_lengths()
    length = float(lengths.sum() + skel.radii[0] + skel.radii[-1])
    width = float(2.0 * np.median(skel.radii))
    vec = _axis_direction(skel)
    orientation = math.degrees(math.atan2(vec[1], vec[0])) % 180.0
    angle = math.atan2(vec[1], vec[0])
    rot = np.array(
        [[math.cos(-angle), -math.sin(-angle)], [math.sin(-angle), math.cos(-angle)]]
    )
    canonical = skel.with_data(points=(skel.points - skel.points[0]) @ rot.T)
    perimeter = dilation_outline(
        canonical, DistanceModel.SIMPLIFIED, outline_step
    ).arc_length()
    return CellMeasurements(length, width, perimeter, orientation)


def localize(skel: Skeleton, point) -> CellLocalCoord:
    """Express a point in the cell frame.

    The arc-length coordinate of the point's projection is measured from
    the polyline midpoint, extended along the outward tangent when the
    projection clamps at a pole, capped at half the cap-inclusive length
    and normalized by it.  The perpendicular offset is signed by the cross
    product of the local tangent with the offset vector.
    """
    p = np.asarray(point, dtype=float).reshape(2)
    proj = project_points(p, skel, DistanceModel.SIMPLIFIED)
    i = int(proj.segment_index[0])
    lam_raw = float(proj.lambda_raw[0])
    lam = float(proj.lambda_clamped[0])
    lengths = skel.segment_lengths()
    cum = np.concatenate([[0.0], np.cumsum(lengths)])
    total = float(cum[-1])
    s = cum[i] + lam * lengths[i] - 0.5 * total
    pts = skel.points
    seg = pts[i + 1] - pts[i]
    tangent = seg / np.hypot(seg[0], seg[1])
    if i == 0 and lam_raw < 0.0:
        s -= max(0.0, float(-(p - pts[0]) @ tangent))
    elif i == skel.segment_count - 1 and lam_raw > 1.0:
        s += max(0.0, float((p - pts[-1]) @ tangent))
    half = 0.5 * (total + float(skel.radii[0]) + float(skel.radii[-1]))
    s = min(max(s, -half), half)
    foot = pts[i] + lam * seg
    off = p - foot
    y = float(tangent[0] * off[1] - tangent[1] * off[0])
    return CellLocalCoord(s / half, y)


def assign_points(
    colony: Colony,
    points,
    slack: float = 0.0,
    model: DistanceModel = DistanceModel.SIMPLIFIED,
) -> list[Optional[int]]:
    """Assign each point to the cell with the smallest signed margin
    (distance minus interpolated radius), or None when every margin
    exceeds ``slack``.  Ties go to the lowest cell index."""
    if slack < 0:
        raise ValueError("slack must be nonnegative")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    best = np.full(pts.shape[0], np.inf)
    owner = np.full(pts.shape[0], -1, dtype=int)
    for idx, skel in enumerate(colony):
        proj = project_points(pts, skel, model)
        margin = proj.distance - proj.interp_radius
        better = margin < best
        best[better] = margin[better]
        owner[better] = idx
    return [int(o) if o >= 0 and m <= slack else None for o, m in zip(owner, best)]
