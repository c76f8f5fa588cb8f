"""Skeleton model and distance/dilation queries.

A cell is represented by an open polyline whose nodes carry disk radii; the
cell body is the union of the linearly interpolated disks along the polyline
(the "dilation").  Two point-to-segment distance models are supported: the
plain clamped orthogonal projection, and an orientation-aware variant whose
foot point is shifted along the segment according to the radius difference
of the end disks (via the common external tangent).

Coordinate conventions used throughout the package:
  * x runs along image columns, y along rows, both in pixel units;
  * pixel (i, j) covers the unit square [i, i+1) x [j, j+1) and is sampled
    at its center (i + 0.5, j + 0.5).

All types are immutable values and all functions are pure, so everything
here is safe to call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np
from skimage.measure import find_contours

__all__ = [
    "Contour",
    "DistanceModel",
    "InvalidSkeletonError",
    "Point2",
    "PointProjection",
    "SegmentQuery",
    "Skeleton",
    "SkeletonNode",
    "dilation_contains",
    "dilation_outline",
    "distance_to_skeleton",
    "project_points",
    "project_to_segment",
    "rasterize_dilation",
]

_EPS = 1e-12


class InvalidSkeletonError(ValueError):
    """Node data violates the skeleton invariants."""


class Point2(NamedTuple):
    x: float
    y: float


class SkeletonNode(NamedTuple):
    position: Point2
    radius: float


class DistanceModel(Enum):
    """Which point-to-segment distance drives queries and dilations."""

    SIMPLIFIED = "simplified"
    ORIENTED = "oriented"


@dataclass(frozen=True, eq=False)
class Skeleton:
    """Open polyline with one disk radius per node.

    ``points`` is an (n, 2) float array of node positions, ``radii`` the
    matching (n,) array of disk radii.  Invariants: n >= 2, every radius
    positive, every segment of nonzero length.  Arrays are copied and made
    read-only at construction.
    """

    points: np.ndarray
    radii: np.ndarray
    label: str = ""

    def __post_init__(self) -> None:
        pts = np.array(self.points, dtype=float)
        rad = np.array(self.radii, dtype=float).reshape(-1)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise InvalidSkeletonError("points must be an (n, 2) array")
        if pts.shape[0] < 2:
            raise InvalidSkeletonError("a skeleton needs at least 2 nodes")
        if pts.shape[0] != rad.shape[0]:
            raise InvalidSkeletonError("points and radii lengths differ")
        if not (np.all(np.isfinite(pts)) and np.all(np.isfinite(rad))):
            raise InvalidSkeletonError("node data must be finite")
        if np.any(rad <= 0.0):
            raise InvalidSkeletonError("all radii must be positive")
        seg = np.diff(pts, axis=0)
        if np.any(np.einsum("ij,ij->i", seg, seg) <= 0.0):
            bad = int(np.argmin(np.einsum("ij,ij->i", seg, seg)))
            raise InvalidSkeletonError(f"segment {bad} has zero length")
        pts.setflags(write=False)
        rad.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "radii", rad)

    @classmethod
    def from_xyr(cls, rows: Iterable[Sequence[float]], label: str = "") -> "Skeleton":
        """Build from an iterable of (x, y, r) triples."""
        arr = np.array(list(rows), dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 3:
            raise InvalidSkeletonError("expected rows of (x, y, r)")
        return cls(arr[:, :2], arr[:, 2], label)

    @classmethod
    def from_nodes(cls, nodes: Iterable[SkeletonNode], label: str = "") -> "Skeleton":
        rows = [(n.position.x, n.position.y, n.radius) for n in nodes]
        return cls.from_xyr(rows, label)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def segment_count(self) -> int:
        return self.n - 1

    @property
    def nodes(self) -> tuple[SkeletonNode, ...]:
        return tuple(
            SkeletonNode(Point2(float(x), float(y)), float(r))
            for (x, y), r in zip(self.points, self.radii)
        )

    def segment_lengths(self) -> np.ndarray:
        seg = np.diff(self.points, axis=0)
        return np.hypot(seg[:, 0], seg[:, 1])

    def arc_length(self) -> float:
        return float(self.segment_lengths().sum())

    def with_data(
        self,
        points: Optional[np.ndarray] = None,
        radii: Optional[np.ndarray] = None,
    ) -> "Skeleton":
        """Copy with replaced node data (re-validated)."""
        return Skeleton(
            self.points if points is None else points,
            self.radii if radii is None else radii,
            self.label,
        )

    def reversed(self) -> "Skeleton":
        return Skeleton(self.points[::-1], self.radii[::-1], self.label)


@dataclass(frozen=True)
class SegmentQuery:
    """Result of projecting one point onto one skeleton segment.

    ``segment_index`` is 0-based: segment i joins nodes i and i+1.
    ``lambda_raw`` is the unclamped barycentric coordinate of the foot point
    (shifted by the tangent construction under the oriented model),
    ``lambda_clamped`` its restriction to [0, 1]; ``distance`` and
    ``interp_radius`` are evaluated at the clamped coordinate.
    """

    segment_index: int
    lambda_raw: float
    lambda_clamped: float
    distance: float
    interp_radius: float


@dataclass(frozen=True, eq=False)
class PointProjection:
    """Vectorized form of :class:`SegmentQuery` for a batch of points."""

    segment_index: np.ndarray
    lambda_raw: np.ndarray
    lambda_clamped: np.ndarray
    distance: np.ndarray
    interp_radius: np.ndarray

    def __len__(self) -> int:
        return self.distance.shape[0]

    def query(self, k: int) -> SegmentQuery:
        return SegmentQuery(
            int(self.segment_index[k]),
            float(self.lambda_raw[k]),
            float(self.lambda_clamped[k]),
            float(self.distance[k]),
            float(self.interp_radius[k]),
        )


def _as_points(points) -> np.ndarray:
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("expected a point (x, y) or an (n, 2) array")
    return arr


def _eval_segment(P, a, b, ra, rb, model):
    """Raw/clamped lambda, distance and interpolated radius of every point
    in ``P`` against the single segment a->b."""
    e = b - a
    L2 = float(e @ e)
    v = P - a
    lam1 = (v @ e) / L2
    lam_e = np.clip(lam1, 0.0, 1.0)
    de = np.hypot(v[:, 0] - lam_e * e[0], v[:, 1] - lam_e * e[1])
    dr = float(rb - ra)
    if model is DistanceModel.SIMPLIFIED:
        return lam1, lam_e, de, ra + lam_e * dr

    L = math.sqrt(L2)
    if abs(dr) >= L:
        # one end disk swallows the whole segment: the foot collapses onto
        # the fatter end, so the shifted coordinate saturates there
        lam2 = np.full_like(lam1, 1.0 if dr > 0 else 0.0)
    else:
        lam2 = lam1 + de * dr / (L * math.sqrt(L2 - dr * dr))
    lam_o = np.clip(lam2, 0.0, 1.0)
    do = np.hypot(v[:, 0] - lam_o * e[0], v[:, 1] - lam_o * e[1])
    return lam2, lam_o, do, ra + lam_o * dr


def project_points(
    points, skel: Skeleton, model: DistanceModel = DistanceModel.SIMPLIFIED
) -> PointProjection:
    """Project a batch of points onto their closest skeleton segments.

    For each input point the segment minimizing the model distance is
    selected; ties go to the lowest segment index.
    """
    P = _as_points(points)
    npts = P.shape[0]
    best_d = np.full(npts, np.inf)
    best_seg = np.zeros(npts, dtype=np.intp)
    best_raw = np.zeros(npts)
    best_cl = np.zeros(npts)
    best_r = np.zeros(npts)
    pts, radii = skel.points, skel.radii
    for i in range(skel.segment_count):
        raw, cl, dist, rad = _eval_segment(
            P, pts[i], pts[i + 1], radii[i], radii[i + 1], model
        )
        better = dist < best_d
        if np.any(better):
            best_d[better] = dist[better]
            best_seg[better] = i
            best_raw[better] = raw[better]
            best_cl[better] = cl[better]
            best_r[better] = rad[better]
    return PointProjection(best_seg, best_raw, best_cl, best_d, best_r)


def project_to_segment(
    point,
    skel: Skeleton,
    segment_index: int,
    model: DistanceModel = DistanceModel.SIMPLIFIED,
) -> SegmentQuery:
    """Project one point onto one specific segment (no minimization)."""
    if not 0 <= segment_index < skel.segment_count:
        raise IndexError(
            f"segment index {segment_index} outside [0, {skel.segment_count - 1}]"
        )
    P = _as_points(point)
    pts, radii = skel.points, skel.radii
    i = segment_index
    raw, cl, dist, rad = _eval_segment(
        P, pts[i], pts[i + 1], radii[i], radii[i + 1], model
    )
    return SegmentQuery(i, float(raw[0]), float(cl[0]), float(dist[0]), float(rad[0]))


def distance_to_skeleton(
    point, skel: Skeleton, model: DistanceModel = DistanceModel.SIMPLIFIED
) -> SegmentQuery:
    """Query of the segment closest to ``point`` (lowest index wins ties)."""
    return project_points(point, skel, model).query(0)


def dilation_contains(
    point, skel: Skeleton, model: DistanceModel = DistanceModel.SIMPLIFIED
) -> bool:
    """Whether a point lies inside the dilation (boundary included)."""
    q = distance_to_skeleton(point, skel, model)
    return q.distance <= q.interp_radius


def _node_bbox(skel: Skeleton, margin: float) -> tuple[float, float, float, float]:
    pts = skel.points
    return (
        float(pts[:, 0].min() - margin),
        float(pts[:, 0].max() + margin),
        float(pts[:, 1].min() - margin),
        float(pts[:, 1].max() + margin),
    )


def rasterize_dilation(
    skel: Skeleton,
    width: int,
    height: int,
    model: DistanceModel = DistanceModel.SIMPLIFIED,
) -> np.ndarray:
    """Boolean (height, width) mask of pixels whose centers fall inside the
    dilation.  Only the skeleton bounding box inflated by the maximum radius
    plus 2 px is evaluated; everything else is false."""
    if width <= 0 or height <= 0:
        raise ValueError("mask dimensions must be positive")
    mask = np.zeros((height, width), dtype=bool)
    margin = float(skel.radii.max()) + 2.0
    xmin, xmax, ymin, ymax = _node_bbox(skel, margin)
    c0 = max(0, int(math.ceil(xmin - 0.5)))
    c1 = min(width - 1, int(math.floor(xmax - 0.5)))
    r0 = max(0, int(math.ceil(ymin - 0.5)))
    r1 = min(height - 1, int(math.floor(ymax - 0.5)))
    if c0 > c1 or r0 > r1:
        return mask
    xs = np.arange(c0, c1 + 1) + 0.5
    ys = np.arange(r0, r1 + 1) + 0.5
    gx, gy = np.meshgrid(xs, ys)
    proj = project_points(np.column_stack([gx.ravel(), gy.ravel()]), skel, model)
    inside = (proj.distance <= proj.interp_radius).reshape(gy.shape)
    mask[r0 : r1 + 1, c0 : c1 + 1] = inside
    return mask


@dataclass(frozen=True, eq=False)
class Contour:
    """Sampled curve, optionally closed (last point implicitly joins the
    first).  Closed contours need at least 3 points."""

    points: np.ndarray
    closed: bool = True

    def __post_init__(self) -> None:
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError("contour points must form an (m, 2) array")
        if self.closed and pts.shape[0] < 3:
            raise ValueError("a closed contour needs at least 3 points")
        if pts.shape[0] < 1:
            raise ValueError("a contour cannot be empty")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]

    def arc_length(self) -> float:
        pts = self.points
        if self.closed:
            pts = np.vstack([pts, pts[:1]])
        seg = np.diff(pts, axis=0)
        return float(np.hypot(seg[:, 0], seg[:, 1]).sum())


def _resample_closed(pts: np.ndarray, spacing: float) -> np.ndarray:
    loop = np.vstack([pts, pts[:1]])
    seg = np.diff(loop, axis=0)
    slen = np.hypot(seg[:, 0], seg[:, 1])
    cum = np.concatenate([[0.0], np.cumsum(slen)])
    total = cum[-1]
    m = max(8, int(round(total / spacing)))
    t = np.linspace(0.0, total, m, endpoint=False)
    x = np.interp(t, cum, loop[:, 0])
    y = np.interp(t, cum, loop[:, 1])
    return np.column_stack([x, y])


def dilation_outline(
    skel: Skeleton,
    model: DistanceModel = DistanceModel.SIMPLIFIED,
    step: float = 0.5,
) -> Contour:
    """Closed contour sampling the dilation boundary at ~``step`` spacing.

    The boundary is the zero level of distance minus interpolated radius,
    extracted by marching squares on a sub-pixel grid of half the requested
    spacing and then resampled uniformly by arc length.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    g = step / 2.0
    margin = float(skel.radii.max()) + 2.0 + 2.0 * g
    xmin, xmax, ymin, ymax = _node_bbox(skel, margin)
    nx = int(math.ceil((xmax - xmin) / g)) + 1
    ny = int(math.ceil((ymax - ymin) / g)) + 1
    xs = xmin + g * np.arange(nx)
    ys = ymin + g * np.arange(ny)
    gx, gy = np.meshgrid(xs, ys)
    proj = project_points(np.column_stack([gx.ravel(), gy.ravel()]), skel, model)
    F = (proj.distance - proj.interp_radius).reshape(ny, nx)
    loops = find_contours(F, 0.0)
    if not loops:
        raise RuntimeError("no boundary found; skeleton dilation is degenerate")

    def to_xy(c):
        return np.column_stack([xmin + c[:, 1] * g, ymin + c[:, 0] * g])

    best = None
    best_len = -1.0
    for c in loops:
        xy = to_xy(c)
        if np.allclose(xy[0], xy[-1]):
            xy = xy[:-1]
        if xy.shape[0] < 3:
            continue
        ln = Contour(xy, closed=True).arc_length()
        if ln > best_len:
            best_len = ln
            best = xy
    if best is None:
        raise RuntimeError("boundary extraction produced no usable loop")
    return Contour(_resample_closed(best, step), closed=True)
