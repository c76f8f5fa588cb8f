"""Energy terms driving skeleton evolution.

The total energy of a colony over an image combines four weighted terms:
a region-contrast data term (mean transformed intensity inside the cell
body versus a surrounding ring), a curvature penalty on the polyline, a
radius-homogeneity penalty, and a soft repulsion between cells.  Everything
is evaluated on pixel centers inside a bounding box inflated enough that
the excluded pixels contribute exactly nothing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .geometry import DistanceModel, PointProjection, Skeleton, project_points

__all__ = [
    "Colony",
    "ColonyEnergy",
    "DataTerm",
    "EnergyBreakdown",
    "EnergyParams",
    "ImageGrid",
    "ZeroWeightError",
    "contrast",
    "curvature_energy",
    "data_energy",
    "homogeneity_energy",
    "pixel_select",
    "pixel_select_deriv",
    "repulsion_energy",
    "total_energy",
]

Colony = Sequence[Skeleton]


class ZeroWeightError(ValueError):
    """The data term has no pixels to average over (skeleton off-grid)."""


@dataclass(frozen=True, eq=False)
class ImageGrid:
    """Grayscale raster with intensities normalized to [0, 1].

    ``pixels`` is indexed [row, col]; pixel (col i, row j) is sampled at
    center (i + 0.5, j + 0.5).
    """

    pixels: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.pixels, dtype=float)
        if arr.ndim != 2 or arr.size == 0:
            raise ValueError("pixels must be a non-empty 2-D array")
        if not np.all(np.isfinite(arr)):
            raise ValueError("pixel intensities must be finite")
        if arr.min() < -1e-12 or arr.max() > 1.0 + 1e-12:
            raise ValueError("pixel intensities must lie in [0, 1]")
        np.clip(arr, 0.0, 1.0, out=arr)
        arr.setflags(write=False)
        object.__setattr__(self, "pixels", arr)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True)
class EnergyParams:
    """Weights and shape parameters of the energy.

    Defaults are the calibrated working point: data 10, curvature 1,
    homogeneity 0.01, repulsion 0.1, ring width 2 px, repulsion gap 0.3 px.
    ``erosion_offset`` is the half-thickness difference between physical
    and as-imaged cells; it widens the effective repulsion gap by twice its
    value (both interacting cells grow by it) and is added back to all radii
    after an eroded optimization.  ``inside_coefficient`` scales the inside
    mean in the data term; values below 1 inflate the recovered cells.
    """

    data_weight: float = 10.0
    curvature_weight: float = 1.0
    homogeneity_weight: float = 0.01
    repulsion_weight: float = 0.1
    ring_width: float = 2.0
    repulsion_gap: float = 0.3
    erosion_offset: float = 0.0
    inside_coefficient: float = 1.0
    model: DistanceModel = DistanceModel.SIMPLIFIED
    contrast_exponent: float = 0.8

    def __post_init__(self) -> None:
        for name in ("data_weight", "curvature_weight", "homogeneity_weight",
                     "repulsion_weight"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.ring_width <= 0:
            raise ValueError("ring_width must be positive")
        if self.repulsion_gap < 0:
            raise ValueError("repulsion_gap must be nonnegative")
        if self.erosion_offset < 0:
            raise ValueError("erosion_offset must be nonnegative")
        if not 0.0 < self.inside_coefficient <= 1.0:
            raise ValueError("inside_coefficient must lie in (0, 1]")
        if self.contrast_exponent <= 0:
            raise ValueError("contrast_exponent must be positive")

    @property
    def effective_gap(self) -> float:
        """Repulsion gap seen by the optimizer: gap + 2 * erosion_offset."""
        return self.repulsion_gap + 2.0 * self.erosion_offset


def pixel_select(t):
    """Smooth 0-to-1 ramp used to softly pick pixels by signed margin.

    Equals (1 + sin(pi t / 2)) / 2 on [-1, 1], 0 below, 1 above.  Satisfies
    pixel_select(t) + pixel_select(-t) = 1 and is continuously
    differentiable everywhere (the slope vanishes at |t| = 1).
    """
    t = np.asarray(t, dtype=float)
    out = np.where(
        t <= -1.0, 0.0,
        np.where(t >= 1.0, 1.0, 0.5 * (1.0 + np.sin(0.5 * math.pi * np.clip(t, -1, 1)))),
    )
    return out if out.ndim else float(out)


def pixel_select_deriv(t):
    """Derivative of :func:`pixel_select`: (pi/4) cos(pi t / 2) on [-1, 1]."""
    t = np.asarray(t, dtype=float)
    inside = np.abs(t) < 1.0
    out = np.where(inside, 0.25 * math.pi * np.cos(0.5 * math.pi * np.clip(t, -1, 1)), 0.0)
    return out if out.ndim else float(out)


def contrast(v, exponent: float = 0.8):
    """Monotone contrast mapping of normalized intensity: sin(pi v / 2)
    raised to ``exponent``.  Inputs are clamped to [0, 1]."""
    v = np.clip(np.asarray(v, dtype=float), 0.0, 1.0)
    out = np.sin(0.5 * math.pi * v) ** exponent
    return out if out.ndim else float(out)


class DataTerm(NamedTuple):
    """Inside/outside weighted means with their weight totals.

    ``value`` is inside_coefficient * inside_mean - outside_mean.  A zero
    weight total marks a degenerate mean (reported as 0).
    """

    inside_mean: float
    outside_mean: float
    value: float
    inside_weight: float
    outside_weight: float


@dataclass(frozen=True, eq=False)
class DataFields:
    """Per-pixel quantities of the data term over a skeleton's evaluation
    box, shared between the energy value and its gradient."""

    points: np.ndarray        # (N, 2) pixel centers
    intensities: np.ndarray   # (N,) raw image values
    contrast_values: np.ndarray
    projection: PointProjection
    margin: np.ndarray        # distance - interpolated radius
    ring_mask: np.ndarray     # margin < ring_width
    inside_mean: float
    outside_mean: float
    inside_weight: float
    outside_weight: float


def _evaluation_box(skel: Skeleton, width: int, height: int, margin: float):
    pts = skel.points
    xmin = pts[:, 0].min() - margin
    xmax = pts[:, 0].max() + margin
    ymin = pts[:, 1].min() - margin
    ymax = pts[:, 1].max() + margin
    c0 = max(0, int(math.ceil(xmin - 0.5)))
    c1 = min(width - 1, int(math.floor(xmax - 0.5)))
    r0 = max(0, int(math.ceil(ymin - 0.5)))
    r1 = min(height - 1, int(math.floor(ymax - 0.5)))
    if c0 > c1 or r0 > r1:
        return None
    return c0, c1, r0, r1


def _data_fields(img: ImageGrid, skel: Skeleton, params: EnergyParams) -> DataFields:
    margin = float(skel.radii.max()) + params.ring_width + 3.0
    box = _evaluation_box(skel, img.width, img.height, margin)
    if box is None:
        raise ZeroWeightError("skeleton evaluation box does not meet the image")
    c0, c1, r0, r1 = box
    xs = np.arange(c0, c1 + 1) + 0.5
    ys = np.arange(r0, r1 + 1) + 0.5
    gx, gy = np.meshgrid(xs, ys)
    P = np.column_stack([gx.ravel(), gy.ravel()])
    u = img.pixels[r0 : r1 + 1, c0 : c1 + 1].ravel()
    proj = project_points(P, skel, params.model)
    g = proj.distance - proj.interp_radius
    fc = contrast(u, params.contrast_exponent)
    w_in = pixel_select(-g)
    d_in = float(w_in.sum())
    e_in = float((w_in * fc).sum() / d_in) if d_in > 0 else 0.0
    ring = g < params.ring_width
    w_out = pixel_select(g[ring])
    d_out = float(w_out.sum())
    e_out = float((w_out * fc[ring]).sum() / d_out) if d_out > 0 else 0.0
    return DataFields(P, u, fc, proj, g, ring, e_in, e_out, d_in, d_out)


def data_energy(img: ImageGrid, skel: Skeleton, params: EnergyParams) -> DataTerm:
    """Region-contrast data term of one skeleton.

    Inside mean: pixel_select(radius - distance)-weighted mean of the
    contrast-mapped intensity.  Outside mean: the mirrored weight over the
    ring ``distance - radius < ring_width``.  Both are ratios of weighted
    sums; a zero denominator yields mean 0 (flagged by the weight field).
    """
    f = _data_fields(img, skel, params)
    value = params.inside_coefficient * f.inside_mean - f.outside_mean
    return DataTerm(f.inside_mean, f.outside_mean, value,
                    f.inside_weight, f.outside_weight)


def curvature_energy(skel: Skeleton) -> float:
    """Sum of squared sines of the turn angles at interior nodes."""
    if skel.n < 3:
        return 0.0
    seg = np.diff(skel.points, axis=0)
    u, w = seg[:-1], seg[1:]
    cross = u[:, 0] * w[:, 1] - u[:, 1] * w[:, 0]
    denom = np.hypot(u[:, 0], u[:, 1]) * np.hypot(w[:, 0], w[:, 1])
    s = cross / denom
    return float(np.sum(s * s))


def homogeneity_energy(skel: Skeleton) -> float:
    """Sum of squared radius deviations from the median radius."""
    med = float(np.median(skel.radii))
    dev = skel.radii - med
    return float(np.sum(dev * dev))


def _repulsion_penalty(t: np.ndarray, gap: float) -> np.ndarray:
    short = t < gap
    out = np.zeros_like(t)
    out[short] = (t[short] - gap) ** 2
    return out


def repulsion_terms(colony: Colony, params: EnergyParams) -> np.ndarray:
    """Per-skeleton repulsion contributions (terms generated by each
    skeleton's nodes against every other skeleton)."""
    gap = params.effective_gap
    out = np.zeros(len(colony))
    for l, skel_l in enumerate(colony):
        total = 0.0
        for k, skel_k in enumerate(colony):
            if k == l:
                continue
            proj = project_points(skel_l.points, skel_k, params.model)
            t = proj.distance - skel_l.radii - proj.interp_radius
            total += float(_repulsion_penalty(t, gap).sum())
        out[l] = total
    return out


def repulsion_energy(colony: Colony, params: EnergyParams) -> float:
    """Quadratic penalty on node-to-other-cell margins below the effective
    gap.  Zero for a single skeleton or well-separated cells."""
    if len(colony) == 0:
        raise ValueError("colony must contain at least one skeleton")
    return float(repulsion_terms(colony, params).sum())


@dataclass(frozen=True)
class EnergyBreakdown:
    """Per-skeleton term values plus the weighted total."""

    inside_mean: float
    outside_mean: float
    data: float
    curvature: float
    homogeneity: float
    repulsion: float
    total: float


class ColonyEnergy(NamedTuple):
    per_skeleton: tuple[EnergyBreakdown, ...]
    total: float


def total_energy(img: ImageGrid, colony: Colony, params: EnergyParams) -> ColonyEnergy:
    """Weighted total energy of the colony with per-skeleton breakdowns.

    Repulsion terms are attributed to the skeleton whose nodes generate
    them; the grand total is the sum of the per-skeleton totals.
    """
    if len(colony) == 0:
        raise ValueError("colony must contain at least one skeleton")
    rep = repulsion_terms(colony, params)
    breakdowns = []
    grand = 0.0
    for skel, e_rep in zip(colony, rep):
        d = data_energy(img, skel, params)
        e_curv = curvature_energy(skel)
        e_homog = homogeneity_energy(skel)
        total = (
            params.data_weight * d.value
            + params.curvature_weight * e_curv
            + params.homogeneity_weight * e_homog
            + params.repulsion_weight * float(e_rep)
        )
        breakdowns.append(
            EnergyBreakdown(d.inside_mean, d.outside_mean, d.value,
                            e_curv, e_homog, float(e_rep), total)
        )
        grand += total
    return ColonyEnergy(tuple(breakdowns), grand)
