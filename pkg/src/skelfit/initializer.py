"""Initial skeletons from binary cell masks.

The pipeline per connected component: topology-preserving thinning to a
1-px skeleton, longest-geodesic-path extraction (branches are pruned since
the model is a single open polyline), angle-based vectorization starting
from the endpoint farthest from the gravity center, spline smoothing and
uniform arc-length resampling, and a constant initial radius equal to the
smallest distance-transform value sampled along the resampled nodes.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.interpolate import CubicSpline
from skimage.morphology import skeletonize

from .geometry import Skeleton

__all__ = [
    "BinaryMask",
    "MaskTooSmallError",
    "PixelChain",
    "build_initial_colony",
    "build_initial_skeleton",
    "medial_axis",
    "vectorize",
]

_EIGHT = np.ones((3, 3), dtype=int)
# chord length over which the reference direction of a vectorization run is
# locked; shorter levers are dominated by pixel quantization
_LOCK_LENGTH = 5.0


class MaskTooSmallError(ValueError):
    """The mask component is too small to carry a skeleton."""


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """Boolean raster, indexed [row, col] like :class:`ImageGrid` pixels."""

    bits: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.bits, dtype=bool)
        if arr.ndim != 2 or arr.size == 0:
            raise ValueError("mask bits must form a non-empty 2-D array")
        arr.setflags(write=False)
        object.__setattr__(self, "bits", arr)

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]


@dataclass(frozen=True, eq=False)
class PixelChain:
    """Ordered 8-connected run of pixel coordinates, stored as (x, y) =
    (col, row) integer pairs without repeats."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.pixels, dtype=np.intp)
        if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 1:
            raise ValueError("chain pixels must form a (k, 2) array")
        if len({(int(x), int(y)) for x, y in arr}) != arr.shape[0]:
            raise ValueError("chain pixels must not repeat")
        steps = np.abs(np.diff(arr, axis=0))
        if steps.size and (steps.max() > 1 or np.any(steps.sum(axis=1) == 0)):
            raise ValueError("consecutive chain pixels must be 8-neighbors")
        arr.setflags(write=False)
        object.__setattr__(self, "pixels", arr)

    def __len__(self) -> int:
        return self.pixels.shape[0]


def _longest_path(coords: np.ndarray) -> np.ndarray:
    """Longest geodesic path (by hop count) through an 8-connected pixel
    set, via double BFS.  ``coords`` is (k, 2) in (row, col)."""
    index = {(int(r), int(c)): i for i, (r, c) in enumerate(coords)}

    def neighbors(i):
        r, c = coords[i]
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                if dr == 0 and dc == 0:
                    continue
                j = index.get((int(r) + dr, int(c) + dc))
                if j is not None:
                    yield j

    def bfs(start):
        parent = {start: -1}
        queue = deque([start])
        last = start
        while queue:
            i = queue.popleft()
            last = i
            for j in neighbors(i):
                if j not in parent:
                    parent[j] = i
                    queue.append(j)
        return last, parent

    far, _ = bfs(0)
    end, parent = bfs(far)
    path = []
    i = end
    while i != -1:
        path.append(i)
        i = parent[i]
    return coords[np.array(path[::-1])]


def medial_axis(mask: BinaryMask) -> tuple[list[PixelChain], np.ndarray]:
    """Thin every component of the mask to a pixel chain and compute the
    exact Euclidean distance transform.

    Pixels outside the raster count as background for the transform.
    Branched thinning results are reduced to their longest geodesic path.
    Chains are returned in component-label order.
    """
    bits = mask.bits
    if not bits.any():
        raise ValueError("mask has no foreground pixels")
    padded = np.zeros((bits.shape[0] + 2, bits.shape[1] + 2), dtype=bool)
    padded[1:-1, 1:-1] = bits
    dist = ndimage.distance_transform_edt(padded)[1:-1, 1:-1]
    thin = skeletonize(bits)
    labels, count = ndimage.label(thin, structure=_EIGHT)
    chains = []
    for lab in range(1, count + 1):
        coords = np.argwhere(labels == lab)  # (k, 2) in (row, col)
        path = coords if coords.shape[0] == 1 else _longest_path(coords)
        chains.append(PixelChain(path[:, ::-1]))  # to (x, y)
    return chains, dist


def _angle_diff(a: float, b: float) -> float:
    d = a - b
    while d > math.pi:
        d -= 2.0 * math.pi
    while d < -math.pi:
        d += 2.0 * math.pi
    return abs(d)


def vectorize(chain: PixelChain, angle_tol: float = 15.0) -> np.ndarray:
    """Greedy angle-based split of a pixel chain into a polyline.

    Walks from the chain endpoint farthest from the gravity center and
    extends the current segment while the chord direction stays within
    ``angle_tol`` degrees of the direction locked early in the run; on a
    violation the vertex is placed at the run's point of maximum deviation
    from the chord.  Returns an (m, 2) float array of vertices at pixel
    centers; endpoints are always kept.
    """
    if len(chain) < 2:
        raise ValueError("chain must contain at least 2 pixels")
    pts = chain.pixels.astype(float) + 0.5
    center = pts.mean(axis=0)
    if np.linalg.norm(pts[-1] - center) > np.linalg.norm(pts[0] - center):
        pts = pts[::-1]
    tol = math.radians(angle_tol)
    vertices = [0]
    anchor = 0
    ref_dir = None
    k = 1
    while k < len(pts):
        chord = pts[k] - pts[anchor]
        clen = float(np.hypot(chord[0], chord[1]))
        if clen >= _LOCK_LENGTH:
            direction = math.atan2(chord[1], chord[0])
            if ref_dir is None:
                ref_dir = direction
            elif _angle_diff(direction, ref_dir) > tol:
                run = pts[anchor : k + 1] - pts[anchor]
                dev = np.abs(run[:, 0] * chord[1] - run[:, 1] * chord[0]) / clen
                split = anchor + int(np.argmax(dev))
                if split == anchor:
                    split = k - 1
                vertices.append(split)
                anchor = split
                ref_dir = None
                k = split + 1
                continue
        k += 1
    if vertices[-1] != len(pts) - 1:
        vertices.append(len(pts) - 1)
    return pts[np.array(vertices)]


def _resample_polyline(verts: np.ndarray, spacing: float) -> np.ndarray:
    """Fit a natural cubic spline through the vertices (chord-length
    parametrized) and sample it uniformly by arc length, with at least 4
    output nodes."""
    seg = np.diff(verts, axis=0)
    chord = np.concatenate([[0.0], np.cumsum(np.hypot(seg[:, 0], seg[:, 1]))])
    if verts.shape[0] >= 3:
        sx = CubicSpline(chord, verts[:, 0], bc_type="natural")
        sy = CubicSpline(chord, verts[:, 1], bc_type="natural")
        t = np.linspace(0.0, chord[-1], max(50 * verts.shape[0], 200))
        dense = np.column_stack([sx(t), sy(t)])
    else:
        t = np.linspace(0.0, chord[-1], 200)
        dense = np.column_stack(
            [np.interp(t, chord, verts[:, 0]), np.interp(t, chord, verts[:, 1])]
        )
    dseg = np.diff(dense, axis=0)
    arc = np.concatenate([[0.0], np.cumsum(np.hypot(dseg[:, 0], dseg[:, 1]))])
    total = arc[-1]
    intervals = max(3, int(round(total / spacing)))
    targets = np.linspace(0.0, total, intervals + 1)
    return np.column_stack(
        [np.interp(targets, arc, dense[:, 0]), np.interp(targets, arc, dense[:, 1])]
    )


def _sample_distance(dist: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    coords = np.vstack([nodes[:, 1] - 0.5, nodes[:, 0] - 0.5])  # (row, col)
    return ndimage.map_coordinates(dist, coords, order=1, mode="nearest")


def _principal_direction(coords_rc: np.ndarray) -> np.ndarray:
    centered = coords_rc - coords_rc.mean(axis=0)
    if centered.shape[0] < 2:
        return np.array([1.0, 0.0])
    _, _, vt = np.linalg.svd(centered[:, ::-1], full_matrices=False)
    return vt[0]


def _skeleton_from_chain(
    chain: PixelChain,
    dist: np.ndarray,
    component: np.ndarray,
    spacing: float,
    angle_tol: float,
    label: str,
) -> Skeleton:
    rows = np.argwhere(component)
    extent = rows.max(axis=0) - rows.min(axis=0) + 1
    if extent.max() < 4:
        raise MaskTooSmallError("mask component is under 4 px across")
    if len(chain) >= 2:
        verts = vectorize(chain, angle_tol)
    else:
        # single-pixel skeleton (round component): seed a short stub along
        # the component's principal axis
        p = chain.pixels[0].astype(float) + 0.5
        direction = _principal_direction(rows)
        verts = np.vstack([p - 0.75 * direction, p + 0.75 * direction])
    nodes = _resample_polyline(verts, spacing)
    radii_samples = _sample_distance(dist, nodes)
    if radii_samples.min() < 1.0:
        # spline overshoot left a node on the rim; fall back to sampling the
        # raw chain, which lies inside the mask by construction
        nodes = _resample_polyline(chain.pixels.astype(float) + 0.5, spacing)
        radii_samples = _sample_distance(dist, nodes)
    radius = max(float(radii_samples.min()), 0.5)
    return Skeleton(nodes, np.full(nodes.shape[0], radius), label)


def build_initial_colony(
    mask: BinaryMask, spacing: float = 8.0, angle_tol: float = 15.0
) -> list[Skeleton]:
    """One initial skeleton per mask component, in component-label order.

    Every skeleton has at least 4 nodes spaced roughly ``spacing`` px apart
    and a constant radius, the minimal contact radius of its component.
    """
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    chains, dist = medial_axis(mask)
    labels, _ = ndimage.label(mask.bits, structure=_EIGHT)
    out = []
    for idx, chain in enumerate(chains):
        x, y = chain.pixels[0]
        component = labels == labels[int(y), int(x)]
        try:
            out.append(
                _skeleton_from_chain(chain, dist, component, spacing, angle_tol, str(idx))
            )
        except MaskTooSmallError:
            continue
    if not out:
        raise MaskTooSmallError("no mask component is at least 4 px across")
    return out


def build_initial_skeleton(
    mask: BinaryMask, spacing: float = 8.0, angle_tol: float = 15.0
) -> Skeleton:
    """Initial skeleton of the largest mask component."""
    colony = build_initial_colony(mask, spacing, angle_tol)
    return max(colony, key=lambda s: s.arc_length())
