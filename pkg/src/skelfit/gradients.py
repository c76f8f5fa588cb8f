"""Analytic derivatives of the energy terms and a finite-difference oracle.

Every energy term is differentiated with respect to node coordinates and
radii by chain rule through the exact quantities the energy evaluates
(clamped projections, shifted feet under the oriented model, weighted
means).  At non-smooth points (projection clamping, minimizing-segment
switches, median ties) the branch taken at the evaluation point is frozen,
which amounts to a subgradient choice.  All formulas are validated against
central finite differences of the implemented energies; where condensed
closed forms exist elsewhere they were re-derived from scratch because the
finite-difference check is authoritative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .energy import (
    Colony,
    EnergyParams,
    ImageGrid,
    _data_fields,
    pixel_select_deriv,
)
from .geometry import DistanceModel, Skeleton, project_points

__all__ = [
    "GradientField",
    "fd_gradient",
    "grad_curvature",
    "grad_data",
    "grad_homogeneity",
    "grad_repulsion",
    "grad_total",
]

_EPS = 1e-12

# column layout of the per-point partial-derivative table
_AX, _AY, _BX, _BY, _RA, _RB, _QX, _QY = range(8)


@dataclass(frozen=True, eq=False)
class GradientField:
    """Per-node partial derivatives for every skeleton of a colony.

    ``arrays[k]`` has shape (n_k, 3) holding (dE/dx, dE/dy, dE/dr) for each
    node of skeleton k.
    """

    arrays: tuple[np.ndarray, ...]

    @classmethod
    def zeros(cls, colony: Colony) -> "GradientField":
        return cls(tuple(np.zeros((s.n, 3)) for s in colony))

    def __add__(self, other: "GradientField") -> "GradientField":
        return GradientField(tuple(a + b for a, b in zip(self.arrays, other.arrays)))

    def scaled(self, factor: float) -> "GradientField":
        return GradientField(tuple(factor * a for a in self.arrays))

    def max_abs(self) -> float:
        return max(float(np.abs(a).max()) for a in self.arrays)

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays)


def _segment_partials(P, a, b, ra, rb, model, need_query=False):
    """Partial derivatives of (distance - interpolated radius) at each point
    of ``P`` with respect to the segment parameters.

    Columns: d/d(ax, ay, bx, by, ra, rb) and, when requested, d/d(qx, qy)
    for the query point itself.  Branches are frozen at the evaluated
    state; points coinciding with the segment get zero position partials.
    """
    npts = P.shape[0]
    out = np.zeros((npts, 8))
    e = b - a
    ex, ey = float(e[0]), float(e[1])
    L2 = ex * ex + ey * ey
    L = math.sqrt(L2)
    dr = float(rb - ra)
    v = P - a
    lam1 = (v @ e) / L2
    lam_e = np.clip(lam1, 0.0, 1.0)
    wx = v[:, 0] - lam_e * ex
    wy = v[:, 1] - lam_e * ey
    de = np.hypot(wx, wy)
    inv_de = np.where(de > _EPS, 1.0 / np.maximum(de, _EPS), 0.0)

    lo1 = lam1 <= 0.0
    hi1 = lam1 >= 1.0
    mid1 = ~(lo1 | hi1)
    # distance partials: classic clamped-projection chain rule; the node
    # weights reduce to the endpoint unit vector in the clamped regimes
    coef_a = np.where(lo1, 1.0, np.where(hi1, 0.0, 1.0 - lam1))
    coef_b = 1.0 - coef_a
    dde = {
        _AX: -coef_a * wx * inv_de,
        _AY: -coef_a * wy * inv_de,
        _BX: -coef_b * wx * inv_de,
        _BY: -coef_b * wy * inv_de,
    }
    dlam1 = {
        _AX: (a[0] - P[:, 0] + (2.0 * lam1 - 1.0) * ex) / L2,
        _AY: (a[1] - P[:, 1] + (2.0 * lam1 - 1.0) * ey) / L2,
        _BX: (P[:, 0] - a[0] - 2.0 * lam1 * ex) / L2,
        _BY: (P[:, 1] - a[1] - 2.0 * lam1 * ey) / L2,
    }

    if model is DistanceModel.SIMPLIFIED:
        for col in (_AX, _AY, _BX, _BY):
            out[:, col] = dde[col] - np.where(mid1, dr * dlam1[col], 0.0)
        out[:, _RA] = -np.where(mid1, 1.0 - lam1, np.where(lo1, 1.0, 0.0))
        out[:, _RB] = -np.where(mid1, lam1, np.where(hi1, 1.0, 0.0))
        if need_query:
            out[:, _QX] = wx * inv_de - np.where(mid1, dr * ex / L2, 0.0)
            out[:, _QY] = wy * inv_de - np.where(mid1, dr * ey / L2, 0.0)
        return out

    # oriented model: the foot shifts along the segment by
    # lam_t = de * dr / (L * sqrt(L^2 - dr^2)) before clamping
    swallowed = abs(dr) >= L
    if swallowed:
        lam2 = np.full(npts, 1.0 if dr > 0 else 0.0)
        dlam2 = {col: np.zeros(npts) for col in range(8)}
    else:
        S2 = L2 - dr * dr
        S = math.sqrt(S2)
        lam_t = de * dr / (L * S)
        dL = {_AX: -ex / L, _AY: -ey / L, _BX: ex / L, _BY: ey / L}
        dlam2 = {}
        for col in (_AX, _AY, _BX, _BY):
            dS = L * dL[col] / S
            dlam_t = dr * dde[col] / (L * S) - lam_t * (dL[col] / L + dS / S)
            dlam2[col] = dlam1[col] + dlam_t
        # radius partials: dr shifts by -1 (ra) or +1 (rb), which also moves
        # S = sqrt(L^2 - dr^2)
        for col, ddr in ((_RA, -1.0), (_RB, 1.0)):
            dS = -dr * ddr / S
            dlam2[col] = de * ddr / (L * S) - lam_t * (dS / S)
        if need_query:
            dlam2[_QX] = ex / L2 + dr / (L * S) * wx * inv_de
            dlam2[_QY] = ey / L2 + dr / (L * S) * wy * inv_de
        lam2 = lam1 + lam_t

    lo2 = lam2 <= 0.0
    hi2 = lam2 >= 1.0
    mid2 = ~(lo2 | hi2)
    lam_o = np.clip(lam2, 0.0, 1.0)
    ux = v[:, 0] - lam_o * ex
    uy = v[:, 1] - lam_o * ey
    do = np.hypot(ux, uy)
    inv_do = np.where(do > _EPS, 1.0 / np.maximum(do, _EPS), 0.0)
    ue = ux * ex + uy * ey

    ddo = {}
    drt = {}
    for col in (_AX, _AY, _BX, _BY, _RA, _RB) + ((_QX, _QY) if need_query else ()):
        ddo[col] = np.zeros(npts)
        drt[col] = np.zeros(npts)
    if np.any(mid2):
        m = mid2
        lam2m = lam2[m]
        dl = {col: dlam2[col][m] if np.ndim(dlam2[col]) else dlam2[col]
              for col in dlam2}
        ddo[_AX][m] = (-(1.0 - lam2m) * ux[m] - ue[m] * dl[_AX]) * inv_do[m]
        ddo[_AY][m] = (-(1.0 - lam2m) * uy[m] - ue[m] * dl[_AY]) * inv_do[m]
        ddo[_BX][m] = (-lam2m * ux[m] - ue[m] * dl[_BX]) * inv_do[m]
        ddo[_BY][m] = (-lam2m * uy[m] - ue[m] * dl[_BY]) * inv_do[m]
        ddo[_RA][m] = -ue[m] * dl[_RA] * inv_do[m]
        ddo[_RB][m] = -ue[m] * dl[_RB] * inv_do[m]
        for col in (_AX, _AY, _BX, _BY):
            drt[col][m] = dr * dl[col]
        drt[_RA][m] = 1.0 + dr * dl[_RA] - lam2m
        drt[_RB][m] = dr * dl[_RB] + lam2m
        if need_query:
            ddo[_QX][m] = (ux[m] - ue[m] * dl[_QX]) * inv_do[m]
            ddo[_QY][m] = (uy[m] - ue[m] * dl[_QY]) * inv_do[m]
            drt[_QX][m] = dr * dl[_QX]
            drt[_QY][m] = dr * dl[_QY]
    if np.any(lo2):
        m = lo2
        ddo[_AX][m] = -v[m, 0] * inv_do[m]
        ddo[_AY][m] = -v[m, 1] * inv_do[m]
        drt[_RA][m] = 1.0
        if need_query:
            ddo[_QX][m] = v[m, 0] * inv_do[m]
            ddo[_QY][m] = v[m, 1] * inv_do[m]
    if np.any(hi2):
        m = hi2
        ddo[_BX][m] = -(P[m, 0] - b[0]) * inv_do[m]
        ddo[_BY][m] = -(P[m, 1] - b[1]) * inv_do[m]
        drt[_RB][m] = 1.0
        if need_query:
            ddo[_QX][m] = (P[m, 0] - b[0]) * inv_do[m]
            ddo[_QY][m] = (P[m, 1] - b[1]) * inv_do[m]
    for col in ddo:
        out[:, col] = ddo[col] - drt[col]
    return out


def _scatter_segment_partials(points, skel, seg_index, coeff, model, out):
    """Accumulate coeff-weighted surface partials into per-node slots."""
    pts, radii = skel.points, skel.radii
    for i in range(skel.segment_count):
        rows = seg_index == i
        if not np.any(rows):
            continue
        tab = _segment_partials(
            points[rows], pts[i], pts[i + 1], radii[i], radii[i + 1], model
        )
        c = coeff[rows]
        out[i, 0] += float(c @ tab[:, _AX])
        out[i, 1] += float(c @ tab[:, _AY])
        out[i, 2] += float(c @ tab[:, _RA])
        out[i + 1, 0] += float(c @ tab[:, _BX])
        out[i + 1, 1] += float(c @ tab[:, _BY])
        out[i + 1, 2] += float(c @ tab[:, _RB])


def grad_data(img: ImageGrid, skel: Skeleton, params: EnergyParams) -> np.ndarray:
    """(n, 3) gradient of the data term of one skeleton.

    Only pixels in the soft transition band contribute: elsewhere the
    selection weight is flat and its derivative vanishes.
    """
    f = _data_fields(img, skel, params)
    out = np.zeros((skel.n, 3))
    phi = pixel_select_deriv(f.margin)
    active = phi > 0.0
    if not np.any(active):
        return out
    coeff = np.zeros(len(f.margin))
    if f.inside_weight > 0:
        coeff -= (
            params.inside_coefficient
            * phi
            * (f.contrast_values - f.inside_mean)
            / f.inside_weight
        )
    if f.outside_weight > 0:
        ring_term = phi * (f.contrast_values - f.outside_mean) / f.outside_weight
        coeff -= np.where(f.ring_mask, ring_term, 0.0)
    active &= coeff != 0.0
    _scatter_segment_partials(
        f.points[active],
        skel,
        f.projection.segment_index[active],
        coeff[active],
        params.model,
        out,
    )
    return out


def grad_curvature(skel: Skeleton) -> np.ndarray:
    """(n, 3) gradient of the squared-sine curvature penalty.

    Radius entries are identically zero; each node collects contributions
    from the up-to-three turn angles it participates in.
    """
    out = np.zeros((skel.n, 3))
    if skel.n < 3:
        return out
    pts = skel.points
    seg = np.diff(pts, axis=0)
    u, w = seg[:-1], seg[1:]               # angle j sits at node j+1
    cross = u[:, 0] * w[:, 1] - u[:, 1] * w[:, 0]
    Bu = np.hypot(u[:, 0], u[:, 1])
    Bw = np.hypot(w[:, 0], w[:, 1])
    B = Bu * Bw
    s = cross / B
    scale = 2.0 * s / (B * B)              # d(s^2)/dθ = scale * (dA·B − A·dB)
    dA_du = np.column_stack([w[:, 1], -w[:, 0]])
    dA_dw = np.column_stack([-u[:, 1], u[:, 0]])
    dB_du = (u / Bu[:, None]) * Bw[:, None]
    dB_dw = (w / Bw[:, None]) * Bu[:, None]
    g_prev = scale[:, None] * (-dA_du * B[:, None] + cross[:, None] * dB_du)
    g_next = scale[:, None] * (dA_dw * B[:, None] - cross[:, None] * dB_dw)
    g_mid = scale[:, None] * (
        (dA_du - dA_dw) * B[:, None] - cross[:, None] * (dB_du - dB_dw)
    )
    idx = np.arange(len(s))
    np.add.at(out[:, :2], idx, g_prev)
    np.add.at(out[:, :2], idx + 1, g_mid)
    np.add.at(out[:, :2], idx + 2, g_next)
    return out


def grad_homogeneity(skel: Skeleton) -> np.ndarray:
    """(n, 3) gradient of the radius-homogeneity penalty, with the median
    treated as locally constant.  Position entries are identically zero."""
    out = np.zeros((skel.n, 3))
    med = float(np.median(skel.radii))
    out[:, 2] = 2.0 * (skel.radii - med)
    return out


def grad_repulsion(colony: Colony, params: EnergyParams) -> GradientField:
    """Gradient of the repulsion term over the whole colony.

    Each active node/other-skeleton pair contributes to the node itself
    (position through the distance, radius directly) and, by the chain rule
    through the closest point and its interpolated radius, to the nodes
    bounding the minimizing segment of the other skeleton.  A node lying
    exactly on another skeleton keeps its radius gradient but gets a zero
    position gradient (the direction is undefined there).
    """
    field = GradientField.zeros(colony)
    gap = params.effective_gap
    for l, skel_l in enumerate(colony):
        for k, skel_k in enumerate(colony):
            if k == l:
                continue
            proj = project_points(skel_l.points, skel_k, params.model)
            t = proj.distance - skel_l.radii - proj.interp_radius
            fprime = np.where(t < gap, 2.0 * (t - gap), 0.0)
            active = fprime != 0.0
            if not np.any(active):
                continue
            rows = np.flatnonzero(active)
            pts_k, rad_k = skel_k.points, skel_k.radii
            for i in np.unique(proj.segment_index[rows]):
                sub = rows[proj.segment_index[rows] == i]
                tab = _segment_partials(
                    skel_l.points[sub],
                    pts_k[i],
                    pts_k[i + 1],
                    rad_k[i],
                    rad_k[i + 1],
                    params.model,
                    need_query=True,
                )
                c = fprime[sub]
                # own node: margin depends on its position through both the
                # distance and the interpolated radius at the moving foot
                field.arrays[l][sub, 0] += c * tab[:, _QX]
                field.arrays[l][sub, 1] += c * tab[:, _QY]
                field.arrays[l][sub, 2] += -c
                # reaction on the other skeleton's bounding nodes
                field.arrays[k][i, 0] += float(c @ tab[:, _AX])
                field.arrays[k][i, 1] += float(c @ tab[:, _AY])
                field.arrays[k][i, 2] += float(c @ tab[:, _RA])
                field.arrays[k][i + 1, 0] += float(c @ tab[:, _BX])
                field.arrays[k][i + 1, 1] += float(c @ tab[:, _BY])
                field.arrays[k][i + 1, 2] += float(c @ tab[:, _RB])
    return field


def grad_total(img: ImageGrid, colony: Colony, params: EnergyParams) -> GradientField:
    """Weighted sum of the four term gradients over the colony."""
    field = grad_repulsion(colony, params).scaled(params.repulsion_weight)
    for k, skel in enumerate(colony):
        acc = field.arrays[k]
        if params.data_weight != 0.0:
            acc += params.data_weight * grad_data(img, skel, params)
        if params.curvature_weight != 0.0:
            acc += params.curvature_weight * grad_curvature(skel)
        if params.homogeneity_weight != 0.0:
            acc += params.homogeneity_weight * grad_homogeneity(skel)
    return field


def fd_gradient(
    energy: Callable[[Colony], float], colony: Colony, step: float
) -> GradientField:
    """Central-difference gradient of an arbitrary colony energy.

    Perturbs every node coordinate and radius by +-``step`` and evaluates
    the supplied energy callable; exact on quadratics up to roundoff.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    arrays = []
    for k, skel in enumerate(colony):
        grad = np.zeros((skel.n, 3))
        for node in range(skel.n):
            for comp in range(3):
                plus = _perturbed(colony, k, node, comp, step)
                minus = _perturbed(colony, k, node, comp, -step)
                grad[node, comp] = (energy(plus) - energy(minus)) / (2.0 * step)
        arrays.append(grad)
    return GradientField(tuple(arrays))


def _perturbed(colony: Colony, k: int, node: int, comp: int, delta: float):
    skel = colony[k]
    pts = skel.points.copy()
    rad = skel.radii.copy()
    if comp < 2:
        pts[node, comp] += delta
    else:
        rad[node] += delta
    out = list(colony)
    out[k] = skel.with_data(pts, rad)
    return out
