"""Shortest probe-to-cavity-to-boundary broken paths and their minimizers.

The central quantity is the broken-path length
``len(p, x, y) = |p - x| + |x - y|`` for a probe p outside the body, x on
the cavity surface and y on the outer boundary.  This module finds the
global minimum over the product of the two surfaces, classifies every
minimizing pair by the sign pattern of the cavity normal against the probe
and boundary directions, builds the 4x4 second-derivative matrix in graph
charts, and evaluates the curvature conditions that certify minimizers as
non-degenerate.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.spatial.distance import cdist

from .errors import ConfigurationError, DomainError
from .geometry import (
    LocalChart,
    QuadratureMesh,
    Surface,
    build_quadrature,
    spheroid_apex_curvature,
    standard_chart,
    weingarten,
)

# Relative tie tolerance: pairs within this of the best length all "attain"
# the minimum.
TIE_RTOL = 1e-6
# Distinct minimizers are clustered at this fraction of the outer diameter.
CLUSTER_RTOL = 1e-3


class CriticalClass(str, Enum):
    """Sign classes of minimizing pairs (wire labels kept short)."""

    REFLECTION = "M1"        # normal faces both the probe and the exit leg
    PASS_FRONT = "M2plus"    # probe side lit, boundary side dark
    PASS_BACK = "M2minus"    # probe side dark, boundary side lit
    GRAZING = "Mg"           # probe direction tangent within tolerance


def broken_length(p, x, y) -> float:
    """|p - x| + |x - y|, vectorized over leading axes."""
    p, x, y = (np.asarray(v, float) for v in (p, x, y))
    return np.linalg.norm(p - x, axis=-1) + np.linalg.norm(x - y, axis=-1)


@dataclass
class CriticalPoint:
    x0: np.ndarray
    y0: np.ndarray
    cls: CriticalClass
    hessian: np.ndarray          # 4x4, graph charts at (x0, y0)
    det_hessian: float
    length: float
    weight: float                # geometric amplitude weight of this pair

    def to_dict(self) -> dict:
        return {
            "x0": self.x0.tolist(),
            "y0": self.y0.tolist(),
            "class": self.cls.value,
            "det_hessian": self.det_hessian,
            "weight": self.weight,
            "length": self.length,
        }


@dataclass
class MinimizerSet:
    l_value: float
    points: list
    counts: tuple                # (reflection count, pass-through pair count)

    def by_class(self, cls: CriticalClass) -> list:
        return [q for q in self.points if q.cls is cls]

    def to_json(self) -> str:
        return json.dumps(
            {
                "l_value": self.l_value,
                "counts": {"reflection": self.counts[0], "pass_pairs": self.counts[1]},
                "points": [q.to_dict() for q in self.points],
            },
            indent=2,
        )


def reflection_weight(x, nu_x, y, p, sign: int = +1) -> float:
    """Geometric weight 1/(|x-p||x-y|) * nu_x . ((p-x)/|p-x| +- (y-x)/|y-x|)."""
    x, y, p = (np.asarray(v, float) for v in (x, y, p))
    dp = p - x
    dy = y - x
    np_, ny_ = np.linalg.norm(dp), np.linalg.norm(dy)
    return float(np.dot(nu_x, dp / np_ + sign * dy / ny_) / (np_ * ny_))


def classify_point(
    p,
    x0,
    y0,
    cavity: Surface,
    boundary: Surface,
    sign_tol: float | None = None,
) -> CriticalClass:
    """Sign trichotomy of a minimizing pair.

    The probe-side dot product nu_x.(p-x0) decides between grazing (inside
    the tolerance band) and the lit/dark cases; the boundary-side dot
    product nu_x.(y0-x0) then separates reflection from pass-through.
    """
    p, x0, y0 = (np.asarray(v, float) for v in (p, x0, y0))
    nu = cavity.normal(x0)
    a = float(nu @ (p - x0))
    b = float(nu @ (y0 - x0))
    eps = sign_tol if sign_tol is not None else 1e-6 * np.linalg.norm(p - x0)
    if abs(a) <= eps:
        return CriticalClass.GRAZING
    if a > 0:
        return CriticalClass.REFLECTION if b > 0 else CriticalClass.PASS_FRONT
    # dark probe side with a dark boundary side cannot minimize; fold into
    # the grazing catch-all rather than invent a fifth class
    return CriticalClass.PASS_BACK if b > 0 else CriticalClass.GRAZING


def _length_gradient(p, x, y, chart_x: LocalChart, chart_y: LocalChart):
    u = x - p
    v = x - y
    nu_, nv_ = np.linalg.norm(u), np.linalg.norm(v)
    gx = u / nu_ + v / nv_
    gy = -v / nv_
    return np.array([gx @ chart_x.e1, gx @ chart_x.e2, gy @ chart_y.e1, gy @ chart_y.e2])


def hessian_lp(p, x0, y0, chart_x: LocalChart, chart_y: LocalChart) -> np.ndarray:
    """4x4 second-derivative matrix of the chart representation of the length.

    Valid at any chart base pair, not only at critical points: the curvature
    terms use the charts' second fundamental forms and the ambient Hessians
    of the two distance functions.
    """
    p, x0, y0 = (np.asarray(v, float) for v in (p, x0, y0))
    u = x0 - p
    v = x0 - y0
    nu_, nv_ = np.linalg.norm(u), np.linalg.norm(v)
    uh, vh = u / nu_, v / nv_

    II_x = chart_x.second_fundamental_form()
    II_y = chart_y.second_fundamental_form()
    ex = (chart_x.e1, chart_x.e2)
    ey = (chart_y.e1, chart_y.e2)

    proj_u = (np.eye(3) - np.outer(uh, uh)) / nu_
    proj_v = (np.eye(3) - np.outer(vh, vh)) / nv_

    gx = uh + vh          # ambient x-gradient of the length
    gy = -vh              # ambient y-gradient

    H = np.zeros((4, 4))
    amb_xx = proj_u + proj_v
    for j in range(2):
        for k in range(2):
            H[j, k] = (-(gx @ chart_x.normal) * II_x[j, k]
                       + ex[j] @ amb_xx @ ex[k])
            H[2 + j, 2 + k] = (-(gy @ chart_y.normal) * II_y[j, k]
                               + ey[j] @ proj_v @ ey[k])
            H[j, 2 + k] = H[2 + k, j] = -ex[j] @ proj_v @ ey[k]
    return H


def nondegenerate(cp: CriticalPoint, rtol: float = 1e-9) -> bool:
    """True iff the stored 4x4 matrix is positive definite."""
    eig = np.linalg.eigvalsh(cp.hessian)
    return bool(eig[0] > rtol * max(abs(eig[-1]), 1e-300))


# ---------------------------------------------------------------------------
# Global minimization
# ---------------------------------------------------------------------------


def _refine_pair(p, cavity, boundary, x, y, tol=1e-12, max_iter=60):
    """Damped Newton on the 4-dim chart coordinates, re-centered each step."""
    scale = broken_length(p, x, y)
    for _ in range(max_iter):
        cx = standard_chart(cavity, x)
        cy = standard_chart(boundary, y)
        g = _length_gradient(p, x, y, cx, cy)
        if np.linalg.norm(g) < tol * max(scale, 1.0):
            break
        H = hessian_lp(p, x, y, cx, cy)
        lam = 0.0
        eig_min = np.linalg.eigvalsh(H)[0]
        if eig_min < 1e-10:
            lam = abs(eig_min) + 1e-6
        step = np.linalg.solve(H + lam * np.eye(4), -g)
        # keep steps inside the chart patches
        for sl, chart in ((slice(0, 2), cx), (slice(2, 4), cy)):
            n = np.linalg.norm(step[sl])
            if n > chart.patch_radius:
                step[sl] *= chart.patch_radius / n
        l_old = broken_length(p, x, y)
        t = 1.0
        for _ in range(30):
            xn = cx.point(t * step[0:2])
            yn = cy.point(t * step[2:4])
            if broken_length(p, xn, yn) <= l_old + 1e-15 * scale:
                break
            t *= 0.5
        x, y = xn, yn
    return x, y, float(broken_length(p, x, y))


def minimize_broken_path(
    p,
    cavity: Surface,
    boundary: Surface,
    resolution: int = 24,
    cavity_mesh: QuadratureMesh | None = None,
    boundary_mesh: QuadratureMesh | None = None,
    refine_tol: float = 1e-12,
    sign_tol: float | None = None,
) -> MinimizerSet:
    """Global minimum of the broken-path length over cavity x boundary.

    Exhaustive scan over all mesh node pairs seeds damped Newton refinement;
    all distinct refined minimizers within the tie tolerance of the best are
    returned, classified and equipped with their 4x4 Hessians.
    """
    p = np.asarray(p, float)
    if cavity_mesh is None:
        cavity_mesh = build_quadrature(cavity, resolution)
    if boundary_mesh is None:
        boundary_mesh = build_quadrature(boundary, resolution)
    _validate_configuration(p, cavity, boundary, cavity_mesh, boundary_mesh)

    X = cavity_mesh.points
    Y = boundary_mesh.points
    d_xy = cdist(X, Y)
    lp = np.linalg.norm(X - p, axis=1)[:, None] + d_xy
    l_grid = float(lp.min())

    # candidate slack: second-order variation across one cell in each factor
    hx = 2.0 * cavity_mesh.spacing
    hy = 2.0 * boundary_mesh.spacing
    gap = float(d_xy.min())
    curv = cavity.max_curvature + boundary.max_curvature + 4.0 / max(gap, 1e-6)
    slack = curv * (hx * hx + hy * hy)

    ii, jj = np.nonzero(lp <= l_grid + slack)
    order = np.argsort(lp[ii, jj])[:4000]
    ii, jj = ii[order], jj[order]

    cluster_tol = CLUSTER_RTOL * boundary.diameter
    max_seeds = 40
    seed_x = np.empty((max_seeds, 3))
    seed_y = np.empty((max_seeds, 3))
    k = 0
    for i, j in zip(ii, jj):
        x, y = X[i], Y[j]
        if k:
            close = (
                np.linalg.norm(seed_x[:k] - x, axis=1) < 3 * hx
            ) & (np.linalg.norm(seed_y[:k] - y, axis=1) < 3 * hy)
            if close.any():
                continue
        seed_x[k], seed_y[k] = x, y
        k += 1
        if k >= max_seeds:
            break
    seeds = [(seed_x[m], seed_y[m]) for m in range(k)]

    refined = []
    for x, y in seeds:
        xr, yr, lr = _refine_pair(p, cavity, boundary, x, y, tol=refine_tol)
        refined.append((xr, yr, lr))
    l_best = min(r[2] for r in refined)

    distinct = []
    for xr, yr, lr in sorted(refined, key=lambda r: r[2]):
        if lr > l_best * (1.0 + TIE_RTOL):
            continue
        if any(
            np.linalg.norm(xr - q[0]) < cluster_tol
            and np.linalg.norm(yr - q[1]) < cluster_tol
            for q in distinct
        ):
            continue
        distinct.append((xr, yr, lr))

    points = []
    for xr, yr, lr in distinct:
        cls = classify_point(p, xr, yr, cavity, boundary, sign_tol=sign_tol)
        cx = standard_chart(cavity, xr)
        cy = standard_chart(boundary, yr)
        H = hessian_lp(p, xr, yr, cx, cy)
        sign = -1 if cls is CriticalClass.PASS_BACK else +1
        w = reflection_weight(xr, cavity.normal(xr), yr, p, sign=sign)
        points.append(
            CriticalPoint(xr, yr, cls, H, float(np.linalg.det(H)), lr, w)
        )

    n1 = sum(q.cls is CriticalClass.REFLECTION for q in points)
    n2p = sum(q.cls is CriticalClass.PASS_FRONT for q in points)
    n2m = sum(q.cls is CriticalClass.PASS_BACK for q in points)
    return MinimizerSet(l_best, points, (n1, max(n2p, n2m)))


def _validate_configuration(p, cavity, boundary, cavity_mesh, boundary_mesh):
    if not np.all(boundary.contains(cavity_mesh.points)):
        raise ConfigurationError("cavity surface is not strictly inside the body")
    if boundary.implicit(p) <= 0:
        raise ConfigurationError("probe point must lie strictly outside the body")
    if np.any(cavity.contains(boundary_mesh.points, strict=False)):
        raise ConfigurationError("surfaces intersect")


# ---------------------------------------------------------------------------
# Curvature conditions certifying non-degeneracy
# ---------------------------------------------------------------------------


def gradient_norm_at_reflection(p, x0, nu_x) -> float:
    """|grad_x length| at a reflection minimizer: 2 (p-x0).nu / |x0-p|."""
    p, x0 = np.asarray(p, float), np.asarray(x0, float)
    return float(2.0 * (p - x0) @ nu_x / np.linalg.norm(x0 - p))


def check_condition_29(boundary: Surface, y0, l_value: float) -> bool:
    """Boundary curvature at y0 strictly below 1/l (all directions)."""
    W, _ = weingarten(boundary, np.asarray(y0, float))
    return bool(np.max(np.linalg.eigvalsh(W)) < 1.0 / l_value)


def check_condition_421_422(
    cavity: Surface,
    boundary: Surface,
    p,
    x0,
    y0,
    R_trial: float,
    band: float = 1e-10,
) -> str:
    """Which of the two relaxed curvature conditions holds at a reflection pair.

    Returns "421" (weak boundary bound, strict cavity-side bound), "422"
    (strict boundary bound, weak cavity-side bound) or "neither".
    """
    p, x0, y0 = (np.asarray(v, float) for v in (p, x0, y0))
    d0 = float(np.linalg.norm(x0 - y0))
    if R_trial <= d0:
        raise DomainError(f"trial radius {R_trial} must exceed the exit leg {d0}")
    l0 = broken_length(p, x0, y0)

    W_out, _ = weingarten(boundary, y0)
    out_max = float(np.max(np.linalg.eigvalsh(W_out)))
    thresh = 1.0 / R_trial

    nu = cavity.normal(x0)
    W_cav, _ = weingarten(cavity, x0)
    s = spheroid_apex_curvature(l0, d0)
    grad_norm = gradient_norm_at_reflection(p, x0, nu)
    lhs_min = grad_norm * float(np.min(np.linalg.eigvalsh(W_cav)) + s)
    rhs = R_trial / ((R_trial - d0) * d0)

    boundary_weak = out_max <= thresh + band
    boundary_strict = out_max < thresh - band
    cavity_strict = lhs_min > rhs + band
    cavity_weak = lhs_min >= rhs - band

    if boundary_weak and cavity_strict:
        return "421"
    if boundary_strict and cavity_weak:
        return "422"
    return "neither"


def check_lit_set_singleton(
    boundary: Surface,
    p,
    mesh: QuadratureMesh | None = None,
    resolution: int = 24,
    cluster_tol: float | None = None,
) -> bool:
    """True iff the far-alignment set {y : (y-p)/|y-p| . nu_y = 1} is one point.

    Evaluated on the quadrature mesh: nodes whose alignment defect is within
    a small factor of the best defect are clustered spatially.
    """
    p = np.asarray(p, float)
    if mesh is None:
        mesh = build_quadrature(boundary, resolution)
    d = mesh.points - p
    s = np.sum(d / np.linalg.norm(d, axis=1, keepdims=True) * mesh.normals, axis=1)
    defect = 1.0 - s
    best = float(defect.min())
    cand = mesh.points[defect <= 4.0 * best + 1e-9]
    if cluster_tol is None:
        cluster_tol = 6.0 * mesh.spacing
    clusters: list[np.ndarray] = []
    for x in cand:
        for c in clusters:
            if np.linalg.norm(x - c) < cluster_tol:
                break
        else:
            clusters.append(x)
    return len(clusters) == 1
