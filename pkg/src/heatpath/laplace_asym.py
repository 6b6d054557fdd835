"""Leading-order evaluation of concentrated exponential integrals.

For integrals of the form ``int_U exp(-tau*f(x)) phi(x) dx`` with a unique
interior minimizer of the phase, the leading term is

    exp(-tau f(x0)) * (2 pi / tau)^(n/2) * phi(x0) / sqrt(det Hess f(x0)).

``numeric_reference`` is an independent brute-force check: tensor
Gauss-Legendre quadrature on a dyadic panel decomposition that refines
toward the minimizer, where the integrand concentrates at scale 1/sqrt(tau).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import AccuracyError, DomainError


@dataclass
class LaplaceProblem:
    dim: int
    phase: Callable[[np.ndarray], np.ndarray]      # (..., dim) -> (...)
    amplitude: Callable[[np.ndarray], np.ndarray]  # (..., dim) -> (...)
    minimizer: np.ndarray                          # (dim,)
    box: np.ndarray                                # (dim, 2)
    hessian: Optional[np.ndarray] = None           # (dim, dim) or None

    def __post_init__(self):
        self.minimizer = np.atleast_1d(np.asarray(self.minimizer, float))
        self.box = np.asarray(self.box, float).reshape(self.dim, 2)
        lo, hi = self.box[:, 0], self.box[:, 1]
        if np.any(self.minimizer <= lo) or np.any(self.minimizer >= hi):
            raise DomainError("minimizer must be interior to the box")


def _hessian_fd(f, x0: np.ndarray) -> np.ndarray:
    """Central second differences at step eps_machine^(1/3)."""
    n = x0.size
    h = np.finfo(float).eps ** (1.0 / 3.0) * np.maximum(1.0, np.abs(x0))
    H = np.empty((n, n))
    f0 = float(f(x0))
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = h[i]
        H[i, i] = (float(f(x0 + ei)) - 2 * f0 + float(f(x0 - ei))) / h[i] ** 2
        for j in range(i + 1, n):
            ej = np.zeros(n)
            ej[j] = h[j]
            H[i, j] = H[j, i] = (
                float(f(x0 + ei + ej)) - float(f(x0 + ei - ej))
                - float(f(x0 - ei + ej)) + float(f(x0 - ei - ej))
            ) / (4 * h[i] * h[j])
    return H


def leading_term(prob: LaplaceProblem, tau: float) -> float:
    """Stationary-point leading term of the concentrated integral."""
    H = prob.hessian if prob.hessian is not None else _hessian_fd(
        prob.phase, prob.minimizer
    )
    eig = np.linalg.eigvalsh(np.asarray(H, float))
    if np.any(eig <= 0):
        raise DomainError(f"phase Hessian not positive definite: eigs {eig}")
    det = float(np.prod(eig))
    f0 = float(prob.phase(prob.minimizer))
    phi0 = float(prob.amplitude(prob.minimizer))
    return np.exp(-tau * f0) * (2 * np.pi / tau) ** (prob.dim / 2) * phi0 / np.sqrt(det)


def _axis_panels(lo: float, hi: float, x0: float, tau: float):
    """Panel edges in geometric shells around x0, innermost width ~1/sqrt(tau)."""
    w = max(0.5 / np.sqrt(tau), 1e-7)
    edges = {lo, hi}
    if lo < x0 < hi:
        edges.add(x0)
    o = w
    while True:
        clipped = False
        for s in (x0 - o, x0 + o):
            if lo < s < hi:
                edges.add(s)
            else:
                clipped = True
        if clipped and o > (hi - lo):
            break
        o *= 4.0
        if o > 4 * (hi - lo):
            break
    return np.array(sorted(edges))


def numeric_reference(
    prob: LaplaceProblem,
    tau: float,
    rtol: float = 1e-8,
) -> float:
    """Brute-force tensor quadrature of exp(-tau*phase)*amplitude over the box.

    Raises the per-panel Gauss order until two successive values agree to
    ``rtol``; raises AccuracyError if that never happens.  Cost grows as
    (panels * order)^dim, so high-dimensional problems get a shorter order
    schedule.
    """
    n = prob.dim
    edges = [
        _axis_panels(prob.box[i, 0], prob.box[i, 1], prob.minimizer[i], tau)
        for i in range(n)
    ]
    orders = {1: (8, 16, 32, 64, 128), 2: (8, 16, 32, 64)}.get(n, (6, 10, 16, 24))

    def evaluate(order: int) -> float:
        g, gw = np.polynomial.legendre.leggauss(order)
        axes_nodes, axes_weights = [], []
        for e in edges:
            mid = (e[1:] + e[:-1]) / 2.0
            half = (e[1:] - e[:-1]) / 2.0
            axes_nodes.append((mid[:, None] + half[:, None] * g[None, :]).ravel())
            axes_weights.append((half[:, None] * gw[None, :]).ravel())
        if n == 1:
            x = axes_nodes[0][:, None]
            vals = np.exp(-tau * prob.phase(x)) * prob.amplitude(x)
            return float(np.sum(vals * axes_weights[0]))
        rest_pts = np.stack(
            [a.ravel() for a in np.meshgrid(*axes_nodes[1:], indexing="ij")], axis=-1
        )
        rest_w = np.prod(
            np.stack([w.ravel() for w in np.meshgrid(*axes_weights[1:], indexing="ij")]),
            axis=0,
        )
        total = 0.0
        # chunk over the first axis to bound memory in higher dimensions
        pts = np.empty((rest_pts.shape[0], n))
        pts[:, 1:] = rest_pts
        for x0v, w0 in zip(axes_nodes[0], axes_weights[0]):
            pts[:, 0] = x0v
            vals = np.exp(-tau * prob.phase(pts)) * prob.amplitude(pts)
            total += w0 * float(np.sum(vals * rest_w))
        return total

    prev = evaluate(orders[0])
    for order in orders[1:]:
        cur = evaluate(order)
        if abs(cur - prev) <= rtol * max(abs(cur), 1e-300):
            return cur
        prev = cur
    raise AccuracyError(
        f"panel quadrature did not converge to rtol={rtol} at orders {orders}"
    )
