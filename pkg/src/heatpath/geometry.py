"""Closed strictly convex surfaces: spheres, ellipsoids and focal spheroids.

All surfaces are realized as rotated, translated images of the unit sphere
under ``x = center + Rot @ (semi_axes * u)``, which gives exact points,
outward normals, curvatures and area elements.  Quadrature uses a product
rule: Gauss-Legendre in the cosine of the polar angle and a uniform
(trapezoidal) rule in azimuth, which is spectrally accurate for smooth
integrands on these surfaces.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

# On-surface tolerance, in units of the bounding diameter.
ON_SURFACE_RTOL = 1e-8


def rotation_from_quaternion(q) -> np.ndarray:
    """Unit quaternion [w, x, y, z] -> 3x3 rotation matrix."""
    w, x, y, z = np.asarray(q, dtype=float)
    n = np.sqrt(w * w + x * x + y * y + z * z)
    if n == 0:
        raise DomainError("zero quaternion has no rotation")
    w, x, y, z = w / n, x / n, y / n, z / n
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


@dataclass(frozen=True)
class Surface:
    """A closed, strictly convex C^inf surface.

    ``kind`` is one of ``sphere``, ``ellipsoid``, ``spheroid`` and only
    affects provenance/reporting; geometrically everything is an ellipsoid.
    """

    kind: str
    center: np.ndarray
    semi_axes: np.ndarray
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        object.__setattr__(self, "semi_axes", np.asarray(self.semi_axes, dtype=float))
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=float))
        if self.semi_axes.shape != (3,) or np.any(self.semi_axes <= 0):
            raise DomainError(
                f"semi-axes must be three positive lengths, got {self.semi_axes}"
            )
        R = self.rotation
        if not np.allclose(R @ R.T, np.eye(3), atol=1e-10):
            raise DomainError("rotation must be orthogonal")

    # -- constructors -------------------------------------------------

    @staticmethod
    def sphere(center, radius: float) -> "Surface":
        if radius <= 0:
            raise DomainError("sphere radius must be positive")
        return Surface("sphere", np.asarray(center, float), np.full(3, float(radius)))

    @staticmethod
    def ellipsoid(center, semi_axes, rotation=None) -> "Surface":
        rot = np.eye(3) if rotation is None else np.asarray(rotation, float)
        return Surface("ellipsoid", np.asarray(center, float), semi_axes, rot)

    @staticmethod
    def spheroid_from_foci(focus_a, focus_b, string_length: float) -> "Surface":
        """Prolate spheroid { x : |x-f_a| + |x-f_b| = string_length }."""
        fa = np.asarray(focus_a, float)
        fb = np.asarray(focus_b, float)
        two_c = np.linalg.norm(fb - fa)
        if string_length <= two_c:
            raise DomainError("string length must exceed the focal distance")
        a = string_length / 2.0
        b = np.sqrt(a * a - (two_c / 2.0) ** 2)
        if two_c == 0:
            rot = np.eye(3)
        else:
            e1 = (fb - fa) / two_c
            # complete e1 to an orthonormal frame
            h = np.zeros(3)
            h[np.argmin(np.abs(e1))] = 1.0
            e2 = np.cross(e1, h)
            e2 /= np.linalg.norm(e2)
            e3 = np.cross(e1, e2)
            rot = np.column_stack([e1, e2, e3])
        return Surface("spheroid", (fa + fb) / 2.0, np.array([a, b, b]), rot)

    # -- basic geometry ------------------------------------------------

    @property
    def diameter(self) -> float:
        return 2.0 * float(np.max(self.semi_axes))

    @property
    def max_curvature(self) -> float:
        a = self.semi_axes
        return float(np.max(a) / np.min(a) ** 2)

    @property
    def min_curvature(self) -> float:
        a = self.semi_axes
        return float(np.min(a) / np.max(a) ** 2)

    def to_local(self, x) -> np.ndarray:
        """Map ambient points onto unit-sphere coordinates xi = A^-1 R^T (x-c)."""
        x = np.asarray(x, dtype=float)
        return ((x - self.center) @ self.rotation) / self.semi_axes

    def implicit(self, x) -> np.ndarray:
        """|xi|^2 - 1; negative inside, zero on the surface."""
        xi = self.to_local(x)
        return np.sum(xi * xi, axis=-1) - 1.0

    def contains(self, x, strict: bool = True) -> np.ndarray:
        v = self.implicit(x)
        return v < 0 if strict else v <= 0

    def signed_gap(self, x) -> np.ndarray:
        """Approximate signed distance to the surface (negative inside)."""
        xi = self.to_local(x)
        r = np.linalg.norm(xi, axis=-1)
        return (r - 1.0) * float(np.min(self.semi_axes))

    def _require_on_surface(self, x):
        gap = np.abs(self.signed_gap(x))
        if np.any(gap > ON_SURFACE_RTOL * self.diameter):
            raise DomainError(
                f"point is off the surface by ~{float(np.max(gap)):.3e} "
                f"(tolerance {ON_SURFACE_RTOL * self.diameter:.3e})"
            )

    def normal(self, x) -> np.ndarray:
        """Outward unit normal at on-surface points (no tolerance check)."""
        xi = self.to_local(x)
        n_loc = xi / self.semi_axes
        n_loc = n_loc / np.linalg.norm(n_loc, axis=-1, keepdims=True)
        return n_loc @ self.rotation.T

    def project(self, x) -> np.ndarray:
        """Radial retraction onto the surface (not the closest point)."""
        xi = self.to_local(x)
        r = np.linalg.norm(xi, axis=-1, keepdims=True)
        if np.any(r == 0):
            raise DomainError("cannot project the center")
        return (xi / r * self.semi_axes) @ self.rotation.T + self.center


def surface_eval(surface: Surface, param) -> tuple[np.ndarray, np.ndarray]:
    """Point and outward unit normal at polar/azimuth parameters (theta, phi).

    theta in [0, pi] measured from the local +z axis, phi in [0, 2*pi).
    """
    theta, phi = float(param[0]), float(param[1])
    if not (0.0 <= theta <= np.pi and 0.0 <= phi < 2.0 * np.pi + 1e-15):
        raise DomainError(f"parameter ({theta}, {phi}) outside [0,pi]x[0,2pi)")
    u = np.array(
        [np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)]
    )
    point = surface.center + surface.rotation @ (surface.semi_axes * u)
    return point, surface.normal(point)


@dataclass(frozen=True)
class QuadratureMesh:
    """Quadrature nodes (point, outward unit normal, area weight) on a surface."""

    surface: Surface
    points: np.ndarray    # (N, 3)
    normals: np.ndarray   # (N, 3)
    weights: np.ndarray   # (N,)
    resolution: int

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def area(self) -> float:
        return float(np.sum(self.weights))

    @property
    def spacing(self) -> float:
        """Characteristic node spacing (square root of the mean cell area)."""
        return float(np.sqrt(self.area / len(self)))

    def curvatures(self) -> np.ndarray:
        """Principal curvatures at every node, shape (N, 2)."""
        out = np.empty((len(self), 2))
        for i, x in enumerate(self.points):
            w, _ = weingarten(self.surface, x, check=False)
            out[i] = np.linalg.eigvalsh(w)
        return out


def build_quadrature(surface: Surface, resolution: int, axis=None) -> QuadratureMesh:
    """Product Gauss-Legendre (polar) x uniform (azimuth) mesh.

    ``resolution`` n gives n polar nodes and 2n azimuthal nodes (2n^2 total).
    ``axis`` orients the parametrization pole (in the surface's local frame
    the default pole is +z); node clustering near the poles then sits along
    that direction, which helps concentrated integrands.
    """
    n = int(resolution)
    if n < 4:
        raise DomainError("resolution must be at least 4")
    t, wt = np.polynomial.legendre.leggauss(n)          # t = cos(theta)
    phi = 2.0 * np.pi * np.arange(2 * n) / (2 * n)
    wphi = 2.0 * np.pi / (2 * n)

    st = np.sqrt(1.0 - t * t)
    u = np.empty((n, 2 * n, 3))
    u[..., 0] = st[:, None] * np.cos(phi)[None, :]
    u[..., 1] = st[:, None] * np.sin(phi)[None, :]
    u[..., 2] = t[:, None]
    u = u.reshape(-1, 3)
    if axis is not None:
        axis = np.asarray(axis, float)
        norm = np.linalg.norm(axis)
        if norm == 0:
            raise DomainError("mesh axis must be a nonzero direction")
        # rotate +z of the parameter sphere onto the requested local axis
        za = axis / norm
        if abs(za[2] + 1.0) < 1e-12:
            rot = np.diag([1.0, -1.0, -1.0])
        else:
            v = np.cross([0.0, 0.0, 1.0], za)
            c = za[2]
            vx = np.array(
                [[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]]
            )
            rot = np.eye(3) + vx + vx @ vx / (1.0 + c)
        u = u @ rot.T

    a = surface.semi_axes
    # dS = a1 a2 a3 * |u / a| dt dphi for the map u -> a*u
    jac = np.prod(a) * np.linalg.norm(u / a, axis=1)
    weights = np.repeat(wt, 2 * n) * wphi * jac

    points = (u * a) @ surface.rotation.T + surface.center
    n_loc = (u / a) / np.linalg.norm(u / a, axis=1, keepdims=True)
    normals = n_loc @ surface.rotation.T
    return QuadratureMesh(surface, points, normals, weights, n)


def weingarten(surface: Surface, x, basis=None, check: bool = True):
    """Shape operator at x as a symmetric 2x2 matrix on the tangent plane.

    Returns ``(W, (t1, t2))`` where t1, t2 is the orthonormal tangent basis
    the matrix is expressed in.  Positive definite for these convex kinds;
    equals (1/R) I on a sphere of radius R.
    """
    x = np.asarray(x, dtype=float)
    if check:
        surface._require_on_surface(x)
    A = np.diag(1.0 / surface.semi_axes**2)
    xi_amb = surface.rotation @ A @ surface.rotation.T  # ambient quadratic form
    grad = xi_amb @ (x - surface.center)
    gnorm = np.linalg.norm(grad)
    nu = grad / gnorm

    if basis is None:
        t1, t2 = tangent_basis(nu)
    else:
        t1, t2 = basis
    # D_v nu = (I - nu nu^T) xi_amb v / |grad| ; tangent rows kill the projector
    W = np.array(
        [
            [t1 @ xi_amb @ t1, t1 @ xi_amb @ t2],
            [t2 @ xi_amb @ t1, t2 @ xi_amb @ t2],
        ]
    ) / gnorm
    return W, (t1, t2)


def tangent_basis(nu: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """A deterministic orthonormal basis of the plane orthogonal to nu."""
    h = np.zeros(3)
    h[np.argmin(np.abs(nu))] = 1.0
    t1 = np.cross(nu, h)
    t1 /= np.linalg.norm(t1)
    t2 = np.cross(nu, t1)
    return t1, t2


def spheroid_apex_curvature(string_length: float, near_focus_distance: float) -> float:
    """Common principal curvature of a prolate spheroid at its major apex.

    The spheroid is the locus |x-f1| + |x-f2| = string_length; the apex sits
    on the major axis at distance ``near_focus_distance`` from the nearer
    focus.  Value: string_length / (2 (string_length - d) d).
    """
    l0, d0 = float(string_length), float(near_focus_distance)
    if not (l0 > d0 > 0):
        raise DomainError(
            f"degenerate spheroid: need string_length > apex distance > 0, "
            f"got ({l0}, {d0})"
        )
    return l0 / (2.0 * (l0 - d0) * d0)


@dataclass(frozen=True)
class LocalChart:
    """Tangent-plane graph chart around a surface point.

    Maps chart coordinates sigma to the surface via
    ``point = base + sigma_1 e1 + sigma_2 e2 - height(sigma) * normal``
    with height(0) = 0 and grad height(0) = 0.
    """

    surface: Surface
    base: np.ndarray
    normal: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    patch_radius: float

    def height(self, sigma) -> float:
        """Graph height over the tangent plane; exact quadratic-root formula.

        Solves implicit(foot - t*normal) = 0, a quadratic in t for these
        surface kinds; the root continuous with t(0) = 0 is returned.
        """
        sigma = np.asarray(sigma, dtype=float)
        foot = self.base + sigma[0] * self.e1 + sigma[1] * self.e2
        s = self.surface
        xi0 = s.to_local(foot)
        eta = (self.normal @ s.rotation) / s.semi_axes
        a = eta @ eta
        b = xi0 @ eta
        c = xi0 @ xi0 - 1.0
        disc = b * b - a * c
        if disc < 0:
            raise DomainError("chart point left the graph patch")
        # near branch: t -> 0 as sigma -> 0
        return float((b - np.sqrt(disc)) / a)

    def point(self, sigma) -> np.ndarray:
        sigma = np.asarray(sigma, dtype=float)
        return (self.base + sigma[0] * self.e1 + sigma[1] * self.e2
                - self.height(sigma) * self.normal)

    def second_fundamental_form(self) -> np.ndarray:
        """Hessian of the height function at 0 (equals the Weingarten matrix)."""
        W, _ = weingarten(self.surface, self.base, basis=(self.e1, self.e2),
                          check=False)
        return W


def standard_chart(surface: Surface, x) -> LocalChart:
    """Graph chart of the surface over its tangent plane at x.

    The patch radius is uniform across the surface: half the minimal
    curvature radius, which keeps the graph representation single-valued.
    """
    x = np.asarray(x, dtype=float)
    surface._require_on_surface(x)
    nu = surface.normal(x)
    t1, t2 = tangent_basis(nu)
    r0 = 0.5 / surface.max_curvature
    return LocalChart(surface, x, nu, t1, t2, r0)


def strict_convexity_check(surface: Surface, mesh: QuadratureMesh):
    """Smallest principal curvature over the mesh; positive iff strictly convex."""
    if mesh.surface is not surface and not np.allclose(
        mesh.surface.semi_axes, surface.semi_axes
    ):
        raise DomainError("mesh was not built on this surface")
    min_eig = float(np.min(mesh.curvatures()))
    return min_eig > 0.0, min_eig
