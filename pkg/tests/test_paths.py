import numpy as np
import pytest

from heatpath.errors import ConfigurationError, DomainError
from heatpath.geometry import Surface, build_quadrature, standard_chart
from heatpath.paths import (
    CriticalClass,
    CriticalPoint,
    broken_length,
    check_condition_29,
    check_condition_421_422,
    check_lit_set_singleton,
    classify_point,
    hessian_lp,
    minimize_broken_path,
    nondegenerate,
    reflection_weight,
)


def random_scenario(rng):
    """Random convex cavity strictly inside a random convex body, plus probe."""
    R = rng.uniform(1.5, 2.5)
    body_axes = R * np.array([1.0, rng.uniform(0.8, 1.0), rng.uniform(0.8, 1.0)])
    body = Surface.ellipsoid([0, 0, 0], body_axes)
    r = rng.uniform(0.25, 0.45) * np.min(body_axes)
    off = rng.normal(size=3)
    off *= rng.uniform(0, 0.25) * np.min(body_axes) / np.linalg.norm(off)
    cavity = Surface.ellipsoid(
        off, r * np.array([1.0, rng.uniform(0.7, 1.0), rng.uniform(0.7, 1.0)])
    )
    dirn = rng.normal(size=3)
    dirn /= np.linalg.norm(dirn)
    p = dirn * (np.max(body_axes) * rng.uniform(1.1, 1.6))
    return p, cavity, body


class TestBrokenLength:
    def test_degenerate_collapse(self):
        p = np.array([1.0, 2.0, 3.0])
        y = np.array([0.0, 1.0, 0.0])
        assert broken_length(p, p, y) == pytest.approx(np.linalg.norm(p - y))

    def test_concentric_arithmetic(self):
        assert broken_length([2.2, 0, 0], [1.5, 0, 0], [2, 0, 0]) == pytest.approx(1.2)

    def test_offcenter_arithmetic(self):
        assert broken_length([3, 0, 0], [0.8, 0, 0], [2, 0, 0]) == pytest.approx(3.4)


class TestMinimize:
    def test_concentric_spheres(self):
        cavity = Surface.sphere([0, 0, 0], 1.5)
        body = Surface.sphere([0, 0, 0], 2.0)
        ms = minimize_broken_path([2.2, 0, 0], cavity, body, resolution=16)
        assert ms.l_value == pytest.approx(1.2, abs=1e-9)
        assert len(ms.points) == 1
        cp = ms.points[0]
        assert cp.cls is CriticalClass.REFLECTION
        np.testing.assert_allclose(cp.x0, [1.5, 0, 0], atol=1e-7)
        np.testing.assert_allclose(cp.y0, [2.0, 0, 0], atol=1e-7)

    def test_offcenter_spheres(self):
        cavity = Surface.sphere([0.3, 0, 0], 0.5)
        body = Surface.sphere([0, 0, 0], 2.0)
        ms = minimize_broken_path([3, 0, 0], cavity, body, resolution=16)
        assert ms.l_value == pytest.approx(3.4, abs=1e-9)
        assert len(ms.points) == 1
        np.testing.assert_allclose(ms.points[0].x0, [0.8, 0, 0], atol=1e-7)
        np.testing.assert_allclose(ms.points[0].y0, [2.0, 0, 0], atol=1e-7)

    def test_intersecting_surfaces_rejected(self):
        with pytest.raises(ConfigurationError):
            minimize_broken_path(
                [3, 0, 0],
                Surface.sphere([1.5, 0, 0], 1.0),
                Surface.sphere([0, 0, 0], 2.0),
                resolution=8,
            )

    def test_probe_inside_rejected(self):
        with pytest.raises(ConfigurationError):
            minimize_broken_path(
                [1.0, 0, 0],
                Surface.sphere([0, 0, 0], 0.5),
                Surface.sphere([0, 0, 0], 2.0),
                resolution=8,
            )

    def test_brute_force_equivalence_randomized(self):
        rng = np.random.default_rng(42)
        for _ in range(20):
            p, cavity, body = random_scenario(rng)
            mc = build_quadrature(cavity, 12)
            mb = build_quadrature(body, 12)
            ms = minimize_broken_path(
                p, cavity, body, cavity_mesh=mc, boundary_mesh=mb
            )
            # exhaustive scan over node pairs
            from scipy.spatial.distance import cdist

            lp = np.linalg.norm(mc.points - p, axis=1)[:, None] + cdist(
                mc.points, mb.points
            )
            l_grid = float(lp.min())
            cell = 2 * max(mc.spacing, mb.spacing)
            assert ms.l_value <= l_grid + 1e-12
            assert l_grid - ms.l_value <= cell


class TestMinimizerLaws:
    """Alignment, reflection and collinearity laws at refined minimizers."""

    def test_laws_randomized(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            p, cavity, body = random_scenario(rng)
            ms = minimize_broken_path(p, cavity, body, resolution=12)
            assert len(ms.points) >= 1
            n_front = len(ms.by_class(CriticalClass.PASS_FRONT))
            n_back = len(ms.by_class(CriticalClass.PASS_BACK))
            assert n_front == n_back
            for cp in ms.points:
                ny = body.normal(cp.y0)
                exit_dir = (cp.y0 - cp.x0) / np.linalg.norm(cp.y0 - cp.x0)
                assert np.linalg.norm(ny - exit_dir) < 1e-4
                nx = cavity.normal(cp.x0)
                u = (p - cp.x0) / np.linalg.norm(p - cp.x0)
                v = exit_dir
                if cp.cls is CriticalClass.REFLECTION:
                    # incoming + outgoing parallel to the cavity normal
                    assert np.linalg.norm(np.cross(u + v, nx)) < 1e-4
                else:
                    # pass-through: x0 on the segment p-y0, directions opposed
                    assert np.linalg.norm(u + v) < 1e-4
                    seg = cp.y0 - p
                    t = np.dot(cp.x0 - p, seg) / np.dot(seg, seg)
                    assert 0 < t < 1
                    dist = np.linalg.norm(cp.x0 - (p + t * seg))
                    assert dist < 1e-4 * cp.length

    def test_reflection_weight_signs(self):
        # lit-side weight positive on reflection points, dark-side negative
        # on pass-back points
        rng = np.random.default_rng(19)
        seen_back = 0
        for _ in range(20):
            p, cavity, body = random_scenario(rng)
            ms = minimize_broken_path(p, cavity, body, resolution=12)
            for cp in ms.points:
                if cp.cls is CriticalClass.REFLECTION:
                    assert cp.weight > 0
                elif cp.cls is CriticalClass.PASS_BACK:
                    seen_back += 1
                    assert cp.weight < 0
        # pass-through pairs are rare for generic probes; do not require them


class TestClassify:
    def test_concentric_is_reflection(self):
        cavity = Surface.sphere([0, 0, 0], 1.5)
        body = Surface.sphere([0, 0, 0], 2.0)
        cls = classify_point([2.2, 0, 0], [1.5, 0, 0], [2, 0, 0], cavity, body)
        assert cls is CriticalClass.REFLECTION

    def test_antipodal_pass_back_signature(self):
        cavity = Surface.sphere([0, 0, 0], 1.0)
        body = Surface.sphere([0, 0, 0], 2.0)
        cls = classify_point([3, 0, 0], [-1, 0, 0], [-2, 0, 0], cavity, body)
        assert cls is CriticalClass.PASS_BACK

    def test_threshold_band_is_grazing(self):
        cavity = Surface.sphere([0, 0, 0], 1.0)
        body = Surface.sphere([0, 0, 0], 2.0)
        x0 = np.array([0.0, 1.0, 0.0])   # normal (0,1,0) orthogonal to p-x0
        p = np.array([3.0, 1.0 + 1e-9, 0.0])
        cls = classify_point(p, x0, [0, 2, 0], cavity, body, sign_tol=1e-6)
        assert cls is CriticalClass.GRAZING


class TestHessian:
    def concentric(self):
        cavity = Surface.sphere([0, 0, 0], 1.5)
        body = Surface.sphere([0, 0, 0], 2.0)
        p = np.array([2.2, 0, 0])
        x0 = np.array([1.5, 0, 0])
        y0 = np.array([2.0, 0, 0])
        return p, x0, y0, cavity, body

    def test_concentric_closed_form(self):
        # per tangent direction the 2x2 block is [[100/21, -2], [-2, 3/2]]
        p, x0, y0, cavity, body = self.concentric()
        H = hessian_lp(p, x0, y0, standard_chart(cavity, x0), standard_chart(body, y0))
        det = np.linalg.det(H)
        assert det == pytest.approx((22.0 / 7.0) ** 2, rel=1e-10)
        eig = np.linalg.eigvalsh(H)
        assert eig[0] > 0

    def test_matches_finite_differences(self):
        p, x0, y0, cavity, body = self.concentric()
        cx = standard_chart(cavity, x0)
        cy = standard_chart(body, y0)
        H = hessian_lp(p, x0, y0, cx, cy)
        step = 1e-4

        def f(q):
            return broken_length(p, cx.point(q[:2]), cy.point(q[2:]))

        fd = np.empty((4, 4))
        for i in range(4):
            for j in range(4):
                ei = np.zeros(4); ei[i] = step
                ej = np.zeros(4); ej[j] = step
                fd[i, j] = (
                    f(ei + ej) - f(ei - ej) - f(-ei + ej) + f(-ei - ej)
                ) / (4 * step * step)
        assert np.max(np.abs(fd - H)) < 1e-6

    def test_cross_block_value(self):
        # cross block entries are -(1/|x0-y0|) e_j . e~_k at the minimizer
        p, x0, y0, cavity, body = self.concentric()
        cx = standard_chart(cavity, x0)
        cy = standard_chart(body, y0)
        H = hessian_lp(p, x0, y0, cx, cy)
        expected = -np.array(
            [[cx.e1 @ cy.e1, cx.e1 @ cy.e2], [cx.e2 @ cy.e1, cx.e2 @ cy.e2]]
        ) / 0.5
        np.testing.assert_allclose(H[:2, 2:], expected, atol=1e-12)

    def test_offcenter_closed_form(self):
        cavity = Surface.sphere([0.3, 0, 0], 0.5)
        body = Surface.sphere([0, 0, 0], 2.0)
        p = np.array([3.0, 0, 0])
        x0 = np.array([0.8, 0, 0])
        y0 = np.array([2.0, 0, 0])
        H = hessian_lp(p, x0, y0, standard_chart(cavity, x0), standard_chart(body, y0))
        det2 = 5.287879 * (1 / 3.0) - (1 / 1.2) ** 2
        assert np.linalg.det(H) == pytest.approx(det2 ** 2, rel=1e-5)


class TestNondegenerate:
    def test_concentric_and_offcenter(self):
        for center, r, p in (
            ([0, 0, 0], 1.5, [2.2, 0, 0]),
            ([0.3, 0, 0], 0.5, [3, 0, 0]),
        ):
            ms = minimize_broken_path(
                p, Surface.sphere(center, r), Surface.sphere([0, 0, 0], 2.0),
                resolution=12,
            )
            assert all(nondegenerate(cp) for cp in ms.points)

    def test_rank_deficient_input(self):
        H = np.diag([1.0, 2.0, 3.0, 0.0])
        cp = CriticalPoint(
            np.zeros(3), np.zeros(3), CriticalClass.REFLECTION, H, 0.0, 1.0, 1.0
        )
        assert not nondegenerate(cp)


class TestCurvatureConditions:
    def test_condition_29(self):
        body = Surface.sphere([0, 0, 0], 2.0)
        y0 = [2, 0, 0]
        assert check_condition_29(body, y0, 1.2)          # 0.5 < 1/1.2
        assert not check_condition_29(body, y0, 3.0)       # 0.5 > 1/3
        assert check_condition_29(body, y0, 1e-6)          # l -> 0 limit

    def test_offcenter_verdict_421(self):
        cavity = Surface.sphere([0.3, 0, 0], 0.5)
        body = Surface.sphere([0, 0, 0], 2.0)
        v = check_condition_421_422(
            cavity, body, [3, 0, 0], [0.8, 0, 0], [2, 0, 0], R_trial=2.0
        )
        assert v == "421"

    def test_sphere_equality_case(self):
        # body curvature exactly 1/R_trial: weak bound holds, strict second
        cavity = Surface.sphere([0, 0, 0], 1.5)
        body = Surface.sphere([0, 0, 0], 2.0)
        v = check_condition_421_422(
            cavity, body, [2.2, 0, 0], [1.5, 0, 0], [2, 0, 0], R_trial=2.0
        )
        assert v == "421"

    def test_trial_radius_domain(self):
        cavity = Surface.sphere([0.3, 0, 0], 0.5)
        body = Surface.sphere([0, 0, 0], 2.0)
        with pytest.raises(DomainError):
            check_condition_421_422(
                cavity, body, [3, 0, 0], [0.8, 0, 0], [2, 0, 0], R_trial=1.2
            )


class TestLitSetSingleton:
    def test_ball(self):
        assert check_lit_set_singleton(Surface.sphere([0, 0, 0], 2.0), [3, 0, 0])

    def test_spherical_cap_around_probe(self):
        # body contains a spherical cap centered at the probe: the far set
        # is a whole cap, not a single point
        p = np.array([4.0, 0, 0])
        body = Surface.sphere(p, 6.0)  # probe at the center: every point aligned
        # place the probe outside a *different* surface but test the cap
        # geometry directly: all normals align with y-p
        assert not check_lit_set_singleton(body, p + np.array([1e-8, 0, 0]))

    def test_prolate_axis_probe(self):
        body = Surface.ellipsoid([0, 0, 0], [2.0, 1.2, 1.2])
        assert check_lit_set_singleton(body, [3.5, 0, 0])
