"""Harnack quotients, log-gradient integrals, oscillations, residuals."""

import numpy as np
import pytest
from scipy.integrate import dblquad

import orliczmin as om
from orliczmin.conditions import BallRegion
from orliczmin.verify import (
    CaccioppoliParams,
    PositivityError,
    RefinementError,
    bloch_integral,
    caccioppoli_check,
    harnack_quotient,
    make_cutoff,
    monotonicity_check,
    random_bump_fields,
    sphere_oscillation,
    variational_residual,
)

TIGHT = om.SolverConfig(grad_tolerance=1e-12, energy_rel_tolerance=1e-30, max_iterations=40000)


@pytest.fixture(scope="module")
def disk():
    return om.build_disk(1 / 16)


def field_of(dom, fn):
    return om.ScalarField(dom, fn(dom.vertices))


class TestHarnack:
    def test_constant(self, disk):
        u = field_of(disk, lambda v: 0 * v[:, 0] + 3.0)
        assert harnack_quotient(u, (0, 0), 0.5) == 1.0

    def test_affine_extremes(self, disk):
        # u = x1 + 2 on the unit disk, shift 1: (3+1)/(1+1) = 2 at the
        # diameter endpoints
        u = field_of(disk, lambda v: v[:, 0] + 2.0)
        assert harnack_quotient(u, (0, 0), 1.0, shift=1.0) == pytest.approx(2.0, rel=1e-12)

    def test_positivity_error_names_vertex(self, disk):
        u = field_of(disk, lambda v: v[:, 0])
        with pytest.raises(PositivityError):
            harnack_quotient(u, (0, 0), 0.5, shift=0.0)

    def test_scaling_invariance(self, disk):
        u = field_of(disk, lambda v: v[:, 0] + 2.0)
        q1 = harnack_quotient(u, (0, 0), 0.25, shift=0.25)
        u7 = field_of(disk, lambda v: 7.0 * (v[:, 0] + 2.0))
        q7 = harnack_quotient(u7, (0, 0), 0.25, shift=7.0 * 0.25)
        assert q7 == pytest.approx(q1, rel=1e-14)


class TestBloch:
    def test_constant_zero(self, disk):
        w = field_of(disk, lambda v: 0 * v[:, 0] + 5.0)
        assert bloch_integral(w, (0, 0), 0.5) == 0.0

    def test_log_affine_equals_mesh_area(self, disk):
        # w = exp(x1): the vertexwise log is exactly x1, so the integrand
        # is one and the integral equals the covered area (pi less the
        # O(h^2) mesh defect)
        w = field_of(disk, lambda v: np.exp(v[:, 0]))
        val = bloch_integral(w, (0, 0), 1.0, exponent=2.0)
        assert val == pytest.approx(disk.total_area, rel=1e-13)
        defect = np.pi - disk.total_area
        assert abs(val - np.pi) <= defect * (1 + 1e-9)

    def test_scale_invariance_exact(self, disk):
        w = field_of(disk, lambda v: np.exp(v[:, 0]) + 1.0)
        a = bloch_integral(w, (0, 0), 0.5)
        w9 = om.ScalarField(disk, 9.0 * w.values)
        assert bloch_integral(w9, (0, 0), 0.5) == pytest.approx(a, rel=1e-11)

    def test_radial_quadrature_oracle(self):
        # w = |x|^(2/3) + 1/2 on the annulus, ball of radius 1/4 at (0.6, 0)
        dom = om.build_annulus(1 / 64)
        w = field_of(dom, lambda v: np.hypot(v[:, 0], v[:, 1]) ** (2 / 3) + 0.5)
        val = bloch_integral(w, (0.6, 0.0), 0.25, exponent=2.0)

        def integrand(y, x):
            r = np.hypot(x, y)
            dw = (2 / 3) * r ** (-1 / 3)
            return (dw / (r ** (2 / 3) + 0.5)) ** 2

        oracle, _ = dblquad(
            integrand,
            0.35,
            0.85,
            lambda x: -np.sqrt(np.maximum(0.25**2 - (x - 0.6) ** 2, 0.0)),
            lambda x: np.sqrt(np.maximum(0.25**2 - (x - 0.6) ** 2, 0.0)),
            epsabs=1e-10,
        )
        assert val == pytest.approx(oracle, rel=0.01)

    def test_nonpositive_rejected(self, disk):
        w = field_of(disk, lambda v: v[:, 0])
        with pytest.raises(PositivityError):
            bloch_integral(w, (0, 0), 0.5)


class TestCaccioppoli:
    def _radial_setup(self, h=1 / 32):
        dom = om.build_annulus(h)
        phi = om.PowerPhi(4)
        f = om.ScalarField.from_rule(
            dom, om.SpatialField.from_rule("radial", coef=1.0, power=2 / 3)
        )
        env = om.GrowthEnvelope(p=4, q=4, L_p=1, L_q=1, beta_a0=1.0, beta_a1=1.0)
        return dom, phi, f, env

    def test_constant_field_lhs_zero(self):
        dom, phi, f, env = self._radial_setup()
        u = om.ScalarField(dom, np.full(dom.n_vertices, 2.0))
        psi = om.build_psi(phi, BallRegion((0.6, 0.0), 0.25), p=4.0)
        params = CaccioppoliParams(
            center=(0.6, 0.0), R=0.25, sigma=0.5, ell=1.0, s=4.0,
            psi=psi, beta=psi.a0_beta(), p1=4.0,
        )
        res = caccioppoli_check(phi, u, params, env)
        assert res.lhs == 0.0
        assert res.rhs > 0.0

    def test_spot_constant_through_check(self):
        dom, phi, f, env = self._radial_setup()
        u, _ = om.solve(om.DirichletProblem(dom, phi, f, envelope=env), TIGHT)
        psi = om.build_psi(phi, BallRegion((0.6, 0.0), 0.25), p=4.0)
        params = CaccioppoliParams(
            center=(0.6, 0.0), R=0.25, sigma=0.5, ell=1.0, s=4.0,
            psi=psi, beta=psi.a0_beta(), p1=4.0,
        )
        res = caccioppoli_check(phi, u, params, env)
        assert res.K == pytest.approx(26.41, abs=0.005)
        assert res.lhs <= res.rhs
        assert res.margin > 0

    def test_infinite_psi_terms_counted(self):
        # a saturated comparison function contributes zero through its
        # negative power; the count of infinite values is reported
        dom = om.build_disk(1 / 16)
        phi = om.VariableExponentPhi(om.SpatialField.from_rule("log-exponent", scale=4.0))
        ball = BallRegion((0.0, 0.0), 0.25)
        psi = om.build_psi(phi, ball, p=4.0)
        assert psi.saturated
        u = om.ScalarField(dom, dom.vertices[:, 0] + 2.0)
        env = om.GrowthEnvelope(p=4, q=30.0, L_p=1, L_q=1, beta_a0=1.0, beta_a1=0.5)
        params = CaccioppoliParams(
            center=(0.0, 0.0), R=0.25, sigma=0.5, ell=1.0, s=30.0,
            psi=psi, beta=psi.a0_beta(), p1=4.0,
        )
        res = caccioppoli_check(phi, u, params, env)
        assert res.infinite_psi_terms > 0
        assert np.isfinite(res.lhs)

    def test_cutoff_bounds(self):
        dom, _, _, _ = self._radial_setup()
        eta = make_cutoff(dom, (0.6, 0.0), 0.25, 0.5)
        d = np.hypot(dom.vertices[:, 0] - 0.6, dom.vertices[:, 1])
        assert np.all(eta.values[d <= 0.125 * (1 - 1e-9)] == 1.0)
        assert np.all(eta.values[d >= 0.25] == 0.0)
        g = om.gradient_field(dom, eta).magnitude().values
        assert g.max() <= 2.0 / (0.5 * 0.25) * (1 + 1e-9)


class TestResidual:
    def test_affine_minimizer_zero(self):
        dom = om.build_square(1 / 16)
        phi = om.PowerPhi(4)
        u = field_of(dom, lambda v: 1.0 + 2.0 * v[:, 0] - 0.5 * v[:, 1])
        tests = random_bump_fields(dom, 10, seed=5)
        res = variational_residual(phi, u, tests)
        assert abs(res) < 1e-13

    def test_solver_output_stationary(self):
        dom = om.build_annulus(1 / 16)
        phi = om.PowerPhi(4)
        f = om.ScalarField.from_rule(
            dom, om.SpatialField.from_rule("radial", coef=1.0, power=2 / 3)
        )
        u, _ = om.solve(om.DirichletProblem(dom, phi, f), TIGHT)
        tests = random_bump_fields(dom, 40, seed=6)
        # coarse-mesh smoke bound; the acceptance suite pins -1e-8 at h=1/64
        assert variational_residual(phi, u, tests, normalized=True) >= -1e-7

    def test_non_minimizer_descends(self):
        # the boundary extension is not the discrete minimizer; the
        # direction toward the minimizer strictly decreases the energy
        dom = om.build_annulus(1 / 16)
        phi = om.PowerPhi(4)
        f = om.ScalarField.from_rule(
            dom, om.SpatialField.from_rule("radial", coef=1.0, power=2 / 3)
        )
        ustar, _ = om.solve(om.DirichletProblem(dom, phi, f), TIGHT)
        direction = om.ScalarField(dom, ustar.values - f.values)
        res = variational_residual(phi, f, [direction])
        assert res < -1e-9

    def test_boundary_support_enforced(self):
        dom = om.build_square(1 / 8)
        bad = field_of(dom, lambda v: v[:, 0] + 1.0)
        with pytest.raises(ValueError):
            variational_residual(om.PowerPhi(2), bad, [bad])

    def test_bumps_deterministic(self):
        dom = om.build_square(1 / 16)
        a = random_bump_fields(dom, 5, seed=42)
        b = random_bump_fields(dom, 5, seed=42)
        for fa, fb in zip(a, b):
            assert np.array_equal(fa.values, fb.values)


class TestMonotonicity:
    def test_affine_passes(self, disk):
        u = field_of(disk, lambda v: v[:, 0])
        res = monotonicity_check(u, [{"type": "ball", "center": [0, 0], "r": 0.5}])
        assert res.passed

    def test_interior_peak_fails_at_center(self, disk):
        u = field_of(disk, lambda v: np.exp(-(v[:, 0] ** 2 + v[:, 1] ** 2)))
        res = monotonicity_check(u, [{"type": "ball", "center": [0, 0], "r": 0.5}])
        assert not res.passed
        assert np.hypot(*res.witness["x"]) < 1e-12
        assert res.witness["value"] == pytest.approx(1.0)

    def test_rect_subdomain(self, disk):
        u = field_of(disk, lambda v: v[:, 0] + v[:, 1])
        res = monotonicity_check(u, [{"type": "rect", "lo": [-0.4, -0.4], "hi": [0.4, 0.4]}])
        assert res.passed


class TestSphereOscillation:
    def test_coordinate_field_analytic(self):
        # osc over the circle of radius R of x1 is 2R; the integral over
        # R in (1, 2) of (2R)^2 is 28/3
        dom = om.build_disk(1 / 16, radius=2.2)
        v = field_of(dom, lambda p: p[:, 0])
        res = sphere_oscillation(v, (0, 0), 1.0, p=2.0)
        assert res.osc_integral == pytest.approx(28.0 / 3.0, rel=0.01)
        assert res.inner_term <= res.osc_integral

    def test_constant_zero(self, disk):
        v = field_of(disk, lambda p: 0 * p[:, 0] + 4.0)
        res = sphere_oscillation(v, (0, 0), 0.25, p=2.0)
        # circle values go through barycentric interpolation, which leaves
        # sub-ulp oscillation; the vertex-based terms are exactly zero
        assert res.osc_integral <= 1e-28
        assert res.gradient_bound == 0.0 and res.inner_term == 0.0

    def test_refinement_error_outside_mesh(self, disk):
        v = field_of(disk, lambda p: p[:, 0])
        with pytest.raises(RefinementError):
            sphere_oscillation(v, (0.9, 0.0), 0.5, p=2.0)
