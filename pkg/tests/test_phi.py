"""Growth-function evaluation, derivatives, conjugates and serialization."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import orliczmin as om
from orliczmin.phi import ExtrapolationError, _conjugate_numeric

ORIGIN = np.zeros(2)


def varexp_phi():
    return om.VariableExponentPhi(om.SpatialField.from_rule("log-exponent", scale=4.0))


def doublephase_unit():
    return om.DoublePhasePhi(2.0, 4.0, om.SpatialField.constant(1.0))


class TestEval:
    def test_variable_exponent_unit_circle(self):
        # p(x) = 4*log(e/|x|) = 4 at |x| = 1, so phi = 2^4
        phi = varexp_phi()
        assert phi.eval(np.array([1.0, 0.0]), 2.0) == pytest.approx(16.0, rel=1e-14)
        assert phi.eval(np.array([0.0, -1.0]), 2.0) == pytest.approx(16.0, rel=1e-14)

    def test_zero_at_zero(self):
        for phi in (om.PowerPhi(3), varexp_phi(), doublephase_unit()):
            assert phi.eval(np.array([0.3, 0.1]), 0.0) == 0.0

    def test_double_phase_direct(self):
        assert doublephase_unit().eval(ORIGIN, 0.5) == pytest.approx(0.3125, abs=1e-15)

    def test_extended_real_fiber(self):
        # the exponent field is infinite at the origin
        phi = varexp_phi()
        assert phi.eval(ORIGIN, 0.5) == 0.0
        assert phi.eval(ORIGIN, 1.0) == 1.0
        assert phi.eval(ORIGIN, 2.0) == np.inf

    def test_negative_t_rejected(self):
        with pytest.raises(ValueError):
            om.PowerPhi(2).eval(ORIGIN, -1.0)

    @settings(max_examples=60, deadline=None)
    @given(
        s=st.floats(min_value=1e-6, max_value=1e3),
        frac=st.floats(min_value=1e-3, max_value=1.0),
        r=st.floats(min_value=0.05, max_value=1.0),
    )
    def test_monotone_in_t(self, s, frac, r):
        x = np.array([r, 0.0])
        t = s * frac
        for phi in (om.PowerPhi(3.5), varexp_phi(), doublephase_unit()):
            assert phi.eval(x, t) <= phi.eval(x, s) * (1 + 1e-12) + 1e-300

    @settings(max_examples=40, deadline=None)
    @given(
        s=st.floats(min_value=1e-3, max_value=50.0),
        t=st.floats(min_value=1e-3, max_value=50.0),
    )
    def test_midpoint_convexity(self, s, t):
        x = np.array([0.4, 0.2])
        for phi in (om.PowerPhi(2.7), varexp_phi(), doublephase_unit()):
            lhs = phi.eval(x, 0.5 * (s + t))
            rhs = 0.5 * (phi.eval(x, s) + phi.eval(x, t))
            assert lhs <= rhs * (1 + 1e-12) + 1e-300


class TestDerivatives:
    def test_power_smooth(self):
        dm, dp = om.PowerPhi(3).derivatives(ORIGIN, 2.0)
        assert dm == pytest.approx(12.0, rel=1e-14)
        assert dp == pytest.approx(12.0, rel=1e-14)

    def test_zero_for_superlinear_at_origin(self):
        for phi in (om.PowerPhi(3), doublephase_unit()):
            dm, dp = phi.derivatives(ORIGIN + 0.3, 0.0)
            assert dm == 0.0 and dp == 0.0

    def test_sampled_kink_difference_quotients(self):
        # ramp t + (t-1)_+ : slopes 1 and 2 meet at t = 1; one-sided
        # difference quotients on refining grids converge to (1, 2)
        ramp = lambda t: t + np.clip(t - 1.0, 0.0, None)
        prev_gap = None
        for n in (64, 256, 1024):
            tg = np.linspace(0.25, 4.0, n)
            tg = np.unique(np.concatenate([tg, [1.0]]))
            phi = om.SampledPhi(tg, ramp(tg), allow_extrapolation=True)
            dm, dp = phi.derivatives(ORIGIN, 1.0)
            # independent difference-quotient oracle on the same grid
            i = int(np.searchsorted(tg, 1.0))
            om_dm = (ramp(tg[i]) - ramp(tg[i - 1])) / (tg[i] - tg[i - 1])
            om_dp = (ramp(tg[i + 1]) - ramp(tg[i])) / (tg[i + 1] - tg[i])
            assert dm == pytest.approx(om_dm, rel=1e-12)
            assert dp == pytest.approx(om_dp, rel=1e-12)
            gap = abs(dm - 1.0) + abs(dp - 2.0)
            if prev_gap is not None:
                assert gap <= prev_gap + 1e-12
            prev_gap = gap
        assert prev_gap < 2e-2

    def test_sampled_smooth_interior(self):
        tg = np.geomspace(0.01, 10.0, 200)
        phi = om.SampledPhi(tg, tg**3)
        dm, dp = phi.derivatives(ORIGIN, 0.5)
        assert dm == pytest.approx(3 * 0.25, rel=1e-10)
        assert dp == pytest.approx(3 * 0.25, rel=1e-10)

    def test_ordered(self):
        tg = np.geomspace(0.1, 10.0, 50)
        phi = om.SampledPhi(tg, tg + np.clip(tg - 1, 0, None))
        for t in (0.3, 1.0, 2.7):
            dm, dp = phi.derivatives(ORIGIN, t)
            assert dm <= dp + 1e-12

    def test_infinite_fiber_signal(self):
        phi = varexp_phi()
        dm, dp = phi.derivatives(ORIGIN, 2.0)
        assert np.isinf(dm) and np.isinf(dp)


class TestConjugate:
    def test_power_closed_form_vs_grid_oracle(self):
        # phi(t) = t^2 has conjugate s^2/4; grid-sup oracle over [0, 10]
        phi = om.PowerPhi(2)
        t = np.arange(0.0, 10.0, 1e-4)
        oracle = float(np.max(2.0 * t - t**2))
        val = phi.conjugate(ORIGIN, 2.0)
        assert val == pytest.approx(1.0, rel=1e-12)
        assert val == pytest.approx(oracle, rel=1e-7)

    def test_zero_at_zero(self):
        for phi in (om.PowerPhi(3), varexp_phi(), doublephase_unit()):
            assert phi.conjugate(np.array([0.5, 0.0]), 0.0) == 0.0

    def test_numeric_matches_closed_form(self):
        phi = om.PowerPhi(3, scale=2.0)
        b = phi.bind(np.atleast_2d(ORIGIN))
        for s in (0.3, 1.7, 40.0):
            num = _conjugate_numeric(lambda t: b.eval(t), s)
            assert num == pytest.approx(phi.conjugate(ORIGIN, s), rel=1e-9)

    @settings(max_examples=25, deadline=None)
    @given(
        s=st.floats(min_value=1e-2, max_value=30.0),
        t=st.floats(min_value=1e-2, max_value=30.0),
    )
    def test_young_inequality(self, s, t):
        x = np.array([0.3, -0.2])
        for phi in (om.PowerPhi(2.5), doublephase_unit()):
            gap = phi.eval(x, s) + phi.conjugate(x, t) - s * t
            assert gap >= -1e-9 * max(1.0, s * t)

    def test_young_spot(self):
        gap = doublephase_unit().young_gap(ORIGIN, 1.3, 2.7)
        assert gap >= 0.0

    def test_conjugate_phi_object(self):
        conj = om.ConjugatePhi(om.PowerPhi(2))
        assert conj.eval(ORIGIN, 2.0) == pytest.approx(1.0, rel=1e-12)


class TestScaling:
    def test_scaled_eval_and_derivative(self):
        phi = doublephase_unit()
        phi7 = phi.scaled(7.0)
        x = np.array([0.2, 0.2])
        assert phi7.eval(x, 1.3) == pytest.approx(7 * phi.eval(x, 1.3), rel=1e-14)
        dm, dp = phi.derivatives(x, 1.3)
        dm7, dp7 = phi7.derivatives(x, 1.3)
        assert dm7 == pytest.approx(7 * dm, rel=1e-14)

    def test_scaled_conjugate_identity(self):
        # (c phi)*(s) = c phi*(s/c)
        phi = om.PowerPhi(3)
        c = 5.0
        for s in (0.7, 2.0, 11.0):
            lhs = phi.scaled(c).conjugate(ORIGIN, s)
            rhs = c * phi.conjugate(ORIGIN, s / c)
            assert lhs == pytest.approx(rhs, rel=1e-12)

    def test_invalid_scale(self):
        with pytest.raises(ValueError):
            om.PowerPhi(2).scaled(-1.0)


class TestSampled:
    def test_power_law_interp_exact_for_powers(self):
        tg = np.geomspace(0.01, 100.0, 40)
        phi = om.SampledPhi(tg, 4.0 * tg**2)
        for t in (0.02, 0.5, 3.7, 80.0):
            assert phi.eval(ORIGIN, t) == pytest.approx(4 * t**2, rel=1e-12)
        # below-grid extension continues the power law
        assert phi.eval(ORIGIN, 1e-4) == pytest.approx(4e-8, rel=1e-9)

    def test_extrapolation_error(self):
        tg = np.geomspace(0.1, 10.0, 20)
        phi = om.SampledPhi(tg, tg**2)
        with pytest.raises(ExtrapolationError):
            phi.eval(ORIGIN, 20.0)
        assert om.SampledPhi(tg, tg**2, allow_extrapolation=True).eval(
            ORIGIN, 20.0
        ) == pytest.approx(400.0, rel=1e-9)

    def test_decreasing_values_rejected(self):
        tg = np.array([1.0, 2.0, 3.0])
        with pytest.raises(ValueError):
            om.SampledPhi(tg, np.array([1.0, 0.5, 2.0]))

    def test_infinite_tail(self):
        tg = np.array([0.5, 1.0, 2.0, 4.0])
        phi = om.SampledPhi(tg, np.array([0.25, 1.0, np.inf, np.inf]))
        assert phi.eval(ORIGIN, 1.0) == 1.0
        assert phi.eval(ORIGIN, 1.5) == np.inf
        assert phi.eval(ORIGIN, 0.75) < 1.0

    def test_spatial_rows(self):
        pts = np.array([[0.0, 0.0], [1.0, 0.0]])
        tg = np.array([1.0, 2.0])
        vals = np.array([[1.0, 4.0], [2.0, 8.0]])
        phi = om.SampledPhi(tg, vals, points=pts)
        assert phi.eval(np.array([0.1, 0.0]), 1.0) == 1.0
        assert phi.eval(np.array([0.9, 0.0]), 1.0) == 2.0


class TestSerialization:
    @pytest.mark.parametrize(
        "phi",
        [
            om.PowerPhi(3.5, scale=2.0),
            om.VariableExponentPhi(om.SpatialField.from_rule("log-exponent", scale=4.0)),
            om.DoublePhasePhi(3, 3.5, om.SpatialField.from_rule("radial", coef=1.0, power=1.0)),
            om.SampledPhi(np.geomspace(0.1, 10, 20), np.geomspace(0.1, 10, 20) ** 2),
        ],
    )
    def test_roundtrip(self, phi):
        clone = om.phi_from_json(phi.to_json())
        x = np.array([0.3, 0.4])
        for t in (0.2, 1.0, 5.0):
            assert clone.eval(x, t) == pytest.approx(phi.eval(x, t), rel=1e-14)

    def test_truncated_roundtrip(self):
        tr = om.build_phi_lambda(om.PowerPhi(4), om.TruncationParams(lam=4.0, p=4.0))
        clone = om.phi_from_json(tr.to_json())
        assert clone.eval(ORIGIN, 1.7) == pytest.approx(tr.eval(ORIGIN, 1.7), rel=1e-14)

    def test_field_rules_roundtrip(self):
        f = om.SpatialField.from_rule("affine", a0=2.0, ax=1.0, ay=-0.5)
        g = om.SpatialField.from_json(f.to_json())
        pts = np.array([[0.1, 0.2], [0.5, -0.4]])
        assert np.allclose(f(pts), g(pts))
