"""
Unit tests for collapse flows toward the zero section.
"""

import math

import numpy as np
import pytest

from contact_lab.collapse import (
    RATIO_HEADER, ApproximantStage, CollapseMap, CollapseProfile, GCalculus,
    RadialWeight, bihari_envelope,
    boundedness_diagnostics, build_approximant, calculus_for,
    check_assumptions, collapse_hamiltonian, injectivity_check,
    integrate_collapse, log_abs_wall_map, preset, square_closed_form,
    tangency_order, wall_map,
)
from contact_lab.errors import PreconditionError, TableRangeError
from contact_lab.geometry import (
    AmbientSpace, DiffeoSample, QuadratureConfig, dilation_sample,
)
from contact_lab.hamiltonian import COMPLETED, IntegratorConfig, ScalarField


@pytest.mark.unit
class TestProfiles:
    """Tests for weights, profiles and presets."""

    def test_presets(self):
        """Test the three named presets."""
        profile, weight = preset("square")
        assert (profile.base, weight.d_y, weight.d_z) == ("power", 2, 2)
        profile, weight = preset("fourfinite")
        assert (profile.base, weight.d_y, weight.d_z) == ("linear", 4, 2)
        profile, weight = preset("fourinf", u0=2.0, u1=None)
        assert profile.base == "loglinear"
        assert profile.u0 == 2.0 and profile.u1 == 3.0

    def test_unknown_preset(self):
        """Test an unknown preset name."""
        with pytest.raises(PreconditionError, match="Unknown preset"):
            preset("cubic")

    def test_glue_order(self):
        """Test u0 must be below u1."""
        with pytest.raises(PreconditionError, match="u0 < u1"):
            preset("square", u0=3.0)

    @pytest.mark.parametrize("d_y,d_z", [(2, 4), (3, 2), (0, 2)])
    def test_invalid_weights(self, d_y, d_z):
        """Test odd, small or misordered exponents are refused."""
        with pytest.raises(PreconditionError):
            RadialWeight(d_y, d_z)

    def test_weight_homogeneity(self, rng):
        """Test rho_y is homogeneous of degree d_y."""
        assert RadialWeight.quartic().homogeneity_defect(rng, 3) < 1e-12

    def test_log_rho_no_underflow(self):
        """Test log rho stays finite where rho underflows."""
        weight = RadialWeight.quartic()
        assert weight.log_rho(np.array([1e-200]), 0.0) == pytest.approx(
            4.0 * math.log(1e-200)
        )
        assert weight.log_rho(np.zeros(1), 0.0) == -math.inf

    def test_profile_flat_then_base(self):
        """Test F = 0 up to u0 and equals the base from u1."""
        profile = CollapseProfile("power", u0=0.5, u1=2.0, beta=0.5)
        assert profile.value(0.5) == 0.0
        assert profile.value(0.1) == 0.0
        assert profile.value(4.0) == pytest.approx(-2.0)
        assert profile.value(1.0) < 0.0

    def test_profile_derivative(self):
        """Test F' against central differences in the glue region."""
        profile = CollapseProfile("loglinear", u0=1.5, u1=3.0)
        h = 1e-6
        for u in (1.8, 2.5, 5.0):
            fd = (profile.value(u + h) - profile.value(u - h)) / (2 * h)
            assert profile.derivative(u) == pytest.approx(fd, rel=1e-6)

    def test_sign_assumptions(self):
        """Test F <= 0, F' <= 0 and F = 0 exactly up to u0."""
        profile, weight = preset("square")
        report = check_assumptions(profile, weight)
        assert report.verdicts["i"]
        assert report.verdicts["ii"]
        assert set(report.verdicts) == {"i", "ii", "iii", "iv", "v"}


@pytest.mark.unit
class TestGCalculus:
    """Tests for G and its inverse."""

    @pytest.mark.parametrize("name", ["square", "fourfinite", "fourinf"])
    def test_closed_matches_quadrature(self, name):
        """Test closed-form and tabulated tails agree."""
        profile, _ = preset(name)
        closed = GCalculus(profile)
        table = GCalculus(profile, mode="quadrature", u_max=200.0)
        for u in (profile.u1, 5.0, 50.0, 150.0):
            assert table.G(u) == pytest.approx(closed.G(u), rel=1e-8, abs=1e-12)

    def test_inverse_round_trip(self):
        """Test G^-1(G(u)) = u inside the glue and beyond."""
        profile, _ = preset("square")
        calculus = calculus_for(profile)
        for u in (0.6, 1.3, 2.0, 10.0):
            assert calculus.inverse(calculus.G(u)) == pytest.approx(u, rel=1e-9)
        assert calculus.G(profile.u1) == 0.0

    def test_sign(self):
        """Test G is positive inside the glue and negative beyond u1."""
        calculus = calculus_for(preset("square")[0])
        assert calculus.G(1.0) > 0.0
        assert calculus.G(3.0) < 0.0

    def test_below_table(self):
        """Test G below the tabulated glue start raises."""
        calculus = calculus_for(preset("square")[0])
        with pytest.raises(TableRangeError):
            calculus.G(0.5)

    def test_log_inverse_beyond_overflow(self):
        """Test log G^-1 stays finite where G^-1 overflows."""
        calculus = calculus_for(preset("fourinf")[0])
        assert math.isfinite(calculus.log_inverse(-10.0))
        assert calculus.log_inverse(-10.0) > 709.0


@pytest.mark.unit
class TestCollapseFlows:
    """Tests for integrate_collapse and the closed forms."""

    def test_hamiltonian_gradient(self):
        """Test the analytic gradient of z F(-log rho)."""
        profile, weight = preset("square")
        space = AmbientSpace(1)
        H = collapse_hamiltonian(profile, weight, space)
        numeric = ScalarField(value=H.value, space=space)
        p = np.array([0.1, 0.3, 0.2])
        assert np.allclose(H.grad(0.0, p), numeric.grad(0.0, p), atol=1e-6)
        assert H(0.0, np.array([0.4, 0.0, 0.0])) == 0.0

    def test_far_points_fixed(self):
        """Test points with -log rho <= u0 do not move."""
        profile, weight = preset("square")
        p = np.array([0.2, 1.0, 0.0])
        trajectory = integrate_collapse(profile, weight, p, 1.0)
        assert np.array_equal(trajectory.endpoint, p)

    def test_square_closed_form(self, rng):
        """Test the closed-form square map against the integrator."""
        profile, weight = preset("square")
        calculus = calculus_for(profile)
        for t in (0.3, 0.7, 1.2):
            for p in rng.uniform(-0.5, 0.5, size=(8, 3)):
                closed = square_closed_form(calculus, weight, p, t)
                flow = integrate_collapse(
                    profile, weight, p, t, IntegratorConfig.tight()
                )
                assert flow.status == COMPLETED
                assert np.allclose(closed, flow.endpoint, atol=1e-6)

    def test_closed_form_needs_square(self):
        """Test the closed form refuses other weights."""
        profile, weight = preset("fourfinite")
        with pytest.raises(PreconditionError, match="Closed form"):
            square_closed_form(calculus_for(profile), weight, np.ones(3), 0.5)

    def test_polar_matches_cartesian(self):
        """Test the polar and Cartesian charts agree away from Z."""
        profile, weight = preset("square")
        p = np.array([0.0, 0.3, 0.2])
        cfg = IntegratorConfig.tight()
        polar = integrate_collapse(profile, weight, p, 0.3, cfg).endpoint
        cartesian = integrate_collapse(
            profile, weight, p, 0.3, cfg, chart="cartesian"
        ).endpoint
        assert np.allclose(polar, cartesian, atol=1e-6)

    def test_bihari_envelope_contains_flow(self, rng):
        """Test -log rho at time t lies inside the envelope."""
        profile, weight = preset("fourfinite")
        calculus = calculus_for(profile)
        for _ in range(10):
            p = rng.uniform(-0.3, 0.3, size=3)
            u = weight.neg_log_rho(p[1:2], p[2])
            if u <= 1.05 * profile.u0:
                continue
            trajectory = integrate_collapse(
                profile, weight, p, 0.4, IntegratorConfig.tight()
            )
            lo, hi = bihari_envelope(calculus, weight, u, 0.4)
            u_t = trajectory.extras["u"][-1]
            assert lo * (1 - 1e-6) <= u_t <= hi * (1 + 1e-6)

    def test_bihari_trivial_start(self):
        """Test the envelope refuses starts with F = 0."""
        profile, weight = preset("square")
        with pytest.raises(PreconditionError, match="trivial"):
            bihari_envelope(calculus_for(profile), weight, 0.2, 1.0)

    def test_fourfinite_wall_is_cubic(self):
        """Test g(z) = z^3 at t = ln 3 / 2 for the linear base."""
        profile, weight = preset("fourfinite")
        calculus = calculus_for(profile)
        t = math.log(3.0) / 2.0
        for z in (1e-2, -3e-2, 1e-1):
            assert wall_map(calculus, weight, z, t) == pytest.approx(
                z ** 3, rel=1e-10
            )
        assert wall_map(calculus, weight, 0.0, t) == 0.0

    def test_tangency_orders(self):
        """Test a finite order for fourfinite, super-polynomial for fourinf."""
        ladder = [1e-1, 1e-2, 1e-3, 1e-4]
        profile, weight = preset("fourfinite")
        calculus = calculus_for(profile)
        t = math.log(3.0) / 2.0
        finite = tangency_order(lambda z: wall_map(calculus, weight, z, t), ladder)
        assert finite.order == pytest.approx(3.0, abs=0.02)
        assert not finite.super_polynomial

        profile, weight = preset("fourinf")
        calculus = calculus_for(profile)
        infinite = tangency_order(
            lambda z: log_abs_wall_map(calculus, weight, z, 1.0), ladder,
            log_abs=True,
        )
        assert infinite.super_polynomial
        assert infinite.order > 5.0

    def test_flat_map(self):
        """Test g = 0 marks every window flat."""
        estimate = tangency_order(lambda z: 0.0, [1e-1, 1e-2])
        assert estimate.flat.all()
        assert math.isnan(estimate.order)


@pytest.mark.unit
class TestCollapseMaps:
    """Tests for CollapseMap and the approximants."""

    def test_approximant_cutoff_on_scalars(self):
        """Test F_m and its derivative accept plain floats."""
        profile, weight = preset("square")
        stage = ApproximantStage(profile, calculus_for(profile), 6, weight.d_y)
        below, above = stage.a - 0.5, stage.a + 1.5
        assert isinstance(stage.cutoff_derivative(below), float)
        assert stage.cutoff_derivative(below) == 1.0
        assert stage.cutoff_derivative(above) == 0.0
        assert list(stage.cutoff_derivative(np.array([below, above]))) == [1.0, 0.0]
        u, h = stage.a + 0.3, 1e-6
        numeric = (stage.value(u + h) - stage.value(u - h)) / (2.0 * h)
        assert isinstance(stage.derivative(u), float)
        assert stage.derivative(u) == pytest.approx(numeric, rel=1e-5)
        assert stage.value(above) == pytest.approx(stage.c_m)

    def test_zero_section_fixed(self):
        """Test Z is fixed with f = 0 forward in time."""
        profile, weight = preset("square")
        p = np.array([0.3, 0.0, 0.0])
        forward = CollapseMap(profile, weight, 1.0, space=AmbientSpace(1))
        assert np.array_equal(forward(p), p)
        assert forward.log_factor(p) == -math.inf
        assert forward.factor(p) == 0.0
        still = CollapseMap(profile, weight, 0.0)
        assert still.log_factor(p) == 0.0

    def test_sample_needs_space(self):
        """Test as_sample without an ambient space."""
        profile, weight = preset("square")
        with pytest.raises(PreconditionError, match="ambient space"):
            CollapseMap(profile, weight, 1.0).as_sample()

    def test_approximant_dilates_near_zero_section(self):
        """Test psi_m is (x, e^c y, e^c z) where -log rho >= u_m."""
        profile, weight = preset("square")
        space = AmbientSpace(1)
        psi, f_m, stage = build_approximant(profile, weight, 4, space)
        assert stage.a > 4
        r = math.exp(-stage.u_m) / 4.0
        p = np.array([0.1, r, -r])
        scale = math.exp(stage.c_m)
        assert np.allclose(psi(p), [0.1, scale * r, -scale * r])
        assert f_m(p) == pytest.approx(scale)

    def test_approximant_matches_flow_far_out(self):
        """Test psi_m agrees with the collapse flow where -log rho <= m."""
        profile, weight = preset("square")
        space = AmbientSpace(1)
        psi, _, _ = build_approximant(profile, weight, 4, space)
        flow = CollapseMap(profile, weight, 1.0, space=space)
        p = np.array([0.0, 0.2, 0.2])
        assert weight.neg_log_rho(p[1:2], p[2]) < 4
        assert np.allclose(psi(p), flow(p), atol=1e-9)
        assert psi.log_factor(p) == pytest.approx(flow.log_factor(p), abs=1e-9)

    def test_injective_on_samples(self, rng):
        """Test the square collapse map separates sample points."""
        profile, weight = preset("square")
        flow = CollapseMap(profile, weight, 0.5, space=AmbientSpace(1))
        report = injectivity_check(flow, rng.uniform(-0.4, 0.4, size=(12, 3)))
        assert report.injective
        assert report.pairs == 66

    def test_boundedness_of_dilation(self):
        """Test a dilation has constant volume ratio and bounded factor."""
        psi = dilation_sample(AmbientSpace(1), 0.3)
        report = boundedness_diagnostics(
            psi, np.zeros(3), [0.1, 0.05, 0.025],
            QuadratureConfig(points_per_axis=2),
        )
        assert report.ratio_bounded_below == "yes"
        assert report.sup_f_bounded == "yes"
        assert not report.strictly_decreasing
        for row in report.rows:
            assert row.ratio == pytest.approx(math.exp(0.6))
            assert row.log_ratio == pytest.approx(0.6)

    def test_underflowing_ratios_collapse(self):
        """Test ratios below the float range are compared as logs."""
        space = AmbientSpace(1)
        psi = DiffeoSample(
            evaluate=lambda p: p, space=space,
            log_factor=lambda p: -1e3 / max(float(np.max(np.abs(p))), 1e-12),
        )
        report = boundedness_diagnostics(
            psi, np.zeros(3), [0.1, 0.05, 0.025],
            QuadratureConfig(points_per_axis=2),
        )
        assert [r.ratio for r in report.rows] == [0.0, 0.0, 0.0]
        assert report.log_ratios == pytest.approx([-4e4, -8e4, -1.6e5])
        assert report.strictly_decreasing
        assert report.ratio_bounded_below == "no"
        assert len(report.rows[0].as_list()) == len(RATIO_HEADER)
