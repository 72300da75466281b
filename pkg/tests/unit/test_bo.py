"""
Unit tests for the graph-approximation construction.
"""

import numpy as np
import pytest

from contact_lab.bo import (
    STAGE_HEADER, BumpPair, TargetProfile, build_bo, compose_bo,
    cube_root_target, from_samples, graph_errors, graph_header, graph_rows,
    image_chart, mollify_sequence, reduced_field, select_ell, stage_bounds,
    stage_hamiltonian, stage_rows, stage_vector_field, support_w_samples,
    tent_target, transport_check, verify_bo, w_indices, zero_target,
)
from contact_lab.errors import PreconditionError, ScheduleError
from contact_lab.geometry import AmbientSpace, Box
from contact_lab.hamiltonian import (
    hamiltonian_vector_field, random_polynomial_field,
)


@pytest.fixture(scope="module")
def construction():
    return build_bo(cube_root_target(), 2, grid_points=9)


@pytest.mark.unit
class TestTargets:
    """Tests for target profiles."""

    def test_w_indices(self):
        """Test the w-coordinates skip x1 and y1."""
        assert list(w_indices(1)) == [2]
        assert list(w_indices(2)) == [1, 3, 4]
        assert list(w_indices(3)) == [1, 2, 4, 5, 6]

    def test_reduced_field_is_contact_field(self, rng):
        """Test the reduced field on w-space is X_G of dz - y dx."""
        space = AmbientSpace(1)
        G = random_polynomial_field(space, rng)
        w = rng.uniform(-0.5, 0.5, size=3)
        assert np.allclose(
            reduced_field(G(0.0, w), G.grad(0.0, w), w),
            hamiltonian_vector_field(G, 0.0, w),
        )

    def test_cube_root(self):
        """Test the cube-root target near 0 and off its support."""
        target = cube_root_target()
        assert target(np.array([1e-3])) == pytest.approx(0.08)
        assert target(np.array([-1e-3])) == pytest.approx(-0.08)
        assert target(np.array([0.8])) == 0.0
        assert target.check() < 1.0
        assert target.gap == pytest.approx(0.45)

    def test_sup_not_below_one(self):
        """Test targets with sup|F| >= 1 are refused."""
        with pytest.raises(PreconditionError, match="is not < 1"):
            cube_root_target(amplitude=2.0).check()

    def test_support_inside_domain(self):
        """Test K must sit inside U."""
        box = Box([-1.0], [1.0])
        with pytest.raises(PreconditionError, match="support not inside"):
            TargetProfile(evaluate=lambda w: 0.0, dim=1, domain=box, support=box)

    def test_even_dimension(self):
        """Test w-space must be odd-dimensional."""
        box = Box.centered(np.zeros(2), 1.0)
        with pytest.raises(PreconditionError, match="not odd"):
            TargetProfile(
                evaluate=lambda w: 0.0, dim=2, domain=box,
                support=Box.centered(np.zeros(2), 0.5),
            )

    def test_tent(self):
        """Test the tent peaks at the origin in w-space of R^5."""
        target = tent_target()
        assert target.dim == 3
        assert target(np.zeros(3)) == pytest.approx(0.5)

    def test_csv_samples(self, tmp_path):
        """Test a target read from a two-column CSV file."""
        path = tmp_path / "f.csv"
        path.write_text("w,F\n-0.5,0\n-0.25,0.2\n0,0.4\n0.25,0.2\n0.5,0\n")
        target = from_samples(path)
        assert target.dim == 1
        assert target(np.array([0.0])) == pytest.approx(0.4)
        assert target(np.array([0.125])) == pytest.approx(0.3)
        assert target(np.array([0.7])) == 0.0
        assert list(target.domain.lower) == [-0.75]

    def test_npz_samples(self, tmp_path):
        """Test a target read from a gridded archive."""
        axis = np.linspace(-0.5, 0.5, 5)
        values = np.zeros((5, 5, 5))
        values[2, 2, 2] = 0.3
        path = tmp_path / "f.npz"
        np.savez(path, axis0=axis, axis1=axis, axis2=axis, values=values)
        target = from_samples(path)
        assert target.dim == 3
        assert target(np.zeros(3)) == pytest.approx(0.3)

    def test_npz_shape_mismatch(self, tmp_path):
        """Test values must match the axes."""
        path = tmp_path / "f.npz"
        np.savez(path, axis0=np.linspace(0, 1, 4), values=np.zeros(3))
        with pytest.raises(PreconditionError, match="does not match"):
            from_samples(path)

    def test_unsupported_file(self, tmp_path):
        """Test unknown sample formats."""
        with pytest.raises(PreconditionError, match="Unsupported"):
            from_samples(tmp_path / "f.txt")


@pytest.mark.unit
class TestSchedule:
    """Tests for the smoothing schedule and the bump pair."""

    def test_mollification_errors(self):
        """Test each level is within (1 - sup) 2^-k / 3 of F on the grid."""
        schedule = mollify_sequence(cube_root_target(), 3, grid_points=17)
        for k, error in enumerate(schedule.errors, start=1):
            assert error <= (1.0 - schedule.sup_f) * 2.0 ** -k / 3.0
        assert list(schedule.widths) == sorted(schedule.widths, reverse=True)
        assert all(s < 1.0 for s in schedule.level_sups())
        for k, s in enumerate(schedule.increment_sups(), start=1):
            assert s <= 2.0 ** (1 - k)
        assert schedule.level(0, np.zeros(1)) == 0.0

    def test_invalid_k_max(self):
        """Test k_max must be positive."""
        with pytest.raises(PreconditionError, match="k_max"):
            mollify_sequence(cube_root_target(), 0)

    def test_grid_budget(self):
        """Test convolution widths below the grid budget are refused."""
        with pytest.raises(ScheduleError, match="grid budget"):
            mollify_sequence(tent_target(), 1, grid_points=5)

    def test_bump_pair(self):
        """Test the bump pair properties on a fine grid."""
        bumps = BumpPair(epsilon=0.1)
        assert all(bumps.verify().values())
        assert bumps.constant >= 2.0
        assert bumps.v_radius == pytest.approx(0.75)

    def test_bump_margin(self):
        """Test the margin must lie in (0, 1)."""
        with pytest.raises(PreconditionError, match="margin"):
            BumpPair(epsilon=1.0)


@pytest.mark.unit
@pytest.mark.slow
class TestStages:
    """Tests for stage Hamiltonians and the stage selection."""

    def test_stage_field_written_out(self, construction):
        """Test the explicit stage field matches X_H of the stage Hamiltonian."""
        schedule, bumps = construction.schedule, construction.bumps
        H = stage_hamiltonian(schedule, bumps, 1, 2)
        for p in ([0.3, 0.1, 0.1], [-0.5, -0.2, -0.05], [0.0, 0.0, 0.2]):
            p = np.array(p)
            assert np.allclose(
                stage_vector_field(schedule, bumps, 1, 2, p),
                hamiltonian_vector_field(H, 0.0, p), atol=1e-12,
            )

    def test_invalid_ell(self, construction):
        """Test l must be at least 1."""
        with pytest.raises(PreconditionError, match="at least 1"):
            stage_hamiltonian(construction.schedule, construction.bumps, 1, 0)

    def test_selected_stages_meet_bounds(self, construction):
        """Test every selected stage satisfies its recorded bounds."""
        for params in construction.stages:
            assert params.valid
            sup_x, sup_hz = stage_bounds(
                construction.schedule, construction.bumps, params.k, params.ell
            )
            assert sup_x == pytest.approx(params.sup_x)
            assert sup_hz == pytest.approx(params.sup_hz)

    def test_support_samples_where_increment_nonzero(self, construction):
        """Test the support condition is checked on samples where G_k != 0."""
        schedule = construction.schedule
        for params in construction.stages:
            assert params.support_samples > 0
            assert params.support_verified
            samples = support_w_samples(schedule, params.k, 3)
            assert samples
            assert all(schedule.increment(params.k, w) != 0.0 for w in samples)

    def test_select_ell_first_stage(self, construction):
        """Test reselecting stage 1 reproduces the recorded parameters."""
        params = select_ell(construction.schedule, construction.bumps, 1)
        first = construction.stages[0]
        assert params.ell == first.ell
        assert params.support_samples == first.support_samples
        assert params.support_reach < params.support_limit

    def test_compose_bo_matches_psi(self, construction):
        """Test compose_bo rebuilds the same psi_m as the cached flows."""
        rebuilt = compose_bo(
            construction.schedule, construction.bumps, construction.stages, 2
        )
        cached = construction.psi(2)
        assert rebuilt.name == cached.name == "psi_2"
        for p in ([0.0, 0.0, 0.3], [0.2, 0.05, -0.4], [-0.5, -0.1, 0.1]):
            p = np.array(p)
            assert np.allclose(rebuilt(p), cached(p), atol=1e-9)

    def test_graph_errors(self, construction):
        """Test psi_m(0, 0, z) = (F_m(z), 0, z) on the grid."""
        for m in (1, 2):
            rows = graph_errors(construction, m, grid_points=9)
            assert max(e for _, _, e in rows) < 1e-4

    def test_zero_target(self):
        """Test a zero target needs l = 1 and composes to the identity."""
        built = build_bo(zero_target(), 2, grid_points=9)
        assert [s.ell for s in built.stages] == [1, 1]
        assert not any(s.support_verified for s in built.stages)
        assert not any(s.valid for s in built.stages)
        p = np.array([0.2, 0.1, -0.3])
        assert np.allclose(built.psi(2)(p), p)

    def test_too_many_stages(self, construction):
        """Test psi_m beyond the selected stages."""
        with pytest.raises(PreconditionError, match="stages selected"):
            construction.psi(5)


@pytest.mark.unit
@pytest.mark.slow
class TestVerification:
    """Tests for verify_bo and transport_check."""

    def test_verify(self, construction):
        """Test the Cauchy, conformal and hypersurface checks."""
        report = verify_bo(construction, 1, 2, grid_points=9, sample_points=3)
        assert report.cauchy_ok
        assert report.independent
        assert report.conformal_ok
        assert report.stage_factors_ok
        assert report.hypersurface_defect < 1e-4
        assert report.passed

    def test_verify_order(self, construction):
        """Test m1 must not exceed m2."""
        with pytest.raises(PreconditionError, match="m1 <= m2"):
            verify_bo(construction, 2, 1)

    def test_transport(self, construction):
        """Test {x1 = y1 = 0} is carried to a Legendrian germ."""
        report = transport_check(construction, radius=0.02, points=3)
        assert not report.source.coisotropic
        assert report.image.coisotropic
        assert report.image_legendrian
        assert report.transported
        assert np.isfinite(report.limit_defect)

    def test_image_chart_needs_inverse(self):
        """Test targets without an inverse have no image chart."""
        with pytest.raises(PreconditionError, match="known inverse"):
            image_chart(tent_target())

    def test_rows(self, construction):
        """Test CSV rows line up with their headers."""
        for row in stage_rows(construction):
            assert len(row) == len(STAGE_HEADER)
        header = graph_header(construction)
        assert header == ["m", "w1", "x1", "F_m", "error"]
        rows = list(graph_rows(construction, [1], grid_points=5))
        assert len(rows) == 5
        assert all(len(r) == len(header) for r in rows)
