"""
Unit tests for submanifold classification.
"""

import numpy as np
import pytest

from contact_lab.errors import PreconditionError, RankError
from contact_lab.geometry import AmbientSpace
from contact_lab.hamiltonian import coordinate_field
from contact_lab.submanifold import (
    CLASSIFICATION_HEADER, SubspaceBasis, characteristic_defect,
    characteristic_distribution, classification_rows, classify,
    codimension_wedge_check, coisotropy_report, containment_defect,
    coordinate_chart, involutivity_check, is_legendrian_at, linear_chart,
    nowhere_legendrian_chart, omega_complement, random_germ,
    random_xi_subspace, subspace_distance, tangent_contact_split,
    write_classification_csv, zero_section,
)


@pytest.mark.unit
class TestLegendrian:
    """Tests for the Legendrian test."""

    def test_zero_section(self, space):
        """Test {y = 0, z = 0} is Legendrian and coisotropic."""
        chart = zero_section(space)
        q = np.zeros(space.n)
        assert is_legendrian_at(chart, q)
        assert coisotropy_report(chart, q).coisotropic

    def test_nowhere_legendrian_chart(self, space):
        """Test {y = 0, z = x1} is not Legendrian."""
        chart = nowhere_legendrian_chart(space)
        assert not is_legendrian_at(chart, np.zeros(space.n))

    def test_wrong_dimension(self):
        """Test a surface in R^3 is not Legendrian."""
        chart = coordinate_chart(AmbientSpace(1), {"z": 0.0})
        assert not is_legendrian_at(chart, np.zeros(2))


@pytest.mark.unit
class TestCoisotropy:
    """Tests for the containment and wedge coisotropy criteria."""

    def test_hypersurface_is_coisotropic(self, space):
        """Test {x1 = 0} is coisotropic and both tests agree."""
        chart = coordinate_chart(space, {"x1": 0.0})
        report = coisotropy_report(chart, np.zeros(chart.d))
        assert report.coisotropic
        assert report.agreement

    def test_reeb_line_is_not_coisotropic(self):
        """Test {x1 = y1 = 0} in R^3 is not coisotropic."""
        chart = coordinate_chart(AmbientSpace(1), {"x1": 0.0, "y1": 0.0})
        report = coisotropy_report(chart, np.zeros(1))
        assert not report.coisotropic
        assert report.agreement
        assert report.dim_t_xi == 0

    def test_symplectic_plane_is_not_coisotropic(self):
        """Test {x2 = y2 = z = 0} in R^5 away from the tangency locus."""
        space = AmbientSpace(2)
        chart = coordinate_chart(space, {"x2": 0.0, "y2": 0.0, "z": 0.0})
        report = coisotropy_report(chart, np.array([0.0, 0.4]))
        assert not report.coisotropic
        assert report.agreement

    def test_codimension_above_n_plus_one(self):
        """Test a curve in R^5 is reported as not coisotropic."""
        space = AmbientSpace(2)
        chart = coordinate_chart(space, {"x1": 0, "x2": 0, "y1": 0, "y2": 0})
        report = coisotropy_report(chart, np.zeros(1))
        assert not report.coisotropic
        assert "exceeds" in report.note

    @pytest.mark.parametrize("kind", ["coisotropic-transverse", "coisotropic-tangent"])
    def test_designed_germs(self, rng, kind):
        """Test germs built coisotropic are classified coisotropic."""
        for n in (1, 2):
            space = AmbientSpace(n)
            d = n + 1 if kind == "coisotropic-transverse" else n
            report = coisotropy_report(random_germ(space, rng, d, kind), np.zeros(d))
            assert report.coisotropic
            assert report.agreement or report.ambiguous

    def test_generic_germs_agree(self, rng):
        """Test both criteria agree on generic germs."""
        space = AmbientSpace(2)
        for d in (1, 2, 3, 4):
            report = coisotropy_report(random_germ(space, rng, d), np.zeros(d))
            assert report.agreement or report.ambiguous

    def test_rank_deficient_chart(self):
        """Test a degenerate Jacobian raises."""
        space = AmbientSpace(1)
        chart = linear_chart(space, np.zeros(3), np.array([[1.0, 2.0], [0, 0], [0, 0]]))
        with pytest.raises(RankError):
            coisotropy_report(chart, np.zeros(2))

    def test_classification_rows(self):
        """Test classification rows line up with the header."""
        space = AmbientSpace(1)
        reports = classify(zero_section(space), [np.zeros(1), np.ones(1)], n_jobs=2)
        rows = list(classification_rows(zip(["a", "b"], reports)))
        assert len(rows) == 2
        assert all(len(r) == len(CLASSIFICATION_HEADER) for r in rows)

    def test_classification_csv(self, tmp_path):
        """Test the classification CSV has a header and one row per germ."""
        space = AmbientSpace(1)
        report = coisotropy_report(zero_section(space), np.zeros(1))
        path = tmp_path / "c.csv"
        write_classification_csv(path, [("zero", report)])
        lines = path.read_text().splitlines()
        assert lines[0].split(",") == CLASSIFICATION_HEADER
        assert len(lines) == 2


@pytest.mark.unit
class TestSubspaces:
    """Tests for subspaces of the contact plane."""

    def test_complement_of_lagrangian_is_itself(self, rng):
        """Test a coisotropic subspace of dimension n is its own complement."""
        space = AmbientSpace(2)
        p = rng.uniform(-1.0, 1.0, size=5)
        w = SubspaceBasis(p, random_xi_subspace(space, rng, p, 2, coisotropic=True))
        assert subspace_distance(omega_complement(w), w) < 1e-8

    def test_complement_rejects_vectors_outside_xi(self):
        """Test the Reeb direction is not in xi."""
        w = SubspaceBasis(np.zeros(3), np.array([[0.0], [0.0], [1.0]]))
        with pytest.raises(PreconditionError, match="contact plane"):
            omega_complement(w)

    def test_containment_defect(self):
        """Test containment of a line in a plane."""
        plane = SubspaceBasis(np.zeros(3), np.eye(3)[:, :2])
        line = SubspaceBasis(np.zeros(3), np.array([[1.0], [1.0], [0.0]]))
        off = SubspaceBasis(np.zeros(3), np.array([[0.0], [0.0], [1.0]]))
        assert containment_defect(line, plane) < 1e-12
        assert containment_defect(off, plane) == pytest.approx(1.0)

    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_codimension_wedge_lemma(self, rng, n):
        """Test the wedge powers on random coisotropic and generic subspaces."""
        space = AmbientSpace(n)
        for dim in range(n, 2 * n + 1):
            for coisotropic in (True, False):
                p = rng.uniform(-1.0, 1.0, size=space.dim)
                w = SubspaceBasis(
                    p, random_xi_subspace(space, rng, p, dim, coisotropic)
                )
                check = codimension_wedge_check(w)
                assert check.consistent()
                if coisotropic:
                    assert check.coisotropic

    def test_codimension_out_of_range(self, rng):
        """Test subspaces of dimension below n are refused."""
        space = AmbientSpace(2)
        p = np.zeros(5)
        w = SubspaceBasis(p, random_xi_subspace(space, rng, p, 1))
        with pytest.raises(PreconditionError, match="Codimension"):
            codimension_wedge_check(w)

    def test_split_of_transverse_chart(self):
        """Test T meet xi for {y = 0, z = x1} in R^3 is trivial."""
        chart = nowhere_legendrian_chart(AmbientSpace(1))
        t, t_xi, lambda_zero = tangent_contact_split(chart, np.zeros(1))
        assert t.dim == 1 and t_xi.dim == 0
        assert not lambda_zero


@pytest.mark.unit
class TestCharacteristic:
    """Tests for characteristic distribution and involutivity."""

    def test_hypersurface_characteristic(self):
        """Test the characteristic line of {y1 = 0} is d/dx1."""
        space = AmbientSpace(1)
        chart = coordinate_chart(space, {"y1": 0.0})
        line = characteristic_distribution(chart, np.zeros(2))
        assert line.dim == 1
        assert abs(abs(line.vectors[0, 0]) - 1.0) < 1e-12

    def test_field_of_defining_function(self):
        """Test X_{y1} lies in the characteristic distribution of {y1 = 0}."""
        space = AmbientSpace(1)
        chart = coordinate_chart(space, {"y1": 0.0})
        H = coordinate_field(space, "y")
        assert characteristic_defect(H, chart, np.array([0.3, 0.2])) < 1e-12

    def test_not_coisotropic_raises(self):
        """Test the characteristic distribution needs coisotropy."""
        chart = coordinate_chart(AmbientSpace(1), {"x1": 0.0, "y1": 0.0})
        with pytest.raises(PreconditionError, match="not coisotropic"):
            characteristic_distribution(chart, np.zeros(1))

    def test_commuting_defining_functions(self):
        """Test H1 = y1, H2 = y2 on {y1 = y2 = 0} are involutive."""
        space = AmbientSpace(2)
        chart = coordinate_chart(space, {"y1": 0.0, "y2": 0.0})
        defs = [coordinate_field(space, "y", 1), coordinate_field(space, "y", 2)]
        samples = [np.array([0.1, -0.2, 0.3]), np.array([0.0, 0.5, -0.4])]
        report = involutivity_check(defs, chart, samples)
        assert report.involutive
        assert report.mult_holds
        assert report.max_field_defect < 1e-9

    def test_single_function_vacuous(self):
        """Test one defining function is vacuously involutive."""
        space = AmbientSpace(1)
        chart = coordinate_chart(space, {"y1": 0.0})
        report = involutivity_check(
            [coordinate_field(space, "y")], chart, [np.zeros(2)]
        )
        assert report.max_bracket_defect == 0.0

    def test_nonvanishing_function_refused(self):
        """Test defining functions must vanish on the chart."""
        space = AmbientSpace(1)
        chart = coordinate_chart(space, {"y1": 0.0})
        with pytest.raises(PreconditionError, match="does not vanish"):
            involutivity_check(
                [coordinate_field(space, "z")], chart, [np.array([0.0, 1.0])]
            )
