"""
Unit tests for Packager class.
"""

import csv
import json
import zipfile

import numpy as np
import pytest

from contact_lab.packager import Packager
from contact_lab.report import Check, RunReport


def make_report():
    return RunReport(
        scenario="collapse-square", checks=[Check("a", True)], config={},
        versions={},
    )


@pytest.mark.unit
class TestPackager:
    """Tests for the Packager class."""

    def test_creates_directory(self, tmp_path):
        """Test the output directory is created on first write."""
        out = tmp_path / "a" / "b"
        Packager(out).write_table("t.csv", ["x"], [[1]])
        assert (out / "t.csv").exists()

    def test_floats_round_trip(self, tmp_path):
        """Test floats are written with repr."""
        packager = Packager(tmp_path)
        path = packager.write_table(
            "t.csv", ["a", "b", "c"], [[0.1 + 0.2, np.float64(1) / 3, 7]]
        )
        with open(path, newline="") as f:
            rows = list(csv.reader(f))
        assert rows[0] == ["a", "b", "c"]
        assert float(rows[1][0]) == 0.1 + 0.2
        assert float(rows[1][1]) == 1 / 3
        assert rows[1][2] == "7"

    def test_report_files(self, tmp_path, capsys):
        """Test report.txt and report.json are written and listed."""
        packager = Packager(tmp_path)
        packager.write_table("t.csv", ["x"], [[1]])
        report = make_report()
        packager.write_report(report)
        assert report.artefacts == ["t.csv", "report.txt", "report.json"]
        data = json.loads((tmp_path / "report.json").read_text())
        assert data["artefacts"] == report.artefacts
        assert (tmp_path / "report.txt").read_text().startswith("Scenario:")
        assert "Wrote" in capsys.readouterr().out

    def test_zip(self, tmp_path):
        """Test every artefact is bundled into the zip."""
        zip_path = tmp_path / "bundle.zip"
        packager = Packager(tmp_path / "out", zip_path, quiet=True)
        packager.write_table("t.csv", ["x"], [[1]])
        packager.write_report(make_report())
        with zipfile.ZipFile(zip_path) as z:
            assert sorted(z.namelist()) == [
                "report.json", "report.txt", "t.csv"
            ]

    def test_quiet(self, tmp_path, capsys):
        """Test quiet mode prints nothing."""
        Packager(tmp_path, quiet=True).write_report(make_report())
        assert capsys.readouterr().out == ""
