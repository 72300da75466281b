"""
Acceptance runs: every bundled scenario at its default knobs, plus the
closed-form wall examples read back from their tables.
"""

import csv
import json
import math
from pathlib import Path

import jsonschema
import pytest
import yaml

from contact_lab.config import load_config
from contact_lab.index import Index
from contact_lab.packager import Packager
from contact_lab.scenarios import run_scenario


@pytest.fixture(scope="module")
def report_schema():
    path = Path(__file__).parent.parent / "schemas" / "report.schema.json"
    with open(path) as f:
        return json.load(f)


@pytest.fixture
def run(tmp_path):
    """Run a scenario in-process with optional knob overrides."""
    def _run(scenario, **knobs):
        path = None
        if knobs:
            path = tmp_path / "knobs.yaml"
            path.write_text(yaml.safe_dump(knobs))
        cfg = load_config(scenario, path, tmp_path / "out")
        report = run_scenario(cfg, Packager(cfg.out, quiet=True))
        return report, cfg.out
    return _run


def read_table(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


@pytest.mark.validation
@pytest.mark.slow
@pytest.mark.parametrize("scenario", Index.get_names())
def test_scenario_defaults_pass(run, report_schema, scenario):
    """Test each scenario passes every check at its defaults."""
    report, out = run(scenario)
    assert report.error is None
    assert report.passed, [
        (c.name, c.value, c.bound) for c in report.failures
    ]
    with open(out / "report.json") as f:
        jsonschema.validate(instance=json.load(f), schema=report_schema)
    for name in Index.get_scenario(scenario).outputs:
        assert (out / name).exists()


@pytest.mark.validation
@pytest.mark.slow
def test_fourfinite_wall_is_cube(run):
    """Test the wall map at t = log(3) / 2 sends z to z^3."""
    report, out = run("collapse-wall", preset="fourfinite",
                      t=0.5 * math.log(3.0))
    assert report.passed
    for row in read_table(out / "collapse-wall.csv"):
        z = float(row["z"])
        assert float(row["g_flow"]) == pytest.approx(z ** 3, rel=1e-5)
    slopes = [float(r["slope"]) for r in read_table(out / "tangency.csv")]
    assert abs(slopes[0] - 3.0) <= 0.02


@pytest.mark.validation
@pytest.mark.slow
def test_fourinf_wall_is_flat(run):
    """Test the fourinf wall map beats every tried power of |z|."""
    report, out = run("collapse-wall", preset="fourinf", t=1.0)
    assert report.passed
    slopes = [float(r["slope"]) for r in read_table(out / "tangency.csv")]
    assert slopes == sorted(slopes)
    assert len(set(slopes)) == len(slopes)
    assert slopes[-1] > 5.0


@pytest.mark.validation
@pytest.mark.slow
def test_golden_tables_are_reproducible(tmp_path):
    """Test two golden runs write byte-identical tables."""
    tables = []
    for name in ("a", "b"):
        cfg = load_config(
            "collapse-square", None, tmp_path / name, seed=3, golden=True
        )
        run_scenario(cfg, Packager(cfg.out, quiet=True))
        tables.append((cfg.out / "collapse-square.csv").read_bytes())
    assert tables[0] == tables[1]
