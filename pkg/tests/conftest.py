"""
Pytest configuration and shared fixtures for contact-lab tests.
"""

import sys
import shutil
import tempfile
from pathlib import Path

import numpy as np
import pytest

from contact_lab.geometry import AmbientSpace


@pytest.fixture(scope="session")
def test_config_dir():
    """Path to the test configurations directory."""
    return Path(__file__).parent / "configs"


@pytest.fixture
def temp_output_dir():
    """Temporary directory for test outputs."""
    temp_dir = tempfile.mkdtemp()
    yield Path(temp_dir)
    shutil.rmtree(temp_dir)


@pytest.fixture
def rng():
    """Seeded generator, fresh per test."""
    return np.random.default_rng(20240601)


@pytest.fixture(params=[1, 2], ids=["n1", "n2"])
def space(request):
    """R^3 and R^5."""
    return AmbientSpace(request.param)


@pytest.fixture
def run_lab(monkeypatch, capsys):
    """
    Fixture to run the contact-lab CLI with given arguments.

    Usage:
        stdout, stderr, exit_code = run_lab(['collapse-square', '-o', dir])

    Returns:
        tuple: (stdout, stderr, exit_code)
    """
    def _run(args):
        from contact_lab import run_lab as entry

        monkeypatch.setattr(sys, 'argv', ['contact-lab'] + args)

        exit_code = 0
        try:
            entry()
        except SystemExit as e:
            exit_code = e.code if e.code is not None else 0

        captured = capsys.readouterr()
        return captured.out, captured.err, exit_code

    return _run


@pytest.fixture
def run_list(monkeypatch, capsys):
    """Like run_lab, for contact-lab-scenarios."""
    def _run(args):
        from contact_lab import list_scenarios

        monkeypatch.setattr(sys, 'argv', ['contact-lab-scenarios'] + args)

        exit_code = 0
        try:
            list_scenarios()
        except SystemExit as e:
            exit_code = e.code if e.code is not None else 0

        captured = capsys.readouterr()
        return captured.out, captured.err, exit_code

    return _run


@pytest.fixture
def write_config(tmp_path):
    """Write a YAML knob file and return its path."""
    def _create(text, name="knobs.yaml"):
        path = tmp_path / name
        path.write_text(text)
        return str(path)
    return _create
