"""
Unit tests for run module (CLI entry point).
"""

import pytest


@pytest.mark.unit
class TestRun:
    """Tests for the run module."""

    def test_run_without_args_fails(self, run_lab):
        """Test that running without a scenario fails."""
        stdout, stderr, code = run_lab([])
        assert code != 0

    def test_run_with_help_succeeds(self, run_lab):
        """Test that help flag works."""
        stdout, stderr, code = run_lab(['-h'])
        assert code == 0
        assert "contact-lab" in stdout

    def test_unknown_scenario(self, run_lab, temp_output_dir):
        """Test an unknown scenario exits 2."""
        stdout, stderr, code = run_lab(['nope', '-o', str(temp_output_dir)])
        assert code == 2
        assert "not known" in stderr

    def test_invalid_config_prints_schema(self, run_lab, write_config,
                                          temp_output_dir):
        """Test an invalid config exits 2 and prints the knob schema."""
        path = write_config("bogus: 1\n")
        stdout, stderr, code = run_lab([
            'collapse-square', '-c', path, '-o', str(temp_output_dir)
        ])
        assert code == 2
        assert "bogus" in stderr
        assert '"additionalProperties": false' in stderr

    def test_missing_config(self, run_lab, temp_output_dir):
        """Test a missing config file exits 2."""
        stdout, stderr, code = run_lab([
            'collapse-square', '-c', '/nonexistent/knobs.yaml',
            '-o', str(temp_output_dir)
        ])
        assert code == 2
        assert "Could not read" in stderr

    def test_bad_seed(self, run_lab):
        """Test a non-integer seed is an argument error."""
        stdout, stderr, code = run_lab(['coiso-sweep', '-s', 'x'])
        assert code == 2
