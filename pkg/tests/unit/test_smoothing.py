"""
Unit tests for the smoothing building blocks.
"""

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad

from contact_lab.smoothing import (
    bump, bump_derivative, mollifier_kernel, mollifier_mass, psi,
    smooth_step, smooth_step_derivative, smooth_step_integral,
)


@pytest.mark.unit
class TestSmoothStep:
    """Tests for psi and the smooth step."""

    def test_psi_vanishes_on_nonpositive(self):
        """Test exp(-1/x) is exactly zero for x <= 0."""
        assert psi(0.0) == 0.0
        assert psi(-3.0) == 0.0
        assert psi(1.0) == pytest.approx(np.exp(-1.0))

    def test_step_endpoints_exact(self):
        """Test the step is exactly 0 and 1 outside [0, 1]."""
        assert smooth_step(0.0) == 0.0
        assert smooth_step(-1.0) == 0.0
        assert smooth_step(1.0) == 1.0
        assert smooth_step(2.0) == 1.0
        assert smooth_step(0.5) == pytest.approx(0.5)

    @given(st.floats(min_value=-2.0, max_value=2.0))
    def test_step_symmetry(self, x):
        """Test S(x) + S(1 - x) = 1."""
        assert smooth_step(x) + smooth_step(1.0 - x) == pytest.approx(1.0)

    def test_step_monotone(self):
        """Test the derivative is nonnegative and matches differences."""
        x = np.linspace(-0.5, 1.5, 2001)
        assert np.all(smooth_step_derivative(x) >= 0.0)
        h = 1e-6
        for v in (0.2, 0.5, 0.8):
            fd = (smooth_step(v + h) - smooth_step(v - h)) / (2 * h)
            assert smooth_step_derivative(v) == pytest.approx(fd, rel=1e-6)

    def test_step_integral(self):
        """Test the primitive against quadrature and its linear tail."""
        value, _ = quad(smooth_step, 0.0, 0.7)
        assert smooth_step_integral(0.7) == pytest.approx(value, abs=1e-8)
        assert smooth_step_integral(1.0) == pytest.approx(0.5)
        assert smooth_step_integral(3.0) == pytest.approx(2.5)
        assert smooth_step_integral(-1.0) == 0.0

    def test_array_in_array_out(self):
        """Test vectorized calls keep the shape."""
        assert smooth_step(np.zeros(4)).shape == (4,)
        assert isinstance(smooth_step(0.3), float)


@pytest.mark.unit
class TestBumps:
    """Tests for bumps and the mollifier kernel."""

    def test_bump_plateau_and_support(self):
        """Test 1 on the plateau, 0 beyond the outer radius."""
        assert bump(0.2, 0.5, 0.9) == 1.0
        assert bump(-0.5, 0.5, 0.9) == 1.0
        assert bump(0.9, 0.5, 0.9) == 0.0
        assert bump(-1.5, 0.5, 0.9) == 0.0
        assert 0.0 < bump(0.7, 0.5, 0.9) < 1.0

    def test_bump_derivative_matches_differences(self):
        """Test the analytic bump derivative."""
        h = 1e-6
        for x in (-0.75, -0.6, 0.65, 0.8):
            fd = (bump(x + h, 0.5, 0.9) - bump(x - h, 0.5, 0.9)) / (2 * h)
            assert bump_derivative(x, 0.5, 0.9) == pytest.approx(fd, rel=1e-5)

    def test_kernel_support(self):
        """Test the kernel vanishes off (-1, 1)."""
        assert mollifier_kernel(1.0) == 0.0
        assert mollifier_kernel(-1.2) == 0.0
        assert mollifier_kernel(0.0) == pytest.approx(np.exp(-1.0))

    def test_kernel_mass(self):
        """Test the cached mass of the kernel."""
        value, _ = quad(mollifier_kernel, -1.0, 1.0)
        assert mollifier_mass() == pytest.approx(value, rel=1e-10)
