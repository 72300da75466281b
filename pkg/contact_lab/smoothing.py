"""
Non-analytic smooth building blocks: the exp(-1/t) function, the smooth
0-to-1 transition on [0, 1] built from it, bumps, the primitive of the
transition, and the standard mollifier kernel.
"""

import functools

import numpy as np
from scipy.integrate import cumulative_simpson, quad
from scipy.interpolate import CubicSpline

TABLE_POINTS = 4001

def scalar_like(value, like):
    """float for scalar input, else an ndarray shaped like the input."""
    value = np.asarray(value, dtype=float)
    if np.ndim(like) == 0:
        return float(value)
    return value

def psi(x):
    """exp(-1/x) for x > 0, else 0. Safe at x = 0."""
    x = np.asarray(x, dtype=float)
    positive = x > 0.0
    safe = np.where(positive, x, 1.0)
    return scalar_like(np.where(positive, np.exp(-1.0 / safe), 0.0), x)

def psi_derivative(x):
    x = np.asarray(x, dtype=float)
    positive = x > 0.0
    safe = np.where(positive, x, 1.0)
    value = np.where(positive, np.exp(-1.0 / safe) / (safe * safe), 0.0)
    return scalar_like(value, x)

def smooth_step(x):
    """0 for x <= 0, 1 for x >= 1, smooth and symmetric about (1/2, 1/2)."""
    x = np.asarray(x, dtype=float)
    a = psi(x)
    b = psi(1.0 - x)
    return scalar_like(a / (a + b), x)

def smooth_step_derivative(x):
    x = np.asarray(x, dtype=float)
    a = psi(x)
    b = psi(1.0 - x)
    da = psi_derivative(x)
    db = psi_derivative(1.0 - x)
    return scalar_like((da * b + a * db) / (a + b) ** 2, x)

@functools.lru_cache(maxsize=None)
def _step_primitive_table():
    s = np.linspace(0.0, 1.0, TABLE_POINTS)
    values = cumulative_simpson(smooth_step(s), x=s, initial=0.0)
    # exact by symmetry
    values = values * (0.5 / values[-1])
    return CubicSpline(s, values)

def smooth_step_integral(x):
    """Primitive of smooth_step vanishing at 0."""
    x = np.asarray(x, dtype=float)
    table = _step_primitive_table()
    inside = np.clip(x, 0.0, 1.0)
    value = np.where(
        x <= 0.0, 0.0,
        np.where(x >= 1.0, 0.5 + (x - 1.0), table(inside))
    )
    return scalar_like(value, x)

def bump(x, inner, outer):
    """1 on |x| <= inner, 0 on |x| >= outer."""
    x = np.asarray(x, dtype=float)
    return scalar_like(smooth_step((outer - np.abs(x)) / (outer - inner)), x)

def bump_derivative(x, inner, outer):
    x = np.asarray(x, dtype=float)
    width = outer - inner
    value = -np.sign(x) * smooth_step_derivative(
        (outer - np.abs(x)) / width
    ) / width
    return scalar_like(value, x)

def mollifier_kernel(r):
    """exp(-1/(1 - r^2)) on |r| < 1, unnormalized."""
    r = np.asarray(r, dtype=float)
    inside = np.abs(r) < 1.0
    safe = np.where(inside, 1.0 - r * r, 1.0)
    return scalar_like(np.where(inside, np.exp(-1.0 / safe), 0.0), r)

@functools.lru_cache(maxsize=None)
def mollifier_mass():
    """Integral of the one-dimensional kernel over (-1, 1)."""
    value, _ = quad(mollifier_kernel, -1.0, 1.0, epsabs=1e-14, epsrel=1e-13)
    return value

def mollifier_kernel_derivative(r):
    r = np.asarray(r, dtype=float)
    inside = np.abs(r) < 1.0
    safe = np.where(inside, 1.0 - r * r, 1.0)
    value = np.where(
        inside, np.exp(-1.0 / safe) * (-2.0 * r) / (safe * safe), 0.0
    )
    return scalar_like(value, r)
