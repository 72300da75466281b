"""
Approximating a graph map by contactomorphisms fixing the hypersurface
{y1 = 0} setwise.

Given a continuous F on U in the w = (x2..xn, y2..yn, z) coordinates with
sup|F| < 1, smooth increments G_k = F_k - F_{k-1} are fed to stage
Hamiltonians

    H_{k,l}(x1, y1, w) = u(x1) v(l y1) / l * G_k(w)

whose time-1 maps compose to psi_m. On {y1 = 0} the stage field is
u(x1) G_k d/dx1, so psi_m(0, 0, w) = (F_m(w), 0, w). Every "l large
enough" quantifier is decided on a recorded verification grid.
"""

import csv
import dataclasses
import functools
import logging
import math
import pathlib
from typing import Callable, Optional

import numpy as np
from joblib import Parallel, delayed
from scipy.integrate import quad
from scipy.interpolate import RegularGridInterpolator
from scipy.signal import fftconvolve

from . errors import PreconditionError, ScheduleError
from . geometry import AmbientSpace, Box, as_array, identity_sample
from . hamiltonian import FlowMap, IntegratorConfig, ScalarField
from . hamiltonian import compose_flows
from . smoothing import bump, bump_derivative, mollifier_kernel
from . smoothing import mollifier_kernel_derivative, mollifier_mass
from . submanifold import Chart, coisotropy_report, coordinate_chart
from . submanifold import is_legendrian_at

logger = logging.getLogger("bo")
logger.setLevel(logging.INFO)

ELL_BUDGET = 2 ** 60
CONFORMAL_BOUND = math.pi ** 2 / 6

def w_indices(n):
    """Ambient positions of (x2..xn, y2..yn, z)."""
    return np.array(
        list(range(1, n)) + list(range(n + 1, 2 * n)) + [2 * n], dtype=int
    )

def reduced_field(value, gradient, w):
    """
    Hamiltonian field of G on the (2n-1)-dimensional w-space for the form
    dz - sum_{j>=2} y_j dx_j.
    """
    m = (w.size - 1) // 2
    gx, gy, gz = gradient[:m], gradient[m:2 * m], gradient[2 * m]
    y = w[m:2 * m]
    return np.concatenate([-gy, gx + y * gz, [value - np.dot(y, gy)]])

@dataclasses.dataclass(frozen=True, eq=False)
class TargetProfile:
    """
    F on the box U of w-space, zero off the support box K. inverse, when
    known, is f^{-1} near 0 for one-dimensional targets.
    """

    evaluate: Callable[[np.ndarray], float]
    dim: int
    domain: Box
    support: Box
    kinks: tuple = ()
    inverse: Optional[Callable[[float], float]] = None
    inverse_derivative: Optional[Callable[[float], float]] = None
    name: str = "F"

    def __post_init__(self):
        if self.dim < 1 or self.dim % 2 != 1:
            raise PreconditionError(f"{self.name}: w-dimension {self.dim} is not odd")
        if self.domain.dimension != self.dim or self.support.dimension != self.dim:
            raise PreconditionError(f"{self.name}: boxes differ in dimension")
        if not (np.all(self.domain.lower < self.support.lower)
                and np.all(self.support.upper < self.domain.upper)):
            raise PreconditionError(f"{self.name}: support not inside U")

    @property
    def n(self):
        return (self.dim + 1) // 2

    def __call__(self, w):
        w = np.atleast_1d(np.asarray(w, dtype=float))
        if not self.support.contains(w):
            return 0.0
        return float(self.evaluate(w))

    def values(self, points):
        return np.array([self(w) for w in points])

    def sup_norm(self, points_per_axis=33):
        return float(np.max(np.abs(self.values(
            self.domain.lattice(points_per_axis)
        ))))

    def check(self, points_per_axis=33):
        sup = self.sup_norm(points_per_axis)
        if not sup < 1.0:
            raise PreconditionError(f"{self.name}: sup|F| = {sup:.6g} is not < 1")
        return sup

    @property
    def gap(self):
        """Distance from K to the boundary of U."""
        return float(min(
            np.min(self.support.lower - self.domain.lower),
            np.min(self.domain.upper - self.support.upper),
        ))

def cube_root_target(amplitude=0.8, inner=0.25, outer=0.55):
    """
    f(z) = amplitude cbrt(z) near 0, cut off to [-outer, outer]. The inverse
    (s / amplitude)^3 is smooth with vanishing derivative at 0.
    """

    def evaluate(w):
        z = w[0]
        return amplitude * np.cbrt(z) * bump(z, inner, outer)

    return TargetProfile(
        evaluate=evaluate, dim=1, domain=Box([-1.0], [1.0]),
        support=Box([-outer], [outer]), kinks=(0.0, -outer, outer),
        inverse=lambda s: (s / amplitude) ** 3,
        inverse_derivative=lambda s: 3.0 * s * s / amplitude ** 3,
        name=f"cbrt({amplitude})",
    )

def tent_target(n=2, amplitude=0.5, radius=0.5):
    """amplitude * max(0, 1 - |w| / radius): Lipschitz, not smooth."""
    dim = 2 * n - 1

    def evaluate(w):
        return amplitude * max(0.0, 1.0 - float(np.linalg.norm(w)) / radius)

    return TargetProfile(
        evaluate=evaluate, dim=dim,
        domain=Box.centered(np.zeros(dim), 1.0),
        support=Box.centered(np.zeros(dim), radius),
        kinks=(-radius, 0.0, radius), name=f"tent({amplitude}, {radius})",
    )

def zero_target(n=1):
    dim = 2 * n - 1
    return TargetProfile(
        evaluate=lambda w: 0.0, dim=dim,
        domain=Box.centered(np.zeros(dim), 1.0),
        support=Box.centered(np.zeros(dim), 0.5), name="zero",
    )

def _support_box(axes, values, domain):
    nonzero = np.argwhere(values != 0.0)
    if nonzero.size == 0:
        return Box.centered(domain.center, 0.5 * domain.widths / 2)
    lower, upper = [], []
    for i, axis in enumerate(axes):
        lo = max(int(nonzero[:, i].min()) - 1, 0)
        hi = min(int(nonzero[:, i].max()) + 1, axis.size - 1)
        lower.append(axis[lo])
        upper.append(axis[hi])
    return Box(lower, upper)

def from_samples(path, margin=0.25):
    """
    A target from sampled values, linearly interpolated and zero outside
    the sampled grid. A .csv file holds rows (w, F) for n = 1; a .npz
    archive holds arrays axis0..axis{d-1} and values for any odd d. U is
    the sample grid enlarged by margin on every side.
    """

    path = pathlib.Path(path)

    if path.suffix == ".csv":
        with open(path, newline="") as f:
            rows = [r for r in csv.reader(f) if r]
        try:
            float(rows[0][0])
        except ValueError:
            rows = rows[1:]
        data = np.array([[float(r[0]), float(r[1])] for r in rows])
        order = np.argsort(data[:, 0])
        grid, values = data[order, 0], data[order, 1]
        axes = [grid]

        def evaluate(w):
            return float(np.interp(w[0], grid, values, left=0.0, right=0.0))

    elif path.suffix == ".npz":
        archive = np.load(path)
        axes = []
        while f"axis{len(axes)}" in archive:
            axes.append(np.asarray(archive[f"axis{len(axes)}"], dtype=float))
        values = np.asarray(archive["values"], dtype=float)
        if values.shape != tuple(a.size for a in axes):
            raise PreconditionError(
                f"{path}: values shape {values.shape} does not match the axes"
            )
        interpolator = RegularGridInterpolator(
            axes, values, method="linear", bounds_error=False, fill_value=0.0,
        )

        def evaluate(w):
            return float(interpolator(w[None, :])[0])

    else:
        raise PreconditionError(f"Unsupported sample file {path}")

    grid_box = Box([a[0] for a in axes], [a[-1] for a in axes])
    support = _support_box(axes, values, grid_box)
    domain = Box(grid_box.lower - margin, grid_box.upper + margin)

    return TargetProfile(
        evaluate=evaluate, dim=len(axes), domain=domain, support=support,
        kinks=tuple(axes[0]) if len(axes) == 1 else (), name=path.stem,
    )

class _Mollified1D:
    """M_eps F by adaptive quadrature at each point."""

    def __init__(self, target, width):
        self.target = target
        self.width = width
        self.mass = mollifier_mass()
        self.value = functools.lru_cache(maxsize=65536)(self._value)
        self.derivative = functools.lru_cache(maxsize=65536)(self._derivative)

    def _integral(self, kernel, w):
        lo, hi = w - self.width, w + self.width
        if hi <= self.target.support.lower[0] or lo >= self.target.support.upper[0]:
            return 0.0
        points = [k for k in self.target.kinks if lo < k < hi]
        value, _ = quad(
            lambda t: self.target(np.array([t])) * kernel((w - t) / self.width),
            lo, hi, points=points or None, limit=200,
            epsabs=1e-13, epsrel=1e-11,
        )
        return value

    def _value(self, w):
        return self._integral(mollifier_kernel, w) / (self.mass * self.width)

    def _derivative(self, w):
        return self._integral(mollifier_kernel_derivative, w) / (
            self.mass * self.width ** 2
        )

    def __call__(self, w):
        return self.value(float(w[0]))

    def gradient(self, w):
        return np.array([self.derivative(float(w[0]))])

    def values(self, points):
        return np.array([self(w) for w in points])

class _MollifiedGrid:
    """M_eps F by FFT convolution on a tensor grid of U, cubic in between."""

    def __init__(self, target, width, points_per_axis):
        self.target = target
        self.width = width
        domain = target.domain
        axes = [
            np.linspace(lo, hi, points_per_axis)
            for lo, hi in zip(domain.lower, domain.upper)
        ]
        spacing = np.array([a[1] - a[0] for a in axes])
        if width < 2.0 * spacing.max():
            raise ScheduleError(
                f"Mollifier width {width:.3g} below the grid budget "
                f"{2.0 * spacing.max():.3g}; use a smaller k_max"
            )

        mesh = np.meshgrid(*axes, indexing="ij")
        points = np.stack([m.reshape(-1) for m in mesh], axis=1)
        samples = target.values(points).reshape(mesh[0].shape)

        half = [int(math.ceil(width / h)) for h in spacing]
        offsets = np.meshgrid(
            *[np.arange(-m, m + 1) * h for m, h in zip(half, spacing)],
            indexing="ij",
        )
        r = np.sqrt(sum(o * o for o in offsets)) / width
        kernel = mollifier_kernel(r)
        kernel = kernel / kernel.sum()

        smoothed = fftconvolve(samples, kernel, mode="same")
        gradients = np.gradient(smoothed, *axes)
        if len(axes) == 1:
            gradients = [gradients]

        def interpolator(data):
            return RegularGridInterpolator(
                axes, data, method="cubic", bounds_error=False, fill_value=0.0,
            )

        self._value = interpolator(smoothed)
        self._gradient = [interpolator(g) for g in gradients]

    def __call__(self, w):
        return float(self._value(as_array(w)[None, :])[0])

    def gradient(self, w):
        w = as_array(w)[None, :]
        return np.array([float(g(w)[0]) for g in self._gradient])

    def values(self, points):
        return np.asarray(self._value(np.asarray(points, dtype=float)))

@dataclasses.dataclass(frozen=True, eq=False)
class SmoothingSchedule:
    """
    F_k = (1 - 2^{-k}) M_{eps_k} F for k >= 1 and F_0 = 0, so sup|F_k| stays
    below sup|F| and G_k = F_k - F_{k-1} is below 2^{-k} on the grid.
    """

    target: TargetProfile
    widths: tuple
    levels: tuple
    errors: tuple
    sup_f: float
    grid_points: int

    @property
    def k_max(self):
        return len(self.widths)

    @property
    def margin(self):
        return (1.0 - self.sup_f) / 2.0

    @property
    def support(self):
        """Common support box of every F_k."""
        reach = self.widths[0] if self.widths else 0.0
        return Box(self.target.support.lower - reach,
                   self.target.support.upper + reach)

    def _check_k(self, k):
        if not 0 <= k <= self.k_max:
            raise PreconditionError(f"Stage {k} outside schedule 0..{self.k_max}")

    def level(self, k, w):
        self._check_k(k)
        if k == 0:
            return 0.0
        return (1.0 - 2.0 ** -k) * self.levels[k - 1](w)

    def level_gradient(self, k, w):
        self._check_k(k)
        if k == 0:
            return np.zeros(self.target.dim)
        return (1.0 - 2.0 ** -k) * self.levels[k - 1].gradient(w)

    def increment(self, k, w):
        return self.level(k, w) - self.level(k - 1, w)

    def increment_gradient(self, k, w):
        return self.level_gradient(k, w) - self.level_gradient(k - 1, w)

    def verification_points(self):
        return self.target.domain.lattice(self.grid_points)

    def increment_sups(self):
        points = self.verification_points()
        return [
            float(np.max(np.abs([self.increment(k, w) for w in points])))
            for k in range(1, self.k_max + 1)
        ]

    def level_sups(self):
        points = self.verification_points()
        return [
            float(np.max(np.abs([self.level(k, w) for w in points])))
            for k in range(1, self.k_max + 1)
        ]

def _mollified(target, width, grid_points):
    if target.dim == 1:
        return _Mollified1D(target, width)
    return _MollifiedGrid(target, width, grid_points)

def mollify_sequence(target, k_max, grid_points=33, convolution_points=None,
                     min_width=1e-10):
    """
    Widths halve from a start fitted to the gap between K and the boundary
    of U until sup|F - M_eps F| <= (1 - sup|F|) 2^{-k} / 3 on the grid.
    """

    if k_max < 1:
        raise PreconditionError(f"k_max = {k_max} must be at least 1")

    sup_f = target.check(grid_points)
    points = target.domain.lattice(grid_points)
    exact = target.values(points)
    convolution_points = convolution_points or grid_points

    width = min(0.5 * target.gap, 0.25 * float(np.min(target.support.widths)))
    widths, levels, errors = [], [], []
    current = None

    for k in range(1, k_max + 1):
        tolerance = (1.0 - sup_f) * 2.0 ** -k / 3.0
        while True:
            if width < min_width:
                raise ScheduleError(
                    f"Stage {k}: width budget exhausted before reaching "
                    f"{tolerance:.3g}; use a smaller k_max"
                )
            if current is None or current.width != width:
                current = _mollified(target, width, convolution_points)
            error = float(np.max(np.abs(current.values(points) - exact)))
            if error <= tolerance:
                break
            logger.debug(f"Stage {k}: width {width:.3g} error {error:.3g}")
            width /= 2.0
        widths.append(width)
        levels.append(current)
        errors.append(error)
        logger.debug(f"Stage {k}: width {width:.4g}, error {error:.3g}")

    logger.info(
        f"Schedule for {target.name}: k_max={k_max}, "
        f"final width {widths[-1]:.3g}"
    )

    return SmoothingSchedule(
        target=target, widths=tuple(widths), levels=tuple(levels),
        errors=tuple(errors), sup_f=sup_f, grid_points=grid_points,
    )

@dataclasses.dataclass(frozen=True)
class BumpPair:
    """
    u = 1 on [-1+eps, 1-eps] with support in (-1, 1); v(s) = -s chi(s)
    with chi a bump on (-3 delta/4, 3 delta/4), so v(0) = 0, v'(0) = -1.
    """

    epsilon: float
    delta: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise PreconditionError(f"Bump margin {self.epsilon} not in (0, 1)")
        if not self.delta > 0.0:
            raise PreconditionError(f"Bump width {self.delta} must be positive")

    @classmethod
    def for_schedule(cls, schedule, delta=1.0):
        return cls(epsilon=schedule.margin, delta=delta)

    def u(self, x):
        return bump(x, 1.0 - self.epsilon, 1.0 - self.epsilon / 4.0)

    def du(self, x):
        return bump_derivative(x, 1.0 - self.epsilon, 1.0 - self.epsilon / 4.0)

    def _chi(self, s):
        return bump(s, self.delta / 4.0, 3.0 * self.delta / 4.0)

    def v(self, s):
        return -s * self._chi(s)

    def dv(self, s):
        return -self._chi(s) - s * bump_derivative(
            s, self.delta / 4.0, 3.0 * self.delta / 4.0
        )

    @property
    def v_radius(self):
        return 3.0 * self.delta / 4.0

    @functools.cached_property
    def constant(self):
        """C = 2 max|u| max|v'|, measured once."""
        x = np.linspace(-1.0, 1.0, 4001)
        s = np.linspace(-self.delta, self.delta, 4001)
        return 2.0 * float(np.max(np.abs(self.u(x)))) * float(
            np.max(np.abs(self.dv(s)))
        )

    def verify(self, points=4001):
        x = np.linspace(-1.0, 1.0, points)
        s = np.linspace(-self.delta, self.delta, points)
        flat = np.abs(x) <= 1.0 - self.epsilon
        return {
            "u-flat": bool(np.all(self.u(x[flat]) == 1.0)),
            "u-support": bool(self.u(-1.0) == 0.0 and self.u(1.0) == 0.0),
            "v-zero": self.v(0.0) == 0.0,
            "v-slope": abs(self.dv(0.0) + 1.0) < 1e-12,
            "v-support": bool(np.all(self.v(s[np.abs(s) >= self.v_radius]) == 0.0)),
        }

def stage_hamiltonian(schedule, bumps, k, ell, space=None):
    """H_{k,l} with its analytic gradient; zero off |y1| < 3 delta / (4 l)."""

    if ell < 1:
        raise PreconditionError(f"l = {ell} must be at least 1")
    schedule._check_k(k)
    n = schedule.target.n
    space = space or AmbientSpace(n)
    index = w_indices(n)

    def value(t, p):
        vv = bumps.v(ell * p[n])
        if vv == 0.0:
            return 0.0
        return bumps.u(p[0]) * vv / ell * schedule.increment(k, p[index])

    def gradient(t, p):
        g = np.zeros(p.size)
        ux, dux = bumps.u(p[0]), bumps.du(p[0])
        s = ell * p[n]
        vv, dvv = bumps.v(s), bumps.dv(s)
        if (ux == 0.0 and dux == 0.0) or (vv == 0.0 and dvv == 0.0):
            return g
        w = p[index]
        G = schedule.increment(k, w)
        g[0] = dux * vv / ell * G
        g[n] = ux * dvv * G
        if vv != 0.0:
            g[index] = ux * vv / ell * schedule.increment_gradient(k, w)
        return g

    lower = np.zeros(space.dim)
    upper = np.zeros(space.dim)
    reach = 1.0 - bumps.epsilon / 4.0
    radius = bumps.v_radius / ell
    lower[0], upper[0] = -reach, reach
    lower[n], upper[n] = -radius, radius
    lower[index] = schedule.support.lower
    upper[index] = schedule.support.upper

    return ScalarField(
        value=value, space=space, gradient=gradient,
        support=Box(lower, upper), name=f"H_{k},{ell}",
    )

def stage_vector_field(schedule, bumps, k, ell, p):
    """
    The stage field written out term by term:
    u v/l V_G - u v' y1 G dz - u v' G dx1 + v/l (u' G + u y1 G_z) dy1.
    """

    p = as_array(p)
    n = schedule.target.n
    index = w_indices(n)
    x1, y1, w = p[0], p[n], p[index]
    s = ell * y1
    ux, dux = bumps.u(x1), bumps.du(x1)
    vv, dvv = bumps.v(s), bumps.dv(s)
    G = schedule.increment(k, w)
    dG = schedule.increment_gradient(k, w)

    X = np.zeros(p.size)
    X[index] = ux * vv / ell * reduced_field(G, dG, w)
    X[2 * n] -= ux * dvv * y1 * G
    X[0] = -ux * dvv * G
    X[n] = vv / ell * (dux * G + ux * y1 * dG[-1])
    return X

@dataclasses.dataclass(frozen=True)
class StageParams:
    k: int
    ell: int
    sup_x: float
    sup_hz: float
    x_bound: float
    hz_bound: float
    support_radius: float
    support_reach: float
    support_limit: float
    support_samples: int
    constant: float
    grid: dict = dataclasses.field(default_factory=dict)

    @property
    def support_verified(self):
        """False when no flowed sample had G_k != 0."""
        return self.support_samples > 0

    @property
    def valid(self):
        return (
            self.sup_x < self.x_bound
            and self.sup_hz < self.hz_bound
            and self.support_verified
            and self.support_reach < self.support_limit
        )

def _stage_bounds(schedule, bumps, k, ell, x_axis, y_axis, w_points):
    """Grid sups of |X_{H_{k,l}}| and |dH/dz|, by separation of variables."""

    n = schedule.target.n
    G = np.array([schedule.increment(k, w) for w in w_points])
    dG = np.array([schedule.increment_gradient(k, w) for w in w_points])
    VG = np.array([
        reduced_field(g, dg, w) for g, dg, w in zip(G, dG, w_points)
    ])

    U, dU = bumps.u(x_axis), bumps.du(x_axis)
    s = ell * y_axis
    V, dV = bumps.v(s) / ell, bumps.dv(s)

    U3, dU3 = U[:, None, None], dU[:, None, None]
    V3, dV3, Y3 = V[None, :, None], dV[None, :, None], y_axis[None, :, None]
    G3, Gz3 = G[None, None, :], dG[:, -1][None, None, :]

    squared = (U3 * dV3 * G3) ** 2
    squared = squared + (V3 * (dU3 * G3 + U3 * Y3 * Gz3)) ** 2
    for j in range(VG.shape[1] - 1):
        squared = squared + (U3 * V3 * VG[:, j][None, None, :]) ** 2
    squared = squared + (
        U3 * V3 * VG[:, -1][None, None, :] - U3 * dV3 * Y3 * G3
    ) ** 2

    sup_x = float(np.sqrt(np.max(squared)))
    sup_hz = float(np.max(np.abs(U3 * V3 * Gz3)))
    return sup_x, sup_hz

def stage_bounds(schedule, bumps, k, ell, ell_points=17, w_points=None):
    """Grid sups of |X| and |dH/dz| for H_{k,l}, on the grids select_ell uses."""
    if w_points is None:
        w_points = schedule.grid_points if schedule.target.dim == 1 else 9
    x_axis = np.linspace(-1.0, 1.0, ell_points)
    y_axis = np.linspace(-bumps.v_radius, bumps.v_radius, ell_points) / ell
    return _stage_bounds(
        schedule, bumps, k, ell, x_axis, y_axis,
        schedule.support.lattice(w_points),
    )

def _pull_back(flows, p):
    q = as_array(p)
    for flow in reversed(flows):
        q = flow(q)
    return float(abs(q[(q.size - 1) // 2]))

def support_w_samples(schedule, k, points):
    """
    Points of the schedule support where G_k != 0: the nonzero nodes of a
    points-per-axis lattice together with the peak of |G_k| on the
    verification grid. Empty only when G_k vanishes on both.
    """

    coarse = list(schedule.support.lattice(points))
    grid = list(schedule.verification_points())
    increments = np.abs([schedule.increment(k, w) for w in grid])

    samples = [w for w in coarse if schedule.increment(k, w) != 0.0]
    if increments.size and np.max(increments) > 0.0:
        peak = grid[int(np.argmax(increments))]
        if not any(np.array_equal(peak, w) for w in samples):
            samples.append(peak)
    return samples

def _support_reach(schedule, bumps, k, ell, inverse_flows, points, n_jobs):
    n = schedule.target.n
    index = w_indices(n)
    w_samples = support_w_samples(schedule, k, points)
    if not w_samples:
        return 0.0, 0

    reach = 1.0 - bumps.epsilon / 4.0
    radius = bumps.v_radius / ell
    samples = []
    for x1 in np.linspace(-reach, reach, points):
        for y1 in (-radius, radius):
            for w in w_samples:
                p = np.zeros(2 * n + 1)
                p[0], p[n] = x1, y1
                p[index] = w
                samples.append(p)

    if not inverse_flows:
        return radius, len(samples)

    reaches = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_pull_back)(inverse_flows, p) for p in samples
    )
    return max(reaches), len(samples)

def select_ell(schedule, bumps, k, prior_flows=(), ell_points=17, w_points=None,
               support_points=3, budget=ELL_BUDGET, n_jobs=1):
    """
    Doubles l from 1 until the stage field is below C 2^{-k}, its z-derivative
    below 1/k^2, and the support of the stage map pulled back through the
    prior stages stays inside |y1| < delta / k. prior_flows are the time-1
    maps of stages 1..k-1 in order.
    """

    target = schedule.target
    if w_points is None:
        w_points = schedule.grid_points if target.dim == 1 else 9
    w_grid = schedule.support.lattice(w_points)
    x_axis = np.linspace(-1.0, 1.0, ell_points)
    x_bound = bumps.constant * 2.0 ** -k
    hz_bound = 1.0 / (k * k)
    limit = bumps.delta / k
    inverse_flows = [flow.inverse() for flow in prior_flows]

    ell = 1
    while ell <= budget:
        y_axis = np.linspace(-bumps.v_radius, bumps.v_radius, ell_points) / ell
        sup_x, sup_hz = _stage_bounds(
            schedule, bumps, k, ell, x_axis, y_axis, w_grid
        )
        if sup_x < x_bound and sup_hz < hz_bound:
            reach, count = _support_reach(
                schedule, bumps, k, ell, inverse_flows, support_points, n_jobs
            )
            if count == 0:
                logger.warning(
                    f"Stage {k}: G_k vanishes on every support sample, "
                    f"support condition unverified"
                )
            if reach < limit:
                params = StageParams(
                    k=k, ell=ell, sup_x=sup_x, sup_hz=sup_hz, x_bound=x_bound,
                    hz_bound=hz_bound, support_radius=bumps.delta / ell,
                    support_reach=reach, support_limit=limit,
                    support_samples=count, constant=bumps.constant,
                    grid={"ell_points": ell_points, "w_points": w_points,
                          "support_points": support_points},
                )
                logger.info(
                    f"Stage {k}: l={ell}, sup|X|={sup_x:.3g} < {x_bound:.3g}, "
                    f"sup|H_z|={sup_hz:.3g} < {hz_bound:.3g}"
                )
                return params
            logger.debug(f"Stage {k}, l={ell}: support reach {reach:.3g}")
        else:
            logger.debug(
                f"Stage {k}, l={ell}: sup|X|={sup_x:.3g}, sup|H_z|={sup_hz:.3g}"
            )
        ell *= 2

    raise ScheduleError(f"Stage {k}: no l up to {budget} meets the stage bounds")

def compose_bo(schedule, bumps, stages, m, cfg=IntegratorConfig(), h=1e-5,
               flows=None):
    """
    psi_m = phi_m o ... o phi_1, with summed log-conformal factors. flows,
    when given, are the cached time-1 maps of the stages in order.
    """
    n = schedule.target.n
    space = AmbientSpace(n)
    if m == 0:
        return identity_sample(space, h)
    if m > len(stages):
        raise PreconditionError(f"Only {len(stages)} stages selected, m={m}")
    if flows is None:
        flows = [
            FlowMap(
                stage_hamiltonian(schedule, bumps, s.k, s.ell, space), 1.0, cfg
            )
            for s in stages[:m]
        ]
    sample = compose_flows(flows[:m], h)
    return dataclasses.replace(sample, name=f"psi_{m}")

class BOConstruction:
    """A schedule, its bump pair and the selected stages, with cached flows."""

    def __init__(self, schedule, bumps, cfg=IntegratorConfig(), h=1e-5):
        self.schedule = schedule
        self.bumps = bumps
        self.cfg = cfg
        self.h = h
        self.space = AmbientSpace(schedule.target.n)
        self.stages = []
        self.flows = []

    @property
    def target(self):
        return self.schedule.target

    def add_stage(self, params):
        field = stage_hamiltonian(
            self.schedule, self.bumps, params.k, params.ell, self.space
        )
        self.stages.append(params)
        self.flows.append(FlowMap(field, 1.0, self.cfg))

    def field(self, k):
        return self.flows[k - 1].field

    def psi(self, m):
        return compose_bo(
            self.schedule, self.bumps, self.stages, m, self.cfg, self.h,
            flows=self.flows,
        )

def build_bo(target, k_max, delta=1.0, cfg=IntegratorConfig(), grid_points=33,
             ell_points=17, support_points=3, budget=ELL_BUDGET, n_jobs=1):
    schedule = mollify_sequence(target, k_max, grid_points)
    bumps = BumpPair.for_schedule(schedule, delta)
    construction = BOConstruction(schedule, bumps, cfg)
    for k in range(1, k_max + 1):
        params = select_ell(
            schedule, bumps, k, construction.flows, ell_points,
            support_points=support_points, budget=budget, n_jobs=n_jobs,
        )
        construction.add_stage(params)
    return construction

@dataclasses.dataclass(frozen=True)
class BOReport:
    m1: int
    m2: int
    cauchy_distance: float
    cauchy_bound: float
    independence_defect: float
    independence_samples: int
    graph_errors: tuple
    min_log_factor: float
    max_log_factor: float
    stage_log_factors: tuple
    hypersurface_defect: float
    grid: dict
    tol: float = 1e-4

    @property
    def cauchy_ok(self):
        return self.cauchy_distance <= self.cauchy_bound

    @property
    def independent(self):
        return self.independence_defect <= 1e-9

    @property
    def max_graph_error(self):
        return max((e for _, e in self.graph_errors), default=0.0)

    @property
    def conformal_ok(self):
        return (-CONFORMAL_BOUND <= self.min_log_factor
                and self.max_log_factor <= CONFORMAL_BOUND)

    @property
    def stage_factors_ok(self):
        return all(v < 1.0 / (k * k) for k, v in self.stage_log_factors)

    @property
    def passed(self):
        return (
            self.cauchy_ok and self.independent and self.conformal_ok
            and self.stage_factors_ok and self.max_graph_error < self.tol
            and self.hypersurface_defect < self.tol
        )

def graph_errors(construction, m, grid_points=33):
    """|psi_m(0, 0, w) - (F_m(w), 0, w)| over the w-grid, one row per w."""
    n = construction.target.n
    index = w_indices(n)
    psi = construction.psi(m)
    rows = []
    for w in construction.target.domain.lattice(grid_points):
        p = np.zeros(2 * n + 1)
        p[index] = w
        expected = p.copy()
        expected[0] = construction.schedule.level(m, w)
        image = psi(p)
        rows.append((w, image, float(np.linalg.norm(image - expected))))
    return rows

def _sample_box(construction):
    n = construction.target.n
    index = w_indices(n)
    lower = np.zeros(2 * n + 1)
    upper = np.zeros(2 * n + 1)
    lower[0], upper[0] = -1.0, 1.0
    lower[n], upper[n] = -construction.bumps.delta, construction.bumps.delta
    lower[index] = construction.target.domain.lower
    upper[index] = construction.target.domain.upper
    return Box(lower, upper)

def verify_bo(construction, m1, m2, grid_points=33, sample_points=5, n_jobs=1):
    if not 0 <= m1 <= m2 <= len(construction.stages):
        raise PreconditionError(
            f"Need 0 <= m1 <= m2 <= {len(construction.stages)}, got {m1}, {m2}"
        )

    n = construction.target.n
    delta = construction.bumps.delta
    psi1, psi2 = construction.psi(m1), construction.psi(m2)
    samples = _sample_box(construction).lattice(sample_points)

    def measure(p):
        a, b = psi1(p), psi2(p)
        return float(np.linalg.norm(b - a)), psi2.log_factor(p), b

    results = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(measure)(p) for p in samples
    )
    distances = np.array([r[0] for r in results])
    log_factors = np.array([r[1] for r in results])

    far = np.abs(samples[:, n]) >= (delta / m1 if m1 > 0 else math.inf)
    independence = float(np.max(distances[far])) if np.any(far) else 0.0

    on_wall = samples[:, n] == 0.0
    hypersurface = float(max(
        (abs(r[2][n]) for r, w in zip(results, on_wall) if w), default=0.0
    ))

    stage_factors = []
    for params, flow in zip(construction.stages[:m2], construction.flows):
        stage_factors.append((
            params.k, float(max(abs(flow.log_factor(p)) for p in samples)),
        ))

    errors = tuple(
        (m, max(e for _, _, e in graph_errors(construction, m, grid_points)))
        for m in range(1, m2 + 1)
    )

    constant = construction.bumps.constant
    bound = constant * sum(2.0 ** -k for k in range(m1 + 1, m2 + 1))

    report = BOReport(
        m1=m1, m2=m2, cauchy_distance=float(np.max(distances)),
        cauchy_bound=bound, independence_defect=independence,
        independence_samples=int(np.count_nonzero(far)),
        graph_errors=errors, min_log_factor=float(np.min(log_factors)),
        max_log_factor=float(np.max(log_factors)),
        stage_log_factors=tuple(stage_factors),
        hypersurface_defect=hypersurface,
        grid={"grid_points": grid_points, "sample_points": sample_points},
    )

    logger.info(
        f"BO m={m1}..{m2}: Cauchy {report.cauchy_distance:.3g} <= "
        f"{bound:.3g}, graph error {report.max_graph_error:.3g}"
    )

    return report

@dataclasses.dataclass(frozen=True)
class TransportReport:
    source: object
    image: object
    image_legendrian: bool
    limit_defect: float

    @property
    def transported(self):
        return (not self.source.coisotropic) and self.image.coisotropic

def image_chart(target, space=None):
    """{(s, 0, f^{-1}(s))}, the limit image of {x1 = y1 = 0} near 0."""
    if target.dim != 1 or target.inverse is None:
        raise PreconditionError(
            f"{target.name}: image chart needs a one-dimensional target "
            "with a known inverse"
        )
    space = space or AmbientSpace(1)

    def evaluate(q):
        s = float(q[0])
        return np.array([s, 0.0, target.inverse(s)])

    def jacobian(q):
        return np.array([[1.0], [0.0], [target.inverse_derivative(float(q[0]))]])

    return Chart(
        evaluate=evaluate, d=1, space=space, jacobian_oracle=jacobian,
        name=f"image({target.name})",
    )

def transport_check(construction, m=None, radius=0.05, points=9):
    """
    {x1 = y1 = 0} is not coisotropic at the origin; its image under the
    limit map is the graph of f^{-1}, tangent to d/dx1 there and so
    Legendrian. limit_defect measures how far psi_m(0, 0, z) is from that
    graph for |z| <= radius.
    """

    target = construction.target
    space = construction.space
    chart = image_chart(target, space)
    source = coordinate_chart(space, {"x1": 0.0, "y1": 0.0}, name="{x1=y1=0}")
    m = len(construction.stages) if m is None else m
    psi = construction.psi(m)

    defect = 0.0
    for z in np.linspace(-radius, radius, points):
        image = psi(np.array([0.0, 0.0, z]))
        on_graph = np.array([image[0], 0.0, target.inverse(image[0])])
        defect = max(defect, float(np.linalg.norm(image - on_graph)))

    return TransportReport(
        source=coisotropy_report(source, np.zeros(1)),
        image=coisotropy_report(chart, np.zeros(1)),
        image_legendrian=is_legendrian_at(chart, np.zeros(1)),
        limit_defect=defect,
    )

STAGE_HEADER = [
    "k", "ell", "sup_x", "x_bound", "sup_hz", "hz_bound",
    "support_radius", "support_reach", "support_limit", "width",
]

def stage_rows(construction):
    for params, width in zip(construction.stages, construction.schedule.widths):
        yield [
            params.k, params.ell, params.sup_x, params.x_bound, params.sup_hz,
            params.hz_bound, params.support_radius, params.support_reach,
            params.support_limit, width,
        ]

def graph_header(construction):
    dim = construction.target.dim
    return ["m"] + [f"w{j + 1}" for j in range(dim)] + ["x1", "F_m", "error"]

def graph_rows(construction, ms, grid_points=33):
    for m in ms:
        for w, image, error in graph_errors(construction, m, grid_points):
            yield (
                [m] + [float(v) for v in w]
                + [float(image[0]), construction.schedule.level(m, w), error]
            )
