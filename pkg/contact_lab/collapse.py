"""
Flows of H = z F(-log rho(y, z)) collapsing toward the zero section Z.

rho = sum y_j^{d_y} + z^{d_z}; F vanishes for u <= u0, is glued to a base
profile (-u^beta, -u or -u log u) on (u0, u1) and equals it beyond u1.
With u = -log rho the flow obeys u' = -c F(u), c between d_z and d_y, so
G(u) = int_{u1}^u dv / F(v) turns flow times into differences of G.

Flows are integrated in the chart (x, log u, log(rho_y / rho), L), which
stays finite when rho underflows; the Cartesian chart is kept for
cross-checks.
"""

import dataclasses
import functools
import logging
import math
from typing import Any, Optional

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.spatial.distance import pdist
from scipy.special import logsumexp

from . errors import ContactLabError, PreconditionError, QuadratureError
from . errors import TableRangeError
from . geometry import AmbientSpace, Box, DiffeoSample, as_array
from . geometry import contact_volume, image_volume, QuadratureConfig
from . geometry import pullback_residual
from . hamiltonian import COMPLETED, IntegratorConfig, ScalarField
from . hamiltonian import Trajectory, constant_trajectory, integrate_flow
from . hamiltonian import integrate_system
from . smoothing import smooth_step, smooth_step_derivative
from . smoothing import scalar_like, smooth_step_integral

logger = logging.getLogger("collapse")
logger.setLevel(logging.INFO)

BASES = ("power", "linear", "loglinear")

@dataclasses.dataclass(frozen=True)
class RadialWeight:
    """rho(y, z) = sum_j y_j^{d_y} + z^{d_z}."""

    d_y: int = 2
    d_z: int = 2
    name: str = "square"

    def __post_init__(self):
        for d in (self.d_y, self.d_z):
            if d < 2 or d % 2:
                raise PreconditionError(f"Exponent {d} must be even and >= 2")
        if self.d_y < self.d_z:
            raise PreconditionError(
                f"Need d_y >= d_z, got d_y={self.d_y}, d_z={self.d_z}"
            )

    @classmethod
    def square(cls):
        return cls(2, 2, "square")

    @classmethod
    def quartic(cls):
        return cls(4, 2, "quartic")

    def rho_y(self, y):
        return float(np.sum(np.asarray(y, dtype=float) ** self.d_y))

    def __call__(self, y, z):
        return self.rho_y(y) + float(z) ** self.d_z

    def log_rho_y(self, y):
        y = np.asarray(y, dtype=float)
        nonzero = y[y != 0.0]
        if nonzero.size == 0:
            return -math.inf
        return float(logsumexp(self.d_y * np.log(np.abs(nonzero))))

    def log_rho(self, y, z):
        """log rho without underflow; -inf exactly on Z."""
        terms = [self.log_rho_y(y)]
        if z != 0.0:
            terms.append(self.d_z * math.log(abs(z)))
        terms = [t for t in terms if t != -math.inf]
        if not terms:
            return -math.inf
        return float(logsumexp(terms))

    def neg_log_rho(self, y, z):
        return -self.log_rho(y, z)

    def homogeneity_defect(self, rng, n, samples=16):
        """max |rho_y(t y) - t^{d_y} rho_y(y)| / rho_y(t y) on random samples."""
        worst = 0.0
        for _ in range(samples):
            y = rng.normal(size=n)
            t = rng.uniform(0.1, 3.0)
            scaled = self.rho_y(t * y)
            worst = max(
                worst, abs(scaled - t ** self.d_y * self.rho_y(y)) / scaled
            )
        return worst

@dataclasses.dataclass(frozen=True)
class CollapseProfile:
    """
    F(u) = base(u) S((u - u0) / (u1 - u0)): zero to infinite order at u0,
    equal to the base from u1 on. Both factors keep F <= 0 and F' <= 0.
    """

    base: str = "power"
    u0: float = 0.5
    u1: float = 2.0
    beta: float = 0.5

    def __post_init__(self):
        if self.base not in BASES:
            raise PreconditionError(
                f"Unknown base {self.base}, expected one of {', '.join(BASES)}"
            )
        if not 0.0 < self.u0 < self.u1:
            raise PreconditionError(
                f"Need 0 < u0 < u1, got u0={self.u0}, u1={self.u1}"
            )
        if self.base == "loglinear" and self.u0 < 1.0:
            raise PreconditionError("loglinear base needs u0 >= 1")
        if self.base == "power" and not 0.0 < self.beta < 1.0:
            raise PreconditionError(f"Power exponent {self.beta} not in (0, 1)")

    @property
    def name(self):
        if self.base == "power":
            return f"-u^{self.beta}"
        return {"linear": "-u", "loglinear": "-u log u"}[self.base]

    def base_value(self, u):
        if self.base == "power":
            return -u ** self.beta
        if self.base == "linear":
            return -u
        return -u * np.log(u)

    def base_derivative(self, u):
        if self.base == "power":
            return -self.beta * u ** (self.beta - 1.0)
        if self.base == "linear":
            return -np.ones_like(u)
        return -(np.log(u) + 1.0)

    def _glue(self, u):
        return (u - self.u0) / (self.u1 - self.u0)

    def value(self, u):
        u = np.asarray(u, dtype=float)
        safe = np.maximum(u, self.u0)
        f = np.where(
            u <= self.u0, 0.0,
            self.base_value(safe) * smooth_step(self._glue(safe)),
        )
        return scalar_like(f, u)

    def derivative(self, u):
        u = np.asarray(u, dtype=float)
        safe = np.maximum(u, self.u0)
        s = smooth_step(self._glue(safe))
        ds = smooth_step_derivative(self._glue(safe)) / (self.u1 - self.u0)
        f = np.where(
            u <= self.u0, 0.0,
            self.base_derivative(safe) * s + self.base_value(safe) * ds,
        )
        return scalar_like(f, u)

    def closed_G(self, u):
        """G on [u1, inf)."""
        if self.base == "power":
            e = 1.0 - self.beta
            return -(u ** e - self.u1 ** e) / e
        if self.base == "linear":
            return -math.log(u / self.u1)
        return -(math.log(math.log(u)) - math.log(math.log(self.u1)))

    def closed_log_inverse(self, s):
        """log G^{-1}(s) for s <= 0."""
        if self.base == "power":
            e = 1.0 - self.beta
            return math.log(self.u1 ** e - e * s) / e
        if self.base == "linear":
            return math.log(self.u1) - s
        return math.log(self.u1) * math.exp(-s)

class GCalculus:
    """
    G(u) = int_{u1}^u dv / F(v) and its inverse. The glue interval is
    tabulated by adaptive quadrature down to S-argument glue_floor; beyond
    u1 G is closed-form ("closed") or tabulated up to u_max
    ("quadrature", a cross-check). Inverses by brentq inside tables.
    """

    def __init__(self, profile, mode="closed", u_max=400.0, nodes=257,
                 glue_floor=1e-2):
        if mode not in ("closed", "quadrature"):
            raise PreconditionError(f"Unknown G mode {mode}")
        self.profile = profile
        self.mode = mode
        self.u_max = float(u_max)
        self.u_lo = profile.u0 + glue_floor * (profile.u1 - profile.u0)

        self._glue_nodes = np.linspace(self.u_lo, profile.u1, nodes)
        glue = np.zeros(nodes)
        for i in range(nodes - 2, -1, -1):
            glue[i] = glue[i + 1] - self._integral(
                self._glue_nodes[i], self._glue_nodes[i + 1]
            )
        self._glue_table = glue
        self.G_lo = float(glue[0])

        if mode == "quadrature":
            if self.u_max <= profile.u1:
                raise PreconditionError(f"u_max={u_max} must exceed u1")
            self._tail_nodes = np.geomspace(profile.u1, self.u_max, nodes)
            tail = np.zeros(nodes)
            for i in range(1, nodes):
                tail[i] = tail[i - 1] + self._integral(
                    self._tail_nodes[i - 1], self._tail_nodes[i]
                )
            self._tail_table = tail

    def _integral(self, a, b):
        if a == b:
            return 0.0
        value, error = quad(
            lambda v: 1.0 / self.profile.value(v), a, b,
            epsabs=0.0, epsrel=1e-12, limit=200,
        )
        if not math.isfinite(value) or error > 1e-6 * abs(value) + 1e-300:
            raise QuadratureError(
                f"1/F quadrature on [{a}, {b}] inaccurate: {value} +- {error}"
            )
        return value

    def G(self, u):
        u = float(u)
        u1 = self.profile.u1
        if u < self.u_lo:
            raise TableRangeError(
                f"G requested at u={u} below the table start {self.u_lo}"
            )
        if u < u1:
            i = int(np.searchsorted(self._glue_nodes, u, side="right"))
            return float(
                self._glue_table[i] - self._integral(u, self._glue_nodes[i])
            )
        if self.mode == "closed":
            return self.profile.closed_G(u)
        if u > self.u_max:
            raise TableRangeError(f"G requested at u={u} above u_max")
        j = int(np.searchsorted(self._tail_nodes, u, side="right")) - 1
        return float(
            self._tail_table[j] + self._integral(self._tail_nodes[j], u)
        )

    __call__ = G

    def derivative(self, u):
        return 1.0 / self.profile.value(u)

    def _bracket(self, s, lo, hi):
        return brentq(
            lambda u: self.G(u) - s, lo, hi,
            xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500,
        )

    def inverse(self, s):
        s = float(s)
        u1 = self.profile.u1
        if s > self.G_lo:
            raise TableRangeError(
                f"G^-1 requested at {s} above the table maximum {self.G_lo}"
            )
        if s > 0.0:
            return self._bracket(s, self.u_lo, u1)
        if self.mode == "closed":
            return math.exp(self.profile.closed_log_inverse(s))
        if s < self._tail_table[-1]:
            raise TableRangeError(f"G^-1 requested at {s} beyond u_max")
        if s == 0.0:
            return u1
        return self._bracket(s, u1, self.u_max)

    def log_inverse(self, s):
        """log G^{-1}(s), finite where G^{-1}(s) overflows."""
        if s <= 0.0 and self.mode == "closed":
            return self.profile.closed_log_inverse(float(s))
        return math.log(self.inverse(s))

@functools.lru_cache(maxsize=32)
def calculus_for(profile, mode="closed", u_max=400.0):
    return GCalculus(profile, mode=mode, u_max=u_max)

class ApproximantStage:
    """
    F_m = F o beta_m with beta_m the identity below a = G^{-1}(G(m) - d_y)
    and constant a + 1/2 from a + 1 on, so F_m = c_m = F(a + 1/2) there.
    """

    def __init__(self, profile, calculus, m, d_y):
        self.profile = profile
        self.m = m
        self.a = calculus.inverse(calculus.G(m) - d_y)
        self.u_m = self.a + 1.0
        self.c_m = float(profile.value(self.a + 0.5))
        self.u0 = profile.u0
        self.u1 = profile.u1
        self.name = f"F_{m}"

    def cutoff(self, u):
        u = np.asarray(u, dtype=float)
        r = np.maximum(u - self.a, 0.0)
        b = np.where(u <= self.a, u, self.a + r - smooth_step_integral(r))
        return scalar_like(b, u)

    def cutoff_derivative(self, u):
        u = np.asarray(u, dtype=float)
        d = 1.0 - smooth_step(u - self.a)
        return scalar_like(d, u)

    def value(self, u):
        return self.profile.value(self.cutoff(u))

    def derivative(self, u):
        return self.profile.derivative(self.cutoff(u)) \
            * self.cutoff_derivative(u)

@dataclasses.dataclass(frozen=True)
class AssumptionReport:
    verdicts: dict
    details: dict
    horizon: float

    @property
    def passed(self):
        return all(self.verdicts.values())

def check_assumptions(profile, weight, grid=None, horizon=1e8):
    """
    Finite-horizon checks: (i) F <= 0 and F' <= 0 on a grid; (ii) F = 0
    exactly up to u0 and F < 0 beyond; (iii) increments of int 1/F over
    doubling intervals do not decay geometrically; (iv), (v) the sampled
    expressions shrink in absolute value toward the horizon.
    """

    u0, u1 = profile.u0, profile.u1
    if grid is None:
        grid = np.concatenate([
            np.linspace(0.0, u0, 50),
            np.linspace(u0 + 2e-3 * (u1 - u0), u1, 400),
            np.geomspace(u1, 1e4, 200),
        ])
    grid = np.asarray(grid, dtype=float)

    values = np.asarray(profile.value(grid))
    slopes = np.asarray(profile.derivative(grid))

    verdicts = {}
    details = {}

    verdicts["i"] = bool(np.all(values <= 0.0) and np.all(slopes <= 1e-14))
    details["i"] = f"max F {np.max(values):.3g}, max F' {np.max(slopes):.3g}"

    below = values[grid <= u0]
    above = values[grid > u0]
    verdicts["ii"] = bool(np.all(below == 0.0) and np.all(above < 0.0))
    details["ii"] = f"{np.count_nonzero(above >= 0.0)} zeros beyond u0"

    start = int(math.ceil(math.log2(u1)))
    stop = int(math.floor(math.log2(horizon)))
    increments = []
    for k in range(start, stop):
        value, _ = quad(
            lambda v: 1.0 / profile.value(v), 2.0 ** k, 2.0 ** (k + 1),
            epsabs=0.0, epsrel=1e-10, limit=200,
        )
        increments.append(abs(value))
    tail_ratio = increments[-1] / increments[-2] if len(increments) > 1 else 0.0
    verdicts["iii"] = bool(tail_ratio >= 0.95)
    details["iii"] = f"tail increment ratio {tail_ratio:.4f}"

    samples = np.geomspace(max(u1, 1.0), horizon, 64)
    exponent = 1.0 / weight.d_y - 1.0 / weight.d_z
    with np.errstate(under="ignore"):
        iv = np.abs(np.exp(exponent * samples) * profile.derivative(samples))
    v = np.abs(
        np.asarray(profile.derivative(samples)) / np.asarray(profile.value(samples))
    )

    for name, series in (("iv", iv), ("v", v)):
        shrinking = bool(np.all(np.diff(series) <= 1e-12 * series[:-1]))
        verdicts[name] = shrinking and series[-1] <= 0.1 * series[0]
        details[name] = f"first {series[0]:.3g}, last {series[-1]:.3g}"

    for name, ok in verdicts.items():
        if not ok:
            logger.info(f"Assumption ({name}) fails for {profile.name}: "
                        f"{details[name]}")

    return AssumptionReport(verdicts=verdicts, details=details, horizon=horizon)

@dataclasses.dataclass(frozen=True, eq=False)
class CollapseHamiltonian(ScalarField):
    profile: Any = None
    weight: Optional[RadialWeight] = None

    def on_zero_section(self, p):
        _, y, z = self.space.split(p)
        return not np.any(y) and z == 0.0

def collapse_hamiltonian(profile, weight, space):
    """H = z F(-log rho), extended by 0 to Z, with analytic gradient."""

    n = space.n
    d_y, d_z = weight.d_y, weight.d_z

    def value(t, p):
        y, z = p[n:2 * n], p[2 * n]
        u = weight.neg_log_rho(y, z)
        if u == math.inf:
            return 0.0
        return z * profile.value(u)

    def gradient(t, p):
        y, z = p[n:2 * n], p[2 * n]
        u = weight.neg_log_rho(y, z)
        g = np.zeros(space.dim)
        if u == math.inf:
            return g
        f = profile.value(u)
        df = profile.derivative(u)
        with np.errstate(divide="ignore"):
            # d rho_y / rho and z^{d_z} / rho in log form
            log_y = np.log(np.abs(y))
        grad_y = np.where(
            y == 0.0, 0.0,
            d_y * np.sign(y) ** (d_y - 1) * np.exp((d_y - 1) * log_y + u),
        )
        z_share = math.exp(d_z * math.log(abs(z)) + u) if z != 0.0 else 0.0
        g[n:2 * n] = -z * df * grad_y
        g[2 * n] = f - d_z * z_share * df
        return g

    return CollapseHamiltonian(
        value=value, space=space, gradient=gradient,
        singular_locus=lambda p: weight(p[n:2 * n], p[2 * n]),
        name=f"zF(-log rho) [{profile.name}, {weight.name}]",
        profile=profile, weight=weight,
    )

def _polar_start(weight, y, z):
    log_rho = weight.log_rho(y, z)
    log_rho_y = weight.log_rho_y(y)
    tau = log_rho_y - log_rho
    direction = np.zeros_like(y)
    if log_rho_y != -math.inf:
        direction = y * math.exp(-log_rho_y / weight.d_y)
    return -log_rho, tau, direction

def _polar_rhs(profile, weight, direction, sign, wall):
    d_y, d_z = weight.d_y, weight.d_z
    n = direction.size
    exponent = 1.0 / d_y - 1.0 / d_z
    partial = d_y * direction ** (d_y - 1)

    def rhs(t, s):
        v = s[n]
        u = math.exp(v)
        f = profile.value(u)
        df = profile.derivative(u)
        out = np.zeros(s.size)
        if wall:
            out[n] = -d_z * f / u
            out[n + 1] = f - d_z * df
            return out
        tau = min(s[n + 1], 0.0)
        sigma = math.exp(tau)
        rest = max(-math.expm1(tau), 0.0)
        out[n] = -(d_y * sigma + d_z * rest) * f / u
        out[n + 1] = d_y * rest * (f * (1.0 - d_z / d_y) - d_z * df)
        zhat = sign * rest ** (1.0 / d_z)
        scale = math.exp(exponent * u) if exponent * u > -745.0 else 0.0
        out[:n] = zhat * sigma ** ((d_y - 1.0) / d_y) * partial * df * scale
        out[n + 2] = f - d_z * rest * df
        return out

    return rhs

def _polar_points(weight, states, direction, sign, wall, n):
    d_y, d_z = weight.d_y, weight.d_z
    points = []
    for s in states:
        x = s[:n]
        u = math.exp(s[n])
        if wall:
            y = np.zeros(n)
            z = sign * math.exp(-u / d_z)
        else:
            tau = min(s[n + 1], 0.0)
            rest = max(-math.expm1(tau), 0.0)
            y = math.exp((tau - u) / d_y) * direction
            z = sign * math.exp(-u / d_z) * rest ** (1.0 / d_z)
        points.append(np.concatenate([x, y, [z]]))
    return np.array(points)

def integrate_collapse(profile, weight, p, t, cfg=IntegratorConfig(),
                       chart="polar", space=None, t_eval=None):
    """
    Trajectory of H = z F(-log rho) from p with extras["u"] = -log rho.
    Points of Z and points with -log rho <= u0 are fixed.
    """

    p = as_array(p)
    space = space or AmbientSpace((p.size - 1) // 2)
    n = space.n
    y, z = p[n:2 * n], p[2 * n]

    u_start = weight.neg_log_rho(y, z)
    if u_start == math.inf or u_start <= profile.u0:
        trajectory = constant_trajectory(space.normalize(p))
        return dataclasses.replace(
            trajectory, extras={"u": np.array([u_start])}
        )

    if chart == "cartesian":
        field = collapse_hamiltonian(profile, weight, space)
        trajectory = integrate_flow(field, p, t, cfg, t_eval)
        u = np.array([
            weight.neg_log_rho(q[n:2 * n], q[2 * n]) for q in trajectory.points
        ])
        return dataclasses.replace(trajectory, extras={"u": u})

    if chart != "polar":
        raise PreconditionError(f"Unknown chart {chart}")

    _, tau, direction = _polar_start(weight, y, z)
    wall = tau == -math.inf
    sign = 1.0 if z >= 0.0 else -1.0

    if wall:
        s0 = np.concatenate([p[:n], [math.log(u_start), 0.0]])
    else:
        s0 = np.concatenate([p[:n], [math.log(u_start), tau, 0.0]])

    rhs = _polar_rhs(profile, weight, direction, sign, wall)
    times, states, status = integrate_system(rhs, s0, t, cfg, t_eval=t_eval)

    points = _polar_points(weight, states, direction, sign, wall, n)
    points = np.array([space.normalize(q) for q in points])

    return Trajectory(
        times=times, points=points, log_factor=states[:, -1], status=status,
        extras={"u": np.exp(states[:, n])},
    )

def bihari_envelope(calculus, weight, u_start, t, log=False):
    """
    (G^{-1}(G(u) - d_z t), G^{-1}(G(u) - d_y t)): every flow line starting
    at -log rho = u has -log rho inside this interval at time t.
    """
    if u_start <= calculus.profile.u0:
        raise PreconditionError(f"u={u_start} <= u0, the flow is trivial")
    if t < 0:
        raise PreconditionError("Envelope defined for t >= 0")
    g = calculus.G(u_start)
    invert = calculus.log_inverse if log else calculus.inverse
    return invert(g - weight.d_z * t), invert(g - weight.d_y * t)

def log_abs_wall_map(calculus, weight, z, t):
    """log |g(z)| for the restriction of the flow to {y = 0}."""
    if z == 0.0:
        return -math.inf
    d_z = weight.d_z
    u = -d_z * math.log(abs(z))
    if u <= calculus.profile.u0:
        return math.log(abs(z))
    log_u_t = calculus.log_inverse(calculus.G(u) - d_z * t)
    if log_u_t > 709.0:
        return -math.inf
    return -math.exp(log_u_t) / d_z

def wall_map(calculus, weight, z, t):
    """sgn(z) exp(-G^{-1}(G(-d_z log|z|) - d_z t) / d_z)."""
    if z == 0.0:
        return 0.0
    return math.copysign(math.exp(log_abs_wall_map(calculus, weight, z, t)), z)

def square_closed_form(calculus, weight, p, t):
    """
    Time-t map for rho = |y|^2 + z^2: u_t = G^{-1}(G(u) - 2t),
    |Y| / Z = k |y| / z with k = F(u_t) / F(u), and x moves along y / |y|
    by the change of the angle arctan2(|y|, z).
    """

    if (weight.d_y, weight.d_z) != (2, 2):
        raise PreconditionError(
            f"Closed form needs rho = |y|^2 + z^2, got {weight.name}"
        )

    p = as_array(p)
    n = (p.size - 1) // 2
    x, y, z = p[:n], p[n:2 * n], p[2 * n]
    profile = calculus.profile

    u = weight.neg_log_rho(y, z)
    if u == math.inf or u <= profile.u0:
        return p.copy()

    log_u_t = calculus.log_inverse(calculus.G(u) - 2.0 * t)
    if log_u_t > 709.0:
        u_t = math.inf
    else:
        u_t = math.exp(log_u_t)
    k = profile.value(u_t) / profile.value(u)

    r = float(np.linalg.norm(y))
    norm = math.hypot(k * r, z)
    root = math.exp(-u_t / 2.0)

    if r == 0.0:
        return np.concatenate([x, y, [math.copysign(root, z)]])

    unit = y / r
    shift = math.atan2(r, z) - math.atan2(k * r, z)
    return np.concatenate([
        x + shift * unit, root * k * y / norm, [root * z / norm],
    ])

class CollapseMap:
    """Time-t map of a collapse profile, evaluated in the polar chart."""

    def __init__(self, profile, weight, t, cfg=IntegratorConfig(),
                 space=None, chart="polar", cache=4096):
        self.profile = profile
        self.weight = weight
        self.t = float(t)
        self.cfg = cfg
        self.space = space
        self.chart = chart
        self._solve = functools.lru_cache(maxsize=cache)(self._endpoint)

    def _endpoint(self, key):
        p = np.array(key)
        n = (p.size - 1) // 2
        if self.weight.neg_log_rho(p[n:2 * n], p[2 * n]) == math.inf:
            # f vanishes on Z forward in time, blows up backward
            if self.t == 0.0:
                return p, 0.0
            return p, -math.copysign(math.inf, self.t)
        trajectory = integrate_collapse(
            self.profile, self.weight, p, self.t, self.cfg, self.chart,
            self.space,
        )
        if trajectory.status != COMPLETED:
            raise ContactLabError(
                f"Collapse flow from {p} stopped: {trajectory.status}"
            )
        return trajectory.endpoint, trajectory.final_log_factor

    def __call__(self, p):
        endpoint, _ = self._solve(tuple(as_array(p)))
        return np.array(endpoint)

    def log_factor(self, p):
        _, log_factor = self._solve(tuple(as_array(p)))
        return log_factor

    def factor(self, p):
        return math.exp(self.log_factor(p))

    def as_sample(self, h=1e-5, domain=None):
        p_space = self.space
        if p_space is None:
            raise PreconditionError("CollapseMap needs an ambient space to sample")
        return DiffeoSample(
            evaluate=self, space=p_space, h=h, domain=domain,
            log_factor=self.log_factor,
            name=f"collapse({self.profile.name}, {self.t})",
        )

def build_approximant(profile, weight, m, space, cfg=IntegratorConfig(),
                      calculus=None, h=1e-5):
    """
    psi_m, the time-1 map of z F_m(-log rho), and its conformal factor f_m.
    Where -log rho >= u_m the flow is the dilation (x, e^{c_m} y, e^{c_m} z).
    """

    calculus = calculus or calculus_for(profile)
    stage = ApproximantStage(profile, calculus, m, weight.d_y)
    flow = CollapseMap(stage, weight, 1.0, cfg, space)
    n = space.n
    dilation = math.exp(stage.c_m)

    def near_zero_section(p):
        return weight.neg_log_rho(p[n:2 * n], p[2 * n]) >= stage.u_m

    def evaluate(p):
        p = as_array(p)
        if near_zero_section(p):
            q = np.array(p, dtype=float)
            q[n:] *= dilation
            return q
        return flow(p)

    def log_factor(p):
        p = as_array(p)
        if near_zero_section(p):
            return stage.c_m
        return flow.log_factor(p)

    psi = DiffeoSample(
        evaluate=evaluate, space=space, h=h, log_factor=log_factor,
        name=f"psi_{m}",
    )

    logger.debug(
        f"Approximant m={m}: a={stage.a:.6g}, u_m={stage.u_m:.6g}, "
        f"c_m={stage.c_m:.6g}"
    )

    return psi, (lambda p: math.exp(log_factor(p))), stage

def collapse_sample(profile, weight, t, space, cfg=IntegratorConfig(), h=1e-5):
    """The extended homeomorphism as a DiffeoSample, fixing Z with f = 0."""
    return CollapseMap(profile, weight, t, cfg, space).as_sample(h)

@dataclasses.dataclass(frozen=True)
class TangencyEstimate:
    radii: np.ndarray
    slopes: np.ndarray
    flat: np.ndarray

    @property
    def super_polynomial(self):
        slopes = self.slopes[~self.flat]
        return len(slopes) > 2 and bool(np.all(np.diff(slopes) > 1e-3))

    @property
    def order(self):
        """Slope on the smallest non-flat window."""
        slopes = self.slopes[~self.flat]
        return float(slopes[-1]) if len(slopes) else math.nan

def tangency_order(g, ladder, samples=16, log_abs=False):
    """
    Least-squares slope of log|g(z)| against log|z| on the two-sided
    windows r/10 <= |z| <= r for each r of the shrinking ladder. With
    log_abs, g returns log|g(z)| directly.
    """

    radii = np.asarray(ladder, dtype=float)
    slopes = np.full(radii.size, math.nan)
    flat = np.zeros(radii.size, dtype=bool)

    for i, r in enumerate(radii):
        z = np.geomspace(r / 10.0, r, samples)
        z = np.concatenate([-z, z])
        if log_abs:
            values = np.array([g(v) for v in z], dtype=float)
        else:
            with np.errstate(divide="ignore"):
                values = np.log(np.abs(np.array([g(v) for v in z], dtype=float)))
        finite = np.isfinite(values)
        if np.count_nonzero(finite) < 2:
            flat[i] = True
            continue
        slope, _ = np.polyfit(np.log(np.abs(z[finite])), values[finite], 1)
        slopes[i] = slope

    return TangencyEstimate(radii=radii, slopes=slopes, flat=flat)

RATIO_HEADER = [
    "half_width", "ratio", "log_ratio", "error", "log_sup_f", "log_inf_f",
]

@dataclasses.dataclass(frozen=True)
class RatioRow:
    half_width: float
    ratio: float
    log_ratio: float
    error: float
    log_sup_f: float
    log_inf_f: float

    def as_list(self):
        return [
            self.half_width, self.ratio, self.log_ratio, self.error,
            self.log_sup_f, self.log_inf_f,
        ]

@dataclasses.dataclass(frozen=True)
class BoundednessReport:
    rows: list
    ratio_bounded_below: str
    sup_f_bounded: str

    @property
    def log_ratios(self):
        return [r.log_ratio for r in self.rows]

    @property
    def strictly_decreasing(self):
        """Log ratios fall at every step; a ratio stuck at 0 counts as falling."""
        logs = self.log_ratios
        return all(
            b < a or b == a == -math.inf for a, b in zip(logs, logs[1:])
        )

def _log_factor(psi, p):
    try:
        if psi.log_factor is not None:
            return float(psi.log_factor(p))
        f_hat, _ = pullback_residual(psi, p)
        with np.errstate(divide="ignore"):
            return float(np.log(abs(f_hat)))
    except ContactLabError:
        return math.nan

def boundedness_diagnostics(psi, center, ladder, quadrature=QuadratureConfig()):
    """
    Per box of the ladder: contact volume ratio mu(psi(V)) / mu(V), its log,
    and the sampled sup and inf of log |f|. Ratios are formed in the log
    domain. The verdicts describe the ladder only.
    """

    center = as_array(center)
    rows = []
    for half_width in ladder:
        box = Box.centered(center, half_width)
        reference = contact_volume(box)
        volume = image_volume(psi, box, quadrature)
        log_ratio = volume.log_value - math.log(reference)
        logs = np.array([
            _log_factor(psi, p) for p in box.grid(quadrature.points_per_axis)
        ])
        logs = logs[~np.isnan(logs)]
        rows.append(RatioRow(
            half_width=float(half_width), ratio=volume.value / reference,
            log_ratio=log_ratio, error=volume.error / reference,
            log_sup_f=float(np.max(logs)), log_inf_f=float(np.min(logs)),
        ))

    first, last = rows[0], rows[-1]
    report = BoundednessReport(rows=rows, ratio_bounded_below="", sup_f_bounded="")
    collapsing = report.strictly_decreasing and (
        last.log_ratio == -math.inf
        or last.log_ratio < first.log_ratio - math.log(10.0)
    )
    growing = last.log_sup_f > first.log_sup_f + math.log(10.0)

    return dataclasses.replace(
        report,
        ratio_bounded_below="no" if collapsing else "yes",
        sup_f_bounded="no" if growing else "yes",
    )

@dataclasses.dataclass(frozen=True)
class InjectivityReport:
    min_ratio: float
    pairs: int

    @property
    def injective(self):
        return self.min_ratio > 1e-12

def injectivity_check(psi, samples):
    """Smallest ratio of image to preimage pairwise distances."""
    samples = np.asarray(samples, dtype=float)
    images = np.array([psi(p) for p in samples])
    before = pdist(samples)
    after = pdist(images)
    keep = before > 0.0
    return InjectivityReport(
        min_ratio=float(np.min(after[keep] / before[keep])),
        pairs=int(np.count_nonzero(keep)),
    )

PRESETS = {
    "square": (RadialWeight.square, dict(base="power", beta=0.5, u0=0.5, u1=2.0)),
    "fourfinite": (RadialWeight.quartic, dict(base="linear", u0=0.5, u1=2.0)),
    "fourinf": (RadialWeight.quartic, dict(base="loglinear", u0=1.5, u1=3.0)),
}

def preset(name, **overrides):
    """(profile, weight) for square, fourfinite or fourinf."""
    if name not in PRESETS:
        raise PreconditionError(
            f"Unknown preset {name}, expected one of {', '.join(PRESETS)}"
        )
    weight_factory, knobs = PRESETS[name]
    knobs = dict(knobs)
    knobs.update({k: v for k, v in overrides.items() if v is not None})
    return CollapseProfile(**knobs), weight_factory()
