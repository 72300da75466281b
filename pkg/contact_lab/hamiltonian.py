"""
Contact Hamiltonian vector fields and their flows.

For the standard form alpha = dz - sum y_j dx_j the field of H is

    X_H = -sum H_{y_j} d/dx_j + sum (H_{x_j} + y_j H_z) d/dy_j
          + (H - sum y_j H_{y_j}) d/dz

so alpha(X_H) = H and L_{X_H} alpha = H_z alpha. Flows are integrated on
the augmented state (p, L) with L' = H_z, so the time-t map pulls alpha
back to exp(L(t)) alpha.
"""

import csv
import dataclasses
import functools
import itertools
import logging
import math
from typing import Callable, Mapping, Optional

import numpy as np
from joblib import Parallel, delayed
from scipy.integrate import solve_ivp

from . errors import DomainError, FlowTruncated, PreconditionError
from . geometry import AmbientSpace, Box, DiffeoSample, as_array
from . geometry import compose_samples, pullback_residual

logger = logging.getLogger("hamiltonian")
logger.setLevel(logging.INFO)

COMPLETED = "completed"
HIT_SINGULAR_FLOOR = "hit-singular-floor"
LEFT_DOMAIN = "left-domain"

METHODS = {
    "rk4-fixed": None,
    "rk45-adaptive": "RK45",
    "dop853-adaptive": "DOP853",
    "lsoda": "LSODA",
}

@dataclasses.dataclass(frozen=True, eq=False)
class ScalarField:
    """
    A time-dependent function H(t, p). Without an analytic gradient the
    gradient is taken by central differences with step h_grad. Outside a
    declared support box the field and its gradient are exactly zero.
    """

    value: Callable[[float, np.ndarray], float]
    space: AmbientSpace
    gradient: Optional[Callable[[float, np.ndarray], np.ndarray]] = None
    support: Optional[Box] = None
    h_grad: float = 1e-6
    singular_locus: Optional[Callable[[np.ndarray], float]] = None
    name: str = "H"

    def inside(self, p):
        return self.support is None or self.support.contains(p)

    def __call__(self, t, p):
        p = as_array(p)
        if not self.inside(p):
            return 0.0
        v = float(self.value(t, p))
        if not math.isfinite(v):
            raise DomainError(f"{self.name}: non-finite value at {p}")
        return v

    def grad(self, t, p):
        p = as_array(p)
        if not self.inside(p):
            return np.zeros(p.size)
        if self.gradient is not None:
            g = np.asarray(self.gradient(t, p), dtype=float)
        else:
            g = np.empty(p.size)
            for i in range(p.size):
                step = np.zeros(p.size)
                step[i] = self.h_grad
                g[i] = (
                    self.value(t, p + step) - self.value(t, p - step)
                ) / (2.0 * self.h_grad)
        if not np.all(np.isfinite(g)):
            raise DomainError(f"{self.name}: non-finite gradient at {p}")
        return g

    def dz(self, t, p):
        return float(self.grad(t, p)[-1])

    def times(self, other):
        """Pointwise product with analytic product-rule gradient."""

        def value(t, p):
            return self(t, p) * other(t, p)

        def gradient(t, p):
            return other(t, p) * self.grad(t, p) \
                + self(t, p) * other.grad(t, p)

        if self.support is None or other.support is None:
            support = self.support if other.support is None else other.support
        else:
            support = self.support.intersect(other.support)

        return ScalarField(
            value=value, space=self.space, gradient=gradient, support=support,
            name=f"({other.name})*({self.name})",
        )

def constant_field(space, c):
    return ScalarField(
        value=lambda t, p: float(c), space=space,
        gradient=lambda t, p: np.zeros(space.dim), name=f"{c}",
    )

def coordinate_field(space, axis, j=1, scale=1.0):
    """H = scale * x_j, y_j or z."""
    direction = scale * space.unit(axis, j)
    return ScalarField(
        value=lambda t, p: float(np.dot(direction, p)), space=space,
        gradient=lambda t, p: direction, name=f"{scale}*{axis}{j}",
    )

def polynomial_field(space, exponents, coefficients, name="poly"):
    """Sum of coefficient * prod p_i^e_i over the given exponent rows."""

    exponents = np.asarray(exponents, dtype=int).reshape(-1, space.dim)
    coefficients = np.asarray(coefficients, dtype=float).reshape(-1)

    def value(t, p):
        return float(np.prod(p ** exponents, axis=1) @ coefficients)

    def gradient(t, p):
        g = np.zeros(space.dim)
        for i in range(space.dim):
            active = exponents[:, i] > 0
            if not np.any(active):
                continue
            lowered = exponents[active].copy()
            lowered[:, i] -= 1
            g[i] = float(
                (coefficients[active] * exponents[active, i])
                @ np.prod(p ** lowered, axis=1)
            )
        return g

    return ScalarField(
        value=value, space=space, gradient=gradient, name=name,
    )

def random_polynomial_field(space, rng, degree=3, terms=6, scale=0.5):
    """Sparse random polynomial of total degree <= degree."""
    monomials = [
        e for e in itertools.product(range(degree + 1), repeat=space.dim)
        if sum(e) <= degree
    ]
    picks = rng.choice(len(monomials), size=terms, replace=False)
    exponents = np.array([monomials[i] for i in picks])
    coefficients = rng.uniform(-scale, scale, size=terms)
    return polynomial_field(space, exponents, coefficients, name="random-poly")

def hamiltonian_vector_field(H, t, p):
    """X_H at (t, p) as a coordinate array (Tangent.from_array for a view)."""
    p = as_array(p)
    n = H.space.n
    g = H.grad(t, p)
    h = H(t, p)
    y = p[n:2 * n]
    gx, gy, gz = g[:n], g[n:2 * n], g[2 * n]
    return np.concatenate([-gy, gx + y * gz, [h - np.dot(y, gy)]])

@dataclasses.dataclass(frozen=True)
class IntegratorConfig:
    method: str = "rk45-adaptive"
    step: float = 1e-3
    rtol: float = 1e-9
    atol: float = 1e-9
    singular_floor: float = 1e-300
    max_step: float = math.inf
    domain: Optional[Box] = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise PreconditionError(
                f"Unknown integration method {self.method}, "
                f"expected one of {', '.join(METHODS)}"
            )
        if not (self.step > 0 and self.rtol > 0 and self.atol > 0):
            raise PreconditionError("Step and tolerances must be positive")
        if not self.singular_floor > 0:
            raise PreconditionError("Singular floor must be positive")

    @classmethod
    def golden(cls, **kwargs):
        return cls(method="rk4-fixed", step=1e-3, **kwargs)

    @classmethod
    def tight(cls, **kwargs):
        return cls(method="dop853-adaptive", rtol=1e-12, atol=1e-12, **kwargs)

    def replace(self, **kwargs):
        return dataclasses.replace(self, **kwargs)

@dataclasses.dataclass(frozen=True, eq=False)
class Trajectory:
    """
    Samples of an integrated flow line. Times are monotone in the direction
    of integration; log_factor[0] is 0.
    """

    times: np.ndarray
    points: np.ndarray
    log_factor: np.ndarray
    status: str = COMPLETED
    extras: Mapping[str, np.ndarray] = dataclasses.field(default_factory=dict)

    @property
    def endpoint(self):
        return self.points[-1]

    @property
    def final_log_factor(self):
        return float(self.log_factor[-1])

    @property
    def conformal_factor(self):
        return math.exp(self.final_log_factor)

    @property
    def completed(self):
        return self.status == COMPLETED

    def header(self):
        n = (self.points.shape[1] - 1) // 2
        return (
            ["t"]
            + [f"x{j + 1}" for j in range(n)]
            + [f"y{j + 1}" for j in range(n)]
            + ["z", "logf"]
            + list(self.extras)
        )

    def rows(self):
        for i, t in enumerate(self.times):
            yield (
                [float(t)]
                + [float(v) for v in self.points[i]]
                + [float(self.log_factor[i])]
                + [float(v[i]) for v in self.extras.values()]
            )

    def write_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(self.header())
            for row in self.rows():
                w.writerow([repr(v) for v in row])

def constant_trajectory(p, status=COMPLETED):
    p = as_array(p)
    return Trajectory(
        times=np.array([0.0]), points=p.reshape(1, -1),
        log_factor=np.array([0.0]), status=status,
    )

def _domain_margin(domain, space, p):
    lower = p - domain.lower
    upper = domain.upper - p
    margin = np.minimum(lower, upper)
    if space.torus:
        margin = margin[space.n:]
    return float(np.min(margin))

def integrate_system(rhs, s0, t_final, cfg, stop=None, t_eval=None):
    """
    Integrate s' = rhs(t, s) from 0 to t_final. stop is a list of
    (name, g) pairs; integration halts when some g(s) drops below zero and
    the pair's name becomes the status. Returns (times, states, status).
    """

    stop = stop or []
    s0 = np.asarray(s0, dtype=float)

    if t_final == 0.0:
        return np.array([0.0]), s0.reshape(1, -1), COMPLETED

    if cfg.method == "rk4-fixed":
        return _rk4(rhs, s0, t_final, cfg.step, stop)

    events = []
    for name, g in stop:
        def event(t, s, g=g):
            return g(s)
        event.terminal = True
        event.direction = -1
        events.append(event)

    sol = solve_ivp(
        rhs, (0.0, t_final), s0, method=METHODS[cfg.method],
        rtol=cfg.rtol, atol=cfg.atol, max_step=cfg.max_step,
        events=events or None, t_eval=t_eval,
    )

    if sol.status == -1:
        raise DomainError(f"Integration failed: {sol.message}")

    status = COMPLETED
    times, states = sol.t, sol.y.T
    if sol.status == 1:
        for (name, _), hits in zip(stop, sol.t_events):
            if len(hits):
                status = name
                break
        if t_eval is not None:
            # t_eval drops the terminal point
            index = [i for i, hits in enumerate(sol.t_events) if len(hits)][0]
            times = np.append(times, sol.t_events[index][0])
            states = np.vstack([states, sol.y_events[index][0]])

    return times, states, status

def _rk4(rhs, s0, t_final, step, stop):
    steps = max(1, int(math.ceil(abs(t_final) / step - 1e-9)))
    dt = t_final / steps
    times = [0.0]
    states = [s0]
    s = s0
    t = 0.0
    for i in range(steps):
        k1 = rhs(t, s)
        k2 = rhs(t + dt / 2, s + dt / 2 * k1)
        k3 = rhs(t + dt / 2, s + dt / 2 * k2)
        k4 = rhs(t + dt, s + dt * k3)
        s = s + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t = (i + 1) * dt
        times.append(t)
        states.append(s)
        for name, g in stop:
            if g(s) < 0:
                return np.array(times), np.array(states), name
    return np.array(times), np.array(states), COMPLETED

def integrate_flow(H, p, t_final, cfg=IntegratorConfig(), t_eval=None):
    """Trajectory of X_H from p, with L' = H_z co-integrated."""

    p = as_array(p)
    space = H.space
    n = space.n

    if H.singular_locus is not None:
        if H.singular_locus(p) < cfg.singular_floor:
            return constant_trajectory(p, HIT_SINGULAR_FLOOR)

    def rhs(t, s):
        q = s[:-1]
        return np.append(hamiltonian_vector_field(H, t, q), H.dz(t, q))

    stop = []
    if H.singular_locus is not None:
        stop.append((
            HIT_SINGULAR_FLOOR,
            lambda s: H.singular_locus(s[:-1]) - cfg.singular_floor,
        ))
    if cfg.domain is not None:
        stop.append((
            LEFT_DOMAIN,
            lambda s: _domain_margin(cfg.domain, space, s[:-1]),
        ))

    s0 = np.append(p, 0.0)
    times, states, status = integrate_system(
        rhs, s0, t_final, cfg, stop=stop, t_eval=t_eval
    )

    points = np.array([space.normalize(s[:-1]) for s in states])

    if status != COMPLETED:
        logger.warning(
            f"Flow of {H.name} from {p} stopped at t={times[-1]}: {status}"
        )

    return Trajectory(
        times=times, points=points, log_factor=states[:, -1], status=status,
    )

def conformal_factor(H, p, t, cfg=IntegratorConfig()):
    trajectory = integrate_flow(H, p, t, cfg)
    if not trajectory.completed:
        raise FlowTruncated(
            f"Flow of {H.name} truncated: {trajectory.status}", trajectory
        )
    return trajectory.conformal_factor

class FlowMap:
    """The time-t_final map of H, evaluated pointwise by integration."""

    def __init__(self, field, t_final, cfg=IntegratorConfig(), cache=4096):
        self.field = field
        self.t_final = float(t_final)
        self.cfg = cfg
        self.space = field.space
        self._solve = functools.lru_cache(maxsize=cache)(self._endpoint)

    def _endpoint(self, key):
        trajectory = integrate_flow(
            self.field, np.array(key), self.t_final, self.cfg
        )
        if not trajectory.completed:
            raise FlowTruncated(
                f"Flow of {self.field.name} truncated: {trajectory.status}",
                trajectory,
            )
        return trajectory.endpoint, trajectory.final_log_factor

    def trajectory(self, p, t_eval=None):
        return integrate_flow(self.field, p, self.t_final, self.cfg, t_eval)

    def __call__(self, p):
        endpoint, _ = self._solve(tuple(as_array(p)))
        return np.array(endpoint)

    def log_factor(self, p):
        _, log_factor = self._solve(tuple(as_array(p)))
        return log_factor

    def inverse(self):
        return FlowMap(self.field, -self.t_final, self.cfg)

    def as_sample(self, h=1e-5, domain=None):
        return DiffeoSample(
            evaluate=self, space=self.space, h=h, domain=domain,
            log_factor=self.log_factor,
            name=f"flow({self.field.name}, {self.t_final})",
        )

def compose_flows(maps, h=1e-5):
    """maps[0] applied first."""
    return compose_samples([m.as_sample(h) for m in maps])

@dataclasses.dataclass(frozen=True)
class ContactomorphismReport:
    rows: list
    max_residual: float
    max_f_mismatch: float
    truncated: int

    @property
    def checked(self):
        return len(self.rows)

def _verify_sample(flow, sample, p):
    try:
        f_hat, residual = pullback_residual(sample, p)
        f = math.exp(flow.log_factor(p))
    except FlowTruncated:
        return None
    mismatch = abs(f_hat - f) / abs(f)
    return (np.array(p), f_hat, f, residual, mismatch)

def verify_contactomorphism(H, samples, t, cfg=IntegratorConfig(),
                            h=1e-5, n_jobs=1):
    """
    Compare the finite-difference pullback of the time-t flow with the
    co-integrated conformal factor at each sample.
    """

    flow = FlowMap(H, t, cfg)
    sample = flow.as_sample(h)

    if n_jobs == 1:
        results = [_verify_sample(flow, sample, p) for p in samples]
    else:
        results = Parallel(n_jobs=n_jobs, prefer="threads")(
            delayed(_verify_sample)(flow, sample, p) for p in samples
        )

    rows = [r for r in results if r is not None]
    truncated = len(results) - len(rows)

    if truncated:
        logger.warning(f"{truncated} samples truncated and excluded")

    return ContactomorphismReport(
        rows=rows,
        max_residual=max((r[3] for r in rows), default=0.0),
        max_f_mismatch=max((r[4] for r in rows), default=0.0),
        truncated=truncated,
    )
