"""
Coordinates and the standard contact form alpha = dz - sum_j y_j dx_j.

Points and tangent vectors travel through the package as flat numpy arrays
laid out as (x_1..x_n, y_1..y_n, z). Point and Tangent are structured views
of the same data for callers that prefer named fields; every operation
accepts either form.

Also provides coordinate boxes, contact volume, numerically sampled maps
(DiffeoSample) and the finite-difference pullback residual used to test
whether a sampled map is a contactomorphism.
"""

import dataclasses
import functools
import logging
import math
from typing import Callable, Optional, Sequence

import numpy as np
from joblib import Parallel, delayed
from scipy.special import logsumexp

from . errors import ContactLabError, DomainError, PreconditionError
from . errors import QuadratureError

logger = logging.getLogger("geometry")
logger.setLevel(logging.INFO)

@dataclasses.dataclass(frozen=True, eq=False)
class Box:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.array(self.lower, dtype=float).reshape(-1)
        upper = np.array(self.upper, dtype=float).reshape(-1)
        if lower.shape != upper.shape:
            raise PreconditionError("Box bounds differ in dimension")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def centered(cls, center, half_width):
        center = np.asarray(center, dtype=float).reshape(-1)
        half = np.broadcast_to(
            np.asarray(half_width, dtype=float), center.shape
        )
        return cls(center - half, center + half)

    @property
    def dimension(self):
        return self.lower.size

    @property
    def widths(self):
        return np.maximum(self.upper - self.lower, 0.0)

    @property
    def center(self):
        return 0.5 * (self.lower + self.upper)

    @property
    def diameter(self):
        return float(np.linalg.norm(self.widths))

    @property
    def degenerate(self):
        return bool(np.any(self.upper <= self.lower))

    def volume(self):
        if self.degenerate:
            return 0.0
        return float(np.prod(self.widths))

    def contains(self, p, slack=0.0):
        p = np.asarray(p, dtype=float)
        return bool(
            np.all(p >= self.lower - slack) and np.all(p <= self.upper + slack)
        )

    def intersect(self, other):
        """Possibly empty; an empty box contains no point."""
        return Box(np.maximum(self.lower, other.lower),
                   np.minimum(self.upper, other.upper))

    def grid(self, points_per_axis):
        """Cell midpoints of a tensor grid, one row per point."""
        axes = [
            lo + (np.arange(points_per_axis) + 0.5) * (hi - lo)
            / points_per_axis
            for lo, hi in zip(self.lower, self.upper)
        ]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=1)

    def lattice(self, points_per_axis):
        """Tensor grid including the faces of the box."""
        axes = [
            np.linspace(lo, hi, points_per_axis)
            for lo, hi in zip(self.lower, self.upper)
        ]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=1)

    def sample(self, rng, count):
        return rng.uniform(self.lower, self.upper, size=(count, self.dimension))

@dataclasses.dataclass(frozen=True)
class AmbientSpace:
    """R^{2n+1}, or T^n x R^{n+1} when torus is set (x periods 1)."""

    n: int
    torus: bool = False
    box: Optional[Box] = None

    def __post_init__(self):
        if self.n < 1:
            raise PreconditionError(f"Half-dimension n={self.n} must be >= 1")
        if self.box is not None and self.box.dimension != self.dim:
            raise PreconditionError(
                f"Bounding box has dimension {self.box.dimension}, "
                f"expected {self.dim}"
            )

    @property
    def dim(self):
        return 2 * self.n + 1

    def split(self, p):
        p = as_array(p)
        n = self.n
        return p[:n], p[n:2 * n], p[2 * n]

    def join(self, x, y, z):
        return np.concatenate([
            np.atleast_1d(np.asarray(x, dtype=float)),
            np.atleast_1d(np.asarray(y, dtype=float)),
            [float(z)],
        ])

    def normalize(self, p):
        p = np.array(as_array(p), dtype=float)
        if self.torus:
            p[:self.n] = np.mod(p[:self.n], 1.0)
        return p

    def displacement(self, a, b):
        """b - a, with x taken as the minimal representative on the torus."""
        d = as_array(b) - as_array(a)
        if self.torus:
            d = np.array(d, dtype=float)
            d[..., :self.n] = d[..., :self.n] - np.round(d[..., :self.n])
        return d

    def distance(self, a, b):
        return float(np.linalg.norm(self.displacement(a, b)))

    def contains(self, p):
        if self.box is None:
            return True
        return self.box.contains(as_array(p))

    def unit(self, axis, j=1):
        """Coordinate vector d/dx_j, d/dy_j or d/dz as an array."""
        v = np.zeros(self.dim)
        if axis == "x":
            v[j - 1] = 1.0
        elif axis == "y":
            v[self.n + j - 1] = 1.0
        elif axis == "z":
            v[2 * self.n] = 1.0
        else:
            raise PreconditionError(f"Unknown axis {axis}")
        return v

@dataclasses.dataclass(frozen=True)
class Point:
    x: Sequence[float]
    y: Sequence[float]
    z: float

    @classmethod
    def from_array(cls, p):
        p = np.asarray(p, dtype=float)
        n = (p.size - 1) // 2
        return cls(tuple(p[:n]), tuple(p[n:2 * n]), float(p[2 * n]))

    def to_array(self):
        return np.concatenate([
            np.asarray(self.x, dtype=float),
            np.asarray(self.y, dtype=float),
            [float(self.z)],
        ])

@dataclasses.dataclass(frozen=True)
class Tangent:
    dx: Sequence[float]
    dy: Sequence[float]
    dz: float

    @classmethod
    def from_array(cls, v):
        v = np.asarray(v, dtype=float)
        n = (v.size - 1) // 2
        return cls(tuple(v[:n]), tuple(v[n:2 * n]), float(v[2 * n]))

    def to_array(self):
        return np.concatenate([
            np.asarray(self.dx, dtype=float),
            np.asarray(self.dy, dtype=float),
            [float(self.dz)],
        ])

    def close_to(self, other, tol=1e-12):
        return bool(np.allclose(self.to_array(), as_array(other), atol=tol))

def as_array(v):
    if isinstance(v, (Point, Tangent)):
        return v.to_array()
    return np.asarray(v, dtype=float)

def half_dimension(p):
    size = np.shape(p)[-1]
    if size % 2 == 0:
        raise PreconditionError(f"Coordinate vector of even length {size}")
    return (size - 1) // 2

def alpha_covector(p):
    """Components of alpha at p in the (x, y, z) frame."""
    p = as_array(p)
    n = half_dimension(p)
    a = np.zeros(p.shape, dtype=float)
    a[..., :n] = -p[..., n:2 * n]
    a[..., 2 * n] = 1.0
    return a

def alpha_eval(p, v):
    p = as_array(p)
    v = as_array(v)
    n = half_dimension(p)
    return float(v[2 * n] - np.dot(p[n:2 * n], v[:n]))

@functools.lru_cache(maxsize=None)
def _dalpha_matrix(n):
    m = np.zeros((2 * n + 1, 2 * n + 1))
    for j in range(n):
        m[j, n + j] = 1.0
        m[n + j, j] = -1.0
    m.setflags(write=False)
    return m

def dalpha_matrix(n):
    """Matrix J with dalpha(v, w) = v^T J w."""
    return _dalpha_matrix(int(n))

def dalpha_eval(p, v, w):
    v = as_array(v)
    w = as_array(w)
    n = half_dimension(v)
    return float(
        np.dot(v[:n], w[n:2 * n]) - np.dot(v[n:2 * n], w[:n])
    )

def contact_volume(box):
    """Volume of a box under alpha ^ (dalpha)^n, i.e. n! times Lebesgue."""
    n = half_dimension(np.zeros(box.dimension))
    if box.degenerate:
        return 0.0
    return math.factorial(n) * box.volume()

@dataclasses.dataclass(frozen=True, eq=False)
class DiffeoSample:
    """
    A map sampled through its evaluator. log_factor, when given, returns
    log f with psi^* alpha = f alpha exactly (e.g. co-integrated along a
    flow); otherwise f is recovered by pullback_residual.
    """

    evaluate: Callable[[np.ndarray], np.ndarray]
    space: AmbientSpace
    h: float = 1e-5
    domain: Optional[Box] = None
    log_factor: Optional[Callable[[np.ndarray], float]] = None
    name: str = "map"

    def __post_init__(self):
        if not self.h > 0:
            raise PreconditionError(f"Finite-difference step h={self.h}")

    def __call__(self, p):
        p = as_array(p)
        if self.domain is not None and not self.domain.contains(p):
            raise DomainError(f"{self.name}: point {p} outside domain")
        q = np.asarray(self.evaluate(p), dtype=float)
        if not np.all(np.isfinite(q)):
            raise DomainError(f"{self.name}: non-finite image of {p}")
        return q

    def jacobian(self, p):
        p = as_array(p)
        dim = p.size
        jac = np.empty((dim, dim))
        for i in range(dim):
            step = np.zeros(dim)
            step[i] = self.h
            forward = self(p + step)
            backward = self(p - step)
            jac[:, i] = self.space.displacement(backward, forward) / (
                2.0 * self.h
            )
        return jac

    def then(self, outer):
        """The composite outer o self."""
        return compose_samples([self, outer])

def compose_samples(maps):
    """Apply maps in list order; log-conformal factors add along the chain."""

    maps = list(maps)
    if not maps:
        raise PreconditionError("Nothing to compose")

    space = maps[0].space

    def evaluate(p):
        q = as_array(p)
        for m in maps:
            q = m(q)
        return q

    log_factor = None
    if all(m.log_factor is not None for m in maps):

        def log_factor(p):
            q = as_array(p)
            total = 0.0
            for m in maps:
                total += m.log_factor(q)
                q = m(q)
            return total

    return DiffeoSample(
        evaluate=evaluate, space=space, h=min(m.h for m in maps),
        domain=maps[0].domain, log_factor=log_factor,
        name=" o ".join(m.name for m in reversed(maps)),
    )

def identity_sample(space, h=1e-5):
    return DiffeoSample(
        evaluate=lambda p: np.array(p, dtype=float), space=space, h=h,
        log_factor=lambda p: 0.0, name="identity",
    )

def dilation_sample(space, t, h=1e-5):
    """(x, e^t y, e^t z), the time-t flow of H = z."""
    n = space.n
    scale = math.exp(t)

    def evaluate(p):
        q = np.array(p, dtype=float)
        q[n:] *= scale
        return q

    return DiffeoSample(
        evaluate=evaluate, space=space, h=h,
        log_factor=lambda p: float(t), name=f"dilation({t})",
    )

def translation_sample(space, offset, h=1e-5):
    """Translation by offset; offset must have zero y-part to be strict."""
    offset = np.asarray(offset, dtype=float)
    return DiffeoSample(
        evaluate=lambda p: np.asarray(p, dtype=float) + offset,
        space=space, h=h, log_factor=lambda p: 0.0, name="translation",
    )

def contact_rescaling(space, scale, h=1e-5):
    """(scale x, scale y, scale^2 z), conformal with factor scale^2."""
    n = space.n
    if scale <= 0:
        raise PreconditionError(f"Rescaling factor {scale} must be positive")

    def evaluate(p):
        q = np.array(p, dtype=float)
        q[:2 * n] *= scale
        q[2 * n] *= scale * scale
        return q

    return DiffeoSample(
        evaluate=evaluate, space=space, h=h,
        log_factor=lambda p: 2.0 * math.log(scale),
        name=f"rescale({scale})",
    )

def pullback_residual(psi, p):
    """
    Least-squares conformal factor of psi at p and the relative residual
    |c - f alpha_p| / max(1, |c|) where c = (D psi_p)^T alpha_{psi(p)}.
    """
    p = as_array(p)
    jac = psi.jacobian(p)
    c = jac.T @ alpha_covector(psi(p))
    a = alpha_covector(p)
    f_hat = float(np.dot(c, a) / np.dot(a, a))
    residual = float(
        np.linalg.norm(c - f_hat * a) / max(1.0, float(np.linalg.norm(c)))
    )
    return f_hat, residual

@dataclasses.dataclass(frozen=True)
class QuadratureConfig:
    kind: str = "grid"
    points_per_axis: int = 8
    samples: int = 4096
    seed: int = 0
    max_skip_fraction: float = 0.1
    n_jobs: int = 1

    def __post_init__(self):
        if self.kind not in ("grid", "monte-carlo"):
            raise PreconditionError(f"Unknown quadrature kind {self.kind}")
        if self.points_per_axis < 1 or self.samples < 1:
            raise PreconditionError("Quadrature resolution must be positive")

@dataclasses.dataclass(frozen=True)
class ImageVolume:
    value: float
    error: float
    skipped: int
    total: int
    log_value: float = -math.inf

    @property
    def skip_fraction(self):
        return self.skipped / self.total if self.total else 0.0

def _log_density(psi, p, power):
    try:
        if psi.log_factor is not None:
            return power * float(psi.log_factor(p))
        f_hat, _ = pullback_residual(psi, p)
        with np.errstate(divide="ignore"):
            return power * float(np.log(abs(f_hat)))
    except ContactLabError as e:
        logger.debug(f"Quadrature sample {p} skipped: {e}")
        return math.nan

def _log_densities(psi, points, power, n_jobs):
    """log |f|^power per point; -inf where f underflows, skipped on failure."""
    if n_jobs == 1:
        values = [_log_density(psi, p, power) for p in points]
    else:
        values = Parallel(n_jobs=n_jobs, prefer="threads")(
            delayed(_log_density)(psi, p, power) for p in points
        )
    values = np.asarray(values, dtype=float)
    good = ~np.isnan(values)
    return values[good], int(np.count_nonzero(~good))

def _exp(x):
    with np.errstate(over="ignore", under="ignore"):
        return float(np.exp(x))

def _log_mean(log_values):
    if not np.any(np.isfinite(log_values)):
        return -math.inf
    return float(logsumexp(log_values) - math.log(log_values.size))

def image_volume(psi, box, quadrature=QuadratureConfig()):
    """
    Quadrature estimate of the contact volume of psi(box), the integral of
    |f|^{n+1} against the contact volume form. The mean is taken in the log
    domain, so log_value stays finite when value underflows.
    """

    n = psi.space.n
    power = n + 1
    reference = contact_volume(box)

    if reference == 0.0:
        return ImageVolume(0.0, 0.0, 0, 0)

    log_reference = math.log(reference)

    if quadrature.kind == "grid":

        points = box.grid(quadrature.points_per_axis)
        logs, skipped = _log_densities(psi, points, power, quadrature.n_jobs)
        total = len(points)

        if logs.size == 0:
            raise QuadratureError(f"All {total} quadrature samples skipped")

        log_value = log_reference + _log_mean(logs)
        value = _exp(log_value)

        coarse_n = quadrature.points_per_axis // 2
        if coarse_n >= 1:
            coarse, _ = _log_densities(
                psi, box.grid(coarse_n), power, quadrature.n_jobs
            )
            coarse_value = _exp(log_reference + _log_mean(coarse)) \
                if coarse.size else value
            error = abs(value - coarse_value) / 3.0
        else:
            error = abs(value)

    else:

        rng = np.random.default_rng(quadrature.seed)
        points = box.sample(rng, quadrature.samples)
        logs, skipped = _log_densities(psi, points, power, quadrature.n_jobs)
        total = len(points)

        if logs.size == 0:
            raise QuadratureError(f"All {total} quadrature samples skipped")

        log_value = log_reference + _log_mean(logs)
        value = _exp(log_value)
        with np.errstate(over="ignore", under="ignore"):
            densities = np.exp(logs)
        error = reference * float(densities.std()) / math.sqrt(logs.size)

    result = ImageVolume(value, error, skipped, total, log_value)

    if skipped:
        logger.warning(
            f"image_volume: {skipped} of {total} samples skipped"
        )

    if result.skip_fraction > quadrature.max_skip_fraction:
        raise QuadratureError(
            f"Skipped {skipped} of {total} samples, above threshold "
            f"{quadrature.max_skip_fraction}"
        )

    return result
