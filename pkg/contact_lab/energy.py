"""
Disjunction energy: the time integral of the sampled sup-norm of a
contact Hamiltonian over a window, the smooth cutoff beta_k, and the
cutoff construction that replaces a disjoining flow by one whose
generator is small, with its explicit 2 e^{3M} / k certificate.

All sup-norms and distances are taken on grids; certificates are sampled,
not rigorous.
"""

import dataclasses
import logging
import math
from typing import Any, Mapping, Optional, Sequence

import numpy as np
from joblib import Parallel, delayed
from scipy.integrate import trapezoid
from scipy.spatial import cKDTree

from . errors import ContactLabError, DisjunctionError, PreconditionError
from . geometry import AmbientSpace, Box, compose_samples
from . hamiltonian import FlowMap, IntegratorConfig, ScalarField
from . hamiltonian import integrate_flow
from . smoothing import bump, bump_derivative, smooth_step
from . smoothing import scalar_like, smooth_step_derivative
from . smoothing import smooth_step_integral

logger = logging.getLogger("energy")
logger.setLevel(logging.INFO)

FUNCTIONAL_VALUE = "functional-value"
UPPER_BOUND = "upper-bound"

@dataclasses.dataclass(frozen=True, eq=False)
class Window:
    """Open box W and compact test box U with U strictly inside W."""

    outer: Box
    inner: Box
    resolution: int = 9
    time_steps: int = 65

    def __post_init__(self):
        if self.outer.dimension != self.inner.dimension:
            raise PreconditionError("Window boxes differ in dimension")
        if not (np.all(self.outer.lower < self.inner.lower)
                and np.all(self.inner.upper < self.outer.upper)):
            raise PreconditionError("Test box not strictly inside the window")
        if self.resolution < 2 or self.time_steps < 2:
            raise PreconditionError("Window resolutions must be at least 2")

    def samples(self):
        return self.outer.lattice(self.resolution)

    def times(self, t_final=1.0):
        return np.linspace(0.0, t_final, self.time_steps)

@dataclasses.dataclass(frozen=True)
class DisjunctionCertificate:
    min_distance: float
    margin: float
    image_samples: int
    chart_samples: int
    skipped: int = 0

    @property
    def valid(self):
        return self.skipped == 0 and self.min_distance > self.margin

@dataclasses.dataclass(frozen=True, eq=False)
class EnergyEstimate:
    value: float
    witness: ScalarField
    kind: str = FUNCTIONAL_VALUE
    certificate: Optional[DisjunctionCertificate] = None
    bound: Optional[float] = None
    details: Mapping[str, Any] = dataclasses.field(default_factory=dict)

    def __post_init__(self):
        if not self.value >= 0.0:
            raise PreconditionError(f"Energy {self.value} is negative")
        if self.kind not in (FUNCTIONAL_VALUE, UPPER_BOUND):
            raise PreconditionError(f"Unknown energy kind {self.kind}")
        if self.kind == UPPER_BOUND and self.certificate is None:
            raise PreconditionError("Upper bound without a certificate")

def _check_support(field, window, tol=1e-12):
    if field.support is not None and window.outer.contains(
        field.support.lower
    ) and window.outer.contains(field.support.upper):
        return
    enlarged = Box.centered(window.outer.center, 0.625 * window.outer.widths)
    for t in (0.0, 0.5, 1.0):
        for p in enlarged.lattice(window.resolution):
            if window.outer.contains(p):
                continue
            if abs(field(t, p)) > tol:
                raise PreconditionError(
                    f"{field.name} = {field(t, p):.3g} at {p}, outside the window"
                )

def sup_norm(field, t, points, weight=None):
    values = np.array([abs(field(t, p)) for p in points])
    if weight is not None:
        values = values * np.array([abs(weight(p)) for p in points])
    return float(np.max(values))

def isotopy_energy(field, window, t_final=1.0, weight=None):
    """
    Trapezoid rule in time of the sampled sup over the window of |H(t, .)|,
    i.e. of |alpha(X_H)|. With weight f the integrand is sup |f H|, the
    same functional for the form f alpha.
    """

    _check_support(field, window)

    times = window.times(t_final)
    points = window.samples()
    integrand = [sup_norm(field, t, points, weight) for t in times]
    value = float(abs(trapezoid(integrand, times)))

    logger.debug(f"Energy of {field.name}: {value:.6g}")

    return EnergyEstimate(
        value=value, witness=field, kind=FUNCTIONAL_VALUE,
        details={"resolution": window.resolution, "time_steps": len(times)},
    )

def reparametrize_path(field, rho, rho_prime):
    """
    The path t -> rho'(t) H(rho(t), .), generating the isotopy of H run on
    the clock rho. Its energy equals that of H when rho is monotone.
    """

    def value(t, p):
        return rho_prime(t) * field(rho(t), p)

    def gradient(t, p):
        return rho_prime(t) * field.grad(rho(t), p)

    return ScalarField(
        value=value, space=field.space, gradient=gradient,
        support=field.support, name=f"reparam({field.name})",
    )

def _half_clock(offset):
    def rho(t):
        return float(smooth_step(2.0 * t - offset))

    def rho_prime(t):
        return 2.0 * float(smooth_step_derivative(2.0 * t - offset))

    return rho, rho_prime

def concatenate_paths(first, second):
    """
    first on [0, 1/2] then second on [1/2, 1], each on a smooth clock so the
    concatenated path is smooth in t. The time-1 map is the composite.
    """

    if first.space != second.space:
        raise PreconditionError("Paths live on different spaces")

    first_clock = reparametrize_path(first, *_half_clock(0.0))
    second_clock = reparametrize_path(second, *_half_clock(1.0))

    def value(t, p):
        return first_clock(t, p) if t <= 0.5 else second_clock(t, p)

    def gradient(t, p):
        return first_clock.grad(t, p) if t <= 0.5 else second_clock.grad(t, p)

    support = None
    if first.support is not None and second.support is not None:
        support = Box(
            np.minimum(first.support.lower, second.support.lower),
            np.maximum(first.support.upper, second.support.upper),
        )

    return ScalarField(
        value=value, space=first.space, gradient=gradient, support=support,
        name=f"{first.name}#{second.name}",
    )

def _ramp_slope(r):
    return 3.0 * smooth_step((r - 1.0) / 0.4) \
        - 2.0 * smooth_step((r - 1.6) / 0.4)

def _ramp(r):
    return 1.2 * smooth_step_integral((r - 1.0) / 0.4) \
        - 0.8 * smooth_step_integral((r - 1.6) / 0.4)

class BetaCutoff:
    """
    beta_k(s) = sgn(s) Gamma(k|s|) / k where Gamma' rises from 0 to 3 on
    [1, 1.4] and falls to 1 on [1.6, 2]: zero on |s| <= 1/k, the identity
    on |s| >= 2/k, slope in [0, 3].
    """

    def __init__(self, k):
        if k < 1:
            raise PreconditionError(f"Cutoff index k={k} must be >= 1")
        self.k = k

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        value = np.sign(s) * _ramp(self.k * np.abs(s)) / self.k
        return scalar_like(value, s)

    def derivative(self, s):
        s = np.asarray(s, dtype=float)
        value = _ramp_slope(self.k * np.abs(s))
        return scalar_like(value, s)

    def slope_range(self, points=20001):
        s = np.linspace(-3.0 / self.k, 3.0 / self.k, points)
        d = self.derivative(s)
        return float(np.min(d)), float(np.max(d))

def beta_cutoff(k):
    return BetaCutoff(k)

def cutoff_field(field, beta):
    """beta o H with chain-rule gradient."""

    def value(t, p):
        return beta(field(t, p))

    def gradient(t, p):
        return beta.derivative(field(t, p)) * field.grad(t, p)

    return ScalarField(
        value=value, space=field.space, gradient=gradient,
        support=field.support, name=f"beta_{beta.k}({field.name})",
    )

def _chart_points(chart, chart_box, resolution):
    return np.array([chart.point(q) for q in chart_box.lattice(resolution)])

def _spacing(points):
    if len(points) < 2:
        return 0.0
    distances, _ = cKDTree(points).query(points, k=2)
    return float(np.max(distances[:, 1]))

def _safe_image(psi, p):
    try:
        return psi(p)
    except ContactLabError as e:
        logger.debug(f"Disjunction sample {p} skipped: {e}")
        return None

def disjunction_check(psi, u_box, chart, resolution, chart_box=None,
                      chart_resolution=None, n_jobs=1):
    """
    Minimum distance between the image of a grid on U and a sample grid on
    C. chart and chart_box may be sequences of pieces. Valid when the
    distance exceeds twice the larger grid spacing.
    """

    charts = list(chart) if isinstance(chart, Sequence) else [chart]
    if chart_box is None:
        boxes = [c.domain for c in charts]
    elif isinstance(chart_box, Box):
        boxes = [chart_box] * len(charts)
    else:
        boxes = list(chart_box)
    if any(b is None for b in boxes):
        raise PreconditionError("Chart pieces need a parameter box to sample")

    chart_resolution = chart_resolution or 4 * resolution
    pieces = [_chart_points(c, b, chart_resolution) for c, b in zip(charts, boxes)]

    grid = u_box.lattice(resolution)
    if n_jobs == 1:
        images = [_safe_image(psi, p) for p in grid]
    else:
        images = Parallel(n_jobs=n_jobs, prefer="threads")(
            delayed(_safe_image)(psi, p) for p in grid
        )
    kept = np.array([q for q in images if q is not None])
    skipped = len(images) - len(kept)

    target = np.vstack(pieces)
    if len(kept):
        distances, _ = cKDTree(target).query(kept)
        min_distance = float(np.min(distances))
    else:
        min_distance = 0.0

    margin = 2.0 * max(
        max(_spacing(piece) for piece in pieces), _spacing(kept)
    )

    return DisjunctionCertificate(
        min_distance=min_distance, margin=margin,
        image_samples=len(kept), chart_samples=len(target), skipped=skipped,
    )

def reeb_derivative_bound(field, points, t=0.0):
    """M = sup |dH/dz| over the points."""
    return float(max(abs(field.dz(t, p)) for p in points))

def _generator_profile(field, cut, p, times, cfg):
    trajectory = integrate_flow(cut, p, times[-1], cfg, t_eval=times)
    if not trajectory.completed:
        raise DisjunctionError(
            f"Cutoff flow truncated from {p}: {trajectory.status}", None
        )
    values = np.array([
        abs(field(t, q) - cut(t, q))
        for t, q in zip(trajectory.times, trajectory.points)
    ])
    return values * np.exp(-trajectory.log_factor), \
        float(np.max(np.abs(trajectory.log_factor)))

def cutoff_energy(field, k, window, cfg=IntegratorConfig(), n_jobs=1):
    """
    Energy of the generator of (phi_{beta_k H})^{-1} o phi_H: the trapezoid
    integral of sup_p |(H - beta_k H)(phi^t_{beta_k H}(p))| e^{-L_t(p)}.
    Returns (value, M, max |L|).
    """

    beta = beta_cutoff(k)
    cut = cutoff_field(field, beta)
    times = window.times()
    points = window.samples()

    if n_jobs == 1:
        profiles = [_generator_profile(field, cut, p, times, cfg) for p in points]
    else:
        profiles = Parallel(n_jobs=n_jobs, prefer="threads")(
            delayed(_generator_profile)(field, cut, p, times, cfg)
            for p in points
        )

    integrand = np.max(np.array([values for values, _ in profiles]), axis=0)
    value = float(trapezoid(integrand, times))
    max_log = max(log for _, log in profiles)
    return value, reeb_derivative_bound(field, points), max_log

def cutoff_generator(field, k, cfg=IntegratorConfig()):
    """
    The time-dependent generator (H - beta_k H) o phi^t_{beta_k H} / f_t,
    evaluated lazily by integrating the cutoff flow.
    """
    cut = cutoff_field(field, beta_cutoff(k))

    def value(t, p):
        if t == 0.0:
            return field(0.0, p) - cut(0.0, p)
        trajectory = integrate_flow(cut, p, t, cfg)
        q = trajectory.endpoint
        return (field(t, q) - cut(t, q)) * math.exp(
            -trajectory.final_log_factor
        )

    return ScalarField(
        value=value, space=field.space, support=field.support,
        name=f"generator_{k}({field.name})",
    )

def cutoff_disjunction(field, chart, window, k, chart_box=None,
                       cfg=IntegratorConfig(), vanish_tol=1e-10,
                       chart_resolution=None, n_jobs=1):
    """
    If phi_H^1 disjoins U from C and H vanishes on C, so does
    (phi^1_{beta_k H})^{-1} o phi^1_H, with generator energy at most
    2 e^{3M} / k where M = sup |dH/dz|.
    """

    chart_box = chart_box or chart.domain
    if chart_box is None:
        raise PreconditionError("Chart needs a parameter box to sample")

    for q in chart_box.lattice(window.resolution):
        value = field(0.0, chart.point(q))
        if abs(value) > vanish_tol:
            raise PreconditionError(
                f"{field.name} = {value:.3g} does not vanish on {chart.name}"
            )

    flow = FlowMap(field, 1.0, cfg)
    first = disjunction_check(
        flow.as_sample(), window.inner, chart, window.resolution, chart_box,
        chart_resolution, n_jobs,
    )
    if not first.valid:
        raise DisjunctionError(
            f"Flow of {field.name} does not disjoin: min distance "
            f"{first.min_distance:.3g}, margin {first.margin:.3g}",
            first,
        )

    cut_flow = FlowMap(cutoff_field(field, beta_cutoff(k)), 1.0, cfg)
    composite = compose_samples([flow.as_sample(), cut_flow.inverse().as_sample()])
    second = disjunction_check(
        composite, window.inner, chart, window.resolution, chart_box,
        chart_resolution, n_jobs,
    )
    if not second.valid:
        raise DisjunctionError(
            f"Cutoff composite k={k} does not disjoin: min distance "
            f"{second.min_distance:.3g}, margin {second.margin:.3g}",
            second,
        )

    value, m, max_log = cutoff_energy(field, k, window, cfg, n_jobs)
    bound = 2.0 * math.exp(3.0 * m) / k

    logger.info(
        f"k={k}: energy {value:.6g}, bound {bound:.6g}, "
        f"margin {second.min_distance:.3g}"
    )

    return EnergyEstimate(
        value=value, witness=cutoff_generator(field, k, cfg),
        kind=UPPER_BOUND, certificate=second, bound=bound,
        details={
            "k": k, "M": m, "max_abs_log_factor": max_log,
            "first_certificate": first,
        },
    )

@dataclasses.dataclass(frozen=True, eq=False)
class BumpModel:
    """H = A b(x) b(y) b(z) y on R^3, with C = {x = y = 0}."""

    field: ScalarField
    chart: Any
    chart_box: Box
    window: Window
    amplitude: float

def bump_y_model(amplitude=0.5, flat=0.6, zero=0.95, half_width=0.05,
                 resolution=9, time_steps=65):
    """
    A cutoff of A y: on the flat region its flow is translation by -A t in
    x, which pushes a small cube around the origin off C.
    """

    from . submanifold import coordinate_chart

    space = AmbientSpace(1)

    def factors(p):
        b = bump(p, flat, zero)
        db = bump_derivative(p, flat, zero)
        return b, db

    def value(t, p):
        b, _ = factors(p)
        return amplitude * b[0] * b[1] * b[2] * p[1]

    def gradient(t, p):
        b, db = factors(p)
        y = p[1]
        return amplitude * np.array([
            db[0] * b[1] * b[2] * y,
            b[0] * (db[1] * y + b[1]) * b[2],
            b[0] * b[1] * db[2] * y,
        ])

    field = ScalarField(
        value=value, space=space, gradient=gradient,
        support=Box.centered(np.zeros(3), zero), name="A*b*y",
    )

    return BumpModel(
        field=field,
        chart=coordinate_chart(space, {"x1": 0.0, "y1": 0.0}),
        chart_box=Box([-1.0], [1.0]),
        window=Window(
            outer=Box.centered(np.zeros(3), 1.0),
            inner=Box.centered(np.zeros(3), half_width),
            resolution=resolution, time_steps=time_steps,
        ),
        amplitude=amplitude,
    )
