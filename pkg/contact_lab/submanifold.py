"""
Pointwise linear algebra of parametrized submanifold germs: the split of
T_pC against the contact plane, dalpha-orthogonal complements inside the
contact plane, coisotropy by complement containment and by wedge powers
of lambda = alpha|_C, the Legendrian test, the characteristic
distribution and involutivity diagnostics for defining functions.

Tolerances are relative singular-value thresholds. Subspace distances are
sines of the largest principal angle.
"""

import csv
import dataclasses
import itertools
import logging
import math
from typing import Callable, Optional

import numpy as np
from joblib import Parallel, delayed
from scipy.linalg import expm, null_space, orth, subspace_angles, svdvals

from . errors import DomainError, PreconditionError, RankError
from . geometry import AmbientSpace, Box, Tangent, alpha_covector, as_array
from . geometry import dalpha_matrix
from . hamiltonian import ScalarField, hamiltonian_vector_field

logger = logging.getLogger("submanifold")
logger.setLevel(logging.INFO)

RANK_RTOL = 1e-7
AMBIGUITY_BAND = 1e-6

@dataclasses.dataclass(frozen=True, eq=False)
class Chart:
    """
    A germ u: R^d -> ambient. Without a Jacobian oracle the Jacobian is
    taken by central differences with step h.
    """

    evaluate: Callable[[np.ndarray], np.ndarray]
    d: int
    space: AmbientSpace
    jacobian_oracle: Optional[Callable[[np.ndarray], np.ndarray]] = None
    domain: Optional[Box] = None
    h: float = 1e-6
    name: str = "C"

    def __post_init__(self):
        if not 0 < self.d < self.space.dim:
            raise PreconditionError(
                f"{self.name}: dimension {self.d} not in 1..{self.space.dim - 1}"
            )

    @property
    def codimension(self):
        return self.space.dim - self.d

    def _check(self, q):
        q = np.atleast_1d(np.asarray(q, dtype=float))
        if q.size != self.d:
            raise PreconditionError(
                f"{self.name}: parameter of size {q.size}, expected {self.d}"
            )
        if self.domain is not None and not self.domain.contains(q):
            raise DomainError(f"{self.name}: parameter {q} outside domain")
        return q

    def point(self, q):
        q = self._check(q)
        p = np.asarray(self.evaluate(q), dtype=float)
        if not np.all(np.isfinite(p)):
            raise DomainError(f"{self.name}: non-finite point at {q}")
        return p

    def jacobian(self, q):
        q = self._check(q)
        if self.jacobian_oracle is not None:
            jac = np.asarray(self.jacobian_oracle(q), dtype=float)
        else:
            jac = np.empty((self.space.dim, self.d))
            for i in range(self.d):
                step = np.zeros(self.d)
                step[i] = self.h
                jac[:, i] = self.space.displacement(
                    self.evaluate(q - step), self.evaluate(q + step)
                ) / (2.0 * self.h)
        if not np.all(np.isfinite(jac)):
            raise DomainError(f"{self.name}: non-finite Jacobian at {q}")
        return jac.reshape(self.space.dim, self.d)

def _coordinate_index(space, name):
    axis, j = name[0], name[1:]
    if axis == "z" and not j:
        return 2 * space.n
    if axis in ("x", "y") and j.isdigit() and 1 <= int(j) <= space.n:
        return (0 if axis == "x" else space.n) + int(j) - 1
    raise PreconditionError(f"Unknown coordinate {name}")

def coordinate_chart(space, fixed, name=None):
    """
    The coordinate plane where the named coordinates ("x1", "y2", "z", ...)
    take the given values; the remaining coordinates, in ambient order, are
    the parameters.
    """

    fixed_index = {_coordinate_index(space, k): float(v) for k, v in fixed.items()}
    free = [i for i in range(space.dim) if i not in fixed_index]

    base = np.zeros(space.dim)
    for i, v in fixed_index.items():
        base[i] = v

    selection = np.zeros((space.dim, len(free)))
    for column, i in enumerate(free):
        selection[i, column] = 1.0

    def evaluate(q):
        return base + selection @ q

    label = name or "{" + ", ".join(f"{k}={v}" for k, v in fixed.items()) + "}"

    return Chart(
        evaluate=evaluate, d=len(free), space=space,
        jacobian_oracle=lambda q: selection, name=label,
    )

def zero_section(space):
    fixed = {f"y{j + 1}": 0.0 for j in range(space.n)}
    fixed["z"] = 0.0
    return coordinate_chart(space, fixed, name="zero-section")

def z_graph_chart(space, g, grad_g, name="z-graph"):
    """{y = 0, z = g(x)}, parametrized by x."""

    n = space.n

    def evaluate(q):
        return np.concatenate([q, np.zeros(n), [float(g(q))]])

    def jacobian(q):
        jac = np.zeros((space.dim, n))
        jac[:n, :] = np.eye(n)
        jac[2 * n, :] = np.asarray(grad_g(q), dtype=float)
        return jac

    return Chart(
        evaluate=evaluate, d=n, space=space, jacobian_oracle=jacobian,
        name=name,
    )

def nowhere_legendrian_chart(space):
    """{y = 0, z = x1}: an n-dimensional germ transverse to xi everywhere."""
    e1 = np.zeros(space.n)
    e1[0] = 1.0
    return z_graph_chart(
        space, lambda q: q[0], lambda q: e1, name="{y=0, z=x1}"
    )

def linear_chart(space, point, directions, curvature=None, name="germ"):
    """
    u(q) = point + D q + 1/2 sum_ij q_i q_j B_ij, with D the (dim x d)
    direction matrix and B a (d x d x dim) array symmetric in its first two
    indices.
    """

    point = as_array(point)
    directions = np.asarray(directions, dtype=float)
    d = directions.shape[1]
    if curvature is None:
        curvature = np.zeros((d, d, space.dim))

    def evaluate(q):
        return point + directions @ q + 0.5 * np.einsum(
            "ijk,i,j->k", curvature, q, q
        )

    def jacobian(q):
        return directions + np.einsum("ijk,j->ki", curvature, q)

    return Chart(
        evaluate=evaluate, d=d, space=space, jacobian_oracle=jacobian,
        name=name,
    )

def xi_frame(p):
    """Columns e_j = d/dx_j + y_j d/dz, f_j = d/dy_j: a symplectic basis of xi_p."""
    p = as_array(p)
    n = (p.size - 1) // 2
    frame = np.zeros((p.size, 2 * n))
    for j in range(n):
        frame[j, j] = 1.0
        frame[2 * n, j] = p[n + j]
        frame[n + j, n + j] = 1.0
    return frame

def random_symplectic(n, rng, scale=0.5):
    """exp(Omega S) for a random symmetric S; preserves the standard Omega."""
    omega = np.block([
        [np.zeros((n, n)), np.eye(n)],
        [-np.eye(n), np.zeros((n, n))],
    ])
    s = rng.normal(scale=scale, size=(2 * n, 2 * n))
    return expm(omega @ (s + s.T) / 2.0)

def random_xi_subspace(space, rng, p, dim, coisotropic=False):
    """
    A random dim-dimensional subspace of xi_p, as a (2n+1) x dim matrix.
    With coisotropic set (dim >= n) it is the image of span{e_1..e_n,
    f_1..f_(dim-n)} under a random symplectic map.
    """

    n = space.n
    frame = xi_frame(p)
    if not coisotropic:
        return frame @ rng.normal(size=(2 * n, dim))
    if dim < n:
        raise PreconditionError(f"Coisotropic subspace of dimension {dim} < n")
    columns = list(range(n)) + list(range(n, n + dim - n))
    return frame @ random_symplectic(n, rng)[:, columns]

def random_germ(space, rng, d, kind="generic", curvature=0.1):
    """
    A random chart germ at parameter 0. kind is "generic" (random
    directions), "coisotropic-transverse" (coisotropic W in xi plus a
    transverse direction, d >= n + 1) or "coisotropic-tangent" (T inside xi,
    d >= n).
    """

    p = rng.uniform(-1.0, 1.0, size=space.dim)
    reeb = space.unit("z")

    if kind == "generic":
        directions = rng.normal(size=(space.dim, d))
    elif kind == "coisotropic-transverse":
        w = random_xi_subspace(space, rng, p, d - 1, coisotropic=True)
        transverse = reeb + xi_frame(p) @ rng.normal(size=2 * space.n)
        directions = np.column_stack([w, transverse])
    elif kind == "coisotropic-tangent":
        directions = random_xi_subspace(space, rng, p, d, coisotropic=True)
    else:
        raise PreconditionError(f"Unknown germ kind {kind}")

    b = rng.normal(scale=curvature, size=(d, d, space.dim))
    b = (b + b.transpose(1, 0, 2)) / 2.0

    return linear_chart(space, p, directions, b, name=f"{kind}-germ")

@dataclasses.dataclass(frozen=True, eq=False)
class SubspaceBasis:
    """Columns of vectors span a subspace of T_p at the common point."""

    point: np.ndarray
    vectors: np.ndarray
    orthonormalized: bool = False

    @property
    def dim(self):
        return self.vectors.shape[1]

    def tangents(self):
        return [Tangent.from_array(v) for v in self.vectors.T]

    def orthonormal(self, rtol=RANK_RTOL):
        if self.orthonormalized or self.dim == 0:
            return self
        q = orth(self.vectors, rcond=rtol)
        if q.shape[1] < self.dim:
            raise RankError(
                f"Basis of {self.dim} vectors has rank {q.shape[1]}"
            )
        return SubspaceBasis(self.point, q, True)

    def project(self, v):
        q = self.orthonormal().vectors
        return q @ (q.T @ as_array(v))

    def membership_defect(self, v):
        v = as_array(v)
        return float(np.linalg.norm(v - self.project(v)))

def _empty(point):
    return SubspaceBasis(point, np.zeros((point.size, 0)), True)

def containment_defect(a, b):
    """sup over unit v in a of the distance from v to b."""
    qa = a.orthonormal().vectors
    qb = b.orthonormal().vectors
    if qa.shape[1] == 0:
        return 0.0
    if qb.shape[1] == 0:
        return 1.0
    return float(np.linalg.norm(qa - qb @ (qb.T @ qa), ord=2))

def subspace_distance(a, b):
    """Sine of the largest principal angle; 1 for different dimensions."""
    if a.dim != b.dim:
        return 1.0
    if a.dim == 0:
        return 0.0
    angles = subspace_angles(a.orthonormal().vectors, b.orthonormal().vectors)
    return float(np.sin(np.max(angles)))

def tangent_basis(chart, q, rtol=RANK_RTOL):
    jac = chart.jacobian(q)
    s = svdvals(jac)
    rank = int(np.count_nonzero(s > rtol * s[0])) if s[0] > 0 else 0
    if rank < chart.d:
        raise RankError(
            f"{chart.name}: Jacobian rank {rank} < {chart.d} at {q}"
        )
    return SubspaceBasis(chart.point(q), orth(jac, rcond=rtol), True)

def _unit_alpha(p):
    a = alpha_covector(p)
    return a / np.linalg.norm(a)

def _split(chart, q, tol):
    t = tangent_basis(chart, q)
    p = t.point
    r = _unit_alpha(p) @ t.vectors
    lam = float(np.linalg.norm(r))
    if lam <= tol:
        t_xi = t
    else:
        t_xi = SubspaceBasis(p, t.vectors @ null_space(r[None, :]), True)
    return t, t_xi, lam <= tol, lam

def tangent_contact_split(chart, q, tol=RANK_RTOL):
    """(T_pC, T_pC meet xi_p, whether alpha vanishes on T_pC)."""
    t, t_xi, lambda_zero, _ = _split(chart, q, tol)
    return t, t_xi, lambda_zero

def omega_complement(w, tol=RANK_RTOL):
    """{v in xi_p : dalpha(v, w) = 0 for all w in W}."""

    p = as_array(w.point)
    n = (p.size - 1) // 2
    xi = null_space(_unit_alpha(p)[None, :])

    if w.dim == 0:
        return SubspaceBasis(p, xi, True)

    qw = w.orthonormal().vectors
    off = float(np.max(np.abs(_unit_alpha(p) @ qw)))
    if off > max(tol, 1e-9):
        raise PreconditionError(
            f"Subspace not inside the contact plane (|alpha| = {off:.3g})"
        )

    gram = qw.T @ dalpha_matrix(n) @ xi
    kernel = null_space(gram, rcond=RANK_RTOL)
    return SubspaceBasis(p, xi @ kernel, True)

def pfaffian(m):
    """Pfaffian by expansion along the first row; fine for small sizes."""
    size = m.shape[0]
    if size == 0:
        return 1.0
    if size % 2:
        return 0.0
    total = 0.0
    for j in range(1, size):
        if m[0, j] == 0.0:
            continue
        rest = [i for i in range(1, size) if i != j]
        total += (-1) ** (j + 1) * m[0, j] * pfaffian(m[np.ix_(rest, rest)])
    return total

def wedge_power_norm(omega, j):
    """
    Largest |omega^j| over coordinate 2j-frames of the basis, up to the
    factor j!; omega is the Gram matrix of a 2-form.
    """
    size = omega.shape[0]
    if j <= 0:
        return 1.0
    if 2 * j > size:
        return 0.0
    return max(
        abs(pfaffian(omega[np.ix_(idx, idx)]))
        for idx in itertools.combinations(range(size), 2 * j)
    )

def lambda_wedge_norm(r, omega, j):
    """Largest |lambda ^ omega^j| over (2j+1)-frames; r holds lambda(b_i)."""
    size = omega.shape[0]
    if j < 0:
        return 1.0
    if 2 * j + 1 > size:
        return 0.0
    best = 0.0
    for idx in itertools.combinations(range(size), 2 * j + 1):
        value = 0.0
        for m, i in enumerate(idx):
            rest = list(idx[:m] + idx[m + 1:])
            value += (-1) ** m * r[i] * pfaffian(omega[np.ix_(rest, rest)])
        best = max(best, abs(value))
    return best

@dataclasses.dataclass(frozen=True)
class CoisotropyReport:
    point: np.ndarray
    dim_t_xi: int
    lambda_zero: bool
    containment: bool
    wedge: bool
    lambda_norm: float = 0.0
    containment_defect: float = 0.0
    wedge_if_tangent: bool = False
    wedge_if_transverse: bool = False
    ambiguous: bool = False
    note: str = ""

    @property
    def agreement(self):
        return self.containment == self.wedge

    @property
    def coisotropic(self):
        return self.containment

def coisotropy_report(chart, q, tol=RANK_RTOL):
    """
    Coisotropy of T_pC meet xi_p in (xi_p, dalpha), decided twice: by
    containment of its dalpha-complement, and by vanishing of the wedge
    power of lambda = alpha|_C and dlambda selected by whether lambda_p = 0.
    """

    t, t_xi, lambda_zero, lam = _split(chart, q, tol)
    p = t.point
    n = chart.space.n
    k = chart.codimension

    if k > n + 1:
        return CoisotropyReport(
            point=p, dim_t_xi=t_xi.dim, lambda_zero=lambda_zero,
            containment=False, wedge=False, lambda_norm=lam,
            containment_defect=math.nan,
            note=f"codimension {k} exceeds n+1",
        )

    complement = omega_complement(t_xi, tol)
    defect = containment_defect(complement, t_xi)

    omega_t = t.vectors.T @ dalpha_matrix(n) @ t.vectors
    r = _unit_alpha(p) @ t.vectors

    if_tangent = wedge_power_norm(omega_t, n - k + 2) <= tol
    if_transverse = lambda_wedge_norm(r, omega_t, n - k + 1) <= tol
    wedge = if_tangent if lambda_zero else if_transverse

    report = CoisotropyReport(
        point=p, dim_t_xi=t_xi.dim, lambda_zero=lambda_zero,
        containment=defect <= tol, wedge=wedge, lambda_norm=lam,
        containment_defect=defect, wedge_if_tangent=if_tangent,
        wedge_if_transverse=if_transverse,
        ambiguous=lam < AMBIGUITY_BAND and if_tangent != if_transverse,
    )

    if not report.agreement:
        logger.warning(
            f"{chart.name} at {q}: containment and wedge tests disagree "
            f"(defect {defect:.3g}, |lambda| {lam:.3g})"
        )

    return report

def is_legendrian_at(chart, q, tol=RANK_RTOL):
    if chart.d != chart.space.n:
        return False
    t = tangent_basis(chart, q)
    n = chart.space.n
    alpha_part = float(np.max(np.abs(_unit_alpha(t.point) @ t.vectors)))
    dalpha_part = float(np.max(np.abs(
        t.vectors.T @ dalpha_matrix(n) @ t.vectors
    )))
    return alpha_part <= tol and dalpha_part <= tol

def characteristic_distribution(chart, q, tol=RANK_RTOL):
    """The dalpha-complement of T_pC meet xi_p, checked to lie in T_pC."""

    t, t_xi, _ = tangent_contact_split(chart, q, tol)
    complement = omega_complement(t_xi, tol)

    if containment_defect(complement, t_xi) > tol:
        raise PreconditionError(
            f"{chart.name} not coisotropic at {q}: complement not contained"
        )
    if containment_defect(complement, t) > tol:
        raise PreconditionError(f"{chart.name}: complement leaves T_pC")

    return complement

def characteristic_defect(field, chart, q, t=0.0, tol=RANK_RTOL):
    """Distance from X_H(p) to the characteristic distribution at p."""
    p = chart.point(q)
    _, t_xi, _ = tangent_contact_split(chart, q, tol)
    complement = omega_complement(t_xi, tol)
    v = hamiltonian_vector_field(field, t, p)
    if complement.dim == 0:
        return float(np.linalg.norm(v))
    return complement.membership_defect(v)

def vector_field_jacobian(field, p, t=0.0, h=1e-5):
    p = as_array(p)
    jac = np.empty((p.size, p.size))
    for i in range(p.size):
        step = np.zeros(p.size)
        step[i] = h
        jac[:, i] = (
            hamiltonian_vector_field(field, t, p + step)
            - hamiltonian_vector_field(field, t, p - step)
        ) / (2.0 * h)
    return jac

def lie_bracket(f, g, p, t=0.0, h=1e-5):
    """[X_f, X_g](p) = DX_g X_f - DX_f X_g by central differences."""
    xf = hamiltonian_vector_field(f, t, p)
    xg = hamiltonian_vector_field(g, t, p)
    return vector_field_jacobian(g, p, t, h) @ xf \
        - vector_field_jacobian(f, p, t, h) @ xg

@dataclasses.dataclass(frozen=True)
class InvolutivityReport:
    rows: list
    max_bracket_defect: float
    max_bracket_defect_characteristic: float
    max_field_defect: float
    max_mult_defect: float
    tol: float

    @property
    def involutive(self):
        return self.max_bracket_defect <= self.tol

    @property
    def mult_holds(self):
        return self.max_mult_defect <= self.tol

def default_multiplier(space):
    """f = 1 + z^2."""
    return ScalarField(
        value=lambda t, p: 1.0 + p[-1] ** 2, space=space,
        gradient=lambda t, p: 2.0 * p[-1] * space.unit("z"),
        name="1+z^2",
    )

def involutivity_check(defs, chart, samples, multiplier=None, tol=1e-6,
                       h=1e-5, vanish_tol=1e-8):
    """
    Brackets of the fields of the defining functions, tested for membership
    in T_pC meet xi_p at each sampled parameter, together with the
    membership of each X_H in the characteristic distribution and the
    identity X_{fH} = f X_H on C.
    """

    if not defs:
        raise PreconditionError("No defining functions")
    multiplier = multiplier or default_multiplier(chart.space)

    rows = []
    for q in samples:
        p = chart.point(q)

        for field in defs:
            value = field(0.0, p)
            if abs(value) > vanish_tol:
                raise PreconditionError(
                    f"{field.name} = {value:.3g} does not vanish on "
                    f"{chart.name} at {q}"
                )

        _, t_xi, _ = tangent_contact_split(chart, q)
        complement = omega_complement(t_xi)

        bracket_defect = 0.0
        characteristic = 0.0
        for f, g in itertools.combinations(defs, 2):
            bracket = lie_bracket(f, g, p, h=h)
            bracket_defect = max(bracket_defect, t_xi.membership_defect(bracket))
            characteristic = max(
                characteristic, complement.membership_defect(bracket)
            )

        field_defect = max(
            complement.membership_defect(hamiltonian_vector_field(f, 0.0, p))
            for f in defs
        )

        mult_defect = max(
            float(np.linalg.norm(
                hamiltonian_vector_field(multiplier.times(f), 0.0, p)
                - multiplier(0.0, p) * hamiltonian_vector_field(f, 0.0, p)
            ))
            for f in defs
        )

        logger.debug(
            f"{chart.name} at {q}: bracket {bracket_defect:.3g}, "
            f"field {field_defect:.3g}, mult {mult_defect:.3g}"
        )

        rows.append((
            np.atleast_1d(np.asarray(q, dtype=float)), bracket_defect,
            characteristic, field_defect, mult_defect,
        ))

    return InvolutivityReport(
        rows=rows,
        max_bracket_defect=max(r[1] for r in rows),
        max_bracket_defect_characteristic=max(r[2] for r in rows),
        max_field_defect=max(r[3] for r in rows),
        max_mult_defect=max(r[4] for r in rows),
        tol=tol,
    )

@dataclasses.dataclass(frozen=True)
class WedgeCheck:
    codimension: int
    lower_power: float
    top_power: float
    coisotropic: bool

    def consistent(self, tol=RANK_RTOL):
        return self.lower_power > tol and \
            (self.top_power <= tol) == self.coisotropic

def codimension_wedge_check(w, tol=RANK_RTOL):
    """
    For W in xi_p of codimension c <= n: the (n-c)-th power of dalpha|_W is
    nonzero, and the (n-c+1)-th vanishes exactly when W is coisotropic.
    """

    p = as_array(w.point)
    n = (p.size - 1) // 2
    c = 2 * n - w.dim
    if not 0 <= c <= n:
        raise PreconditionError(f"Codimension {c} outside 0..{n}")

    qw = w.orthonormal().vectors
    omega_w = qw.T @ dalpha_matrix(n) @ qw
    complement = omega_complement(w, tol)

    return WedgeCheck(
        codimension=c,
        lower_power=wedge_power_norm(omega_w, n - c),
        top_power=wedge_power_norm(omega_w, n - c + 1),
        coisotropic=containment_defect(complement, w) <= tol,
    )

def classify(chart, params, tol=RANK_RTOL, n_jobs=1):
    """coisotropy_report over many parameters, optionally on threads."""
    if n_jobs == 1:
        return [coisotropy_report(chart, q, tol) for q in params]
    return Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(coisotropy_report)(chart, q, tol) for q in params
    )

CLASSIFICATION_HEADER = [
    "germ", "dim_t_xi", "lambda_norm", "lambda_zero", "containment_defect",
    "containment", "wedge", "agreement", "ambiguous",
]

def classification_rows(labelled):
    """labelled: iterable of (label, CoisotropyReport)."""
    for label, r in labelled:
        yield [
            label, r.dim_t_xi, repr(r.lambda_norm), int(r.lambda_zero),
            repr(r.containment_defect), int(r.containment), int(r.wedge),
            int(r.agreement), int(r.ambiguous),
        ]

def write_classification_csv(path, labelled):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(CLASSIFICATION_HEADER)
        for row in classification_rows(labelled):
            w.writerow(row)
