"""
The bundled scenarios. Each takes a validated ScenarioConfig and a
packager, writes its tables and returns a list of Checks; run_scenario
wraps the result in a RunReport.
"""

import logging
import math

import numpy as np
import scipy

from . import __version__
from . bo import build_bo, cube_root_target, from_samples
from . bo import graph_header, graph_rows, w_indices
from . bo import stage_bounds, stage_rows, stage_vector_field, tent_target
from . bo import transport_check, verify_bo, zero_target, STAGE_HEADER
from . collapse import RATIO_HEADER, CollapseMap, boundedness_diagnostics
from . collapse import build_approximant
from . collapse import bihari_envelope, calculus_for, check_assumptions
from . collapse import collapse_sample, injectivity_check, integrate_collapse
from . collapse import log_abs_wall_map, preset, square_closed_form
from . collapse import tangency_order, wall_map
from . energy import beta_cutoff, bump_y_model, cutoff_disjunction
from . errors import ContactLabError, DisjunctionError
from . geometry import AmbientSpace, Box, compose_samples, contact_rescaling
from . geometry import identity_sample
from . hamiltonian import coordinate_field, hamiltonian_vector_field
from . hamiltonian import random_polynomial_field
from . hamiltonian import verify_contactomorphism
from . report import Check, RunReport
from . submanifold import CLASSIFICATION_HEADER, Chart, SubspaceBasis
from . submanifold import classification_rows, codimension_wedge_check
from . submanifold import coisotropy_report, random_germ, random_xi_subspace

logger = logging.getLogger("scenarios")
logger.setLevel(logging.INFO)

GERM_KINDS = ("generic", "coisotropic-transverse", "coisotropic-tangent")

class _Discard:

    def write_table(self, name, header, rows):
        for _ in rows:
            pass

def _row(*parts):
    row = []
    for part in parts:
        if isinstance(part, np.ndarray):
            row.extend(float(v) for v in part)
        else:
            row.append(part)
    return row

def _coords(n, prefix=""):
    return (
        [f"{prefix}x{j + 1}" for j in range(n)]
        + [f"{prefix}y{j + 1}" for j in range(n)]
        + [f"{prefix}z"]
    )

def flow_verify(cfg, packager):

    rng = np.random.default_rng(cfg.seed)
    icfg = cfg.integrator(tight=True)
    t = cfg["t"]

    rows = []
    residual = mismatch = dilation = 0.0
    truncated = 0

    for i in range(cfg["hamiltonians"]):

        n = cfg["n_list"][i % len(cfg["n_list"])]
        space = AmbientSpace(n)

        if cfg["hamiltonian"] == "z":
            H = coordinate_field(space, "z")
        else:
            H = random_polynomial_field(space, rng, degree=cfg["degree"])

        samples = rng.uniform(-0.5, 0.5, size=(cfg["samples"], space.dim))
        report = verify_contactomorphism(H, samples, t, icfg, n_jobs=cfg.n_jobs)

        residual = max(residual, report.max_residual)
        mismatch = max(mismatch, report.max_f_mismatch)
        truncated += report.truncated

        for p, f_hat, f, r, m in report.rows:
            rows.append([
                i, n, " ".join(repr(float(v)) for v in p), f_hat, f, r, m,
            ])
            if cfg["hamiltonian"] == "z":
                dilation = max(dilation, abs(f / math.exp(t) - 1.0))

    packager.write_table(
        "flow-verify.csv",
        ["hamiltonian", "n", "point", "f_hat", "f", "residual", "mismatch"],
        rows,
    )

    checks = [
        Check("pullback residual", residual < cfg["residual_tol"],
              residual, cfg["residual_tol"]),
        Check("conformal factor mismatch", mismatch < cfg["factor_tol"],
              mismatch, cfg["factor_tol"]),
        Check.info("truncated samples", truncated,
                   detail="excluded from the maxima"),
        Check("samples checked", len(rows) > 0, len(rows)),
    ]

    if cfg["hamiltonian"] == "z":
        checks.append(Check(
            "f = e^t for H = z", dilation < cfg["factor_tol"], dilation,
            cfg["factor_tol"],
        ))

    return checks

def coiso_sweep(cfg, packager):

    rng = np.random.default_rng(cfg.seed)
    n_list = cfg["n_list"]

    labelled = []
    skipped = 0
    designed_misses = 0

    for i in range(cfg["germs"]):

        n = n_list[i % len(n_list)]
        space = AmbientSpace(n)
        kind = GERM_KINDS[(i // len(n_list)) % len(GERM_KINDS)]

        if kind == "generic":
            d = int(rng.integers(1, 2 * n + 1))
        elif kind == "coisotropic-transverse":
            d = int(rng.integers(n + 1, 2 * n + 1))
        else:
            d = int(rng.integers(n, 2 * n + 1))

        chart = random_germ(space, rng, d, kind)

        try:
            report = coisotropy_report(chart, np.zeros(d))
        except ContactLabError as e:
            logger.warning(f"Germ {i} skipped: {e}")
            skipped += 1
            continue

        if kind != "generic" and not report.coisotropic:
            designed_misses += 1

        labelled.append((f"{i}:{kind}:n={n}:d={d}", report))

    packager.write_table(
        "coiso-sweep.csv", CLASSIFICATION_HEADER, classification_rows(labelled)
    )

    disagreements = [
        label for label, r in labelled if not r.agreement and not r.ambiguous
    ]
    band = sum(1 for _, r in labelled if r.ambiguous)

    wedge_rows = []
    inconsistent = 0

    for j in range(cfg["subspaces"]):

        n = n_list[j % len(n_list)]
        space = AmbientSpace(n)
        p = rng.uniform(-1.0, 1.0, size=space.dim)
        coisotropic = j % 2 == 0
        dim = int(rng.integers(n, 2 * n + 1))

        w = SubspaceBasis(p, random_xi_subspace(space, rng, p, dim, coisotropic))
        check = codimension_wedge_check(w)
        ok = check.consistent() and (check.coisotropic or not coisotropic)
        inconsistent += 0 if ok else 1

        wedge_rows.append([
            j, n, dim, check.codimension, int(coisotropic), check.lower_power,
            check.top_power, int(check.coisotropic), int(ok),
        ])

    packager.write_table(
        "codim-wedge.csv",
        ["subspace", "n", "dim", "codimension", "designed_coisotropic",
         "lower_power", "top_power", "coisotropic", "consistent"],
        wedge_rows,
    )

    return [
        Check("containment and wedge tests agree", not disagreements,
              len(disagreements), 0,
              detail=", ".join(disagreements[:5])),
        Check.info("ambiguity band occupancy", band),
        Check("designed coisotropic germs", designed_misses == 0,
              designed_misses, 0),
        Check("skipped germs", skipped == 0, skipped, 0),
        Check("codimension wedge lemma", inconsistent == 0, inconsistent, 0,
              detail=f"{cfg['subspaces']} subspaces"),
    ]

def energy_cutoff(cfg, packager):

    model = bump_y_model(
        amplitude=cfg["amplitude"], resolution=cfg["resolution"],
        time_steps=cfg["time_steps"],
    )
    icfg = cfg.integrator()

    checks = []
    rows = []
    energies = []

    for k in sorted(cfg["k_list"]):

        lo, hi = beta_cutoff(k).slope_range()
        checks.append(Check(
            f"beta_{k} slope in [0, 3]", lo >= -1e-12 and hi <= 3.0 + 1e-12,
            hi, 3.0,
        ))

        try:
            estimate = cutoff_disjunction(
                model.field, model.chart, model.window, k, model.chart_box,
                icfg, n_jobs=cfg.n_jobs,
            )
        except DisjunctionError as e:
            checks.append(Check(
                f"k={k} disjoins", False, e.certificate.min_distance,
                e.certificate.margin, detail=str(e),
            ))
            continue

        m = estimate.details["M"]
        max_log = estimate.details["max_abs_log_factor"]
        energies.append(estimate.value)

        rows.append([
            k, estimate.value, estimate.bound, m, max_log,
            estimate.certificate.min_distance, estimate.certificate.margin,
        ])

        checks += [
            Check(f"k={k} disjoins", estimate.certificate.valid,
                  estimate.certificate.min_distance,
                  estimate.certificate.margin),
            Check(f"k={k} energy bound", estimate.value <= estimate.bound,
                  estimate.value, estimate.bound),
            Check(f"k={k} |log f| <= 3M", max_log <= 3.0 * m + 1e-12,
                  max_log, 3.0 * m),
        ]

    packager.write_table(
        "energy-cutoff.csv",
        ["k", "energy", "bound", "M", "max_abs_log_factor", "min_distance",
         "margin"],
        rows,
    )

    if len(energies) > 1:
        monotone = all(
            b <= a * (1.0 + 1e-9) for a, b in zip(energies, energies[1:])
        )
        checks += [
            Check("energies nonincreasing in k", monotone, energies[-1],
                  energies[0]),
            Check("final energy below 0.3 x initial",
                  energies[-1] < 0.3 * energies[0], energies[-1],
                  0.3 * energies[0]),
        ]

    return checks

def collapse_square(cfg, packager):

    profile, weight = preset("square")
    calculus = calculus_for(profile)
    rng = np.random.default_rng(cfg.seed)
    icfg = cfg.integrator(tight=True)

    points = rng.uniform(-0.5, 0.5, size=(cfg["points"], 3))

    checks = []
    rows = []

    for t in cfg["times"]:
        worst = 0.0
        for p in points:
            closed = square_closed_form(calculus, weight, p, t)
            integrated = integrate_collapse(profile, weight, p, t, icfg).endpoint
            error = float(np.max(np.abs(closed - integrated)))
            worst = max(worst, error)
            rows.append(_row(t, p, closed, integrated, error))
        checks.append(Check(
            f"closed form vs integrator, t={t}", worst < cfg["tol"], worst,
            cfg["tol"],
        ))

    t = cfg["times"][0]
    cross = 0.0
    for p in points[:5]:
        polar = integrate_collapse(profile, weight, p, t, icfg).endpoint
        cartesian = integrate_collapse(
            profile, weight, p, t, icfg, chart="cartesian"
        ).endpoint
        cross = max(cross, float(np.max(np.abs(polar - cartesian))))
    checks.append(Check("polar vs cartesian chart", cross < 1e-5, cross, 1e-5))

    law = 0.0
    for t in cfg["times"]:
        for z in np.geomspace(1e-3, 0.99 * math.exp(-1.0), 17):
            expected = z * math.exp(-t * math.sqrt(-2.0 * math.log(z)) - t * t / 2)
            law = max(law, abs(wall_map(calculus, weight, z, t) / expected - 1.0))
    checks.append(Check("square-root wall law", law < 1e-8, law, 1e-8))

    packager.write_table(
        "collapse-square.csv",
        ["t"] + _coords(1) + _coords(1, "closed_") + _coords(1, "flow_")
        + ["error"],
        rows,
    )

    return checks

def collapse_wall(cfg, packager):

    profile, weight = preset(cfg["preset"])
    calculus = calculus_for(profile)
    icfg = cfg.integrator(tight=True)
    t = cfg["t"]

    exponent = math.exp(weight.d_z * t) if profile.base == "linear" else None

    rows = []
    log_error = 0.0
    power_error = 0.0

    for z in np.geomspace(cfg["z_lo"], cfg["z_hi"], cfg["points"]):
        trajectory = integrate_collapse(profile, weight, [0.0, 0.0, z], t, icfg)
        u_end = float(trajectory.extras["u"][-1])
        log_closed = log_abs_wall_map(calculus, weight, z, t)
        log_flow = -u_end / weight.d_z
        log_error = max(log_error, abs(log_flow - log_closed) / abs(log_closed))
        expected = z ** exponent if exponent else math.nan
        if exponent:
            power_error = max(
                power_error, abs(trajectory.endpoint[2] / expected - 1.0)
            )
        rows.append([
            z, float(trajectory.endpoint[2]), wall_map(calculus, weight, z, t),
            expected, log_flow, log_closed,
        ])

    packager.write_table(
        "collapse-wall.csv",
        ["z", "g_flow", "g_closed", "g_power", "log_g_flow", "log_g_closed"],
        rows,
    )

    estimate = tangency_order(
        lambda z: log_abs_wall_map(calculus, weight, z, t), cfg["ladder"],
        log_abs=True,
    )

    packager.write_table(
        "tangency.csv", ["radius", "slope", "flat"],
        [[float(r), float(s), int(f)] for r, s, f in zip(
            estimate.radii, estimate.slopes, estimate.flat
        )],
    )

    checks = [
        Check("integrated vs closed wall map (log)", log_error < cfg["tol"],
              log_error, cfg["tol"]),
    ]

    if exponent:
        slope = float(estimate.slopes[0])
        checks += [
            Check(f"wall map is |z|^{exponent:.6g}", power_error < cfg["tol"],
                  power_error, cfg["tol"]),
            Check("tangency slope", abs(slope - exponent) <= 0.02, slope,
                  f"{exponent:.6g} +- 0.02"),
        ]
    elif profile.base == "loglinear":
        checks += [
            Check("slopes strictly increasing", estimate.super_polynomial,
                  [float(s) for s in estimate.slopes]),
            Check("slope on the smallest window", estimate.order > 5.0,
                  estimate.order, 5.0),
        ]
    else:
        checks.append(Check.info(
            "tangency slopes", [float(s) for s in estimate.slopes],
        ))

    return checks

def _random_start(rng, profile, weight, box=0.3, attempts=1000):
    for _ in range(attempts):
        p = rng.uniform(-box, box, size=3)
        u = weight.neg_log_rho(p[1:2], p[2])
        if 1.05 * profile.u0 < u < 40.0:
            return p, u
    raise ContactLabError(f"No admissible start for {profile.name}")

def collapse_approximants(cfg, packager):

    profile, weight = preset(cfg["preset"])
    calculus = calculus_for(profile)
    space = AmbientSpace(1)
    rng = np.random.default_rng(cfg.seed)
    icfg = cfg.integrator()

    flow = CollapseMap(profile, weight, 1.0, icfg, space)

    samples = rng.uniform(-0.5, 0.5, size=(cfg["samples"], 3))
    shrink = 10.0 ** -rng.uniform(0.0, 3.0, size=cfg["samples"] // 2)
    samples[:shrink.size, 1:] *= shrink[:, None]

    checks = []
    rows = []

    for m in cfg["m_list"]:
        psi, f_m, stage = build_approximant(
            profile, weight, m, space, icfg, calculus
        )
        bound = math.exp(profile.value(float(m)) / 2.0)
        worst = 0.0
        agree = 0.0
        for i, p in enumerate(samples):
            u = weight.neg_log_rho(p[1:2], p[2])
            diff = abs(f_m(p) - flow.factor(p))
            worst = max(worst, diff)
            if u <= m:
                agree = max(agree, float(np.max(np.abs(psi(p) - flow(p)))))
            rows.append([m, i, u, f_m(p), flow.factor(p), diff])
        checks += [
            Check(f"m={m}: sup|f_m - f|", worst <= bound, worst, bound),
            Check(f"m={m}: psi_m = flow where rho >= e^-m", agree < 1e-8,
                  agree, 1e-8),
        ]

    packager.write_table(
        "approximants.csv", ["m", "sample", "u", "f_m", "f", "difference"], rows,
    )

    assumptions = check_assumptions(profile, weight)
    for name, ok in assumptions.verdicts.items():
        checks.append(Check.info(
            f"assumption ({name})", "holds" if ok else "fails",
            detail=assumptions.details[name],
        ))

    presets = cfg["bihari_presets"]
    bihari_rows = []
    outside = 0

    for i in range(cfg["bihari_starts"]):
        name = presets[i % len(presets)] if presets else cfg["preset"]
        prof, w = preset(name)
        calc = calculus_for(prof)
        p, u = _random_start(rng, prof, w)
        t = float(rng.uniform(0.05, 1.0))
        trajectory = integrate_collapse(prof, w, p, t, icfg)
        log_u = math.log(float(trajectory.extras["u"][-1]))
        lo, hi = bihari_envelope(calc, w, u, t, log=True)
        inside = (lo - 1e-6 * max(1.0, abs(lo)) <= log_u
                  <= hi + 1e-6 * max(1.0, abs(hi)))
        outside += 0 if inside else 1
        bihari_rows.append([name, t, u, lo, log_u, hi, int(inside)])

    packager.write_table(
        "bihari.csv",
        ["preset", "t", "u_start", "log_lower", "log_u_end", "log_upper",
         "inside"],
        bihari_rows,
    )

    if cfg["bihari_starts"]:
        checks.append(Check(
            "Bihari envelope", outside == 0, outside, 0,
            detail=f"{cfg['bihari_starts']} starts",
        ))

    return checks

def collapse_ratios(cfg, packager):

    profile, weight = preset(cfg["preset"], u0=cfg["u0"], u1=cfg["u1"])
    space = AmbientSpace(1)
    icfg = cfg.integrator()
    quadrature = cfg.quadrature(cfg["quadrature_points"])
    center = np.zeros(3)
    ladder = cfg["half_widths"]

    psi = collapse_sample(profile, weight, cfg["t"], space, icfg)
    report = boundedness_diagnostics(psi, center, ladder, quadrature)
    control = boundedness_diagnostics(
        identity_sample(space), center, ladder, quadrature
    )

    log_ratios = report.log_ratios
    control_error = max(
        abs(r.ratio - 1.0) - max(r.error, 1e-6) for r in control.rows
    )

    packager.write_table(
        "collapse-ratios.csv", RATIO_HEADER + ["identity_ratio"],
        [r.as_list() + [c.ratio] for r, c in zip(report.rows, control.rows)],
    )

    smallest = Box.centered(center, ladder[-1])
    injective = injectivity_check(psi, smallest.grid(3))

    return [
        Check("log ratios strictly decreasing", report.strictly_decreasing,
              log_ratios),
        Check("final / initial ratio (log)",
              log_ratios[-1] - log_ratios[0] < math.log(0.5),
              log_ratios[-1] - log_ratios[0], math.log(0.5)),
        Check("identity control ratios", control_error <= 0.0,
              control_error, 0.0),
        Check("ratio not bounded below on the ladder",
              report.ratio_bounded_below == "no",
              report.ratio_bounded_below, "no"),
        Check.info("sup f bounded", report.sup_f_bounded),
        Check.info("sampled injectivity", injective.min_ratio,
                   detail=f"{injective.pairs} pairs"),
    ]

def _target(cfg):
    if cfg["target_file"]:
        return from_samples(cfg["target_file"])
    return {
        "cbrt": cube_root_target,
        "tent": lambda: tent_target(n=1),
        "zero": zero_target,
    }[cfg["target"]]()

def _construction(cfg):
    return build_bo(
        _target(cfg), cfg["k_max"], cfg["delta"], cfg.integrator(),
        cfg["grid_points"], n_jobs=cfg.n_jobs,
    )

def bo_build(cfg, packager):

    construction = _construction(cfg)
    schedule = construction.schedule
    bumps = construction.bumps
    rng = np.random.default_rng(cfg.seed)

    checks = []

    n = construction.target.n
    index = w_indices(n)

    increments = schedule.increment_sups()
    levels = schedule.level_sups()

    for params, inc in zip(construction.stages, increments):
        k = params.k
        checks += [
            Check(f"stage {k}: sup|X| < C 2^-k", params.sup_x < params.x_bound,
                  params.sup_x, params.x_bound, detail=f"l={params.ell}"),
            Check(f"stage {k}: sup|H_z| < 1/k^2",
                  params.sup_hz < params.hz_bound, params.sup_hz,
                  params.hz_bound),
            Check(f"stage {k}: support condition",
                  params.support_verified
                  and params.support_reach < params.support_limit,
                  params.support_reach, params.support_limit,
                  detail=(
                      f"{params.support_samples} flowed samples"
                      if params.support_verified
                      else "unverified: G_k vanishes on every sample"
                  )),
            Check(f"stage {k}: sup|F_k - F_k-1| < 2^-k", inc < 2.0 ** -k,
                  inc, 2.0 ** -k),
        ]

        doubled = stage_bounds(schedule, bumps, k, 2 * params.ell)
        checks.append(Check(
            f"stage {k}: bounds hold at 2l",
            doubled[0] < params.x_bound and doubled[1] < params.hz_bound,
            doubled[0], params.x_bound,
        ))

        field = construction.field(k)
        radius = bumps.v_radius / params.ell
        worst = 0.0
        for _ in range(8):
            p = np.zeros(construction.space.dim)
            p[0] = rng.uniform(-1.0, 1.0)
            p[n] = rng.uniform(-1.0, 1.0) * radius
            p[index] = rng.uniform(schedule.support.lower, schedule.support.upper)
            generic = hamiltonian_vector_field(field, 0.0, p)
            written = stage_vector_field(schedule, bumps, k, params.ell, p)
            scale = max(1.0, float(np.max(np.abs(generic))))
            worst = max(worst, float(np.max(np.abs(generic - written))) / scale)
        checks.append(Check(
            f"stage {k}: term-by-term field", worst < 1e-10, worst, 1e-10,
        ))

    checks.append(Check(
        "sup|F_k| < 1 - eps", max(levels) < 1.0 - schedule.margin,
        max(levels), 1.0 - schedule.margin,
    ))

    for name, ok in bumps.verify().items():
        checks.append(Check(f"bump {name}", ok))

    packager.write_table("stages.csv", STAGE_HEADER, stage_rows(construction))
    packager.write_table(
        "schedule.csv", ["k", "width", "error", "increment_sup", "level_sup"],
        [
            [k + 1, w, e, i, l] for k, (w, e, i, l) in enumerate(zip(
                schedule.widths, schedule.errors, increments, levels
            ))
        ],
    )

    return checks

def bo_graph(cfg, packager):

    construction = _construction(cfg)
    k_max = cfg["k_max"]

    final = verify_bo(
        construction, 0, k_max, cfg["grid_points"], cfg["sample_points"],
        cfg.n_jobs,
    )

    checks = [
        Check(f"graph action m={m}", e < cfg["tol"], e, cfg["tol"])
        for m, e in final.graph_errors
    ]

    checks += [
        Check("conformal factors within e^(+-pi^2/6)", final.conformal_ok,
              [final.min_log_factor, final.max_log_factor],
              math.pi ** 2 / 6),
        Check("per-stage |log f| < 1/k^2", final.stage_factors_ok,
              [v for _, v in final.stage_log_factors]),
        Check("{y1 = 0} preserved", final.hypersurface_defect < cfg["tol"],
              final.hypersurface_defect, cfg["tol"]),
    ]

    for m1, m2 in cfg["cauchy_pairs"]:
        if not m1 <= m2 <= k_max:
            checks.append(Check.info(
                f"Cauchy ({m1}, {m2})", detail=f"skipped, k_max={k_max}",
            ))
            continue
        report = verify_bo(
            construction, m1, m2, cfg["grid_points"], cfg["sample_points"],
            cfg.n_jobs,
        )
        checks += [
            Check(f"Cauchy ({m1}, {m2})", report.cauchy_ok,
                  report.cauchy_distance, report.cauchy_bound),
            Check(f"independent of m off y1 = 0 ({m1}, {m2})",
                  report.independent, report.independence_defect, 1e-9,
                  detail=f"{report.independence_samples} samples"),
        ]

    if construction.target.inverse is not None:
        transport = transport_check(construction)
        checks += [
            Check("{x1 = y1 = 0} not coisotropic at 0",
                  not transport.source.coisotropic,
                  transport.source.containment_defect),
            Check("image chart coisotropic at 0", transport.image.coisotropic,
                  transport.image.containment_defect),
            Check("image chart Legendrian at 0", transport.image_legendrian),
            Check.info("distance of psi_m(axis) to the image graph",
                       transport.limit_defect),
        ]

    packager.write_table("stages.csv", STAGE_HEADER, stage_rows(construction))
    packager.write_table(
        "graph.csv", graph_header(construction),
        graph_rows(construction, range(1, k_max + 1), cfg["grid_points"]),
    )

    return checks

def exprop_compose(cfg, packager):

    construction = _construction(cfg)
    space = construction.space
    scale = cfg["scale"]
    icfg = cfg.integrator()

    bo = construction.psi(cfg["k_max"])
    psi1 = compose_samples([
        contact_rescaling(space, 1.0 / scale), bo,
        contact_rescaling(space, scale),
    ])

    profile, weight = preset(cfg["preset"])
    psi3_inverse = CollapseMap(profile, weight, -cfg["t"], icfg, space).as_sample()
    composite = compose_samples([psi3_inverse, psi1])

    rows = []
    drift = 0.0
    for z in np.linspace(-0.05, 0.05, cfg["points"]):
        p = np.array([0.0, 0.0, z])
        image = composite(p)
        drift = max(drift, abs(float(image[1])))
        rows.append(_row(z, image, composite.log_factor(p)))

    packager.write_table(
        "axis-image.csv", ["z"] + _coords(1, "image_") + ["log_f"], rows,
    )

    checks = [
        Check("axis image stays in {y = 0}", drift < 1e-9, drift, 1e-9),
    ]

    chart = Chart(
        evaluate=lambda q: composite(np.array([0.0, 0.0, float(q[0])])),
        d=1, space=space, name="composite(axis)",
    )
    try:
        verdict = coisotropy_report(chart, np.zeros(1))
        checks.append(Check.info(
            "image chart coisotropic at 0",
            "yes" if verdict.coisotropic else "no",
            detail=f"containment defect {verdict.containment_defect:.3g}",
        ))
    except ContactLabError as e:
        checks.append(Check.info(
            "image chart coisotropic at 0", "undetermined", detail=str(e),
        ))

    try:
        report = boundedness_diagnostics(
            composite, np.zeros(3), cfg["half_widths"],
            cfg.quadrature(cfg["quadrature_points"]),
        )
    except ContactLabError as e:
        logger.warning(f"Composite volume ratios unavailable: {e}")
        checks.append(Check.info(
            "composite volume ratios", "undetermined", detail=str(e),
        ))
        return checks

    packager.write_table(
        "composite-ratios.csv", RATIO_HEADER,
        [r.as_list() for r in report.rows],
    )

    checks += [
        Check.info("ratio bounded below", report.ratio_bounded_below, "yes"),
        Check.info("sup f bounded", report.sup_f_bounded, "no"),
    ]

    return checks

SCENARIOS = {
    "flow-verify": flow_verify,
    "coiso-sweep": coiso_sweep,
    "energy-cutoff": energy_cutoff,
    "collapse-square": collapse_square,
    "collapse-wall": collapse_wall,
    "collapse-approximants": collapse_approximants,
    "collapse-ratios": collapse_ratios,
    "bo-build": bo_build,
    "bo-graph": bo_graph,
    "exprop-compose": exprop_compose,
}

def versions():
    return {
        "contact-lab": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }

def run_scenario(cfg, packager=None):

    logger.info(f"Running {cfg.scenario}...")

    error = None

    try:
        checks = SCENARIOS[cfg.scenario](cfg, packager or _Discard())
    except ContactLabError as e:
        logger.error(f"{cfg.scenario} stopped: {e}")
        error = f"{type(e).__name__}: {e}"
        checks = [Check("run completed", False, detail=error)]

    report = RunReport(
        scenario=cfg.scenario, checks=checks, config=cfg.echo(),
        versions=versions(), error=error,
    )

    if packager is not None:
        packager.write_report(report)

    logger.info(
        f"{cfg.scenario}: {len(report.failures)} failing of "
        f"{len(report.checks)} checks"
    )

    return report
