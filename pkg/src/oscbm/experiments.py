"""Experiment drivers behind :func:`oscbm.stats.run_monte_carlo`.

Each driver turns a validated config into a MonteCarloReport plus optional
per-replication rows and plot-ready target rows.  Replication ``i`` always
uses field stream ``i`` under the master seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import breuer_major as bm
from .config import ExperimentConfig
from .corrector import (CorrectorProblem, homogenized, limit_covariance, node_indices,
                        simulate_corrector,
                        simulate_weighted_integrals, variance_bound)
from .errors import NonAdmissible, TooFewSamples
from .gaussian_field import GridSpec, embedding_spectrum, sample_grid, sample_streams
from .hermite import expand
from .stats import (MonteCarloReport, compare_covariance, covariance_se, empirical_moments,
                    ks_normality)


@dataclass
class Outcome:
    report: MonteCarloReport
    samples: list = field(default_factory=list)   # (replication, observable, value, admissible)
    targets: list = field(default_factory=list)   # (x, target, error_budget)
    field_sample: object = None
    extra_csv: dict = field(default_factory=dict)  # file name -> (header, rows)


def _report(cfg: ExperimentConfig, n: int) -> MonteCarloReport:
    return MonteCarloReport(cfg.experiment_id, n, seeds={"master_seed": cfg.seed},
                            config_echo=cfg.data)


def _require_n(cfg: ExperimentConfig) -> int:
    n = cfg.n
    if n < 2:
        raise TooFewSamples(f"experiment {cfg.experiment_id!r}: mc.n = {n}, need at least 2")
    return n


def _fmt(v: float) -> str:
    return f"{v:g}"


def _sample_rows(values: np.ndarray, names, admissible=None) -> list:
    rows = []
    n = values.shape[0]
    ok = np.ones(n, dtype=bool) if admissible is None else admissible
    for i in range(n):
        for j, name in enumerate(names):
            rows.append((i, name, float(values[i, j]), bool(ok[i])))
    return rows


def _moments_block(values: np.ndarray, names) -> dict:
    out = {}
    for j, name in enumerate(names):
        m = empirical_moments(values[:, j])
        out[name] = {"mean": m.mean, "variance": m.variance,
                     "se_mean": m.se_mean, "se_variance": m.se_variance}
    return out


def _gaussian_checks(rep: MonteCarloReport, values, names, targets, tol, prefix=""):
    """Variance, mean and KS checks for samples with limit law N(0, target)."""
    n = values.shape[0]
    for j, name in enumerate(names):
        v = values[:, j]
        t = float(targets[j])
        m = empirical_moments(v)
        rep.add(f"{prefix}variance[{name}]", "abs_diff_le", m.variance, t,
                tol["k_var"] * t * math.sqrt(2.0 / n))
        rep.add(f"{prefix}mean[{name}]", "abs_diff_le", m.mean, 0.0,
                tol["k_cov"] * math.sqrt(t / n))
        ks = ks_normality(v, 0.0, math.sqrt(t)) if t > 0 else None
        if ks is not None:
            rep.tests[f"{prefix}ks[{name}]"] = {"ks_statistic": ks.statistic,
                                                "ks_pvalue": ks.p_value}
            rep.add(f"{prefix}ks_pvalue[{name}]", "ge", ks.p_value, None, tol["ks_alpha"])


def _covariance_checks(rep: MonteCarloReport, values, names, theo, k, prefix=""):
    n = values.shape[0]
    emp = np.atleast_2d(np.cov(values, rowvar=False))
    comp = compare_covariance(emp, theo, k=k, n=n)
    rep.empirical[f"{prefix}covariance"] = {"names": list(names), "matrix": emp,
                                            "se": comp.se}
    rep.theoretical[f"{prefix}covariance"] = theo
    rep.tests[f"{prefix}covariance_z_scores"] = comp.z
    for i in range(len(names)):
        for j in range(i + 1, len(names)):
            rep.add(f"{prefix}covariance[{names[i]},{names[j]}]", "abs_diff_le",
                    emp[i, j], theo[i, j], k * comp.se[i, j])


# -- sigma2 ---------------------------------------------------------------------------

def run_sigma2(cfg: ExperimentConfig) -> Outcome:
    d, tol = cfg.data, cfg.data["tol"]
    model, phi = cfg.objects["model"], cfg.objects["phi"]
    Q = d["hermite"]["Q"]
    rep = _report(cfg, 0)
    exp = cfg.objects["expansion"]
    rep.theoretical["expansion"] = exp.to_json()
    target = bm.theoretical_sigma2(exp, model, tol["quad"])
    rep.theoretical["sigma2"] = {"value": target.value, "error_budget": target.error_budget}
    # second quadrature route: coefficients at a higher Gauss order
    alt = bm.theoretical_sigma2(expand(phi, Q, quad_order=2 * Q + 64), model, tol["quad"])
    rep.add("sigma2_quadrature_stable", "abs_diff_le", target.value, alt.value, tol["sigma2"])
    if d["target"]["sigma2"] is not None:
        rep.add("sigma2_target", "abs_diff_le", target.value, d["target"]["sigma2"],
                tol["sigma2"] + target.error_budget)
    rows, cum = [], 0.0
    for q, term in target.terms:
        cum += term
        rows.append((q, cum, target.error_budget))
    if d["beta"] is not None:
        nu = bm.theoretical_sigma2_nu(exp, model, d["beta"], tol["quad"])
        rep.theoretical["sigma_nu2"] = {"value": nu.value, "error_budget": nu.error_budget,
                                        "beta": d["beta"]}
        if d["target"]["sigma_nu2"] is not None:
            rep.add("sigma_nu2_target", "abs_diff_le", nu.value, d["target"]["sigma_nu2"],
                    tol["sigma2"] + nu.error_budget)
    return Outcome(rep, targets=rows)


# -- Breuer-Major --------------------------------------------------------------------

def _set_name(s) -> str:
    if isinstance(s, bm.Ball):
        return f"ball({_fmt(s.radius)})"
    if isinstance(s, bm.Interval):
        return f"[{_fmt(s.lo)},{_fmt(s.hi)}]"
    return f"box({','.join(map(_fmt, s.lo))};{','.join(map(_fmt, s.hi))})"


def run_verify_bm(cfg: ExperimentConfig) -> Outcome:
    d, tol = cfg.data, cfg.data["tol"]
    n = _require_n(cfg)
    model, phi, h = cfg.objects["model"], cfg.objects["phi"], cfg.objects["weight"]
    spec = bm.OscillatorySpec(model, phi, tuple(cfg.objects["sets"]), d["R"], h,
                              d["grid"]["points_per_unit"], d["grid"]["min_cells"])
    exp = cfg.objects["expansion"]
    sigma = bm.theoretical_sigma2(exp, model, tol["quad"])
    limit = bm.limit_fdd_covariance(spec.sets, h, sigma.value, spec.dim)
    h2 = np.diag(limit) / sigma.value if sigma.value > 0 else np.zeros(len(spec.sets))
    if d["target"] == "finite":
        var_targets = np.array([bm.finite_R_variance(exp, model, s, d["R"], h, tol["quad"])
                                for s in spec.sets])
    else:
        var_targets = np.diag(limit)

    values = bm.simulate(spec, n, cfg.seed, batch=d["mc"]["batch"])
    names = [_set_name(s) for s in spec.sets]
    rep = _report(cfg, n)
    rep.theoretical["sigma2"] = {"value": sigma.value, "error_budget": sigma.error_budget}
    rep.theoretical["variance_targets"] = {
        nm: {"value": float(t), "error_budget": float(sigma.error_budget * h2[i]), "kind": d["target"]}
        for i, (nm, t) in enumerate(zip(names, var_targets))}
    rep.empirical["moments"] = _moments_block(values, names)
    rep.empirical["field_step"] = spec.field_grid().spacing
    _gaussian_checks(rep, values, names, var_targets, tol)
    if len(names) > 1:
        _covariance_checks(rep, values, names, limit, tol["k_cov"])
        _martingale(rep, spec, values, limit, tol["k_cov"])
        _mes(rep, spec, values)
    rows = [(i, float(t), float(sigma.error_budget * h2[i])) for i, t in enumerate(var_targets)]
    return Outcome(rep, samples=_sample_rows(values, names), targets=rows)


def _martingale(rep: MonteCarloReport, spec, values, limit, k):
    """Var G(B_t) - Var G(B_s) against the limit mass of the annulus, nested balls only."""
    balls = sorted((s.radius, j) for j, s in enumerate(spec.sets) if isinstance(s, bm.Ball))
    n = values.shape[0]
    for (s_r, i), (t_r, j) in zip(balls[:-1], balls[1:]):
        emp = np.cov(values[:, [i, j]], rowvar=False)
        diff = emp[1, 1] - emp[0, 0]
        # Gaussian-model SE of a difference of two correlated sample variances
        se = math.sqrt(2.0 * (emp[0, 0] ** 2 + emp[1, 1] ** 2 - 2.0 * emp[0, 1] ** 2) / (n - 1))
        rep.add(f"martingale_increment[{_fmt(s_r)},{_fmt(t_r)}]", "abs_diff_le", diff,
                limit[j, j] - limit[i, i], k * se)


def _mes(rep: MonteCarloReport, spec, values):
    """Moment-bound diagnostic on nested centred balls."""
    balls = [(s.radius, j) for j, s in enumerate(spec.sets) if isinstance(s, bm.Ball)]
    if len(balls) < 3:
        return
    balls.sort()
    r0, j0 = balls[0]
    inc = {r - r0: values[:, j] - values[:, j0] for r, j in balls[1:]}
    diag = bm.mes_diagnostic(inc)
    rep.tests["mes"] = {"C": diag["C"],
                        "ratios": {_fmt(k): v for k, v in sorted(diag["ratios"].items())}}
    rep.add("mes_moment_bound", "true", diag["ok"])


# -- homogeneous variant ---------------------------------------------------------------

def run_verify_homogeneous(cfg: ExperimentConfig) -> Outcome:
    d, tol = cfg.data, cfg.data["tol"]
    n = _require_n(cfg)
    model, phi = cfg.objects["model"], cfg.objects["phi"]
    beta, radii = d["beta"], d["radii"]
    spec = bm.HomogeneousSpec.balls(model, phi, radii, d["R"], beta,
                                    points_per_unit=d["grid"]["points_per_unit"],
                                    min_cells=d["grid"]["min_cells"])
    exp = cfg.objects["expansion"]
    alpha = 1.0 - beta
    snu = bm.theoretical_sigma2_nu(exp, model, beta, tol["quad"])
    rep = _report(cfg, n)
    rep.theoretical["sigma_nu2"] = {"value": snu.value, "error_budget": snu.error_budget}

    # measure checks: grid cell masses against the closed form 2 t^alpha / alpha
    lo, dx, ncell = spec.x_grid()[0]
    edges = lo + dx * np.arange(ncell + 1)
    masses = bm.cell_masses(edges, beta)
    mids = 0.5 * (edges[1:] + edges[:-1])
    for t in radii:
        closed = 2.0 * t ** alpha / alpha
        grid_mass = float(np.sum(masses[np.abs(mids) <= t]))
        rep.add(f"nu_mass[{_fmt(t)}]", "abs_diff_le", grid_mass, closed,
                tol["mass"] * max(1.0, closed))
        half = bm.nu_mass(0.0, t, beta)
        rep.add(f"nu_homogeneity[{_fmt(t)}]", "abs_diff_le", bm.nu_mass(0.0, 2 * t, beta),
                2.0 ** alpha * half, tol["mass"] * max(1.0, half))

    values = bm.simulate(spec, n, cfg.seed, batch=d["mc"]["batch"])
    names = [f"ball({_fmt(t)})" for t in radii]
    limit = np.array([snu.value * bm.nu_mass(-t, t, beta) for t in radii])
    exact = np.diag(bm.discrete_covariance(spec, exp))
    rep.theoretical["variance_targets"] = {
        nm: {"limit": float(limit[i]), "exact_discrete": float(exact[i]),
             "error_budget": float(snu.error_budget * bm.nu_mass(-radii[i], radii[i], beta))}
        for i, nm in enumerate(names)}
    rep.empirical["moments"] = _moments_block(values, names)
    for j, nm in enumerate(names):
        m = empirical_moments(values[:, j])
        rep.add(f"variance_vs_limit[{nm}]", "abs_diff_le", m.variance, limit[j],
                tol["k_cov"] * limit[j] * math.sqrt(2.0 / (n - 1)))
        rep.add(f"variance_vs_exact_discrete[{nm}]", "abs_diff_le", m.variance, exact[j],
                tol["k_cov"] * exact[j] * math.sqrt(2.0 / (n - 1)))
        ks = ks_normality(values[:, j], 0.0, math.sqrt(exact[j]))
        rep.tests[f"ks[{nm}]"] = {"ks_statistic": ks.statistic, "ks_pvalue": ks.p_value}
    rows = [(t, float(limit[i]), float(snu.error_budget * bm.nu_mass(-t, t, beta)))
            for i, t in enumerate(radii)]
    return Outcome(rep, samples=_sample_rows(values, names), targets=rows)


# -- corrector ---------------------------------------------------------------------------

def _problem(cfg: ExperimentConfig, eps: float) -> CorrectorProblem:
    c = cfg.data["corrector"]
    return CorrectorProblem(cfg.objects["f"], c["b"], c["a_star"], cfg.objects["phi"],
                            cfg.objects["model"], eps, cfg.data["grid"]["cells"],
                            cfg.data["grid"]["points_per_unit"])


def run_verify_corrector(cfg: ExperimentConfig) -> Outcome:
    d, tol, c = cfg.data, cfg.data["tol"], cfg.data["corrector"]
    n = _require_n(cfg)
    exp = cfg.objects["expansion"]
    model = cfg.objects["model"]
    mu = bm.theoretical_sigma2(exp, model, tol["quad"])
    x_obs = sorted(set(c["x_obs"]) | {c["convergence_x"]})
    conv_j = x_obs.index(c["convergence_x"])
    names = [f"x={_fmt(x)}" for x in x_obs]

    rep = _report(cfg, n)
    rep.theoretical["mu2"] = {"value": mu.value, "error_budget": mu.error_budget}
    samples, per_rep, medians, r_std, rho_std = [], [], [], [], []
    eps_sorted = sorted(c["epsilon"], reverse=True)
    total_rejected = 0
    for eps in eps_sorted:
        prob = _problem(cfg, eps)
        tag = f"eps={_fmt(eps)}/"
        run = simulate_corrector(prob, n, cfg.seed, x_obs, batch=max(1, d["mc"]["batch"] // 2))
        rate = run.n_rejected / n
        total_rejected += run.n_rejected
        if rate > d["mc"]["max_reject_rate"]:
            raise NonAdmissible(f"experiment {cfg.experiment_id!r}, epsilon={eps}: "
                                f"reject rate {rate:.3%} exceeds {d['mc']['max_reject_rate']:.3%}")
        ok = run.admissible
        rep.empirical[f"{tag}reject_rate"] = rate
        rep.empirical[f"{tag}cells"] = prob.n_cells
        rep.add(f"{tag}identity_residual", "lt", float(np.max(run.residual[ok])), None,
                tol["identity"])
        rep.add(f"{tag}boundary_value", "le", float(np.max(np.abs(run.u_eps_end[ok] - c["b"]))),
                None, tol["identity"] * max(1.0, abs(c["b"])))
        med = float(np.median(run.abs_error[ok, conv_j]))
        medians.append(med)
        r_std.append(float(np.std(run.r[ok, conv_j], ddof=1)))
        rho_std.append(float(np.std(run.rho_scaled[ok, conv_j], ddof=1)))
        rep.empirical[f"{tag}median_abs_error"] = med
        rep.empirical[f"{tag}std_r"] = r_std[-1]
        rep.empirical[f"{tag}std_rho_scaled"] = rho_std[-1]
        samples += [(i, f"{tag}{nm}", float(run.rescaled[i, j]), bool(ok[i]))
                    for i in range(n) for j, nm in enumerate(names)]
        u_bar = homogenized(prob)[1][node_indices(prob, x_obs)]
        u_eps = u_bar + math.sqrt(eps) * run.rescaled
        per_rep += [(i, eps, x, float(u_eps[i, j]), float(u_bar[j]), float(run.rescaled[i, j]),
                     int(ok[i])) for i in range(n) for j, x in enumerate(x_obs)]

        if eps in c["fluctuation_eps"]:
            resc = run.rescaled[ok]
            theo = np.array([[limit_covariance(prob, a, b, mu.value) for b in x_obs]
                             for a in x_obs])
            rep.empirical[f"{tag}moments"] = _moments_block(resc, names)
            emp = np.atleast_2d(np.cov(resc, rowvar=False))
            se = covariance_se(emp, resc.shape[0])
            comp = compare_covariance(emp, theo, k=tol["k_cov"], se=se)
            rep.empirical[f"{tag}covariance"] = {"names": names, "matrix": emp, "se": se}
            rep.theoretical[f"{tag}covariance"] = theo
            rep.tests[f"{tag}covariance_z_scores"] = comp.z
            for i in range(len(x_obs)):
                for j in range(i, len(x_obs)):
                    key = "variance" if i == j else "covariance"
                    label = names[i] if i == j else f"{names[i]},{names[j]}"
                    rep.add(f"{tag}{key}[{label}]", "abs_diff_le", emp[i, j], theo[i, j],
                            tol["k_cov"] * se[i, j])
            for j, nm in enumerate(names):
                if theo[j, j] > 0:
                    ks = ks_normality(resc[:, j], 0.0, math.sqrt(theo[j, j]))
                    rep.tests[f"{tag}ks[{nm}]"] = {"ks_statistic": ks.statistic,
                                                   "ks_pvalue": ks.p_value}
                    rep.add(f"{tag}ks_pvalue[{nm}]", "ge", ks.p_value, None, tol["ks_alpha"])

        if "bound" in c:
            h = cfg.objects["bound_h"]
            vals = simulate_weighted_integrals(prob, h, c["bound"]["v"], n, cfg.seed,
                                               batch=max(1, d["mc"]["batch"] // 2))
            for j, v in enumerate(c["bound"]["v"]):
                bound = variance_bound(exp, model, h.sup_norm(0.0, v), eps)
                var = float(np.var(vals[:, j], ddof=1))
                rep.empirical[f"{tag}weighted_integral_variance[v={_fmt(v)}]"] = var
                rep.theoretical[f"{tag}variance_bound[v={_fmt(v)}]"] = bound
                rep.add(f"{tag}variance_bound[v={_fmt(v)}]", "le", var, None,
                        bound * (1.0 + 4.0 * math.sqrt(2.0 / n)))

    rep.n_rejected = total_rejected
    if len(eps_sorted) > 1:
        rep.empirical["epsilon_order"] = eps_sorted
        rep.add("median_abs_error_decreasing", "strictly_decreasing", medians)
        rep.add("std_r_decreasing", "strictly_decreasing", r_std)
        rep.add("std_rho_scaled_decreasing", "strictly_decreasing", rho_std)

    # limit variance curve mu^2 int F(x, s)^2 ds for plotting
    prob = _problem(cfg, min(c["epsilon"]))
    xs = np.linspace(0.0, 1.0, 65)
    rows = []
    for x in xs:
        val = limit_covariance(prob, x, x, mu.value)
        budget = mu.error_budget * (val / mu.value if mu.value > 0 else 0.0)
        rows.append((float(x), float(val), float(budget)))
    header = ("replication", "epsilon", "x", "u_eps", "u_bar", "rescaled_corrector", "admissible")
    return Outcome(rep, samples=samples, targets=rows,
                   extra_csv={"corrector_samples.csv": (header, per_rep)})


# -- field sampler -------------------------------------------------------------------------

def run_sample_field(cfg: ExperimentConfig) -> Outcome:
    d, tol = cfg.data, cfg.data["tol"]
    n = _require_n(cfg)
    model = cfg.objects["model"]
    grid = GridSpec(d["grid"]["points"], d["grid"]["spacing"], dim=model.dim)
    spectrum = embedding_spectrum(model, grid)
    lags = d["lags"]
    names = ["w0"] + [f"w{lag}" for lag in lags]
    cols = np.empty((n, len(names)))
    for b0 in range(0, n, d["mc"]["batch"]):
        k = min(d["mc"]["batch"], n - b0)
        f = sample_streams(spectrum, grid, cfg.seed, b0, k)
        line = f.reshape(k, *grid.shape)[:, :, 0] if model.dim == 2 else f
        cols[b0: b0 + k] = line[:, [0] + lags]
    rep = _report(cfg, n)
    rep.empirical["embedding"] = {"size": spectrum.size, "min_eigenvalue": spectrum.min_eigenvalue,
                                  "clamped": spectrum.clamped}
    rep.empirical["moments"] = _moments_block(cols, names)
    theo = model.radial(grid.spacing * np.abs(np.subtract.outer([0] + lags, [0] + lags)))
    _gaussian_checks(rep, cols[:, :1], names[:1], [1.0], tol)
    _covariance_checks(rep, cols, names, theo, tol["k_cov"])
    rows = [(float(grid.spacing * lag), float(model.radial(grid.spacing * lag)), 0.0)
            for lag in [0] + lags]
    dump = sample_grid(model, grid, cfg.seed, 0, spectrum) if (
        d["out"].get("field_dump") and model.dim == 1) else None
    return Outcome(rep, samples=_sample_rows(cols, names), targets=rows, field_sample=dump)


DRIVERS = {
    "sigma2": run_sigma2,
    "verify-bm": run_verify_bm,
    "verify-bm-fdd": run_verify_bm,
    "verify-homogeneous": run_verify_homogeneous,
    "verify-corrector": run_verify_corrector,
    "sample-field": run_sample_field,
}


def run_outcome(cfg: ExperimentConfig) -> Outcome:
    if cfg.kind != "sigma2" and cfg.n == 0:
        raise TooFewSamples(f"experiment {cfg.experiment_id!r}: mc.n = 0")
    return DRIVERS[cfg.kind](cfg)


def run_experiment(cfg: ExperimentConfig) -> MonteCarloReport:
    return run_outcome(cfg).report
