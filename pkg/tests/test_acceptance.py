"""Acceptance criteria 1-11, each at its stated tolerance.

Every test records one PASS/FAIL line; the lines are printed in the pytest
terminal summary and when this file is run as a script.
"""

import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest
from numpy.polynomial import hermite_e

from oscbm import breuer_major as bm
from oscbm.cli import run
from oscbm.corrector import (CorrectorProblem, Source, limit_covariance, mu2, simulate_corrector,
                             simulate_weighted_integrals, variance_bound)
from oscbm.covariance import CovarianceModel
from oscbm.hermite import Functional, expand, hermite_eval, lp_norm
from oscbm.stats import covariance_se, empirical_moments, ks_normality

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
EXP = CovarianceModel.exponential(1.0)
H1, H2 = Functional.hermite_single(1), Functional.hermite_single(2)
ABS = Functional.abs_centered()
A_ABS = math.sqrt(math.pi / 2)

RESULTS = []


def record(number: int, ok: bool, detail: str):
    line = f"{'PASS' if ok else 'FAIL'}  criterion {number:2d}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def test_criterion_01_sigma2_oracle():
    t0 = time.perf_counter()
    s_h1 = bm.theoretical_sigma2(expand(H1), EXP).value
    s_h2 = bm.theoretical_sigma2(expand(H2), EXP).value
    a = bm.theoretical_sigma2(expand(ABS, quad_order=2 * 24 + 32), EXP).value
    b = bm.theoretical_sigma2(expand(ABS, quad_order=2 * 24 + 64), EXP).value
    elapsed = time.perf_counter() - t0
    ok = abs(s_h1 - 2) <= 1e-8 and abs(s_h2 - 2) <= 1e-8 and abs(a - b) <= 1e-8 and elapsed < 1
    record(1, ok, f"sigma2(H1)={s_h1:.12f} sigma2(H2)={s_h2:.12f} "
                  f"abs series passes differ by {abs(a - b):.1e}, {elapsed:.2f}s")


def test_criterion_02_empirical_clt():
    t0 = time.perf_counter()
    n, R = 4000, 200.0
    parts, ok = [], True
    # same master seed as the shipped bm_* configs
    for phi in (H1, H2, ABS):
        spec = bm.OscillatorySpec(EXP, phi, [(0.0, 1.0)], R)
        s2 = bm.theoretical_sigma2(expand(phi), EXP).value
        vals = bm.simulate(spec, n, seed=20240601)[:, 0]
        var = vals.var(ddof=1)
        p = ks_normality(vals, 0.0, math.sqrt(s2)).p_value
        good = abs(var - s2) <= 3 * s2 * math.sqrt(2 / n) and p >= 0.01
        ok &= good
        parts.append(f"{phi.name}: var={var:.4f} vs {s2:.4f}, KS p={p:.3f}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 120
    record(2, ok, "; ".join(parts) + f" ({elapsed:.1f}s)")


def test_criterion_03_exact_variance():
    n, R = 5000, 100.0
    target = 2 - (2 / R) * (1 - math.exp(-R))
    exact_route = bm.finite_R_variance(expand(H1), EXP, (0, 1), R)
    spec = bm.OscillatorySpec(EXP, H1, [(0.0, 1.0)], R)
    m = empirical_moments(bm.simulate(spec, n, seed=99)[:, 0])
    ok = abs(m.variance - target) <= 3 * m.se_variance and abs(exact_route - target) < 1e-9
    record(3, ok, f"var={m.variance:.4f} vs {target:.6f} (3SE={3 * m.se_variance:.4f}); "
                  f"quadrature route {exact_route:.10f}")


def test_criterion_04_fdd_covariance():
    n = 4000
    h = bm.Weight.polynomial([0, 1])
    sets = [(0.0, 1.0), (0.5, 1.5)]
    spec = bm.OscillatorySpec(EXP, H1, sets, 200.0, h)
    s2 = bm.theoretical_sigma2(expand(H1), EXP).value
    theo = bm.limit_fdd_covariance(sets, h, s2)
    vals = bm.simulate(spec, n, seed=7)
    emp = np.cov(vals, rowvar=False)
    se = covariance_se(emp, n)
    ok = bool(np.all(np.abs(emp - theo) <= 4 * se)) and abs(theo[0, 1] - s2 * 7 / 24) < 1e-12
    record(4, ok, f"emp={np.round(emp, 4).tolist()} theo={np.round(theo, 4).tolist()} "
                  f"max z={np.max(np.abs(emp - theo) / se):.2f}")


def test_criterion_05_corrector_identity():
    p = CorrectorProblem(Source.constant(1.0), 0.0, A_ABS, ABS, EXP, 0.01)
    run_ = simulate_corrector(p, 1000, seed=5, x_obs=[0.5])
    ok_reps = run_.admissible
    worst = float(np.max(run_.residual[ok_reps]))
    ok = bool(np.all(run_.residual[ok_reps] < 1e-9)) and ok_reps.sum() > 0
    record(5, ok, f"max residual {worst:.2e} over {ok_reps.sum()} admissible of 1000")


def test_criterion_06_corrector_fluctuation():
    n, xs = 4000, [0.25, 0.5, 0.75]
    p = CorrectorProblem(Source.constant(0.0), 1.0, 1.0, H1, EXP, 0.005)
    m2 = mu2(p).value
    run_ = simulate_corrector(p, n, seed=11, x_obs=xs)
    resc = run_.rescaled[run_.admissible]
    emp = np.cov(resc, rowvar=False)
    se = covariance_se(emp, resc.shape[0])
    ok, parts = True, []
    for j, x in enumerate(xs):
        target = m2 * x * (1 - x)
        assert abs(limit_covariance(p, x, x, m2) - target) < 1e-10
        p_ks = ks_normality(resc[:, j], 0.0, math.sqrt(target)).p_value
        good = abs(emp[j, j] - target) <= 4 * se[j, j] and p_ks >= 0.01
        ok &= good
        parts.append(f"x={x}: var={emp[j, j]:.4f} vs {target:.4f}, KS p={p_ks:.3f}")
    cross = m2 * 0.0625
    ok &= abs(emp[0, 2] - cross) <= 4 * se[0, 2]
    parts.append(f"cov(0.25,0.75)={emp[0, 2]:.4f} vs {cross:.4f}")
    record(6, ok, "; ".join(parts))


def test_criterion_07_convergence_in_probability():
    meds = []
    for eps in (0.1, 0.01, 0.001):
        p = CorrectorProblem(Source.constant(1.0), 0.0, A_ABS, ABS, EXP, eps)
        run_ = simulate_corrector(p, 2000, seed=5, x_obs=[0.5])
        meds.append(float(np.median(run_.abs_error[run_.admissible, 0])))
    ok = meds[0] > meds[1] > meds[2]
    record(7, ok, "median |u_eps(0.5) - u_bar(0.5)| = " + ", ".join(f"{m:.5f}" for m in meds))


def test_criterion_08_variance_bound():
    n, h = 2000, bm.Weight.polynomial([1, 1])
    vs = [0.25, 0.5, 1.0]
    ok, worst = True, 0.0
    for phi, a_star in ((ABS, A_ABS), (H1, 1.0)):
        exp = expand(phi)
        for eps in (0.1, 0.01):
            p = CorrectorProblem(Source.constant(1.0), 0.0, a_star, phi, EXP, eps)
            vals = simulate_weighted_integrals(p, h, vs, n, seed=17)
            for j, v in enumerate(vs):
                bound = variance_bound(exp, EXP, h.sup_norm(0.0, v), eps)
                ratio = vals[:, j].var(ddof=1) / (bound * (1 + 4 * math.sqrt(2 / n)))
                worst = max(worst, ratio)
                ok &= ratio <= 1.0
    record(8, ok, f"largest variance / inflated bound = {worst:.3f}")


def test_criterion_09_homogeneous_variant():
    beta, R, n = 0.5, 200.0, 4000
    snu = bm.theoretical_sigma2_nu(expand(H1), EXP, beta).value
    mass = bm.nu_mass(-1.0, 1.0, beta)
    homog = all(bm.nu_mass(0, 2 * s, beta) == pytest.approx(2 ** 0.5 * bm.nu_mass(0, s, beta),
                                                            rel=1e-15, abs=0)
                for s in (0.1, 0.5, 1.0, 3.0))
    spec = bm.HomogeneousSpec.balls(EXP, H1, [1.0], R, beta)
    m = empirical_moments(bm.simulate(spec, n, seed=3)[:, 0])
    target = snu * mass
    exact = bm.discrete_covariance(spec)[0, 0]
    analytic_ok = abs(snu - 2 * math.sqrt(math.pi)) <= 1e-6 and abs(mass - 4) <= 1e-12 and homog
    empirical_ok = abs(m.variance - target) <= 4 * m.se_variance
    record(9, analytic_ok and empirical_ok,
           f"sigma_nu2={snu:.9f}, nu(B_1)={mass!r}, homogeneity {'ok' if homog else 'broken'}; "
           f"empirical var={m.variance:.3f} vs limit target {target:.3f} "
           f"(4SE={4 * m.se_variance:.3f}); exact finite-R variance of the estimator {exact:.3f}")


def test_criterion_10_hermite():
    x, w = hermite_e.hermegauss(60)
    w = w / math.sqrt(2 * math.pi)
    basis = np.array([hermite_eval(q, x) / math.sqrt(math.factorial(q)) for q in range(13)])
    ortho = float(np.max(np.abs((basis * w) @ basis.T - np.eye(13))))
    c2 = expand(ABS).coefficients[2]
    defects = [expand(phi).tail_mass for phi in (ABS, Functional.sign(),
                                                 Functional.polynomial([0, 1, 0, 1]))]
    parseval_gap = abs(expand(ABS).parseval_norm + expand(ABS).tail_mass - lp_norm(ABS, 2) ** 2)
    ok = (ortho <= 1e-10 and abs(c2 - math.sqrt(2 / math.pi) / 2) <= 1e-8
          and min(defects) >= -1e-12 and parseval_gap < 1e-8)
    record(10, ok, f"orthogonality err {ortho:.1e}, c2(abs)={c2:.10f}, "
                   f"min tail_mass {min(defects):.1e}")


def test_criterion_11_reproducibility(tmp_path):
    same = []
    for cfg in sorted(CONFIGS.glob("*.yaml")):
        a, b = tmp_path / (cfg.stem + "_a"), tmp_path / (cfg.stem + "_b")
        run(cfg, out=a, quiet=True, env={})
        run(cfg, out=b, quiet=True, env={})
        same.append((a / "report.json").read_bytes() == (b / "report.json").read_bytes())
    record(11, all(same), f"{sum(same)}/{len(same)} shipped configs gave byte-identical reports")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
