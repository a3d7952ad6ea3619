import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oscbm.breuer_major import Weight
from oscbm.corrector import (CorrectorProblem, Source, decompose, homogenized, inverse_potential,
                             kernel_F, limit_covariance, mu2, simulate_corrector,
                             simulate_weighted_integrals, solve_eps, variance_bound)
from oscbm.covariance import CovarianceModel
from oscbm.errors import NonAdmissible
from oscbm.gaussian_field import sample_grid
from oscbm.hermite import Functional, expand

EXP = CovarianceModel.exponential(1.0)
H1 = Functional.hermite_single(1)
ABS = Functional.abs_centered()
ZERO = Functional.zero()
A_ABS = math.sqrt(math.pi / 2)


def bridge(eps=0.01, phi=H1):
    return CorrectorProblem(Source.constant(0.0), 1.0, 1.0, phi, EXP, eps)


def abs_setup(eps=0.01):
    return CorrectorProblem(Source.constant(1.0), 0.0, A_ABS, ABS, EXP, eps)


def field_for(problem, seed=0, stream=0):
    return sample_grid(problem.model, problem.field_grid(), seed, stream)


def test_inverse_potential_examples():
    p = CorrectorProblem(Source.constant(1.0), 0.0, 2.0, ZERO, EXP, 0.1)
    assert np.all(inverse_potential(p, field_for(p)) == 0.5)
    p = abs_setup(0.1)
    f = field_for(p)
    assert np.allclose(inverse_potential(p, f), np.abs(f.values), atol=1e-15)


def test_inverse_potential_mean():
    p = bridge(0.1)
    from oscbm.gaussian_field import embedding_spectrum, sample_streams
    fields = sample_streams(embedding_spectrum(EXP, p.field_grid()), p.field_grid(), 3, 0, 2000)
    vals = 1 / p.a_star + p.phi(fields[:, 17])
    assert abs(vals.mean() - 1.0) < 3 * vals.std(ddof=1) / math.sqrt(2000)


def test_degenerate_potential_reproduces_homogenized_solution():
    p = CorrectorProblem(Source.polynomial([1, -2, 3]), 0.7, 1.5, ZERO, EXP, 0.05)
    sol = solve_eps(p, field_for(p))
    assert np.allclose(sol.u_eps, sol.u_bar, atol=1e-14)
    dec = decompose(p, field_for(p), sol)
    assert np.all(dec.U_eps == 0) and np.all(dec.r_eps == 0) and np.all(dec.rho_term == 0)


def test_boundary_values_and_monotone_bridge():
    p = CorrectorProblem(Source.constant(0.0), 1.0, A_ABS, ABS, EXP, 0.02)
    sol = solve_eps(p, field_for(p, 1))
    assert sol.u_eps[0] == 0.0
    assert abs(sol.u_eps[-1] - 1.0) < 1e-12
    assert np.all(np.diff(sol.u_eps) >= 0)


def test_homogenized_examples():
    p = CorrectorProblem(Source.constant(1.0), 0.0, 1.0, H1, EXP, 0.1)
    x, u_bar, c = homogenized(p)
    assert c == pytest.approx(0.5, abs=1e-15) and p.c_star == pytest.approx(0.5)
    mid = np.searchsorted(x, 0.5)
    assert u_bar[mid] == pytest.approx(0.125, abs=1e-15)
    assert np.allclose(u_bar, x / 2 - x ** 2 / 2, atol=1e-15)
    # -u'' = 1 in the discrete sense
    h = x[1] - x[0]
    assert np.allclose(-(u_bar[2:] - 2 * u_bar[1:-1] + u_bar[:-2]) / h ** 2, 1.0, atol=1e-6)
    x, u_bar, _ = homogenized(bridge())
    assert np.allclose(u_bar, x, atol=1e-15)


@given(st.lists(st.floats(-3, 3), min_size=1, max_size=4), st.floats(-2, 2), st.floats(0.3, 3))
def test_homogenized_boundary_conditions(coeffs, b, a_star):
    p = CorrectorProblem(Source.polynomial(coeffs), b, a_star, H1, EXP, 0.5)
    _, u_bar, _ = homogenized(p)
    assert u_bar[0] == 0.0 and u_bar[-1] == b


def test_kernel_examples():
    p = bridge()
    assert kernel_F(p, 0.5, 0.25) == pytest.approx(0.5)
    assert kernel_F(p, 0.5, 0.75) == pytest.approx(-0.5)
    assert kernel_F(abs_setup(), 0.0, 0.4) == 0.0


def test_limit_covariance_examples():
    p = bridge()
    m = mu2(p).value
    assert limit_covariance(p, 0.5, 0.5, m) == pytest.approx(0.25 * m, rel=1e-10)
    for x in (0.1, 0.3, 0.8):
        assert limit_covariance(p, x, x, m) == pytest.approx(m * x * (1 - x), rel=1e-10)
    assert limit_covariance(p, 0.25, 0.75, m) == pytest.approx(m * 0.0625, rel=1e-10)
    assert limit_covariance(p, 0.0, 0.6, m) == 0.0
    assert abs(limit_covariance(p, 1.0, 1.0, m)) < 1e-14


def test_limit_covariance_matrix_psd():
    p = abs_setup()
    xs = np.linspace(0, 1, 9)
    c = np.array([[limit_covariance(p, a, b, 0.336) for b in xs] for a in xs])
    assert np.allclose(c, c.T)
    assert np.linalg.eigvalsh(c).min() >= -1e-10


def test_decomposition_identity():
    p = abs_setup(0.01)
    for stream in range(5):
        f = field_for(p, 2, stream)
        sol = solve_eps(p, f)
        assert decompose(p, f, sol).residual < 1e-9


def test_r_term_recomputed_independently():
    p = bridge(0.02)
    f = field_for(p, 5)
    sol = solve_eps(p, f)
    dec = decompose(p, f, sol)
    q = p.phi(f.values)
    running = np.concatenate([[0.0], np.cumsum(q)]) * p.dx
    expected = (sol.c_eps - 1.0) / math.sqrt(p.epsilon) * running
    assert np.allclose(dec.r_eps, expected, atol=1e-12)


def test_non_admissible_flagged():
    # Phi = -H1 with a* chosen so int 1/a sits exactly at zero for this field
    p0 = bridge(0.1)
    f = field_for(p0, 9)
    inv = 1.0 + p0.phi(f.values)
    shift = -float(np.mean(inv - 1.0))  # makes the grid integral of 1/a equal zero
    p = CorrectorProblem(Source.constant(0.0), 1.0, 1.0 / shift, H1, EXP, 0.1)
    with pytest.raises(NonAdmissible):
        solve_eps(p, f)
    sol = solve_eps(p, f, raise_on_reject=False)
    assert not sol.admissible and np.all(np.isnan(sol.u_eps))


def test_table_source_antiderivative():
    s = Source.table([0, 0.5, 1], [0, 1, 0])
    assert s.antiderivative(0.5) == pytest.approx(0.25, abs=1e-12)
    assert s.antiderivative(1.0) == pytest.approx(0.5, abs=1e-12)
    p = CorrectorProblem(s, 0.0, 1.0, H1, EXP, 0.1)
    assert p.c_star_grid == pytest.approx(p.c_star, abs=1e-6)


def test_grid_resolution_grows_with_small_epsilon():
    assert abs_setup(0.01).n_cells == 2048
    assert abs_setup(0.001).n_cells == 8192
    assert abs_setup(0.001).field_grid().spacing <= EXP.correlation_length / 8


def test_simulation_batches_and_residuals():
    p = abs_setup(0.05)
    a = simulate_corrector(p, 40, seed=1, x_obs=[0.25, 0.5], batch=64)
    b = simulate_corrector(p, 40, seed=1, x_obs=[0.25, 0.5], batch=7)
    assert np.array_equal(a.rescaled, b.rescaled)
    assert np.all(a.residual < 1e-9) and a.n_rejected == 0
    assert np.allclose(a.u_eps_end, 0.0, atol=1e-12)


def test_variance_bound_holds():
    p = abs_setup(0.01)
    h = Weight.polynomial([1, 1])
    vals = simulate_weighted_integrals(p, h, [0.25, 1.0], 1000, seed=4)
    exp = expand(ABS)
    for j, v in enumerate([0.25, 1.0]):
        bound = variance_bound(exp, EXP, h.sup_norm(0, v), 0.01)
        assert vals[:, j].var(ddof=1) <= bound * (1 + 4 * math.sqrt(2 / 1000))


def test_abs_fluctuation_variance():
    p = abs_setup(0.005)
    run = simulate_corrector(p, 2000, seed=21, x_obs=[0.25, 0.5, 0.75])
    m = mu2(p).value
    for j, x in enumerate([0.25, 0.5, 0.75]):
        target = limit_covariance(p, x, x, m)
        v = run.rescaled[:, j].var(ddof=1)
        assert abs(v - target) <= 4 * v * math.sqrt(2 / 1999)
