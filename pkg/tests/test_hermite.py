import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from numpy.polynomial import hermite_e

from oscbm.errors import NonCentered, RankUndetected
from oscbm.hermite import (Functional, expand, hermite_eval, hermite_rank, lp_norm,
                           normalized_hermite_table)

ABS = Functional.abs_centered()
SIGN = Functional.sign()


def test_hermite_eval_examples():
    assert hermite_eval(0, 3.7) == 1.0
    assert hermite_eval(2, 0.0) == -1.0
    assert hermite_eval(3, 1.0) == -2.0


def test_recurrence_matches_explicit_forms():
    x = np.random.default_rng(0).uniform(-4, 4, 100)
    explicit = [np.ones_like(x), x, x ** 2 - 1, x ** 3 - 3 * x, x ** 4 - 6 * x ** 2 + 3,
                x ** 5 - 10 * x ** 3 + 15 * x]
    for q, e in enumerate(explicit):
        assert np.allclose(hermite_eval(q, x), e, rtol=1e-12, atol=1e-12)


@given(st.integers(0, 20), st.floats(-6, 6))
def test_recurrence_matches_numpy_hermite_e(q, x):
    c = np.zeros(q + 1)
    c[q] = 1
    assert hermite_eval(q, x) == pytest.approx(hermite_e.hermeval(x, c), rel=1e-10, abs=1e-10)


def test_orthogonality():
    # normalized basis H_q / sqrt(q!): raw entries reach 12! and would drown 1e-10 in roundoff
    x, w = hermite_e.hermegauss(60)
    w = w / math.sqrt(2 * math.pi)
    basis = np.array([hermite_eval(q, x) / math.sqrt(math.factorial(q)) for q in range(13)])
    gram = (basis * w) @ basis.T
    assert np.max(np.abs(gram - np.eye(13))) <= 1e-10


def test_normalized_table_rows():
    x = np.linspace(-3, 3, 7)
    t = normalized_hermite_table(6, x)
    for k in range(7):
        assert np.allclose(t[k], hermite_eval(k, x) / math.sqrt(math.factorial(k)))


def test_expand_single_hermite():
    e = expand(Functional.hermite_single(2))
    assert e.coefficients[2] == 1.0 and np.count_nonzero(e.coefficients) == 1
    assert e.rank == 2


def test_expand_abs_centered():
    e = expand(ABS)
    assert abs(e.coefficients[0]) == 0.0 and abs(e.coefficients[1]) < 1e-12
    # c_2 = (E|N|^3 - E|N|)/2 = (2 sqrt(2/pi) - sqrt(2/pi))/2
    assert abs(e.coefficients[2] - math.sqrt(2 / math.pi) / 2) < 1e-8
    assert e.rank == 2


def test_expand_cubic_exact():
    e = expand(Functional.polynomial([0, 0, 0, 1]))
    assert e.coefficients[1] == 3.0 and e.coefficients[3] == 1.0
    assert np.count_nonzero(e.coefficients) == 2
    assert e.rank == 1


def test_ranks():
    assert hermite_rank(expand(Functional.hermite_single(1))) == 1
    assert hermite_rank(expand(ABS)) == 2
    assert hermite_rank(expand(SIGN)) == 1
    with pytest.raises(RankUndetected):
        hermite_rank(expand(Functional.zero()))
    assert expand(Functional.zero()).rank is None


def test_non_centered_rejected():
    with pytest.raises(NonCentered):
        expand(Functional.polynomial([0, 0, 1]))


def test_lp_norms():
    assert lp_norm(Functional.hermite_single(1), 2) == pytest.approx(1.0, abs=1e-12)
    assert lp_norm(ABS, 2) == pytest.approx(math.sqrt(1 - 2 / math.pi), abs=1e-10)
    assert lp_norm(SIGN, 4) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("phi", [ABS, SIGN] + [
    Functional.polynomial(hermite_e.herme2poly(np.r_[0.0, np.random.default_rng(d).normal(size=d)]))
    for d in range(1, 7)])
def test_parseval(phi):
    e = expand(phi)
    assert e.tail_mass >= -1e-12
    assert abs(e.parseval_norm + e.tail_mass - lp_norm(phi, 2) ** 2) < 1e-8


def test_polynomial_tail_is_zero():
    e = expand(Functional.polynomial([0, 1, 0, 1, 0, 1]))
    assert abs(e.tail_mass) < 1e-12


def test_parity():
    even = expand(ABS).coefficients
    odd = expand(SIGN).coefficients
    assert np.all(np.abs(even[1::2]) < 1e-12)
    assert np.all(np.abs(odd[0::2]) < 1e-12)


def test_sign_coefficients_closed_form():
    # E[sign(N) H_q(N)] = 2 phi(0) H_{q-1}(0) for odd q
    e = expand(SIGN)
    for q in range(1, 24, 2):
        expected = 2 * hermite_eval(q - 1, 0.0) / math.sqrt(2 * math.pi) / math.factorial(q)
        assert e.coefficients[q] == pytest.approx(expected, rel=1e-8, abs=1e-14)


def test_user_functional_needs_p_claim():
    with pytest.raises(ValueError):
        Functional("user", func=np.tanh)
    e = expand(Functional.user(np.tanh, p_claim=8.0))
    assert e.rank == 1 and e.tail_mass >= -1e-12


def test_json_record():
    rec = expand(ABS).to_json()
    assert set(rec) == {"coefficients", "rank", "Q", "parseval_norm", "tail_mass"}
    assert len(rec["coefficients"]) == 25
