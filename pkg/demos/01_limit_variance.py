"""
Limit variance of an oscillatory integral
=========================================

For a stationary Gaussian field W with correlation rho and a functional
Phi of Hermite rank m, the integral R^(1/2) int_0^1 Phi(W_{Rx}) dx has a
Gaussian limit with variance

    sigma^2 = sum_q q! c_q^2 int rho(z)^q dz.

This script expands a few functionals in the Hermite basis and sums the
series for the exponential correlation rho(z) = exp(-|z|).
"""

import math

import numpy as np
from scipy.integrate import quad

from oscbm.breuer_major import theoretical_sigma2
from oscbm.covariance import CovarianceModel
from oscbm.hermite import Functional, expand

model = CovarianceModel.exponential(1.0)

# Phi = H_q has c_q = 1 and int exp(-q|z|) dz = 2/q, so sigma^2 = q! * 2/q
for q in (1, 2, 3):
    r = theoretical_sigma2(expand(Functional.hermite_single(q)), model)
    print(f"H_{q}: sigma^2 = {r.value:.12f}")

###############################################################################
# A non-smooth functional: |x| - E|X|.  Its Hermite series is infinite, so the
# result carries a truncation budget.

abs_c = Functional.abs_centered()
exp = expand(abs_c)
print("\nabs_centered, first even coefficients:", np.round(exp.coefficients[:9:2], 6))
print("rank:", exp.rank, " tail mass beyond Q:", f"{exp.tail_mass:.2e}")
r = theoretical_sigma2(exp, model)
print(f"sigma^2 = {r.value:.6f}  (budget {r.error_budget:.1e})")

# Closed form: Cov(|X|,|Y|) for correlation r is (2/pi)(sqrt(1-r^2) + r asin r - 1),
# and int_R g(e^{-|z|}) dz = 2 int_0^1 g(r)/r dr.
g = lambda r: (2 / math.pi) * (math.sqrt(1 - r * r) + r * math.asin(r) - 1) / r
exact = 2 * quad(g, 0, 1, limit=200)[0]
print(f"closed form    = {exact:.6f}  (series error {abs(exact - r.value):.1e})")
