"""
Gaussian fluctuations of R^(1/2) int_0^1 Phi(W_{Rx}) dx
======================================================

Sample the field on a grid fine enough to resolve its correlation length,
integrate, and watch the law settle onto N(0, sigma^2) as R grows.  For a
rank-2 functional the approach is slow: the third cumulant decays only
like R^(-1/2), which is visible in the skewness column.
"""

import math

import numpy as np

from oscbm.breuer_major import OscillatorySpec, Weight, limit_fdd_covariance, simulate, theoretical_sigma2
from oscbm.covariance import CovarianceModel
from oscbm.hermite import Functional, expand
from oscbm.stats import ks_normality

model = CovarianceModel.exponential(1.0)
n = 4000

for phi in (Functional.hermite_single(1), Functional.hermite_single(2)):
    s2 = theoretical_sigma2(expand(phi), model).value
    print(f"\n{phi.name}: sigma^2 = {s2:.4f}")
    print("     R   variance   skewness   KS p")
    for R in (10.0, 50.0, 200.0):
        v = simulate(OscillatorySpec(model, phi, [(0.0, 1.0)], R), n, seed=1)[:, 0]
        z = (v - v.mean()) / v.std()
        p = ks_normality(v, 0.0, math.sqrt(s2)).p_value
        print(f"{R:6.0f}   {v.var(ddof=1):8.4f}   {np.mean(z ** 3):8.3f}   {p:.3f}")

###############################################################################
# Several sets at once.  With h(x) = x the limit covariance of the integrals
# over [0,1] and [1/2,3/2] is sigma^2 int_{1/2}^{1} x^2 dx = sigma^2 * 7/24.

phi = Functional.hermite_single(1)
h = Weight.polynomial([0, 1])
sets = [(0.0, 1.0), (0.5, 1.5)]
s2 = theoretical_sigma2(expand(phi), model).value
v = simulate(OscillatorySpec(model, phi, sets, 200.0, h), n, seed=2)
print("\nempirical covariance\n", np.round(np.cov(v, rowvar=False), 4))
print("limit covariance\n", np.round(limit_fdd_covariance(sets, h, s2), 4))
