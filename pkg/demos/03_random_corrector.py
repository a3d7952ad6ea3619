"""
The 1-D random corrector
========================

Solve -(a(x/eps) u')' = f on (0,1) with u(0)=0, u(1)=b, where
1/a(y) = 1/a_* + Phi(W_y).  Phi is centered, so a_* is the harmonic mean
of a.  The solution u_eps converges to the homogenized ubar, and (u_eps - ubar)/sqrt(eps) is asymptotically
Gaussian with covariance mu^2 int F(x1,y) F(x2,y) dy.
"""

import numpy as np

from oscbm.corrector import CorrectorProblem, Source, limit_covariance, mu2, simulate_corrector
from oscbm.covariance import CovarianceModel
from oscbm.hermite import Functional

model = CovarianceModel.exponential(1.0)

###############################################################################
# Bridge case: no forcing, u(1) = 1, a_* = 1.  Here ubar(x) = x and the limit
# variance is mu^2 x(1-x), the variance of a Brownian bridge.

p = CorrectorProblem(Source.constant(0.0), 1.0, 1.0, Functional.hermite_single(1), model, 0.005)
m2 = mu2(p).value
xs = [0.25, 0.5, 0.75]
run = simulate_corrector(p, 2000, seed=11, x_obs=xs)
emp = np.cov(run.rescaled[run.admissible], rowvar=False)
print(f"mu^2 = {m2:.4f}, admissible {run.admissible.sum()} of {run.admissible.size}")
for j, x in enumerate(xs):
    print(f"x={x}: empirical {emp[j, j]:.4f}   limit {limit_covariance(p, x, x, m2):.4f}")
print(f"cross (0.25, 0.75): empirical {emp[0, 2]:.4f}   limit {limit_covariance(p, 0.25, 0.75, m2):.4f}")

###############################################################################
# The solution formula splits u_eps - ubar into a term linear in the
# coefficient fluctuation plus a remainder; the split holds to roundoff.

print("max decomposition residual:", f"{run.residual[run.admissible].max():.1e}")

###############################################################################
# Convergence in probability with forcing f = 1, b = 0 and a non-smooth
# functional.  The median error at x = 1/2 shrinks roughly like sqrt(eps).

phi = Functional.abs_centered()
a_star = np.sqrt(np.pi / 2)   # then 1/a = |W| > 0 almost surely
print("\n  eps     median |u_eps(1/2) - ubar(1/2)|")
for eps in (0.1, 0.01, 0.001):
    p = CorrectorProblem(Source.constant(1.0), 0.0, a_star, phi, model, eps)
    r = simulate_corrector(p, 500, seed=5, x_obs=[0.5])
    print(f"{eps:6.3f}   {np.median(r.abs_error[r.admissible, 0]):.5f}")
