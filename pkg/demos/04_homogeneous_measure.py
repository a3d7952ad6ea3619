"""
Integrating against a homogeneous measure
=========================================

Replace dx by nu(dx) = |x|^(-beta) dx, which satisfies nu(sA) = s^(1-beta) nu(A),
and consider

    G_R = R^(alpha/2) int_{B_1} Phi(W_{Rx}) nu(dx),   alpha = 1 - beta.

The candidate limit variance is sigma_nu^2 nu(B_1) with
sigma_nu^2 = sum_q q! c_q^2 int rho(z)^q |z|^(-beta) dz.  The script
compares that value with the exact finite-R variance of G_R, computed
from the discretized field covariance, and with simulation.
"""

import math

from oscbm.breuer_major import (HomogeneousSpec, discrete_covariance, nu_mass, simulate,
                                theoretical_sigma2_nu)
from oscbm.covariance import CovarianceModel
from oscbm.hermite import Functional, expand

model = CovarianceModel.exponential(1.0)
phi = Functional.hermite_single(1)
beta = 0.5

# For H_1 and rho = exp(-|z|): int exp(-|z|)|z|^(-1/2) dz = 2 Gamma(1/2) = 2 sqrt(pi)
snu = theoretical_sigma2_nu(expand(phi), model, beta).value
mass = nu_mass(-1.0, 1.0, beta)
print(f"sigma_nu^2 = {snu:.9f}  (2 sqrt(pi) = {2 * math.sqrt(math.pi):.9f})")
print(f"nu(B_1) = {mass}, homogeneity: nu([0,2]) / nu([0,1]) = {nu_mass(0, 2, beta) / nu_mass(0, 1, beta):.12f}")
print(f"candidate limit variance = {snu * mass:.4f}\n")

###############################################################################
# The exact variance of the discretized G_R is a double sum of rho(R(x-y))
# against the cell masses.  It does not approach the candidate: it decays.

print("     R   exact Var G_R   simulated (N=2000)")
for R in (50.0, 200.0, 1000.0):
    spec = HomogeneousSpec.balls(model, phi, [1.0], R, beta)
    exact = discrete_covariance(spec)[0, 0]
    # simulation at R = 1000 is slow and adds nothing
    sim = f"{simulate(spec, 2000, seed=3)[:, 0].var(ddof=1):10.4f}" if R <= 200 else "         -"
    print(f"{R:6.0f}   {exact:13.4f}   {sim}")

###############################################################################
# Heuristically the double integral concentrates near the diagonal, where it
# behaves like R^(-alpha) int_{RB} |x|^(-2 beta) dx int rho; for beta = 1/2
# that is of order R^(-1/2) log R, so the variance tends to zero.
