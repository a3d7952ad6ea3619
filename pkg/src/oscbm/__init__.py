"""Oscillatory Breuer-Major integrals and the 1-d random corrector problem."""

from .breuer_major import (Ball, Box, HomogeneousSpec, Interval, OscillatorySpec, VarianceTarget,
                           Weight, discrete_covariance, finite_R_variance,
                           homogeneous_oscillatory_integral, limit_fdd_covariance, mes_diagnostic,
                           nu_mass, oscillatory_integral, simulate, theoretical_sigma2,
                           theoretical_sigma2_nu)
from .corrector import (CorrectorProblem, Source, decompose, homogenized, kernel_F,
                        limit_covariance, mu2, simulate_corrector, simulate_weighted_integrals,
                        solve_eps, variance_bound)
from .covariance import (CovarianceModel, check_integrability, evaluate, rho_power_integral,
                         rho_power_integral_weighted)
from .errors import *  # noqa: F401,F403
from .gaussian_field import (FieldSample, GridSpec, embedding_spectrum, read_field, sample_grid,
                             sample_streams, write_field)
from .hermite import (BUILTIN_FUNCTIONALS, Functional, HermiteExpansion, expand, hermite_eval,
                      hermite_rank, lp_norm)
from .stats import (MonteCarloReport, SampleSet, compare_covariance, empirical_moments,
                    ks_normality, run_monte_carlo)

__version__ = "0.1.0"
