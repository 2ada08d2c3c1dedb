"""Simulation of perturbed reflecting Brownian motion, its local-time
fields and white-noise integrals, with Monte Carlo verification of the
associated squared-Bessel local-time laws."""

from .paths import (DriverPath, MuProcessPath, ParameterError, TimeIndex,
                    NOT_REACHED, build_mu_process, hitting_time,
                    sgn_b_increments, simulate_driver)
from .localtime import (LocalTimeField, default_dx, inverse_local_time,
                        occupation_local_time, profile_at)
from .excursion import (GluedPath, SIDE_ABOVE, SIDE_BELOW,
                        decomposition_residual, glue, independence_test,
                        reconstruct, simulate_until_clocks)
from .whitenoise import (MartingaleMeasurePath, NotReachedError, Rect,
                         StepFunction2D, coverage_fraction, integrate,
                         martingale_measure, rk_integral_first,
                         rk_integral_second)
from .besq import (BesqPath, euler_absorbed, euler_absorbed_marginal,
                   exact_step, marginal_from_zero_cdf)
from .reports import TestReport
from .rng import replica_seed, replica_stream, stream_from_seed
from .twosided import TwoSidedPath, simulate_two_sided, verify_main_bis
from .verify import (gaussianity_check, ks_statistic, ks_two_sample,
                     qv_identity, ray_knight_first_law,
                     ray_knight_second_law, sde_residual)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
