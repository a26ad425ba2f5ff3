"""De Finetti optimal dividends for spectrally negative Lévy processes."""
from ._backend import COMPILED
from .dividend import (BandPolicy, BarrierPolicy, OptimalityCertificate, ValueCurve,
                       barrier_curve, barrier_value, certify, exit_up, generator_apply,
                       hjb_residual, one_sided_up, optimal_barrier, sufficient_condition,
                       tail_asymptote)
from .hjb import HjbSolution, bands_from_regions, extract_regions, solve_hjb, verify_value
from .levy import (CompoundPoisson, Exponential, GammaShape, LevyModel, Tabulated,
                   laplace_exponent, log_convexity_certificate, mean_x1, phi, tail_rate)
from .montecarlo import (SimConfig, SimEstimate, estimate_dividends, estimate_exit,
                         estimate_martingale, estimate_tail, simulate_paths)
from .scale import (ScaleFunction, eval_w, eval_w1, eval_w2, laplace_identity_residual,
                    scale_brownian, scale_cl_exponential, scale_numeric, scale_rational)

__version__ = "0.1.0"
