"""Simulation and diagnostics for the stochastic heat equation with gradient drift.

du = u_xx dt + grad U(u) dt + dW on [0, 1] with Dirichlet conditions and
values in R^d, driven by space-time white noise.
"""
__version__ = "1.0.0"

from ._accel import backend  # noqa: E402
from .capacity import cap, discretize_target, min_energy  # noqa: E402
from .dynamics import BatchSimulator, GridPath, Stepper, girsanov_weight, integrate  # noqa: E402
from .hitting import (ExperimentConfig, compact_core, detect_hit, excursions, hit_until_success,  # noqa: E402
                      hitting_probability)
from .invariant import ball_mass, bm_sup_cdf, bridge_sup_cdf, ergodic_check, gibbs_sample, sample_bridge  # noqa: E402
from .potential import Cosine, TabulatedSmooth, Zero  # noqa: E402
from .rng import RngStream, seed_derive  # noqa: E402
from .spectral import Truncation, green_kernel, semigroup_apply, sigma2  # noqa: E402
from .targets import Ball, Box, PointCloud, Union  # noqa: E402
