"""Numerical laboratory for localization of continuous quasiperiodic Schrodinger operators."""

from .errors import *  # noqa: F401,F403
from .potential import AnalyticPotential, cosine_model, zero_potential
from .transfer import (IntegratorConfig, Interval, ScaledMatrix2, TransferSolution, compose,
                       integrate_transfer, log_norm, shift_covariance_check, transfer_matrix)

GOLDEN = (5 ** 0.5 - 1) / 2

__version__ = "0.1.0"
