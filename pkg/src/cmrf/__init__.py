"""Cauchy Markov random field priors for Bayesian deconvolution."""

from cmrf._backend import BACKEND
from cmrf.lattice import Lattice
from cmrf.priors import (PriorSpec, build_terms, delta_log_prior, grad_log_prior, log_prior,
                         log_prior_batch)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "Lattice",
    "PriorSpec",
    "build_terms",
    "delta_log_prior",
    "grad_log_prior",
    "log_prior",
    "log_prior_batch",
    "__version__",
]
