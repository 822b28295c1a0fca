"""Additive-GP Bayesian optimization with Fourier-feature posteriors.

The package splits a box-bounded minimization problem into disjoint
coordinate groups, models each group with its own squared-exponential
kernel approximated by unit-norm Fourier features, and optimizes the
resulting linear surrogate one group at a time. A standard
full-dimensional BO loop, separable benchmarks, and a pump-scheduling
problem are included for comparison studies.
"""

from .engine import (
    Problem,
    RunSpec,
    Trace,
    run_additive_bo,
    run_batch,
    run_standard_bo,
)
from .kernels import (
    Decomposition,
    FeatureMap,
    NoiseParams,
    SEKernelParams,
    SearchSpace,
)

__all__ = [
    "Decomposition",
    "FeatureMap",
    "NoiseParams",
    "Problem",
    "RunSpec",
    "SEKernelParams",
    "SearchSpace",
    "Trace",
    "run_additive_bo",
    "run_batch",
    "run_standard_bo",
]

__version__ = "0.1.0"
