"""Separable synthetic objectives for exercising the optimizers.

Each benchmark is a sum of one-dimensional components, so its global
optimum can be recovered numerically per coordinate. Registered problems
carry that oracle-computed optimum rather than a hard-coded constant.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .engine import Problem
from .kernels import Decomposition, SearchSpace

__all__ = [
    "styblinski_tang",
    "sep_quadratic",
    "golden_section_min",
    "minimize_separable_1d",
    "benchmark_problem",
    "BENCHMARK_NAMES",
]

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section_min(
    f: Callable[[float], float], lo: float, hi: float, iters: int = 60
) -> tuple[float, float]:
    """Golden-section search for a scalar minimum on [lo, hi]."""
    a, b = float(lo), float(hi)
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
    x = (a + b) / 2.0
    return x, f(x)


def minimize_separable_1d(
    f: Callable[[float], float], lo: float, hi: float, grid: int = 1001
) -> tuple[float, float]:
    """Global minimum of a 1-D function: dense grid scan, then golden-section
    refinement inside the bracketing cell pair."""
    ts = np.linspace(lo, hi, grid)
    vals = np.array([f(float(t)) for t in ts])
    i = int(np.argmin(vals))
    a = ts[max(i - 1, 0)]
    b = ts[min(i + 1, grid - 1)]
    return golden_section_min(f, a, b)


def styblinski_tang(x) -> float | np.ndarray:
    """0.5 * sum(x_i^4 - 16 x_i^2 + 5 x_i) on [-5, 5]^d.

    Accepts a single point (d,) or a batch (n, d); raises if any coordinate
    leaves the box by more than 1e-9.
    """
    arr = np.asarray(x, dtype=float)
    if np.any(arr < -5.0 - 1e-9) or np.any(arr > 5.0 + 1e-9):
        raise ValueError("styblinski_tang is defined on [-5, 5]^d")
    val = 0.5 * np.sum(arr**4 - 16.0 * arr**2 + 5.0 * arr, axis=-1)
    return float(val) if arr.ndim == 1 else val


def _st_component(t: float) -> float:
    return 0.5 * (t**4 - 16.0 * t**2 + 5.0 * t)


def sep_quadratic(x, centers: np.ndarray) -> float | np.ndarray:
    """sum((x_i - c_i)^2): a smooth separable bowl, not from any suite."""
    arr = np.asarray(x, dtype=float)
    if np.any(arr < -3.0 - 1e-9) or np.any(arr > 3.0 + 1e-9):
        raise ValueError("sep_quadratic is defined on [-3, 3]^d")
    val = np.sum((arr - centers) ** 2, axis=-1)
    return float(val) if arr.ndim == 1 else val


BENCHMARK_NAMES = ("styblinski_tang", "sep_quadratic")


def benchmark_problem(name: str, d: int) -> Problem:
    """Build a registered benchmark as a Problem with a per-coordinate
    decomposition and an oracle-derived known optimum."""
    if d < 1:
        raise ValueError("dimension must be at least 1")
    if name == "styblinski_tang":
        space = SearchSpace(np.full(d, -5.0), np.full(d, 5.0))
        objective = styblinski_tang
        components = [_st_component] * d
        lo, hi = -5.0, 5.0
    elif name == "sep_quadratic":
        centers = np.linspace(-2.0, 2.0, d)
        space = SearchSpace(np.full(d, -3.0), np.full(d, 3.0))

        def objective(x, _c=centers):
            return sep_quadratic(x, _c)

        components = [lambda t, _ci=ci: (t - _ci) ** 2 for ci in centers]
        lo, hi = -3.0, 3.0
    else:
        known = ", ".join(BENCHMARK_NAMES)
        raise ValueError(f"unknown benchmark {name!r}; known benchmarks: {known}")
    optimum = sum(minimize_separable_1d(c, lo, hi)[1] for c in components)
    return Problem(
        space=space,
        objective=objective,
        decomposition=Decomposition.coordinates(d),
        known_optimum=float(optimum),
        name=name,
    )
