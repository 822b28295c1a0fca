"""Acquisition functions and per-group proposal optimization.

Thompson-sampled surrogates decompose exactly across groups, so each group
maximizes its own slice of theta. EI and LCB use the group-marginal mean
and the group-diagonal block of the system-matrix inverse, which ignores
cross-group covariance and is a documented heuristic. All proposals share
one derivative-free inner solver: uniform random search followed by
coordinate-wise golden-section refinement in a shrinking window.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import ndtr

from .kernels import Decomposition, FeatureMap, evaluate_features
from .gp import LinearPosterior

__all__ = [
    "AcquisitionSpec",
    "GroupProposal",
    "beta_schedule",
    "lcb",
    "ucb",
    "ei",
    "random_golden_maximize",
    "random_shrink_maximize",
    "propose_group_ts",
    "propose_group_analytic",
    "assemble_point",
]

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
_KINDS = ("ts", "lcb", "ucb", "ei")


@dataclass(frozen=True)
class AcquisitionSpec:
    """Acquisition choice with its confidence and jitter parameters."""

    kind: str
    delta: float = 0.1
    xi: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in _KINDS:
            raise ValueError(f"kind must be one of {_KINDS}")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if self.xi < 0.0:
            raise ValueError("xi must be nonnegative")


@dataclass(frozen=True)
class GroupProposal:
    """One group's proposed sub-point and its acquisition value."""

    group: int
    x: np.ndarray
    value: float


def beta_schedule(t: int, d_eff: int, delta: float) -> float:
    """Confidence width beta_t = 2 log(d_eff t^2 pi^2 / (6 delta))."""
    if t < 1:
        raise ValueError("t must be at least 1")
    return 2.0 * math.log(d_eff * t * t * math.pi**2 / (6.0 * delta))


def lcb(mean, stddev, beta):
    """Lower confidence bound mean - sqrt(beta) * stddev (minimization)."""
    return mean - math.sqrt(beta) * stddev


def ucb(mean, stddev, beta):
    """Upper confidence bound mean + sqrt(beta) * stddev."""
    return mean + math.sqrt(beta) * stddev


def ei(mean, stddev, best, xi: float = 0.0):
    """Expected improvement below ``best`` for minimization.

    EI = (best - xi - mean) Phi(z) + stddev phi(z) with
    z = (best - xi - mean) / stddev; at stddev = 0 this degenerates to
    max(best - xi - mean, 0).
    """
    mean = np.asarray(mean, dtype=float)
    stddev = np.asarray(stddev, dtype=float)
    gap = best - xi - mean
    positive = stddev > 0
    z = gap / np.where(positive, stddev, 1.0)
    pdf = np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    value = np.where(
        positive, gap * ndtr(z) + stddev * pdf, np.maximum(gap, 0.0)
    )
    value = np.maximum(value, 0.0)
    return float(value) if value.ndim == 0 else value


def random_golden_maximize(
    score: Callable[[np.ndarray], np.ndarray],
    lower: np.ndarray,
    upper: np.ndarray,
    rng: np.random.Generator,
    n_samples: int,
    rounds: int = 3,
    shrink: float = 0.25,
    gs_iters: int = 6,
) -> tuple[np.ndarray, float]:
    """Maximize a batch-evaluable score over a box.

    Uniform random search seeds an incumbent; then ``rounds`` passes of
    coordinate-wise golden-section refinement run in a window that shrinks
    by ``shrink`` each round. Only improvements move the incumbent, so the
    result never falls below the best random sample. Deterministic given
    the generator. Intended for low-dimensional group boxes where
    per-coordinate polish is cheap.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    dim = lower.size
    X = rng.uniform(lower, upper, size=(n_samples, dim))
    vals = np.asarray(score(X), dtype=float)
    i = int(np.argmax(vals))
    x = X[i].copy()
    fx = float(vals[i])
    window = upper - lower
    probe = x[None, :].copy()

    def eval_coord(c: int, u: float) -> float:
        probe[0] = x
        probe[0, c] = u
        return float(np.asarray(score(probe))[0])

    for _ in range(rounds):
        window = window * shrink
        for c in range(dim):
            a = max(lower[c], x[c] - window[c] / 2.0)
            b = min(upper[c], x[c] + window[c] / 2.0)
            if b <= a:
                continue
            ga = b - _GOLDEN * (b - a)
            gb = a + _GOLDEN * (b - a)
            fga = eval_coord(c, ga)
            fgb = eval_coord(c, gb)
            best_u, best_f = (ga, fga) if fga >= fgb else (gb, fgb)
            for _ in range(gs_iters):
                if fga < fgb:
                    a = ga
                    ga, fga = gb, fgb
                    gb = a + _GOLDEN * (b - a)
                    fgb = eval_coord(c, gb)
                    if fgb > best_f:
                        best_u, best_f = gb, fgb
                else:
                    b = gb
                    gb, fgb = ga, fga
                    ga = b - _GOLDEN * (b - a)
                    fga = eval_coord(c, ga)
                    if fga > best_f:
                        best_u, best_f = ga, fga
            if best_f > fx:
                x[c] = best_u
                fx = best_f
    return x, fx


def random_shrink_maximize(
    score: Callable[[np.ndarray], np.ndarray],
    lower: np.ndarray,
    upper: np.ndarray,
    rng: np.random.Generator,
    n_samples: int,
    rounds: int = 3,
    shrink: float = 0.25,
    refine_samples: int | None = None,
) -> tuple[np.ndarray, float]:
    """Maximize a batch-evaluable score by global plus local random search.

    Uniform random search seeds an incumbent; each refinement round samples
    uniformly inside a window around it that shrinks by ``shrink``, keeping
    every score call a batch. Only improvements move the incumbent.
    Deterministic given the generator. Suited to full-dimensional boxes
    where coordinate-wise polish would cost thousands of single-point
    evaluations per proposal.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    dim = lower.size
    X = rng.uniform(lower, upper, size=(n_samples, dim))
    vals = np.asarray(score(X), dtype=float)
    i = int(np.argmax(vals))
    x = X[i].copy()
    fx = float(vals[i])
    if refine_samples is None:
        refine_samples = max(n_samples // 4, 64)
    window = upper - lower
    for _ in range(rounds):
        window = window * shrink
        lo = np.maximum(lower, x - window / 2.0)
        hi = np.minimum(upper, x + window / 2.0)
        Xr = rng.uniform(lo, hi, size=(refine_samples, dim))
        vr = np.asarray(score(Xr), dtype=float)
        j = int(np.argmax(vr))
        if float(vr[j]) > fx:
            x = Xr[j].copy()
            fx = float(vr[j])
    return x, fx


def propose_group_ts(
    j: int,
    theta: np.ndarray,
    fmap: FeatureMap,
    lower: np.ndarray,
    upper: np.ndarray,
    rng: np.random.Generator,
    n_samples: int | None = None,
) -> GroupProposal:
    """Maximize the sampled group surrogate theta^T Phi^(j) over the group box.

    ``theta`` is the group's slice of the sampled weights; the engine
    negates it beforehand when minimizing.
    """
    theta = np.asarray(theta, dtype=float)
    if n_samples is None:
        n_samples = 256 * fmap.group_dim

    def score(X: np.ndarray) -> np.ndarray:
        return evaluate_features(fmap, X) @ theta

    x, value = random_golden_maximize(score, lower, upper, rng, n_samples)
    return GroupProposal(group=j, x=x, value=value)


def propose_group_analytic(
    j: int,
    kind: str,
    post: LinearPosterior,
    beta: float,
    best: float,
    lower: np.ndarray,
    upper: np.ndarray,
    rng: np.random.Generator,
    xi: float = 0.0,
    n_samples: int | None = None,
) -> GroupProposal:
    """Per-group EI or LCB proposal on the group-marginal surrogate.

    Group mean is Phi^(j)T v^(j); group variance uses the group-diagonal
    block of A^{-1}. For LCB the solver maximizes the negated bound, which
    minimizes mean - sqrt(beta) * stddev over the group box; at beta = 0
    that reduces to optimizing the group mean surrogate alone.
    """
    if kind not in ("lcb", "ei"):
        raise ValueError("analytic group proposals support 'lcb' and 'ei'")
    fmap = post.maps[j]
    sl = post.group_slice(j)
    vj = post.v[sl]
    Cj = post.group_cov_block(j)
    amp = fmap.amplitude
    sqrt_amp = math.sqrt(amp)
    nv = post.noise.noise_variance
    if n_samples is None:
        n_samples = 256 * fmap.group_dim

    def score(X: np.ndarray) -> np.ndarray:
        Phi = evaluate_features(fmap, X)
        mean = sqrt_amp * (Phi @ vj)
        var = np.maximum(nv * amp * np.sum((Phi @ Cj) * Phi, axis=1), 0.0)
        sd = np.sqrt(var)
        if kind == "lcb":
            return -(mean - math.sqrt(beta) * sd)
        return ei(mean, sd, best, xi)

    x, value = random_golden_maximize(score, lower, upper, rng, n_samples)
    return GroupProposal(group=j, x=x, value=value)


def assemble_point(proposals: list[GroupProposal], decomp: Decomposition) -> np.ndarray:
    """Concatenate per-group proposals into one full-dimensional point."""
    seen = sorted(p.group for p in proposals)
    if seen != list(range(decomp.n_groups)):
        raise ValueError("need exactly one proposal per group")
    x = np.empty(decomp.dim)
    for p in proposals:
        x[list(decomp.groups[p.group])] = p.x
    return x
