"""Gaussian-process posteriors.

Exact Cholesky-based GP regression and the feature-space linear posterior
used by the additive engine: system matrix A_t = Phi^T Phi + sigma_eps^2 I,
weight mean v_t = A_t^{-1} Phi^T y, Thompson weight draws with covariance
sigma_eps^2 A_t^{-1}, and log-marginal-likelihood hyperparameter selection
on a small grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cholesky as _scipy_cholesky
from scipy.linalg import cho_solve, solve_triangular

from .kernels import (
    AdditiveSEKernel,
    Decomposition,
    FeatureMap,
    NoiseParams,
    SEKernelParams,
    evaluate_features,
)

__all__ = [
    "Dataset",
    "ExactPosterior",
    "LinearPosterior",
    "fit_exact",
    "predict_exact",
    "fit_linear",
    "update_linear",
    "predict_linear",
    "sample_ts_weights",
    "log_marginal_likelihood",
    "fit_hyperparams",
    "LENGTHSCALE_GRID",
    "AMPLITUDE_GRID",
    "NOISE_GRID",
    "NOISE_FLOOR",
]

LENGTHSCALE_GRID = (0.05, 0.1, 0.2, 0.5, 1.0, 2.0)
AMPLITUDE_GRID = (0.5, 1.0, 2.0)
NOISE_GRID = (1e-6, 1e-4, 1e-2)
NOISE_FLOOR = 1e-6


@dataclass
class Dataset:
    """Observed inputs (t, d) and targets (t,), in the scaled spaces."""

    points: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        X = np.asarray(self.points, dtype=float)
        y = np.asarray(self.values, dtype=float).ravel()
        if X.ndim == 1:
            X = X[:, None]
        if X.shape[0] != y.shape[0]:
            raise ValueError("points and values must have equal length")
        self.points = X
        self.values = y

    def __len__(self) -> int:
        return self.values.shape[0]

    @staticmethod
    def empty(d: int) -> "Dataset":
        return Dataset(np.empty((0, d)), np.empty(0))

    def append(self, x: np.ndarray, y: float) -> "Dataset":
        return Dataset(
            np.vstack([self.points, np.asarray(x, dtype=float)[None, :]]),
            np.append(self.values, float(y)),
        )


def _chol_with_jitter(K: np.ndarray, base_jitter: float) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of K + jitter*I with up to 3 x10 escalations."""
    jitter = base_jitter
    for attempt in range(4):
        try:
            L = _scipy_cholesky(
                K + jitter * np.eye(K.shape[0]), lower=True, check_finite=False
            )
            return L, jitter
        except np.linalg.LinAlgError:
            jitter *= 10.0
    diag = np.diag(K)
    raise np.linalg.LinAlgError(
        "Cholesky failed after jitter escalation "
        f"(final jitter {jitter:.1e}; diag range [{diag.min():.3e}, {diag.max():.3e}])"
    )


@dataclass
class ExactPosterior:
    """Cholesky-form GP posterior over a fixed dataset."""

    data: Dataset
    kernel: object
    noise: NoiseParams
    chol: np.ndarray
    alpha: np.ndarray
    jitter: float
    _k_inv: np.ndarray | None = field(default=None, repr=False)

    def k_inv(self) -> np.ndarray:
        # materialized on first predictive-variance request; per-point
        # variance then costs one GEMV instead of a triangular solve,
        # which matters when an acquisition polisher queries single points
        if self._k_inv is None:
            eye = np.eye(self.chol.shape[0])
            self._k_inv = cho_solve((self.chol, True), eye, check_finite=False)
        return self._k_inv


def fit_exact(data: Dataset, kernel, noise: NoiseParams) -> ExactPosterior:
    """Factor K + sigma_eps^2 I and precompute alpha = (K + sigma^2 I)^{-1} y."""
    if len(data) < 1:
        raise ValueError("exact posterior needs at least one observation")
    K = kernel(data.points)
    K = K + noise.noise_variance * np.eye(len(data))
    L, jitter = _chol_with_jitter(K, 1e-8 * kernel.amplitude)
    alpha = cho_solve((L, True), data.values, check_finite=False)
    return ExactPosterior(data, kernel, noise, L, alpha, jitter)


def predict_exact(post: ExactPosterior, x: np.ndarray):
    """Posterior mean and variance at one point (d,) or a batch (n, d).

    mean = k(x, X) alpha and var = k(x, x) - k(x, X) K^{-1} k(X, x), clipped
    at zero against roundoff.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    Xq = x[None, :] if single else x
    Kx = post.kernel(Xq, post.data.points)
    mean = Kx @ post.alpha
    prior = post.kernel.amplitude
    var = np.maximum(prior - np.sum((Kx @ post.k_inv()) * Kx, axis=1), 0.0)
    if single:
        return float(mean[0]), float(var[0])
    return mean, var


def log_marginal_likelihood(data: Dataset, kernel, noise: NoiseParams) -> float:
    """Gaussian log evidence -y^T alpha / 2 - sum(log diag L) - t log(2 pi)/2."""
    if len(data) < 2:
        raise ValueError("log marginal likelihood needs at least two observations")
    post = fit_exact(data, kernel, noise)
    t = len(data)
    return float(
        -0.5 * data.values @ post.alpha
        - np.sum(np.log(np.diag(post.chol)))
        - 0.5 * t * math.log(2.0 * math.pi)
    )


@dataclass
class LinearPosterior:
    """Bayesian linear regression posterior in stacked feature space.

    The global feature vector concatenates per-group maps, each block scaled
    by the square root of its group amplitude. ``chol`` holds the lower
    Cholesky factor of A_t = Psi^T Psi + sigma_eps^2 I; ``v`` solves
    A_t v = Psi^T y. Group-diagonal covariance blocks of A_t^{-1} are
    materialized lazily for the acquisitions that need them and then kept
    current through rank-1 downdates; the full inverse is never stored.
    """

    maps: tuple[FeatureMap, ...]
    decomp: Decomposition
    noise: NoiseParams
    chol: np.ndarray
    phi_y: np.ndarray
    v: np.ndarray
    t: int
    _psi: np.ndarray | None = field(default=None, repr=False)
    _cov_blocks: list[np.ndarray] | None = field(default=None, repr=False)

    @property
    def n_features(self) -> int:
        return self.chol.shape[0]

    def group_slice(self, j: int) -> slice:
        off = 0
        for k in range(j):
            off += self.maps[k].n_features
        return slice(off, off + self.maps[j].n_features)

    def features(self, X: np.ndarray) -> np.ndarray:
        """Stacked scaled features Psi with one sqrt-amplitude block per group."""
        return stacked_features(self.maps, self.decomp, X)

    def a_inv(self) -> np.ndarray:
        """Dense A_t^{-1}, recomputed on request; a diagnostic helper only."""
        eye = np.eye(self.n_features)
        return cho_solve((self.chol, True), eye, check_finite=False)

    def group_cov_block(self, j: int) -> np.ndarray:
        """Group-diagonal block of A_t^{-1}."""
        if self._cov_blocks is None:
            self._cov_blocks = self._materialize_blocks()
        return self._cov_blocks[j]

    def _materialize_blocks(self) -> list[np.ndarray]:
        # A^{-1} = (I - Psi^T (Psi Psi^T + s2 I)^{-1} Psi) / s2, so each
        # diagonal block needs only an n x n factorization of the data-space
        # Gram, far cheaper than inverting A when n << M
        s2 = self.noise.noise_variance
        psi = self._psi
        if psi is None or psi.shape[0] == 0:
            return [
                np.eye(f.n_features) / s2 for f in self.maps
            ]
        n = psi.shape[0]
        K = psi @ psi.T + s2 * np.eye(n)
        Lk = _scipy_cholesky(K, lower=True, check_finite=False)
        Z = solve_triangular(Lk, psi, lower=True, check_finite=False)
        blocks = []
        for j in range(self.decomp.n_groups):
            Zj = Z[:, self.group_slice(j)]
            blocks.append((np.eye(Zj.shape[1]) - Zj.T @ Zj) / s2)
        return blocks


def stacked_features(
    maps: tuple[FeatureMap, ...], decomp: Decomposition, X: np.ndarray
) -> np.ndarray:
    """Concatenate per-group feature evaluations, scaled by sqrt(amplitude)."""
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    blocks = []
    for fmap, g in zip(maps, decomp.groups):
        block = evaluate_features(fmap, X[:, list(g)])
        blocks.append(math.sqrt(fmap.amplitude) * block)
    out = np.concatenate(blocks, axis=1)
    return out[0] if single else out


def fit_linear(
    data: Dataset,
    maps: tuple[FeatureMap, ...],
    decomp: Decomposition,
    noise: NoiseParams,
) -> LinearPosterior:
    """Build A_t and v_t from scratch on the full dataset."""
    if noise.noise_variance <= 0:
        raise ValueError(
            "the linear posterior needs a positive noise variance "
            f"(floor {NOISE_FLOOR:g}) as a regularizer"
        )
    if len(maps) != decomp.n_groups:
        raise ValueError("need one feature map per group")
    M = sum(f.n_features for f in maps)
    if len(data) == 0:
        L = np.sqrt(noise.noise_variance) * np.eye(M)
        return LinearPosterior(
            tuple(maps), decomp, noise, L, np.zeros(M), np.zeros(M), 0,
            _psi=np.zeros((0, M)),
        )
    Psi = stacked_features(tuple(maps), decomp, data.points)
    A = Psi.T @ Psi + noise.noise_variance * np.eye(M)
    L = _scipy_cholesky(A, lower=True, check_finite=False)
    phi_y = Psi.T @ data.values
    v = cho_solve((L, True), phi_y, check_finite=False)
    return LinearPosterior(
        tuple(maps), decomp, noise, L, phi_y, v, len(data), _psi=Psi
    )


def _chol_rank1_update(L: np.ndarray, u: np.ndarray) -> None:
    """In-place update of lower L so that L L^T gains + u u^T."""
    M = L.shape[0]
    for k in range(M):
        lkk = L[k, k]
        r = math.hypot(lkk, u[k])
        c = r / lkk
        s = u[k] / lkk
        L[k, k] = r
        if k + 1 < M:
            col = (L[k + 1 :, k] + s * u[k + 1 :]) / c
            L[k + 1 :, k] = col
            u[k + 1 :] = c * u[k + 1 :] - s * col


def update_linear(post: LinearPosterior, x: np.ndarray, y: float) -> LinearPosterior:
    """Absorb one observation via a rank-1 Cholesky update.

    Mutates the posterior in place and returns it; callers hold exclusive
    ownership. Invalid across feature-map resampling, where the posterior
    must be rebuilt with :func:`fit_linear`.
    """
    psi = post.features(np.asarray(x, dtype=float))
    if post._cov_blocks is not None:
        # u = A_t^{-1} psi against the pre-update factor; the diagonal block
        # of the rank-1 correction only involves the block's own slice of u
        u = cho_solve((post.chol, True), psi, check_finite=False)
        denom = 1.0 + psi @ u
        for j in range(post.decomp.n_groups):
            uj = u[post.group_slice(j)]
            post._cov_blocks[j] -= np.outer(uj, uj) / denom
    _chol_rank1_update(post.chol, psi.copy())
    post.phi_y = post.phi_y + psi * float(y)
    post.v = cho_solve((post.chol, True), post.phi_y, check_finite=False)
    if post._psi is not None:
        post._psi = np.vstack([post._psi, psi[None, :]])
    post.t += 1
    return post


def predict_linear(post: LinearPosterior, x: np.ndarray):
    """Approximate mean Psi^T v and variance sigma_eps^2 Psi^T A^{-1} Psi."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    Psi = post.features(x[None, :] if single else x)
    mean = Psi @ post.v
    Z = solve_triangular(post.chol, Psi.T, lower=True, check_finite=False)
    var = np.maximum(post.noise.noise_variance * np.sum(Z * Z, axis=0), 0.0)
    if single:
        return float(mean[0]), float(var[0])
    return mean, var


def sample_ts_weights(post: LinearPosterior, rng: np.random.Generator) -> np.ndarray:
    """Draw theta ~ N(v_t, sigma_eps^2 A_t^{-1}) by a triangular back-solve."""
    z = rng.standard_normal(post.n_features)
    delta = solve_triangular(post.chol, z, lower=True, trans="T", check_finite=False)
    return post.v + math.sqrt(post.noise.noise_variance) * delta


def fit_hyperparams(
    data: Dataset, decomp: Decomposition
) -> tuple[list[SEKernelParams], NoiseParams]:
    """Grid-search hyperparameters by log marginal likelihood.

    Inputs are expected in [0,1]^d and outputs standardized. One shared
    lengthscale and a total amplitude split evenly across groups; ties are
    broken toward the larger lengthscale.
    """
    if len(data) < 5:
        raise ValueError("hyperparameter fitting needs at least five observations")
    X, y = data.points, data.values
    t = len(data)
    G = decomp.n_groups
    sq = []
    for g in decomp.groups:
        Xg = X[:, list(g)]
        aa = np.sum(Xg * Xg, axis=1)
        sq.append(np.maximum(aa[:, None] + aa[None, :] - 2.0 * (Xg @ Xg.T), 0.0))
    const = -0.5 * t * math.log(2.0 * math.pi)
    best = (-np.inf, None)
    for ell in LENGTHSCALE_GRID:
        S = np.zeros((t, t))
        for D2 in sq:
            S += np.exp(-D2 / (2.0 * ell * ell))
        for amp in AMPLITUDE_GRID:
            K = (amp / G) * S
            for nv in NOISE_GRID:
                try:
                    L, _ = _chol_with_jitter(K + nv * np.eye(t), 1e-8 * amp)
                except np.linalg.LinAlgError:
                    continue
                alpha = cho_solve((L, True), y, check_finite=False)
                lml = -0.5 * y @ alpha - np.sum(np.log(np.diag(L))) + const
                better = lml > best[0] + 1e-9
                tie_toward_larger_ell = (
                    abs(lml - best[0]) <= 1e-9
                    and best[1] is not None
                    and ell > best[1][0]
                )
                if better or tie_toward_larger_ell:
                    best = (lml, (ell, amp, nv))
    ell, amp, nv = best[1]
    params = [SEKernelParams(ell, amp / G) for _ in range(G)]
    return params, NoiseParams(max(nv, 0.0))
