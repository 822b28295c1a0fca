"""Kernels and Fourier feature maps.

Squared-exponential (SE) kernels, additive SE kernels over disjoint
coordinate groups, Gram-matrix construction, and two Fourier feature
constructions (random and quadrature) whose evaluations have unit
Euclidean norm, the property the feature-space posterior relies on.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "SearchSpace",
    "Decomposition",
    "SEKernelParams",
    "NoiseParams",
    "SEKernel",
    "AdditiveSEKernel",
    "FeatureMap",
    "se_kernel",
    "additive_kernel",
    "build_gram",
    "sample_rff",
    "build_qff",
    "evaluate_features",
]


@dataclass(frozen=True)
class SearchSpace:
    """Box-bounded search domain in R^d.

    Parameters
    ----------
    lower, upper : array_like, shape (d,)
        Componentwise bounds with ``lower[i] < upper[i]``.
    """

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self) -> None:
        lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lower.ndim != 1 or lower.shape != upper.shape:
            raise ValueError("lower and upper must be 1-D arrays of equal length")
        if lower.size < 1:
            raise ValueError("search space needs at least one dimension")
        if not np.all(lower < upper):
            raise ValueError("lower must be strictly below upper in every dimension")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def dim(self) -> int:
        return self.lower.size

    def to_unit(self, x: np.ndarray) -> np.ndarray:
        """Affinely map points from the box to the unit cube."""
        return (np.asarray(x, dtype=float) - self.lower) / (self.upper - self.lower)

    def from_unit(self, u: np.ndarray) -> np.ndarray:
        """Inverse of :meth:`to_unit`; clipped to the box for float safety."""
        x = self.lower + np.asarray(u, dtype=float) * (self.upper - self.lower)
        return np.clip(x, self.lower, self.upper)

    def contains(self, x: np.ndarray, atol: float = 1e-9) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - atol) and np.all(x <= self.upper + atol))


@dataclass(frozen=True)
class Decomposition:
    """Disjoint coordinate groups covering {0, ..., d-1}.

    ``effective_dim`` is the size of the largest group, which governs how
    hard each per-group subproblem is.
    """

    groups: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        groups = tuple(tuple(int(i) for i in g) for g in self.groups)
        if len(groups) < 1 or any(len(g) == 0 for g in groups):
            raise ValueError("need at least one group and every group nonempty")
        flat = [i for g in groups for i in g]
        if len(set(flat)) != len(flat):
            raise ValueError("groups must be pairwise disjoint")
        if set(flat) != set(range(len(flat))):
            raise ValueError("groups must cover exactly the coordinates 0..d-1")
        object.__setattr__(self, "groups", groups)

    @property
    def dim(self) -> int:
        return sum(len(g) for g in self.groups)

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    @property
    def effective_dim(self) -> int:
        return max(len(g) for g in self.groups)

    @staticmethod
    def coordinates(d: int) -> "Decomposition":
        """One singleton group per coordinate."""
        return Decomposition(tuple((i,) for i in range(d)))

    @staticmethod
    def single(d: int) -> "Decomposition":
        """A single group holding every coordinate."""
        return Decomposition((tuple(range(d)),))


@dataclass(frozen=True)
class SEKernelParams:
    """Lengthscale and amplitude of one SE kernel."""

    lengthscale: float
    amplitude: float = 1.0

    def __post_init__(self) -> None:
        if not self.lengthscale > 0:
            raise ValueError("lengthscale must be positive")
        if not self.amplitude > 0:
            raise ValueError("amplitude must be positive")


@dataclass(frozen=True)
class NoiseParams:
    """Observation noise; the mean is fixed to zero."""

    noise_variance: float
    noise_mean: float = 0.0

    def __post_init__(self) -> None:
        if self.noise_variance < 0:
            raise ValueError("noise variance must be nonnegative")
        if self.noise_mean != 0.0:
            raise ValueError("noise mean is fixed to zero")


def _as_matrix(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x[None, :] if x.ndim == 1 else x


def _sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances, clipped at zero."""
    aa = np.sum(a * a, axis=1)[:, None]
    bb = np.sum(b * b, axis=1)[None, :]
    return np.maximum(aa + bb - 2.0 * (a @ b.T), 0.0)


@dataclass(frozen=True)
class SEKernel:
    """Vectorized SE kernel k(x, x') = amplitude * exp(-||x-x'||^2 / (2 l^2))."""

    params: SEKernelParams

    @property
    def amplitude(self) -> float:
        return self.params.amplitude

    def __call__(self, X: np.ndarray, X2: np.ndarray | None = None) -> np.ndarray:
        X = _as_matrix(X)
        X2 = X if X2 is None else _as_matrix(X2)
        d2 = _sq_dists(X, X2)
        return self.params.amplitude * np.exp(-d2 / (2.0 * self.params.lengthscale**2))


@dataclass(frozen=True)
class AdditiveSEKernel:
    """Sum of SE kernels restricted to the groups of a decomposition."""

    decomp: Decomposition
    group_params: tuple[SEKernelParams, ...]

    def __post_init__(self) -> None:
        if len(self.group_params) != self.decomp.n_groups:
            raise ValueError("need one SEKernelParams per group")
        object.__setattr__(self, "group_params", tuple(self.group_params))

    @property
    def amplitude(self) -> float:
        return sum(p.amplitude for p in self.group_params)

    def __call__(self, X: np.ndarray, X2: np.ndarray | None = None) -> np.ndarray:
        X = _as_matrix(X)
        X2 = X if X2 is None else _as_matrix(X2)
        out = np.zeros((X.shape[0], X2.shape[0]))
        for g, p in zip(self.decomp.groups, self.group_params):
            idx = list(g)
            d2 = _sq_dists(X[:, idx], X2[:, idx])
            out += p.amplitude * np.exp(-d2 / (2.0 * p.lengthscale**2))
        return out


def se_kernel(x: np.ndarray, x2: np.ndarray, params: SEKernelParams) -> float:
    """SE kernel value between two points."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    if x.shape != x2.shape:
        raise ValueError("points must have the same dimension")
    d2 = float(np.sum((x - x2) ** 2))
    return params.amplitude * float(np.exp(-d2 / (2.0 * params.lengthscale**2)))


def additive_kernel(
    x: np.ndarray,
    x2: np.ndarray,
    decomp: Decomposition,
    group_params: Sequence[SEKernelParams],
) -> float:
    """Sum over groups of the SE kernel restricted to each group's coordinates."""
    if len(group_params) != decomp.n_groups:
        raise ValueError("need one SEKernelParams per group")
    x = np.asarray(x, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    total = 0.0
    for g, p in zip(decomp.groups, group_params):
        idx = list(g)
        total += se_kernel(x[idx], x2[idx], p)
    return total


def build_gram(points: Sequence[np.ndarray] | np.ndarray, kernel: Callable) -> np.ndarray:
    """Gram matrix K[i, j] = kernel(x_i, x_j) over a list of points.

    ``kernel`` is either one of the vectorized kernel classes above or a
    plain pairwise callable of two points.
    """
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] < 1:
        raise ValueError("need at least one point")
    if isinstance(kernel, (SEKernel, AdditiveSEKernel)):
        return kernel(X)
    t = X.shape[0]
    K = np.empty((t, t))
    for i in range(t):
        for j in range(i, t):
            K[i, j] = K[j, i] = kernel(X[i], X[j])
    return K


@dataclass(frozen=True)
class FeatureMap:
    """Fourier feature map for one coordinate group.

    Evaluations are 2m-vectors of paired cosine and sine features with unit
    Euclidean norm. ``amplitude`` records the kernel amplitude the map was
    built for; it is applied by the posterior, not here, so the norm
    property is preserved.
    """

    group_dim: int
    m: int
    frequencies: np.ndarray
    kind: str
    quadrature_weights: np.ndarray | None = None
    amplitude: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in ("random", "quadrature"):
            raise ValueError("kind must be 'random' or 'quadrature'")
        W = np.asarray(self.frequencies, dtype=float)
        if W.shape != (self.m, self.group_dim):
            raise ValueError("frequencies must have shape (m, group_dim)")
        object.__setattr__(self, "frequencies", W)
        if self.kind == "quadrature":
            if self.quadrature_weights is None:
                raise ValueError("quadrature maps need weights")
            lam = np.asarray(self.quadrature_weights, dtype=float)
            if lam.shape != (self.m,):
                raise ValueError("quadrature weights must have shape (m,)")
            object.__setattr__(self, "quadrature_weights", lam)
            object.__setattr__(self, "_sqrt_weights", np.sqrt(lam))

    @property
    def n_features(self) -> int:
        return 2 * self.m


def sample_rff(
    group_dim: int, m: int, params: SEKernelParams, rng: np.random.Generator
) -> FeatureMap:
    """Random Fourier features for the SE kernel.

    Frequencies are drawn i.i.d. from N(0, I / lengthscale^2), the SE
    spectral density. The map is Phi(x) = (1/sqrt(m)) [cos(Wx); sin(Wx)],
    so ||Phi(x)|| = 1 exactly for every x.
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    W = rng.normal(0.0, 1.0 / params.lengthscale, size=(m, group_dim))
    return FeatureMap(
        group_dim=group_dim,
        m=m,
        frequencies=W,
        kind="random",
        amplitude=params.amplitude,
    )


def build_qff(group_dim: int, nodes_per_dim: int, params: SEKernelParams) -> FeatureMap:
    """Quadrature Fourier features from Gauss-Hermite nodes.

    Frequencies are GH nodes scaled by sqrt(2)/lengthscale (tensor product
    in 2-D); weights are the GH weights normalized to sum to one. Evaluated
    features are weighted cos/sin pairs renormalized to unit norm.
    """
    if group_dim > 2:
        raise ValueError("quadrature features support group dimension <= 2")
    if nodes_per_dim < 1:
        raise ValueError("nodes_per_dim must be at least 1")
    u, a = np.polynomial.hermite.hermgauss(nodes_per_dim)
    lam1 = a / np.sqrt(np.pi)
    scale = np.sqrt(2.0) / params.lengthscale
    if group_dim == 1:
        W = (scale * u)[:, None]
        lam = lam1
    else:
        W = scale * np.stack(
            [np.repeat(u, nodes_per_dim), np.tile(u, nodes_per_dim)], axis=1
        )
        lam = np.outer(lam1, lam1).ravel()
    return FeatureMap(
        group_dim=group_dim,
        m=W.shape[0],
        frequencies=W,
        kind="quadrature",
        quadrature_weights=lam,
        amplitude=params.amplitude,
    )


def evaluate_features(fmap: FeatureMap, x: np.ndarray) -> np.ndarray:
    """Evaluate the feature map at one point (dim,) or a batch (n, dim).

    Returns a vector of length 2m, or an (n, 2m) matrix, with each
    evaluation having Euclidean norm 1 (within 1e-9).
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.shape[1] != fmap.group_dim:
        raise ValueError("point dimension does not match the map's group dimension")
    Z = X @ fmap.frequencies.T
    if fmap.kind == "random":
        out = np.concatenate([np.cos(Z), np.sin(Z)], axis=1) / np.sqrt(fmap.m)
    else:
        sw = fmap._sqrt_weights  # type: ignore[attr-defined]
        out = np.concatenate([sw * np.cos(Z), sw * np.sin(Z)], axis=1)
        out /= np.linalg.norm(out, axis=1, keepdims=True)
    return out[0] if single else out
