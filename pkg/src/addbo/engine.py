"""BO outer loops.

Latin hypercube initialization, the standard full-dimensional loop, and the
additive loop that proposes one sub-point per group and assembles them into
a single evaluation. Inputs are scaled to the unit cube and outputs
z-scored before any GP math; the scaling is frozen between hyperparameter
refits so rank-1 posterior updates stay valid.
"""

from __future__ import annotations

import csv
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from multiprocessing import get_context
from typing import Callable, Sequence

import numpy as np

from .acquisition import (
    AcquisitionSpec,
    assemble_point,
    beta_schedule,
    ei,
    propose_group_analytic,
    propose_group_ts,
    random_shrink_maximize,
)
from .gp import (
    Dataset,
    NOISE_FLOOR,
    fit_exact,
    fit_hyperparams,
    fit_linear,
    predict_exact,
    sample_ts_weights,
    update_linear,
)
from .kernels import (
    Decomposition,
    NoiseParams,
    SEKernel,
    SEKernelParams,
    SearchSpace,
    build_qff,
    sample_rff,
)

__all__ = [
    "Problem",
    "Trace",
    "TraceRecord",
    "RunSpec",
    "initial_design",
    "run_standard_bo",
    "run_additive_bo",
    "best_seen",
    "write_trace_csv",
    "build_problem",
    "execute_run",
    "run_batch",
    "DEFAULT_M",
    "STANDARD_CANDIDATE_CAP",
]

DEFAULT_M = 128
# full-space random search is 512 * d candidates, capped so very high
# dimensional problems stay tractable
STANDARD_CANDIDATE_CAP = 7168
_QFF_MAX_NODES_1D = 64
_QFF_MAX_NODES_2D = 24


@dataclass
class Problem:
    """A box-bounded objective, optionally with a group decomposition.

    ``objective`` maps a point to a float, or to a (float, feasible) pair.
    ``failure_value`` set means evaluator exceptions are recorded as
    infeasible observations at that value instead of aborting the run.
    """

    space: SearchSpace
    objective: Callable
    decomposition: Decomposition | None = None
    known_optimum: float | None = None
    name: str = "problem"
    failure_value: float | None = None


@dataclass
class TraceRecord:
    t: int
    x: np.ndarray
    y: float
    feasible: bool
    best_seen: float | None
    iter_ms: float


@dataclass
class Trace:
    """Per-evaluation history of one run plus its configuration."""

    run_id: str
    problem: str
    mode: str
    acq: str
    seed: int
    m: int
    budget: int
    n0: int
    records: list[TraceRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def best_seen_series(self) -> list[float | None]:
        return [r.best_seen for r in self.records]

    def final_best(self) -> float | None:
        return self.records[-1].best_seen if self.records else None

    def evals_to_best(self) -> int | None:
        final = self.final_best()
        if final is None:
            return None
        for r in self.records:
            if r.best_seen is not None and r.best_seen == final:
                return r.t
        return None

    def evals_to_reach(self, threshold: float) -> int | None:
        for r in self.records:
            if r.best_seen is not None and r.best_seen <= threshold:
                return r.t
        return None

    def total_ms(self) -> float:
        return float(sum(r.iter_ms for r in self.records))


def best_seen(trace: Trace) -> list[float | None]:
    """Running minimum of feasible observations; None until one exists."""
    return trace.best_seen_series()


def initial_design(n0: int, space: SearchSpace, rng: np.random.Generator) -> np.ndarray:
    """Latin hypercube design: one point in each of n0 strata per dimension."""
    if n0 < 2:
        raise ValueError("initial design needs at least two points")
    U = np.empty((n0, space.dim))
    for j in range(space.dim):
        U[:, j] = (rng.permutation(n0) + rng.random(n0)) / n0
    return space.from_unit(U)


def _as_rng(rng) -> tuple[np.random.Generator, int]:
    if isinstance(rng, np.random.Generator):
        return rng, -1
    seed = 0 if rng is None else int(rng)
    return np.random.default_rng(seed), seed


def _as_spec(acq) -> AcquisitionSpec:
    spec = AcquisitionSpec(acq) if isinstance(acq, str) else acq
    if spec.kind == "ucb":
        raise ValueError("the engine minimizes; use lcb (ucb is for maximization)")
    return spec


def _evaluate(problem: Problem, x: np.ndarray) -> tuple[float, bool]:
    try:
        out = problem.objective(x)
    except Exception:
        if problem.failure_value is None:
            raise
        return float(problem.failure_value), False
    if isinstance(out, tuple):
        y, ok = out
        return float(y), bool(ok)
    return float(out), True


def _zscore_params(ys: Sequence[float]) -> tuple[float, float]:
    arr = np.asarray(ys, dtype=float)
    mu = float(arr.mean())
    sd = float(arr.std())
    return mu, sd if sd > 1e-12 else 1.0


def _default_hyperparams(G: int) -> tuple[list[SEKernelParams], NoiseParams]:
    return [SEKernelParams(0.5, 1.0 / G) for _ in range(G)], NoiseParams(1e-4)


def _make_feature_map(group_dim, m, params, kind, rng):
    # random features are resampled at every refit, which decorrelates the
    # approximation error across the run; the deterministic quadrature
    # construction is available on request for groups it supports
    if kind not in ("auto", "rff", "qff"):
        raise ValueError(f"unknown feature kind {kind!r}")
    if kind == "qff":
        if group_dim == 1:
            return build_qff(1, min(m, _QFF_MAX_NODES_1D), params)
        if group_dim == 2:
            return build_qff(2, min(max(int(np.sqrt(m)), 1), _QFF_MAX_NODES_2D), params)
    return sample_rff(group_dim, m, params, rng)


class _History:
    """Raw evaluations plus best-seen bookkeeping shared by both loops."""

    def __init__(self, problem: Problem) -> None:
        self.problem = problem
        self.X: list[np.ndarray] = []
        self.y: list[float] = []
        self.feasible: list[bool] = []
        self.best: float | None = None
        self.records: list[TraceRecord] = []

    def observe(self, x: np.ndarray, started: float) -> None:
        y, ok = _evaluate(self.problem, x)
        self.X.append(np.asarray(x, dtype=float))
        self.y.append(y)
        self.feasible.append(ok)
        if ok and (self.best is None or y < self.best):
            self.best = y
        self.records.append(
            TraceRecord(
                t=len(self.y),
                x=self.X[-1],
                y=y,
                feasible=ok,
                best_seen=self.best,
                iter_ms=(time.perf_counter() - started) * 1e3,
            )
        )

    def scaled_dataset(self, space, ymu, ysd) -> Dataset:
        Xs = space.to_unit(np.asarray(self.X))
        yz = (np.asarray(self.y) - ymu) / ysd
        return Dataset(Xs, yz)


def run_standard_bo(
    problem: Problem,
    acq,
    budget: int,
    n0: int | None = None,
    rng=None,
    m: int = DEFAULT_M,
    refit_every: int = 10,
    run_id: str | None = None,
) -> Trace:
    """Full-dimensional BO: exact GP for LCB/EI, one full-space feature map
    for TS, acquisition optimized by capped random search plus refinement."""
    acq = _as_spec(acq)
    if budget < 1:
        raise ValueError("budget must be at least 1")
    space = problem.space
    d = space.dim
    if n0 is None:
        n0 = 2 * d + 2
    rng, seed = _as_rng(rng)
    hist = _History(problem)
    for x in initial_design(n0, space, rng):
        hist.observe(x, time.perf_counter())

    decomp = Decomposition.single(d)
    unit_lo, unit_hi = np.zeros(d), np.ones(d)
    n_cand = min(512 * d, STANDARD_CANDIDATE_CAP)
    ymu, ysd = 0.0, 1.0
    params: list[SEKernelParams] = []
    noise = NoiseParams(1e-4)
    fmap = None
    post = None
    pending = None

    for k in range(budget):
        started = time.perf_counter()
        if k % refit_every == 0:
            ymu, ysd = _zscore_params(hist.y)
            data = hist.scaled_dataset(space, ymu, ysd)
            if len(data) >= 5:
                params, noise = fit_hyperparams(data, decomp)
            else:
                params, noise = _default_hyperparams(1)
            if acq.kind == "ts":
                lin_noise = NoiseParams(max(noise.noise_variance, NOISE_FLOOR))
                fmap = sample_rff(d, m, params[0], rng)
                post = fit_linear(data, (fmap,), decomp, lin_noise)
        elif acq.kind == "ts" and pending is not None:
            post = update_linear(post, pending[0], pending[1])

        beta = beta_schedule(k + 1, d, acq.delta)
        if acq.kind == "ts":
            theta = sample_ts_weights(post, rng)

            def score(U, _post=post, _theta=theta):
                return -(_post.features(U) @ _theta)

        else:
            kernel = SEKernel(params[0])
            epost = fit_exact(hist.scaled_dataset(space, ymu, ysd), kernel, noise)
            if acq.kind == "lcb":

                def score(U, _p=epost, _b=beta):
                    mean, var = predict_exact(_p, U)
                    return -(mean - np.sqrt(_b) * np.sqrt(var))

            else:
                best_z = (min(hist.y) - ymu) / ysd

                def score(U, _p=epost, _bz=best_z):
                    mean, var = predict_exact(_p, U)
                    return ei(mean, np.sqrt(var), _bz, acq.xi)

        child = rng.spawn(1)[0]
        u, _ = random_shrink_maximize(score, unit_lo, unit_hi, child, n_cand)
        x_raw = space.from_unit(u)
        hist.observe(x_raw, started)
        pending = (u, (hist.y[-1] - ymu) / ysd)

    return Trace(
        run_id=run_id or f"{problem.name}-standard-{acq.kind}-s{seed}",
        problem=problem.name,
        mode="standard",
        acq=acq.kind,
        seed=seed,
        m=m,
        budget=budget,
        n0=n0,
        records=hist.records,
    )


def run_additive_bo(
    problem: Problem,
    acq,
    budget: int,
    n0: int | None = None,
    rng=None,
    m: int = DEFAULT_M,
    feature_kind: str = "auto",
    refit_every: int = 10,
    run_id: str | None = None,
) -> Trace:
    """Additive BO: linear posterior on stacked group features, one proposal
    per group per iteration, a single objective evaluation of the assembled
    point."""
    acq = _as_spec(acq)
    if budget < 1:
        raise ValueError("budget must be at least 1")
    if problem.decomposition is None:
        raise ValueError("additive mode requires a problem decomposition")
    decomp = problem.decomposition
    space = problem.space
    if n0 is None:
        n0 = 10
    rng, seed = _as_rng(rng)
    hist = _History(problem)
    for x in initial_design(n0, space, rng):
        hist.observe(x, time.perf_counter())

    G = decomp.n_groups
    ymu, ysd = 0.0, 1.0
    maps = None
    post = None
    pending = None

    for k in range(budget):
        started = time.perf_counter()
        if k % refit_every == 0:
            ymu, ysd = _zscore_params(hist.y)
            data = hist.scaled_dataset(space, ymu, ysd)
            if len(data) >= 5:
                params, noise = fit_hyperparams(data, decomp)
            else:
                params, noise = _default_hyperparams(G)
            lin_noise = NoiseParams(max(noise.noise_variance, NOISE_FLOOR))
            maps = tuple(
                _make_feature_map(len(g), m, params[j], feature_kind, rng)
                for j, g in enumerate(decomp.groups)
            )
            post = fit_linear(data, maps, decomp, lin_noise)
        else:
            post = update_linear(post, pending[0], pending[1])

        beta = beta_schedule(k + 1, decomp.effective_dim, acq.delta)
        if acq.kind == "ts":
            theta = sample_ts_weights(post, rng)
        else:
            best_z = (min(hist.y) - ymu) / ysd
        children = rng.spawn(G)
        proposals = []
        for j, g in enumerate(decomp.groups):
            lo, hi = np.zeros(len(g)), np.ones(len(g))
            if acq.kind == "ts":
                theta_j = -theta[post.group_slice(j)]  # minimize the sample
                proposals.append(
                    propose_group_ts(j, theta_j, maps[j], lo, hi, children[j])
                )
            else:
                proposals.append(
                    propose_group_analytic(
                        j, acq.kind, post, beta, best_z, lo, hi, children[j], acq.xi
                    )
                )
        u = assemble_point(proposals, decomp)
        x_raw = space.from_unit(u)
        hist.observe(x_raw, started)
        pending = (u, (hist.y[-1] - ymu) / ysd)

    return Trace(
        run_id=run_id or f"{problem.name}-additive-{acq.kind}-s{seed}",
        problem=problem.name,
        mode="additive",
        acq=acq.kind,
        seed=seed,
        m=m,
        budget=budget,
        n0=n0,
        records=hist.records,
    )


def _fmt(v: float) -> str:
    return repr(float(v))


def write_trace_csv(traces: Sequence[Trace], path) -> None:
    """One row per evaluation: run_id, mode, acq, seed, t, x_1..x_d, y,
    feasible, best_seen, iter_ms."""
    if not traces:
        raise ValueError("no traces to write")
    d = traces[0].records[0].x.size
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["run_id", "mode", "acq", "seed", "t"]
            + [f"x_{i + 1}" for i in range(d)]
            + ["y", "feasible", "best_seen", "iter_ms"]
        )
        for tr in traces:
            for r in tr.records:
                w.writerow(
                    [tr.run_id, tr.mode, tr.acq, tr.seed, r.t]
                    + [_fmt(v) for v in r.x]
                    + [
                        _fmt(r.y),
                        int(r.feasible),
                        "none" if r.best_seen is None else _fmt(r.best_seen),
                        _fmt(r.iter_ms),
                    ]
                )


@dataclass(frozen=True)
class RunSpec:
    """Self-contained description of one run, safe to ship to a worker."""

    problem: str = "styblinski_tang"
    dim: int = 10
    mode: str = "additive"
    acq: str = "ts"
    seed: int = 0
    budget: int = 100
    n0: int | None = None
    m: int = DEFAULT_M
    feature_kind: str = "auto"
    delta: float = 0.1
    xi: float = 0.0
    wdn_config: str | None = None
    refit_every: int = 10

    @property
    def run_id(self) -> str:
        return f"{self.problem}-{self.mode}-{self.acq}-s{self.seed}"


def build_problem(spec: RunSpec) -> Problem:
    if spec.problem == "watersim":
        from .watersim import default_config, load_config, pso_problem

        cfg = load_config(spec.wdn_config) if spec.wdn_config else default_config()
        return pso_problem(cfg)
    from .benchmarks import benchmark_problem

    return benchmark_problem(spec.problem, spec.dim)


def execute_run(spec: RunSpec) -> Trace:
    problem = build_problem(spec)
    acq = AcquisitionSpec(spec.acq, delta=spec.delta, xi=spec.xi)
    kwargs = dict(
        problem=problem,
        acq=acq,
        budget=spec.budget,
        n0=spec.n0,
        rng=spec.seed,
        m=spec.m,
        refit_every=spec.refit_every,
        run_id=spec.run_id,
    )
    if spec.mode == "standard":
        return run_standard_bo(**kwargs)
    if spec.mode == "additive":
        return run_additive_bo(feature_kind=spec.feature_kind, **kwargs)
    raise ValueError(f"unknown mode {spec.mode!r}")


def _init_worker() -> None:
    # keep BLAS single-threaded inside workers
    os.environ.setdefault("OMP_NUM_THREADS", "1")
    os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")


def run_batch(specs: Sequence[RunSpec], jobs: int | None = None) -> list[Trace]:
    """Execute independent runs, in parallel processes when jobs > 1."""
    if jobs is None:
        jobs = os.cpu_count() or 1
    if jobs <= 1 or len(specs) <= 1:
        return [execute_run(s) for s in specs]
    ctx = get_context("spawn")
    with ProcessPoolExecutor(
        max_workers=min(jobs, len(specs)), mp_context=ctx, initializer=_init_worker
    ) as ex:
        return list(ex.map(execute_run, specs))
