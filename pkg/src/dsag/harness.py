"""Virtual-clock cluster simulator.

Workers are simulated (latency is drawn from per-worker models, bursts can
inflate it for scheduled intervals) but the optimization math is real: each
delivered result is the exact subgradient over the rows the worker
processed, evaluated at the iterate version it was processing. The
coordinator runs GD, SGD, SAG, or DSAG on top of the same dispatch engine,
optionally with the dynamic load balancer, and the whole run is
deterministic given the config seed.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import balancer as lb
from .gradient_cache import GradientCache, SubgradientEntry
from .latency import WorkerProfile, scale_dist
from .methods import (
    ProblemSpec,
    apply_update,
    initial_iterate,
    loss,
    optimum_oracle,
    subgradient,
)
from .partitioning import advance_index, align_partitions, p_start, p_stop

__all__ = [
    "BurstEvent",
    "BalancerSettings",
    "ExperimentConfig",
    "RunTrace",
    "run_experiment",
    "coded_bound_trace",
    "inject_bursts",
    "prepare_dataset",
    "DatasetBundle",
    "ConfigError",
]

METHODS = ("gd", "sgd", "sag", "dsag", "coded")


class ConfigError(ValueError):
    """Raised for inconsistent experiment configurations."""


@dataclass(frozen=True)
class BurstEvent:
    """Temporary multiplicative inflation of one worker's computation latency."""

    worker_id: int
    start: float
    end: float
    comp_mean_scale: float

    def __post_init__(self):
        if not self.start < self.end:
            raise ValueError("burst must have start < end")
        if self.comp_mean_scale <= 0:
            raise ValueError("comp_mean_scale must be positive")


@dataclass(frozen=True)
class BalancerSettings:
    enabled: bool = False
    threshold: float = 0.10
    cadence: int = 10
    window_s: float = 10.0
    sim_budget: int = 100
    delay_s: float = 0.0
    count_margin_fresh: bool = True


@dataclass(frozen=True)
class ExperimentConfig:
    """Declarative description of one simulated run.

    ``subpartitions`` is the initial per-worker count (scalar or one per
    worker). gd and coded are full-gradient methods: they are normalized to
    w = N, margin 0, and one subpartition per worker.
    """

    method: str
    problem: ProblemSpec
    profiles: tuple[WorkerProfile, ...]
    w: int
    margin: float = 0.02
    subpartitions: int | tuple[int, ...] = 1
    bursts: tuple[BurstEvent, ...] = ()
    balancer: BalancerSettings = field(default_factory=BalancerSettings)
    iterations: int = 100
    time_budget_s: float = math.inf
    code_rate: float | None = None
    seed: int = 0

    @property
    def num_workers(self) -> int:
        return len(self.profiles)

    def validate(self) -> "ExperimentConfig":
        if self.method not in METHODS:
            raise ConfigError(f"method: unknown method {self.method!r}")
        n_workers = self.num_workers
        if n_workers < 1:
            raise ConfigError("latency.workers: need at least one worker")
        cfg = self
        if self.method in ("gd", "coded"):
            # Full-gradient baselines: synchronous, no margin, whole shares,
            # and no re-partitioning underneath them.
            cfg = replace(
                cfg,
                w=n_workers,
                margin=0.0,
                subpartitions=1,
                balancer=replace(cfg.balancer, enabled=False),
            )
        if not 1 <= cfg.w <= n_workers:
            raise ConfigError(f"method.w: w={cfg.w} out of range [1, {n_workers}]")
        if cfg.margin < 0:
            raise ConfigError("method.margin: must be nonnegative")
        if cfg.method == "coded":
            if cfg.code_rate is None or not 0 < cfg.code_rate <= 1:
                raise ConfigError("method.code_rate: must be in (0, 1]")
        p0 = cfg.p0_vector()
        n = cfg.problem.n
        shares = [share_rows(n, n_workers, i) for i in range(1, n_workers + 1)]
        for i, ((a, b), p) in enumerate(zip(shares, p0)):
            n_i = b - a + 1
            if n_i < 1:
                raise ConfigError(f"problem.n: worker {i} has no rows (n={n} too small)")
            if not 1 <= p <= n_i:
                raise ConfigError(
                    f"run.subpartitions: p0={p} out of range [1, {n_i}] for worker {i}"
                )
        if cfg.iterations < 1:
            raise ConfigError("run.iterations: must be >= 1")
        if cfg.balancer.cadence < 1:
            raise ConfigError("balancer.cadence: must be >= 1")
        return cfg

    def p0_vector(self) -> np.ndarray:
        if isinstance(self.subpartitions, int):
            return np.full(self.num_workers, self.subpartitions, dtype=int)
        return np.asarray(self.subpartitions, dtype=int)


@dataclass
class RunTrace:
    """Per-iteration record of one run.

    suboptimality[t] is F(V) - F(V*) for the iterate produced by iteration
    t, timestamped at that iteration's window close. worker_comm/worker_comp
    hold the latency breakdown of each worker's most recent completed task
    in that iteration (nan when the worker delivered nothing).
    """

    iterations: np.ndarray
    times: np.ndarray
    suboptimality: np.ndarray
    xi: np.ndarray
    fresh_counts: np.ndarray
    fresh_flags: np.ndarray
    p_vectors: np.ndarray
    worker_comm: np.ndarray
    worker_comp: np.ndarray
    optimum_value: float


def share_rows(n: int, num_workers: int, worker: int) -> tuple[int, int]:
    """Global 1-based row range stored by the given worker (1-based index)."""
    return p_start(n, num_workers, worker), p_stop(n, num_workers, worker)


def inject_bursts(
    profiles: list[WorkerProfile] | tuple[WorkerProfile, ...],
    events: list[BurstEvent] | tuple[BurstEvent, ...],
    at_time: float,
) -> list[WorkerProfile]:
    """Profiles with computation latency inflated by the bursts active at
    ``at_time``; overlapping bursts on one worker multiply."""
    out = []
    for prof in profiles:
        s = _burst_scale(events, prof.worker_id, at_time)
        out.append(replace(prof, comp=scale_dist(prof.comp, s)) if s != 1.0 else prof)
    return out


def _burst_scale(bursts, worker_id: int, at_time: float) -> float:
    s = 1.0
    for ev in bursts:
        if ev.worker_id == worker_id and ev.start <= at_time < ev.end:
            s *= ev.comp_mean_scale
    return s


@dataclass
class _Task:
    tag: int
    iterate: np.ndarray
    p_new: int | None = None


@dataclass
class _Worker:
    index: int
    profile: WorkerProfile
    first_row: int
    last_row: int
    p: int
    k: int
    stream: np.random.Generator
    pending: _Task | None = None
    running: _Task | None = None
    rows: tuple[int, int] = (0, 0)
    start_time: float = 0.0
    comm_s: float = 0.0
    comp_s: float = 0.0
    total_s: float = 0.0

    @property
    def n_local(self) -> int:
        return self.last_row - self.first_row + 1


def run_experiment(config: ExperimentConfig) -> RunTrace:
    """Simulate one experiment and return its trace.

    Per iteration: the current iterate is dispatched to every worker (a
    pending undelivered task is replaced), completions are processed in
    time order, and the iteration closes a margin after the w-th fresh
    result. Aggregation is method specific: GD sums everything (all results
    are fresh), SGD uses only this iteration's fresh results scaled by the
    inverse of the row fraction they cover, SAG additionally caches them,
    and DSAG also feeds stale arrivals through the cache.
    """
    config = config.validate()
    if config.method == "coded":
        gd_trace = run_experiment(replace(config, method="gd"))
        return coded_bound_trace(gd_trace, config.code_rate)

    spec = config.problem
    n = spec.n
    num_workers = config.num_workers
    root = np.random.default_rng(config.seed)
    data_rng, iterate_rng, worker_parent, balancer_rng = root.spawn(4)
    worker_streams = worker_parent.spawn(num_workers)

    p0 = config.p0_vector()
    workers = []
    for i in range(num_workers):
        a, b = share_rows(n, num_workers, i + 1)
        workers.append(
            _Worker(
                index=i,
                profile=config.profiles[i],
                first_row=a,
                last_row=b,
                p=int(p0[i]),
                # Initialized so the first advance lands on subpartition 1.
                k=int(p0[i]),
                stream=worker_streams[i],
            )
        )

    optimum = optimum_oracle(spec)
    V = initial_iterate(spec, iterate_rng)
    cache = GradientCache(n) if config.method in ("sag", "dsag") else None

    heap: list[tuple[float, int]] = []
    clock = 0.0
    ell = config.iterations

    trace_iter = np.arange(1, ell + 1)
    times = np.full(ell, np.nan)
    subopt = np.full(ell, np.nan)
    xi_col = np.full(ell, np.nan)
    fresh_counts = np.zeros(ell, dtype=int)
    fresh_flags = np.zeros((ell, num_workers), dtype=bool)
    p_vectors = np.zeros((ell, num_workers), dtype=int)
    worker_comm = np.full((ell, num_workers), np.nan)
    worker_comp = np.full((ell, num_workers), np.nan)

    profiler_samples: list[lb.LatencySample] = []
    pending_repartition: dict[int, int] = {}
    scheduled_repartition: tuple[float, dict[int, int]] | None = None
    h_min: float | None = None

    def start_task(wk: _Worker, task: _Task, now: float) -> None:
        if task.p_new is not None and task.p_new != wk.p:
            wk.k = align_partitions(wk.n_local, wk.p, task.p_new, wk.k)
            wk.p = task.p_new
        else:
            wk.k = advance_index(wk.k, wk.p)
        a = wk.first_row + p_start(wk.n_local, wk.p, wk.k) - 1
        b = wk.first_row + p_stop(wk.n_local, wk.p, wk.k) - 1
        load_ratio = (b - a + 1) / wk.n_local
        scale = load_ratio * _burst_scale(config.bursts, wk.index, now)
        comp = scale_dist(wk.profile.comp, scale) if scale != 1.0 else wk.profile.comp
        wk.comm_s = float(wk.profile.comm.sample(wk.stream))
        wk.comp_s = float(comp.sample(wk.stream))
        wk.total_s = wk.comm_s + wk.comp_s
        wk.rows = (a, b)
        wk.start_time = now
        wk.running = task
        heapq.heappush(heap, (now + wk.total_s, wk.index))

    actual_iterations = ell
    for t in range(1, ell + 1):
        s_t = clock
        if scheduled_repartition is not None and clock >= scheduled_repartition[0]:
            pending_repartition.update(scheduled_repartition[1])
            scheduled_repartition = None
        for wk in workers:
            task = _Task(tag=t, iterate=V, p_new=pending_repartition.pop(wk.index, None))
            if wk.running is None:
                start_task(wk, task, s_t)
            else:
                if task.p_new is None and wk.pending is not None:
                    # Carry an undelivered re-partition message forward.
                    task.p_new = wk.pending.p_new
                wk.pending = task

        fresh = 0
        window_close = None
        sgd_sum = None
        sgd_rows = 0
        gd_sum = None
        while heap and (window_close is None or heap[0][0] <= window_close):
            finish, i = heapq.heappop(heap)
            wk = workers[i]
            task = wk.running
            wk.running = None
            a, b = wk.rows
            value = subgradient(spec, task.iterate, a, b)
            if config.balancer.enabled:
                profiler_samples.append(
                    lb.LatencySample(
                        worker_id=i, timestamp=finish, comm=wk.comm_s, comp=wk.comp_s, p=wk.p
                    )
                )
            worker_comm[t - 1, i] = wk.comm_s
            worker_comp[t - 1, i] = wk.comp_s
            is_fresh = task.tag == t
            if is_fresh:
                fresh += 1
                fresh_flags[t - 1, i] = True
                if fresh == config.w and window_close is None:
                    elapsed = (wk.start_time - s_t) + wk.total_s
                    window_close = s_t + (1.0 + config.margin) * elapsed
            if config.method == "gd":
                gd_sum = value if gd_sum is None else gd_sum + value
            elif config.method == "sgd":
                if is_fresh:
                    sgd_sum = value if sgd_sum is None else sgd_sum + value
                    sgd_rows += b - a + 1
            elif config.method == "sag":
                if is_fresh:
                    cache.try_insert(SubgradientEntry(a, b, t, value))
            else:  # dsag
                cache.try_insert(SubgradientEntry(a, b, task.tag, value))
            if wk.pending is not None:
                start_task(wk, wk.pending, finish)
                wk.pending = None

        clock = window_close
        fresh_counts[t - 1] = fresh

        if config.method == "gd":
            H, xi = gd_sum, 1.0
        elif config.method == "sgd":
            H, xi = sgd_sum, sgd_rows / n
        else:
            H, xi = cache.gradient_estimate()
        V = apply_update(spec, V, H, xi)

        times[t - 1] = clock
        subopt[t - 1] = loss(spec, V) - optimum.value
        xi_col[t - 1] = xi
        p_vectors[t - 1] = [wk.p for wk in workers]

        bal = config.balancer
        if bal.enabled and t % bal.cadence == 0:
            cutoff = clock - bal.window_s
            profiler_samples = [s for s in profiler_samples if s.timestamp >= cutoff]
            stats = lb.windowed_stats(
                profiler_samples,
                bal.window_s,
                clock,
                current_p={wk.index: wk.p for wk in workers},
            )
            if stats.complete_for(range(num_workers)):
                n_per_worker = np.array([wk.n_local for wk in workers])
                current_p = np.array([wk.p for wk in workers])
                sim_margin = config.margin if bal.count_margin_fresh else 0.0
                if h_min is None:
                    h_min = lb.h_min_baseline(
                        p0,
                        stats,
                        n_per_worker,
                        config.w,
                        bal.sim_budget,
                        balancer_rng.spawn(1)[0],
                        margin=sim_margin,
                    )
                candidate = lb.optimize(
                    current_p,
                    stats,
                    h_min,
                    config.w,
                    n_per_worker,
                    bal.sim_budget,
                    balancer_rng.spawn(1)[0],
                    margin=sim_margin,
                )
                if candidate.diagnostic is None:
                    current = lb.predicted_solution(current_p, stats)
                    if lb.should_distribute(current, candidate, bal.threshold):
                        changes = {
                            i: int(candidate.p[i])
                            for i in range(num_workers)
                            if candidate.p[i] != current_p[i]
                        }
                        if changes:
                            if bal.delay_s > 0:
                                scheduled_repartition = (clock + bal.delay_s, changes)
                            else:
                                pending_repartition.update(changes)

        if clock >= config.time_budget_s:
            actual_iterations = t
            break

    sl = slice(0, actual_iterations)
    return RunTrace(
        iterations=trace_iter[sl],
        times=times[sl],
        suboptimality=subopt[sl],
        xi=xi_col[sl],
        fresh_counts=fresh_counts[sl],
        fresh_flags=fresh_flags[sl],
        p_vectors=p_vectors[sl],
        worker_comm=worker_comm[sl],
        worker_comp=worker_comp[sl],
        optimum_value=optimum.value,
    )


def coded_bound_trace(gd_trace: RunTrace, rate: float) -> RunTrace:
    """Idealized coded-computing bound derived from a GD trace.

    Assumes an MDS code with zero decoding cost: each iteration's latency is
    that of the ceil(rate*N)-th fastest worker after scaling every worker's
    computation latency by 1/rate; the convergence curve is GD's.
    """
    if not 0 < rate <= 1:
        raise ValueError(f"code rate must be in (0, 1], got {rate}")
    comm = gd_trace.worker_comm
    comp = gd_trace.worker_comp
    if np.isnan(comm).any() or np.isnan(comp).any():
        raise ValueError("GD trace must retain the full per-worker latency breakdown")
    num_workers = comm.shape[1]
    # Tolerate float dust in rate*N (e.g. rates given as ratios of ints).
    wait_for = math.ceil(rate * num_workers - 1e-9)
    scaled = comm + comp / rate
    per_iteration = np.sort(scaled, axis=1)[:, wait_for - 1]
    times = np.cumsum(per_iteration)
    return replace(gd_trace, times=times)


@dataclass(frozen=True)
class DatasetBundle:
    spec: ProblemSpec
    planted: np.ndarray | None = None


def prepare_dataset(
    kind: str,
    n: int,
    d: int,
    seed: int,
    components: int = 3,
    label_noise: float = 1.0,
    row_tail: float = 1.0,
    stepsize: float | None = None,
) -> DatasetBundle:
    """Synthetic desk-scale dataset.

    logreg: Gaussian features with lognormal per-row scales (row_tail is
    the log standard deviation; 0 gives plain Gaussian rows), labels from a
    planted coefficient vector with additive noise before the sign,
    features normalized to zero mean and unit variance, an intercept column
    of ones appended, and the regularization coefficient set to 1/n. The
    row scaling gives samples the uneven influence real datasets have, so
    that leaving a block of rows out of the learning process visibly shifts
    the optimum even at desk scale. pca: Gaussian features with a
    geometrically decaying column spectrum. Rows are randomly permuted in
    both cases.
    """
    rng = np.random.default_rng(seed)
    if kind == "logreg":
        X = rng.standard_normal((n, d))
        if row_tail > 0:
            X *= np.exp(row_tail * rng.standard_normal(n))[:, None]
        planted = rng.standard_normal(d)
        planted *= 1.0 / np.linalg.norm(planted)
        z = X @ planted + label_noise * rng.standard_normal(n)
        labels = np.where(z >= 0, 1.0, -1.0)
        X = (X - X.mean(axis=0)) / X.std(axis=0)
        X = np.hstack([X, np.ones((n, 1))])
        perm = rng.permutation(n)
        spec = ProblemSpec(
            kind="logreg",
            X=X[perm],
            labels=labels[perm],
            reg_lambda=1.0 / n,
            stepsize=stepsize if stepsize is not None else 0.25,
            projection="identity",
        )
        return DatasetBundle(spec=spec, planted=planted)
    if kind == "pca":
        spectrum = 0.9 ** np.arange(d)
        X = rng.standard_normal((n, d)) * spectrum
        perm = rng.permutation(n)
        spec = ProblemSpec(
            kind="pca",
            X=X[perm],
            stepsize=stepsize if stepsize is not None else 0.9,
            projection="gram_schmidt",
            components=components,
        )
        return DatasetBundle(spec=spec)
    raise ValueError(f"unknown dataset kind {kind!r}")
