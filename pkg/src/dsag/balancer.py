"""Dynamic load balancing: profiling, subpartition optimization, distribution.

Three stages. A windowed profiler turns recent latency samples into
per-worker communication/computation moments. An iterative optimizer then
searches for subpartition counts that equalize expected per-worker latency
while keeping the expected per-iteration contribution h(p) at or above the
baseline, estimating h via short event-driven simulations. Finally a
distribution policy releases a new partitioning only when it improves the
predicted max/min latency ratio by more than a threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .latency import (
    Deterministic,
    WorkerProfile,
    fit_gamma_from_moments,
    scale_comp_moments,
)
from .order_stats import estimate_fresh_fractions

__all__ = [
    "LatencySample",
    "WorkerStats",
    "ProfiledStats",
    "BalancerSolution",
    "windowed_stats",
    "contribution",
    "equalize_latency",
    "optimize",
    "should_distribute",
    "h_min_baseline",
]

# Relative variance substituted when a window is degenerate (all samples
# equal), keeping the simulation profiles well-defined.
_DEGENERATE_CV = 1e-6
# Nudge against float dust so that exact integer ratios floor/ceil cleanly.
_EPS = 1e-9


@dataclass(frozen=True)
class LatencySample:
    """One observed request: communication and computation parts, and the
    subpartition count the worker used when processing it."""

    worker_id: int
    timestamp: float
    comm: float
    comp: float
    p: int


@dataclass(frozen=True)
class WorkerStats:
    """Windowed latency moments of one worker, normalized to observed_p."""

    e_comm: float
    v_comm: float
    e_comp: float
    v_comp: float
    observed_p: int
    sample_count: int
    degenerate: bool = False


@dataclass(frozen=True)
class ProfiledStats:
    """Per-worker windowed stats; workers with under two samples are absent."""

    workers: dict[int, WorkerStats]

    def complete_for(self, worker_ids) -> bool:
        return all(i in self.workers for i in worker_ids)


@dataclass(frozen=True)
class BalancerSolution:
    p: np.ndarray
    predicted_ratio: float
    predicted_h: float
    u: np.ndarray | None = None
    diagnostic: str | None = None


def windowed_stats(
    samples: list[LatencySample],
    window: float,
    now: float,
    current_p: dict[int, int] | None = None,
) -> ProfiledStats:
    """Sample moments over the trailing time window.

    Samples with timestamp < now - window are discarded. Computation
    latencies recorded at several subpartition counts are rescaled to the
    worker's current count (latency scales linearly with per-task work)
    before the moments are taken; workers with fewer than two in-window
    samples get no stats.
    """
    if window <= 0:
        raise ValueError("window must be positive")
    cutoff = now - window
    by_worker: dict[int, list[LatencySample]] = {}
    for s in samples:
        if s.timestamp >= cutoff:
            by_worker.setdefault(s.worker_id, []).append(s)

    workers = {}
    for wid, group in by_worker.items():
        if len(group) < 2:
            continue
        target_p = current_p.get(wid, group[-1].p) if current_p else group[-1].p
        comm = np.array([s.comm for s in group])
        comp = np.array([s.comp * (s.p / target_p) for s in group])
        e_comm, v_comm = float(comm.mean()), float(comm.var(ddof=1))
        e_comp, v_comp = float(comp.mean()), float(comp.var(ddof=1))
        workers[wid] = WorkerStats(
            e_comm=e_comm,
            v_comm=v_comm,
            e_comp=e_comp,
            v_comp=v_comp,
            observed_p=target_p,
            sample_count=len(group),
            degenerate=(v_comm == 0.0 or v_comp == 0.0),
        )
    return ProfiledStats(workers=workers)


def _dist_from_moments(mean: float, variance: float):
    if variance <= 0:
        variance = (_DEGENERATE_CV * mean) ** 2
    return fit_gamma_from_moments(mean, variance)


def _profiles_at(p: np.ndarray, stats: ProfiledStats, worker_ids) -> list[WorkerProfile]:
    profiles = []
    for idx, wid in enumerate(worker_ids):
        st = stats.workers[wid]
        e_z, v_z = st.e_comp, max(st.v_comp, (_DEGENERATE_CV * st.e_comp) ** 2)
        e_z, v_z = scale_comp_moments(e_z, v_z, st.observed_p, int(p[idx]))
        profiles.append(
            WorkerProfile(
                worker_id=wid,
                comm=_dist_from_moments(st.e_comm, st.v_comm)
                if st.e_comm > 0
                else Deterministic(0.0),
                comp=_dist_from_moments(e_z, v_z),
            )
        )
    return profiles


def _expected_latencies(p: np.ndarray, stats: ProfiledStats, worker_ids) -> np.ndarray:
    out = np.empty(len(worker_ids))
    for idx, wid in enumerate(worker_ids):
        st = stats.workers[wid]
        out[idx] = st.e_comm + st.e_comp * st.observed_p / p[idx]
    return out


def contribution(
    p: np.ndarray,
    stats: ProfiledStats,
    n_per_worker: np.ndarray,
    w: int,
    sim_budget: int = 100,
    rng: np.random.Generator | None = None,
    margin: float = 0.02,
    worker_ids=None,
) -> tuple[float, np.ndarray]:
    """Expected per-iteration contribution h(p) = sum_i u_i n_i / (p_i n).

    u_i, the fraction of iterations in which worker i delivers a fresh
    result, is estimated by event-driven simulation of sim_budget
    iterations with the workers' computation moments rescaled to the
    candidate subpartition counts.
    """
    worker_ids = list(worker_ids) if worker_ids is not None else list(range(len(p)))
    if not stats.complete_for(worker_ids):
        missing = [i for i in worker_ids if i not in stats.workers]
        raise ValueError(f"missing stats for workers {missing}")
    if rng is None:
        rng = np.random.default_rng(0)
    if w == len(worker_ids):
        u = np.ones(len(worker_ids))
    else:
        profiles = _profiles_at(p, stats, worker_ids)
        u = estimate_fresh_fractions(profiles, w, sim_budget, rng, margin=margin)
    n = float(np.sum(n_per_worker))
    h = float(np.sum(u * n_per_worker / (p * n)))
    return h, u


def h_min_baseline(
    p0: np.ndarray,
    stats: ProfiledStats,
    n_per_worker: np.ndarray,
    w: int,
    sim_budget: int = 100,
    rng: np.random.Generator | None = None,
    margin: float = 0.02,
) -> float:
    """Contribution of the initial partitioning; the optimizer's constraint."""
    h, _ = contribution(p0, stats, n_per_worker, w, sim_budget, rng, margin=margin)
    return h


def should_distribute(
    current: BalancerSolution, candidate: BalancerSolution, threshold: float = 0.10
) -> bool:
    """Release a new partitioning only on a large enough predicted gain."""
    return candidate.predicted_ratio <= (1.0 - threshold) * current.predicted_ratio


def equalize_latency(
    p: np.ndarray,
    stats: ProfiledStats,
    max_subpartitions: np.ndarray,
    worker_ids=None,
) -> np.ndarray:
    """Equalization step: p_j' = floor(e_Z,j p_j / (e_X,slowest - e_Y,j)).

    Targets every worker's expected total latency at the slowest worker's
    current one. Results are clamped to [1, n_j]; a worker whose
    communication latency alone exceeds the target gets the maximum count.
    """
    worker_ids = list(worker_ids) if worker_ids is not None else list(range(len(p)))
    p = np.asarray(p, dtype=int)
    e_x = _expected_latencies(p, stats, worker_ids)
    slowest = int(np.argmax(e_x))
    p_new = p.copy()
    for j, wid in enumerate(worker_ids):
        st = stats.workers[wid]
        denom = e_x[slowest] - st.e_comm
        if denom <= 0:
            p_new[j] = int(max_subpartitions[j])
            continue
        raw = st.e_comp * st.observed_p / denom
        p_new[j] = int(min(max(math.floor(raw + _EPS), 1), max_subpartitions[j]))
    return p_new


def optimize(
    p: np.ndarray,
    stats: ProfiledStats,
    h_min: float,
    w: int,
    n_per_worker: np.ndarray,
    sim_budget: int = 100,
    rng: np.random.Generator | None = None,
    margin: float = 0.02,
    max_subpartitions: np.ndarray | None = None,
) -> BalancerSolution:
    """Equalize expected per-worker latency subject to h(p') >= h_min.

    First every worker's subpartition count is set so its expected total
    latency matches the slowest worker's. Then, while the contribution
    constraint is violated, the fastest worker's count is lowered (more
    work per task); once satisfied, the slowest worker's count is raised
    (less work per task) until the contribution falls below 0.99*h_min,
    and the final increment is reverted so the returned solution still
    satisfies the constraint. Counts are clamped to [1, n_i] and each loop
    makes at least a unit step, capped at 10*N rounds.
    """
    if h_min <= 0:
        raise ValueError("h_min must be positive")
    worker_ids = list(range(len(p)))
    num = len(worker_ids)
    if rng is None:
        rng = np.random.default_rng(0)
    if max_subpartitions is None:
        max_subpartitions = np.asarray(n_per_worker, dtype=int)

    p = np.asarray(p, dtype=int)
    try:
        e_x = _expected_latencies(p, stats, worker_ids)
    except KeyError:
        missing = [i for i in worker_ids if i not in stats.workers]
        return BalancerSolution(
            p=p.copy(),
            predicted_ratio=math.nan,
            predicted_h=math.nan,
            diagnostic=f"missing stats for workers {missing}",
        )

    def clamp(idx: int, value: int) -> int:
        return int(min(max(value, 1), max_subpartitions[idx]))

    def eval_h(candidate: np.ndarray) -> tuple[float, np.ndarray]:
        return contribution(
            candidate, stats, n_per_worker, w, sim_budget, rng.spawn(1)[0], margin=margin
        )

    p_new = equalize_latency(p, stats, max_subpartitions, worker_ids)

    try:
        h, u = eval_h(p_new)
        # Increase the fastest worker's workload while the constraint fails.
        rounds = 0
        while h < h_min and rounds < 10 * num:
            e_x = _expected_latencies(p_new, stats, worker_ids)
            fastest = int(np.argmin(e_x))
            lowered = clamp(fastest, min(math.floor(0.99 * p_new[fastest] + _EPS), p_new[fastest] - 1))
            if lowered == p_new[fastest]:
                break
            p_new[fastest] = lowered
            h, u = eval_h(p_new)
            rounds += 1
        # Decrease the slowest worker's workload while there is slack.
        rounds = 0
        while h >= 0.99 * h_min and rounds < 10 * num:
            e_x = _expected_latencies(p_new, stats, worker_ids)
            slowest = int(np.argmax(e_x))
            raised = clamp(slowest, max(math.ceil(1.01 * p_new[slowest] - _EPS), p_new[slowest] + 1))
            if raised == p_new[slowest]:
                break
            previous = p_new.copy()
            prev_h, prev_u = h, u
            p_new[slowest] = raised
            h, u = eval_h(p_new)
            rounds += 1
            if h < 0.99 * h_min:
                # The constraint must hold for the returned solution.
                p_new, h, u = previous, prev_h, prev_u
                break
    except ValueError as err:
        return BalancerSolution(
            p=p.copy(),
            predicted_ratio=math.nan,
            predicted_h=math.nan,
            diagnostic=str(err),
        )

    e_x = _expected_latencies(p_new, stats, worker_ids)
    ratio = float(e_x.max() / e_x.min())
    return BalancerSolution(p=p_new, predicted_ratio=ratio, predicted_h=h, u=u)


def predicted_solution(
    p: np.ndarray, stats: ProfiledStats, h: float = math.nan
) -> BalancerSolution:
    """Solution record for an existing partitioning (no optimization)."""
    worker_ids = list(range(len(p)))
    e_x = _expected_latencies(np.asarray(p, dtype=int), stats, worker_ids)
    return BalancerSolution(
        p=np.asarray(p, dtype=int).copy(),
        predicted_ratio=float(e_x.max() / e_x.min()),
        predicted_h=h,
    )
