"""Latency of the w-th fastest of N heterogeneous workers.

Two estimators: a single-round Monte Carlo order statistic, valid when all
workers are available at the start of every round, and an event-driven
simulation of the iterative process in which workers that straggle stay
busy across iteration boundaries and so keep delivering stale results.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .latency import WorkerProfile

__all__ = [
    "OrderStatEstimate",
    "IterationTimeline",
    "sample_order_stat",
    "mc_order_stat",
    "simulate_iterations",
    "estimate_fresh_fractions",
]

_CHUNK = 200_000


@dataclass(frozen=True)
class OrderStatEstimate:
    mean: float
    stderr: float
    num_samples: int


@dataclass(frozen=True)
class IterationTimeline:
    """Completion times and freshness bookkeeping of one simulated run.

    completion_times[t-1] is the time at which iteration t closed;
    fresh_counts[t-1] counts workers whose iteration-t task finished inside
    iteration t's collection window; per_worker_fresh[i] counts iterations
    in which worker i delivered a fresh result.
    """

    completion_times: np.ndarray
    fresh_counts: np.ndarray
    per_worker_fresh: np.ndarray


def _check_w(w: int, num_workers: int) -> None:
    if not 1 <= w <= num_workers:
        raise ValueError(f"w={w} out of range [1, {num_workers}]")


def sample_order_stat(
    profiles: list[WorkerProfile], w: int, num_samples: int, rng: np.random.Generator
) -> np.ndarray:
    """Draw num_samples realizations of the w-th smallest worker latency.

    One latency per worker per realization (communication plus computation
    at the profile's reference load), then linear-time selection.
    """
    _check_w(w, len(profiles))
    if num_samples < 1:
        raise ValueError("num_samples must be >= 1")
    out = np.empty(num_samples)
    done = 0
    while done < num_samples:
        m = min(_CHUNK, num_samples - done)
        lat = np.empty((len(profiles), m))
        for i, prof in enumerate(profiles):
            lat[i] = prof.comm.sample(rng, size=m) + prof.comp.sample(rng, size=m)
        out[done : done + m] = np.partition(lat, w - 1, axis=0)[w - 1]
        done += m
    return out


def mc_order_stat(
    profiles: list[WorkerProfile], w: int, num_samples: int, rng: np.random.Generator
) -> OrderStatEstimate:
    """Monte Carlo estimate of the expected w-th order statistic."""
    samples = sample_order_stat(profiles, w, num_samples, rng)
    se = float(samples.std(ddof=1) / np.sqrt(num_samples)) if num_samples > 1 else 0.0
    return OrderStatEstimate(mean=float(samples.mean()), stderr=se, num_samples=num_samples)


def simulate_iterations(
    profiles: list[WorkerProfile],
    w: int,
    num_iterations: int,
    rng: np.random.Generator,
    margin: float = 0.0,
) -> IterationTimeline:
    """Event-driven simulation of the iterative wait-for-w process.

    Workers are idle or busy and hold a task queue of length one in which a
    newly assigned task replaces any pending one. At each iteration start
    the coordinator assigns a task to every worker; a busy worker keeps
    processing its current task and picks up the pending one on completion.
    Iteration t's collection window closes at S_t + (1+margin)*(E_t - S_t),
    where S_t is the iteration start and E_t the time of the w-th completed
    iteration-t task; a task finishing exactly at the window close counts.

    Per-worker random streams are derived from ``rng``, so the k-th task
    latency of a given worker is identical across values of w (common
    random numbers).
    """
    num_workers = len(profiles)
    _check_w(w, num_workers)
    if num_iterations < 1:
        raise ValueError("num_iterations must be >= 1")
    if margin < 0:
        raise ValueError("margin must be nonnegative")
    streams = rng.spawn(num_workers)

    running_tag = [0] * num_workers  # 0 = idle, else iteration tag of the task
    pending_tag = [0] * num_workers
    heap: list[tuple[float, int]] = []

    completion_times = np.empty(num_iterations)
    fresh_counts = np.zeros(num_iterations, dtype=int)
    per_worker_fresh = np.zeros(num_workers, dtype=int)

    def start(i: int, tag: int, now: float) -> None:
        lat = float(profiles[i].comm.sample(streams[i])) + float(
            profiles[i].comp.sample(streams[i])
        )
        running_tag[i] = tag
        heapq.heappush(heap, (now + lat, i))

    clock = 0.0
    for t in range(1, num_iterations + 1):
        s_t = clock
        for i in range(num_workers):
            if running_tag[i] == 0:
                start(i, t, s_t)
            else:
                pending_tag[i] = t
        fresh = 0
        window_close = None
        while heap and (window_close is None or heap[0][0] <= window_close):
            finish, i = heapq.heappop(heap)
            tag = running_tag[i]
            running_tag[i] = 0
            if tag == t:
                fresh += 1
                per_worker_fresh[i] += 1
                if fresh == w and window_close is None:
                    window_close = s_t + (1.0 + margin) * (finish - s_t)
            if pending_tag[i]:
                start(i, pending_tag[i], finish)
                pending_tag[i] = 0
        fresh_counts[t - 1] = fresh
        clock = window_close
        completion_times[t - 1] = clock
    return IterationTimeline(
        completion_times=completion_times,
        fresh_counts=fresh_counts,
        per_worker_fresh=per_worker_fresh,
    )


def estimate_fresh_fractions(
    profiles: list[WorkerProfile],
    w: int,
    num_iterations: int,
    rng: np.random.Generator,
    margin: float = 0.0,
) -> np.ndarray:
    """Per-worker fraction of iterations with a fresh delivery."""
    timeline = simulate_iterations(profiles, w, num_iterations, rng, margin=margin)
    return timeline.per_worker_fresh / num_iterations
