"""Per-worker latency distributions.

The latency of one worker request is modeled as the sum of a communication
component and a computation component, each drawn from an independent gamma
distribution fitted per worker. The computation component scales linearly
with the amount of work assigned to the worker, so a distribution recorded
at one workload can be rescaled to another.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "GammaParams",
    "Deterministic",
    "WorkerProfile",
    "fit_gamma_from_moments",
    "comp_load",
    "scale_comp_moments",
    "scale_dist",
    "sample_total_latency",
    "pool_profiles",
]


@dataclass(frozen=True)
class GammaParams:
    """Shape/scale pair of a gamma-distributed latency component."""

    shape: float
    scale: float

    def __post_init__(self):
        if not (self.shape > 0 and math.isfinite(self.shape)):
            raise ValueError(f"shape must be positive and finite, got {self.shape}")
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise ValueError(f"scale must be positive and finite, got {self.scale}")

    def mean(self) -> float:
        return self.shape * self.scale

    def variance(self) -> float:
        return self.shape * self.scale * self.scale

    def sample(self, rng: np.random.Generator, size=None):
        return rng.gamma(self.shape, self.scale, size=size)


@dataclass(frozen=True)
class Deterministic:
    """Zero-variance latency component.

    Used for hand-checkable simulator tests; cannot be produced by moment
    fitting, only constructed directly. A zero value is allowed so one
    component can be switched off entirely.
    """

    value: float

    def __post_init__(self):
        if not (self.value >= 0 and math.isfinite(self.value)):
            raise ValueError(f"value must be nonnegative and finite, got {self.value}")

    def mean(self) -> float:
        return self.value

    def variance(self) -> float:
        return 0.0

    def sample(self, rng: np.random.Generator, size=None):
        if size is None:
            return self.value
        return np.full(size, self.value)


# Either gamma or the degenerate point mass.
LatencyDist = GammaParams | Deterministic


@dataclass(frozen=True)
class WorkerProfile:
    """Communication and computation latency distributions of one worker.

    ``comp`` is the computation-latency distribution at the reference
    workload ``ref_load_c`` (an operation count); sampling at another load
    rescales it linearly. ``comm`` is tied to ``bytes_b`` and is treated as
    load-independent.
    """

    worker_id: int
    comm: LatencyDist
    comp: LatencyDist
    bytes_b: int = 0
    ref_load_c: float = 1.0

    def __post_init__(self):
        if self.ref_load_c <= 0:
            raise ValueError("ref_load_c must be positive")
        if self.bytes_b < 0:
            raise ValueError("bytes_b must be nonnegative")
        if self.comm.mean() + self.comp.mean() <= 0:
            raise ValueError("total latency must have positive mean")

    def total_mean(self, load_c: float | None = None) -> float:
        ratio = 1.0 if load_c is None else load_c / self.ref_load_c
        return self.comm.mean() + self.comp.mean() * ratio


def fit_gamma_from_moments(mean: float, variance: float) -> GammaParams:
    """Fit a gamma distribution matching a sample mean and variance.

    shape = mean^2 / variance, scale = variance / mean.
    """
    if not (mean > 0):
        raise ValueError(f"mean must be positive, got {mean}")
    if not (variance > 0):
        raise ValueError(f"variance must be positive, got {variance}")
    return GammaParams(shape=mean * mean / variance, scale=variance / mean)


def comp_load(density_zeta: float, dim_d: int, cols_k: int, rows: int) -> float:
    """Operation count of multiplying a row block against a d-by-k iterate.

    c = 2 * zeta * d * k * rows.
    """
    if not (0 < density_zeta <= 1):
        raise ValueError(f"density must be in (0, 1], got {density_zeta}")
    if dim_d < 1 or cols_k < 1 or rows < 1:
        raise ValueError("dim_d, cols_k and rows must all be >= 1")
    return 2.0 * density_zeta * dim_d * cols_k * rows


def scale_comp_moments(
    e_z: float, v_z: float, p_old: int, p_new: int
) -> tuple[float, float]:
    """Rescale computation-latency moments between subpartition counts.

    Per-task work is proportional to 1/p, so the mean scales by p_old/p_new
    and the variance by its square, preserving the coefficient of variation.
    """
    if p_old < 1 or p_new < 1:
        raise ValueError("subpartition counts must be positive")
    if not (e_z > 0) or not (v_z > 0):
        raise ValueError("moments must be positive")
    ratio = p_old / p_new
    return e_z * ratio, v_z * ratio * ratio


def scale_dist(dist: LatencyDist, ratio: float) -> LatencyDist:
    """Multiply a latency distribution by a positive constant."""
    if ratio <= 0:
        raise ValueError("ratio must be positive")
    if ratio == 1.0:
        return dist
    if isinstance(dist, GammaParams):
        return replace(dist, scale=dist.scale * ratio)
    return Deterministic(dist.value * ratio)


def sample_total_latency(
    profile: WorkerProfile, load_c: float, rng: np.random.Generator
) -> float:
    """Draw one total latency sample at the given computational load.

    The computation component is rescaled linearly from the profile's
    reference load. Identical seeds give identical samples.
    """
    if load_c <= 0:
        raise ValueError("load_c must be positive")
    comp = scale_dist(profile.comp, load_c / profile.ref_load_c)
    return float(profile.comm.sample(rng)) + float(comp.sample(rng))


def _pool_moments(dists: list[LatencyDist]) -> tuple[float, float]:
    # Mixture moments under equal weights: the pooled-sample limit.
    means = np.array([d.mean() for d in dists])
    variances = np.array([d.variance() for d in dists])
    return float(means.mean()), float(variances.mean() + means.var())

def pool_profiles(profiles: list[WorkerProfile]) -> list[WorkerProfile]:
    """Replace every worker's distributions by one shared fit.

    The shared distribution matches the global mean and variance across all
    workers, i.e. the commonly adopted i.i.d. model used as a comparison
    mode for order-statistic prediction.
    """
    if not profiles:
        raise ValueError("profiles must be nonempty")
    comm_e, comm_v = _pool_moments([p.comm for p in profiles])
    comp_e, comp_v = _pool_moments([p.comp for p in profiles])
    comm = fit_gamma_from_moments(comm_e, comm_v) if comm_v > 0 else Deterministic(comm_e)
    comp = fit_gamma_from_moments(comp_e, comp_v) if comp_v > 0 else Deterministic(comp_e)
    return [replace(p, comm=comm, comp=comp) for p in profiles]
