"""Straggler-resilient distributed optimization.

A library, simulator, and CLI for DSAG, a mixed synchronous-asynchronous
variance-reduced method that waits for the w fastest workers per iteration
while integrating stale results from stragglers, together with a gamma
latency model, order-statistic latency prediction, a dynamic load
balancer, and GD/SGD/SAG/coded-computing baselines, all runnable against
a virtual-clock simulated cluster.
"""

from .balancer import (
    BalancerSolution,
    LatencySample,
    ProfiledStats,
    WorkerStats,
    contribution,
    equalize_latency,
    h_min_baseline,
    optimize,
    should_distribute,
    windowed_stats,
)
from .gradient_cache import GradientCache, NoGradientError, SubgradientEntry
from .harness import (
    BalancerSettings,
    BurstEvent,
    ConfigError,
    DatasetBundle,
    ExperimentConfig,
    RunTrace,
    coded_bound_trace,
    inject_bursts,
    prepare_dataset,
    run_experiment,
    share_rows,
)
from .latency import (
    Deterministic,
    GammaParams,
    WorkerProfile,
    comp_load,
    fit_gamma_from_moments,
    pool_profiles,
    sample_total_latency,
    scale_comp_moments,
)
from .methods import (
    ProblemSpec,
    apply_update,
    gram_schmidt,
    initial_iterate,
    loss,
    optimum_oracle,
    subgradient,
)
from .order_stats import (
    IterationTimeline,
    OrderStatEstimate,
    estimate_fresh_fractions,
    mc_order_stat,
    sample_order_stat,
    simulate_iterations,
)
from .partitioning import (
    PartitionState,
    advance_index,
    align_partitions,
    p_start,
    p_stop,
    p_trans,
)

__version__ = "0.1.0"
