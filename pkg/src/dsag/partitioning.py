"""Partition-index algebra.

All indices are 1-based. A dataset of n rows is split into p contiguous
partitions; partition i covers rows p_start(n, p, i) through
p_stop(n, p, i). Workers cycle through their local subpartitions, and when
the subpartition count changes the cycle index is realigned so that the
next chunk processed starts on an existing partition boundary.
"""

from __future__ import annotations

from dataclasses import dataclass

__all__ = [
    "PartitionState",
    "p_start",
    "p_stop",
    "p_trans",
    "advance_index",
    "align_partitions",
]


@dataclass
class PartitionState:
    """Per-worker subpartition bookkeeping: n_i rows split p_i ways, cursor k_i."""

    n: int
    p: int
    k: int

    def __post_init__(self):
        _check_np(self.n, self.p)
        if not 1 <= self.k <= self.p:
            raise ValueError(f"k={self.k} out of range [1, {self.p}]")


def _check_np(n: int, p: int) -> None:
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if not 1 <= p <= n:
        raise ValueError(f"p={p} out of range [1, {n}]")


def p_start(n: int, p: int, i: int) -> int:
    """First row of the i-th of p partitions: floor((i-1)n/p) + 1."""
    _check_np(n, p)
    if not 1 <= i <= p:
        raise ValueError(f"partition index {i} out of range [1, {p}]")
    return (i - 1) * n // p + 1


def p_stop(n: int, p: int, i: int) -> int:
    """Last row of the i-th of p partitions: floor(in/p)."""
    _check_np(n, p)
    if not 1 <= i <= p:
        raise ValueError(f"partition index {i} out of range [1, {p}]")
    return i * n // p


def p_trans(n: int, p: int, p_new: int, k: int) -> int:
    """Index of the p_new-partition containing row p_start(n, p, k)."""
    _check_np(n, p_new)
    start = p_start(n, p, k)
    # ceil(start * p_new / n) in exact integer arithmetic
    return -((-start * p_new) // n)


def advance_index(k: int, p: int) -> int:
    """Cyclic successor: mod(k, p) + 1."""
    if not 1 <= k <= p:
        raise ValueError(f"k={k} out of range [1, {p}]")
    return k % p + 1


def align_partitions(n: int, p: int, p_new: int, k: int) -> int:
    """Realign the cycle index when changing the subpartition count.

    Advances k cyclically, maps it into the new partitioning, then walks the
    new index down until its first row coincides with the first row of the
    corresponding old partition. Returns the aligned new index; the caller
    adopts p <- p_new, k <- the returned value. Always terminates since
    k = k' = 1 aligns for any p, p_new.
    """
    _check_np(n, p_new)
    k = advance_index(k, p)
    k_new = p_trans(n, p, p_new, k)
    while p_start(n, p_new, k_new) != p_start(n, p, k):
        # Guard: when the target row sits strictly inside the first new
        # partition the plain decrement would underflow; fall back to the
        # always-aligned (1, 1) pair instead.
        k_new = max(k_new - 1, 1)
        k = p_trans(n, p_new, p, k_new)
    return k_new
