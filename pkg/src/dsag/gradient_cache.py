"""Interval-keyed subgradient cache with staleness-aware eviction.

The coordinator stores the freshest known subgradient per disjoint row
interval and maintains the running sum H of all stored values
incrementally, together with the fraction of rows covered. An incoming
subgradient is rejected if any stored entry it overlaps is at least as
recent; otherwise it evicts everything it overlaps.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass

import numpy as np

__all__ = ["SubgradientEntry", "GradientCache", "NoGradientError"]


class NoGradientError(RuntimeError):
    """Raised when a gradient estimate is requested from an empty cache."""


@dataclass(frozen=True)
class SubgradientEntry:
    """Sum of per-sample gradients over rows first..last at one iterate version."""

    first: int
    last: int
    iteration: int
    value: np.ndarray

    def __post_init__(self):
        if self.first > self.last:
            raise ValueError(f"empty interval [{self.first}, {self.last}]")

    @property
    def rows(self) -> int:
        return self.last - self.first + 1


class GradientCache:
    """Disjoint interval map of subgradients with running sum H.

    Entries are kept in a list sorted by first row; overlap queries scan
    from the predecessor of the query start. The structure has a single
    owner (the coordinator loop) and is not thread-safe.
    """

    def __init__(self, n: int, rebuild_every: int = 10_000):
        if n < 1:
            raise ValueError("n must be >= 1")
        self.n = n
        self._starts: list[int] = []
        self._entries: list[SubgradientEntry] = []
        self.running_sum: np.ndarray | None = None
        self.covered = 0
        self._rebuild_every = rebuild_every
        self._accepted = 0

    def __len__(self) -> int:
        return len(self._entries)

    def entries(self) -> list[SubgradientEntry]:
        return list(self._entries)

    def _overlap_range(self, first: int, last: int) -> tuple[int, int]:
        # Indices [lo, hi) of stored entries intersecting [first, last].
        lo = bisect.bisect_right(self._starts, first) - 1
        if lo < 0 or self._entries[lo].last < first:
            lo += 1
        hi = bisect.bisect_right(self._starts, last)
        return lo, hi

    def try_insert(self, entry: SubgradientEntry) -> bool:
        """Insert a subgradient, evicting anything it overlaps.

        Returns False and leaves the cache unchanged if any overlapping
        stored entry has iteration >= entry.iteration. An exact interval
        match from an older iteration is updated in place.
        """
        if not (1 <= entry.first and entry.last <= self.n):
            raise ValueError(
                f"interval [{entry.first}, {entry.last}] outside [1, {self.n}]"
            )
        lo, hi = self._overlap_range(entry.first, entry.last)
        overlapping = self._entries[lo:hi]
        if any(old.iteration >= entry.iteration for old in overlapping):
            return False

        if self.running_sum is None:
            self.running_sum = np.zeros_like(entry.value, dtype=float)
        if (
            len(overlapping) == 1
            and overlapping[0].first == entry.first
            and overlapping[0].last == entry.last
        ):
            # In-place update of an exact match (the SAG fast path).
            old = overlapping[0]
            self.running_sum += entry.value - old.value
            self._entries[lo] = entry
        else:
            for old in overlapping:
                self.running_sum -= old.value
                self.covered -= old.rows
            self.running_sum += entry.value
            self.covered += entry.rows
            self._entries[lo:hi] = [entry]
            self._starts[lo:hi] = [entry.first]

        self._accepted += 1
        if self._accepted % self._rebuild_every == 0:
            self.rebuild_sum()
        return True

    def gradient_estimate(self) -> tuple[np.ndarray, float]:
        """Return (H, xi), the maintained sum and coverage fraction."""
        if self.covered == 0:
            raise NoGradientError("no subgradient received yet")
        return self.running_sum, self.covered / self.n

    def eviction_gap_report(self) -> list[tuple[int, int]]:
        """Uncovered row intervals within [1, n], in increasing order."""
        gaps = []
        cursor = 1
        for e in self._entries:
            if e.first > cursor:
                gaps.append((cursor, e.first - 1))
            cursor = e.last + 1
        if cursor <= self.n:
            gaps.append((cursor, self.n))
        return gaps

    def rebuild_sum(self) -> None:
        """Recompute H from stored entries to shed accumulated float drift."""
        if self.running_sum is None:
            return
        total = np.zeros_like(self.running_sum)
        for e in self._entries:
            total += e.value
        self.running_sum = total
