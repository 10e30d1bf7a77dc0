"""Stores of cumulative summary statistics ``S_j = sum_{i<=j} h(Y_i)``.

:class:`SummaryRing` keeps only the prefix sums indexed by the reversed dynamic
grid ``t - G(t)`` plus the running total, so it holds ``O(log t)`` vectors.
:class:`PrefixStore` keeps every prefix sum and backs the static and full
grids, which are only meant as small-horizon references.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from gridcpd.errors import ConfigError, DomainError, GridLookupError
from gridcpd.grid import dynamic_grid, grid_for

__all__ = ["PrefixStore", "SegmentSums", "SummaryRing", "make_store"]

FULL_HORIZON_CAP = 100_000


@dataclass(frozen=True)
class SegmentSums:
    prefix: np.ndarray
    suffix: np.ndarray
    g: int
    t: int


def _as_vector(h_value, dim: int) -> np.ndarray:
    h = np.asarray(h_value, dtype=np.float64).reshape(-1)
    if h.shape[0] != dim:
        raise DomainError(f"expected a summary vector of length {dim}, got {h.shape[0]}")
    return h


class SummaryRing:
    """Recycling store of prefix sums for the dynamic geometric grid.

    After ``t`` pushes the slot keys are exactly ``t - dynamic_grid(t)`` (for
    ``t >= 2``).  Pushing ``h(Y_{t+1})`` first files the old total as ``S_t``,
    then drops every slot that the next grid no longer references.

    >>> ring = SummaryRing(1)
    >>> for y in [1.0, 2.0, 3.0, 4.0]:
    ...     ring.push([y])
    >>> ring.segment_sums(2).suffix
    array([7.])
    """

    grid_kind = "dynamic"

    def __init__(self, dim: int) -> None:
        if isinstance(dim, bool) or int(dim) != dim or dim < 1:
            raise DomainError(f"dim must be a positive integer, got {dim!r}")
        self.dim = int(dim)
        self.reset()

    def reset(self) -> None:
        self.t = 0
        self.total = np.zeros(self.dim)
        self.slots: dict[int, np.ndarray] = {}
        self.grid: list[int] = []

    def push(self, h_value) -> None:
        h = _as_vector(h_value, self.dim)
        if self.t >= 1:
            self.slots[self.t] = self.total
        self.total = self.total + h
        self.t += 1
        if self.t < 2:
            return
        self.grid = dynamic_grid(self.t)
        keep = {self.t - g for g in self.grid}
        for j in [j for j in self.slots if j not in keep]:
            del self.slots[j]

    def segment_sums(self, g: int) -> SegmentSums:
        prefix = self.prefix(g)
        return SegmentSums(prefix=prefix, suffix=self.total - prefix, g=g, t=self.t)

    def prefix(self, g: int) -> np.ndarray:
        try:
            return self.slots[self.t - g]
        except KeyError:
            raise GridLookupError(f"lag g={g} is not in the grid at t={self.t}") from None

    def prefix_matrix(self) -> np.ndarray:
        """Prefix sums ``S_{t-g}`` for every ``g`` in the current grid, one row each."""
        return np.array([self.slots[self.t - g] for g in self.grid])

    @property
    def stored_scalars(self) -> int:
        # running total counts once it exists
        return self.dim * (len(self.slots) + (1 if self.t else 0))


class PrefixStore:
    """Keeps every prefix sum; used by the static and full-scan grids."""

    def __init__(self, dim: int, grid_kind: str = "full", horizon_cap: int | None = None) -> None:
        if isinstance(dim, bool) or int(dim) != dim or dim < 1:
            raise DomainError(f"dim must be a positive integer, got {dim!r}")
        if grid_kind not in ("static", "full"):
            raise ConfigError(f"PrefixStore backs the static or full grid, not {grid_kind!r}")
        if grid_kind == "full":
            if horizon_cap is None or not 2 <= horizon_cap <= FULL_HORIZON_CAP:
                raise ConfigError(f"the full grid needs a horizon cap in [2, {FULL_HORIZON_CAP}]")
        self.dim = int(dim)
        self.grid_kind = grid_kind
        self.horizon_cap = horizon_cap
        self.reset()

    def reset(self) -> None:
        self.t = 0
        self.total = np.zeros(self.dim)
        self._sums: list[np.ndarray] = [self.total]
        self.grid: list[int] = []

    def push(self, h_value) -> None:
        h = _as_vector(h_value, self.dim)
        if self.horizon_cap is not None and self.t >= self.horizon_cap:
            raise ConfigError(f"horizon cap {self.horizon_cap} reached")
        self.total = self.total + h
        self._sums.append(self.total)
        self.t += 1
        if self.t >= 2:
            self.grid = grid_for(self.grid_kind, self.t)

    def prefix(self, g: int) -> np.ndarray:
        valid = 1 <= g < self.t if self.grid_kind == "full" else g in self.grid
        if not valid:
            raise GridLookupError(f"lag g={g} is not in the {self.grid_kind} grid at t={self.t}")
        return self._sums[self.t - g]

    def segment_sums(self, g: int) -> SegmentSums:
        prefix = self.prefix(g)
        return SegmentSums(prefix=prefix, suffix=self.total - prefix, g=g, t=self.t)

    def prefix_matrix(self) -> np.ndarray:
        return np.stack([self._sums[self.t - g] for g in self.grid])

    @property
    def stored_scalars(self) -> int:
        return self.dim * self.t


def make_store(dim: int, grid_kind: str = "dynamic", horizon_cap: int | None = None):
    if grid_kind == "dynamic":
        return SummaryRing(dim)
    return PrefixStore(dim, grid_kind, horizon_cap)


def storage_bound(dim: int, t: int) -> float:
    """``dim * (3 ln t + 1)``: the ring's scalar budget at time ``t``."""
    return dim * (3.0 * math.log(t) + 1.0)
