"""Candidate-lag grids.

The dynamic geometric grid splits ``{1, ..., t-1}`` into dyadic blocks
``[2^j, 2^(j+1) - 1]`` and keeps (at most) two lags per block, a left one at
``2^j + ((t-1) mod 2^(j-1))`` and a right one ``2^(j-1)`` further.  As ``t``
grows the lags inside a block rotate by one, so every prefix sum needed at
time ``t+1`` was already stored at time ``t`` (or is the newest one, ``S_t``).

All arithmetic is on Python integers; ``floor(log2(x))`` is
``x.bit_length() - 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from gridcpd.errors import DomainError

__all__ = [
    "GridDelta",
    "GridState",
    "advance",
    "dynamic_grid",
    "full_grid",
    "grid_for",
    "grid_pairs",
    "initial_state",
    "static_grid",
]

GRID_KINDS = ("dynamic", "static", "full")


def _check_t(t: int) -> int:
    if isinstance(t, bool) or int(t) != t:
        raise DomainError(f"t must be an integer, got {t!r}")
    t = int(t)
    if t < 2:
        raise DomainError(f"grids are defined for t >= 2, got t={t}")
    return t


def dynamic_grid(t: int) -> list[int]:
    """Return the dynamic geometric grid at time ``t`` as a sorted list."""
    t = _check_t(t)
    m = t - 1
    third = m // 3
    # floor(log2(m/3)) + 1 == bit_length(m // 3) for m >= 3, and the range is empty below
    n_left = third.bit_length() if third > 0 else 0
    n_right = m.bit_length() - 2
    out = {1}
    for j in range(1, max(n_left, n_right) + 1):
        left = (1 << j) + (m % (1 << (j - 1)))
        if j <= n_left:
            out.add(left)
        if j <= n_right:
            out.add(left + (1 << (j - 1)))
    return sorted(out)


def static_grid(t: int) -> list[int]:
    """Powers of two from 1 up to ``2^floor(log2(t-1))``."""
    t = _check_t(t)
    return [1 << k for k in range((t - 1).bit_length())]


def full_grid(t: int) -> list[int]:
    """Every lag ``1, ..., t-1`` (the exhaustive scan)."""
    t = _check_t(t)
    return list(range(1, t))


_GRID_FUNCS = {"dynamic": dynamic_grid, "static": static_grid, "full": full_grid}


def grid_for(kind: str, t: int) -> list[int]:
    try:
        fn = _GRID_FUNCS[kind]
    except KeyError:
        raise DomainError(f"unknown grid kind {kind!r}; expected one of {GRID_KINDS}") from None
    return fn(t)


@dataclass(frozen=True)
class GridState:
    t: int
    elements: tuple[int, ...]

    @property
    def indices(self) -> tuple[int, ...]:
        """Summary indices ``t - g`` for ``g`` in the grid, descending in ``g``."""
        return tuple(self.t - g for g in reversed(self.elements))


@dataclass(frozen=True)
class GridDelta:
    """Bookkeeping for one ``t -> t+1`` step of the reversed grid ``t - G``."""

    retained: tuple[int, ...]
    evicted: tuple[int, ...]
    added: int


def initial_state(t: int = 2) -> GridState:
    return GridState(t=_check_t(t), elements=tuple(dynamic_grid(t)))


def advance(state: GridState) -> tuple[GridState, GridDelta]:
    nxt = GridState(t=state.t + 1, elements=tuple(dynamic_grid(state.t + 1)))
    needed = set(nxt.indices)
    old = state.indices
    retained = tuple(j for j in old if j in needed)
    evicted = tuple(j for j in old if j not in needed)
    return nxt, GridDelta(retained=retained, evicted=evicted, added=state.t)


def cardinality_bound(t: int) -> float:
    """Upper bound ``3 ln t`` on the size of the dynamic grid."""
    return 3.0 * math.log(t)


@lru_cache(maxsize=16)
def grid_pairs(kind: str, n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Flattened ``(t, g)`` pairs for ``t = 2..n``.

    Returns ``(t, g, starts)`` where ``starts[i]`` is the offset of the first pair
    belonging to time ``t = i + 2``.  Arrays are read-only because they are shared
    through the cache.
    """
    if n < 2:
        empty = np.zeros(0, dtype=np.int64)
        empty.setflags(write=False)
        return empty, empty, empty
    if kind == "full":
        ts = np.repeat(np.arange(2, n + 1, dtype=np.int64), np.arange(1, n, dtype=np.int64))
        starts = np.concatenate(([0], np.cumsum(np.arange(1, n - 1, dtype=np.int64))))
        gs = np.arange(ts.size, dtype=np.int64) - np.repeat(starts, np.arange(1, n)) + 1
    else:
        t_parts, g_parts, sizes = [], [], []
        for t in range(2, n + 1):
            g = grid_for(kind, t)
            g_parts.append(g)
            sizes.append(len(g))
            t_parts.append(t)
        sizes_arr = np.asarray(sizes, dtype=np.int64)
        ts = np.repeat(np.asarray(t_parts, dtype=np.int64), sizes_arr)
        gs = np.fromiter((g for part in g_parts for g in part), dtype=np.int64, count=int(sizes_arr.sum()))
        starts = np.concatenate(([0], np.cumsum(sizes_arr)[:-1])).astype(np.int64)
    for a in (ts, gs, starts):
        a.setflags(write=False)
    return ts, gs, starts
