"""The additive lattice of delay combinations ``sum_l n_l tau_l``.

The fundamental solution of a difference-delay system can only jump across
the lines ``t - s = f`` with ``f`` in this lattice.  :func:`enumerate_lattice`
lists all lattice values up to a horizon in increasing order, merging values
that coincide up to a tolerance (commensurate delays) and keeping every
defining multi-index.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "LatticePoint",
    "Lattice",
    "LatticeError",
    "lattice_value",
    "default_merge_tol",
    "enumerate_lattice",
    "jump_offsets_in_window",
    "NodeTable",
]


class LatticeError(ValueError):
    pass


def lattice_value(indices: Sequence[int], delays: Sequence[float]) -> float:
    """``sum_l n_l tau_l`` evaluated with correctly rounded summation."""
    return math.fsum(n * tau for n, tau in zip(indices, delays))


def default_merge_tol(horizon: float) -> float:
    return 1e-12 * max(1.0, horizon)


@dataclass(frozen=True)
class LatticePoint:
    value: float
    indices: tuple  # tuple of N-tuples of nonnegative ints

    def __repr__(self):
        return f"LatticePoint({self.value!r}, {list(self.indices)})"


@dataclass(frozen=True, eq=False)
class Lattice:
    delays: tuple
    horizon: float
    merge_tol: float
    points: tuple

    @property
    def values(self) -> np.ndarray:
        return np.array([p.value for p in self.points])

    def __len__(self):
        return len(self.points)

    def min_gap(self) -> float:
        """Smallest spacing between consecutive points (inf for a single point)."""
        v = self.values
        if v.size < 2:
            return math.inf
        return float(np.min(np.diff(v)))

    def locate(self, x: float, tol: float | None = None) -> LatticePoint | None:
        """Lattice point within ``tol`` of ``x`` if there is one."""
        tol = self.merge_tol if tol is None else tol
        v = self.values
        k = int(np.searchsorted(v, x))
        for i in (k - 1, k):
            if 0 <= i < v.size and abs(v[i] - x) <= tol:
                return self.points[i]
        return None

    def tuples(self) -> list[tuple]:
        """Every multi-index of the lattice, ordered by value."""
        out = []
        for p in self.points:
            out.extend(p.indices)
        return out


def enumerate_lattice(delays: Sequence[float], horizon: float,
                      merge_tol: float | None = None) -> Lattice:
    """All values ``sum_l n_l tau_l <= horizon`` in increasing order.

    Generation is best-first: a heap ordered by value is seeded with the zero
    multi-index and each popped index pushes its N successors (one coordinate
    incremented), with a visited set on multi-indices.  Values within
    ``merge_tol`` of the first value of a run are merged into one point whose
    ``indices`` collect every defining multi-index.
    """
    delays = tuple(float(x) for x in delays)
    if not delays:
        raise LatticeError("need at least one delay")
    if any(not tau > 0 for tau in delays):
        raise LatticeError("delays must be strictly positive")
    if horizon < 0 or not math.isfinite(horizon):
        raise LatticeError("horizon must be finite and nonnegative")
    if merge_tol is None:
        merge_tol = default_merge_tol(horizon)
    if merge_tol < 0:
        raise LatticeError("merge_tol must be nonnegative")

    n = len(delays)
    caps = [int(math.floor(horizon / tau)) + 1 for tau in delays]
    zero = (0,) * n
    heap = [(0.0, zero)]
    seen = {zero}
    ordered: list[tuple[float, tuple]] = []
    while heap:
        value, idx = heapq.heappop(heap)
        ordered.append((value, idx))
        for l in range(n):
            if idx[l] + 1 > caps[l]:
                continue
            nxt = idx[:l] + (idx[l] + 1,) + idx[l + 1:]
            if nxt in seen:
                continue
            v = lattice_value(nxt, delays)
            if v > horizon:
                continue
            seen.add(nxt)
            heapq.heappush(heap, (v, nxt))

    points = []
    group_value = None
    group: list[tuple] = []
    for value, idx in ordered:
        if group and value - group_value <= merge_tol:
            group.append(idx)
            continue
        if group:
            points.append(LatticePoint(group_value, tuple(group)))
        group_value, group = value, [idx]
    points.append(LatticePoint(group_value, tuple(group)))
    return Lattice(delays, float(horizon), float(merge_tol), tuple(points))


def jump_offsets_in_window(lat: Lattice, t_minus_s: float, window) -> list[LatticePoint]:
    """Lattice points ``f`` with ``t_minus_s - f`` in the half-open ``window``.

    With ``window = (lo, hi)`` in ``alpha - s`` coordinates these are exactly
    the atoms of ``alpha -> X(t, alpha)`` located in ``[s + lo, s + hi)``.
    Comparisons are snapped to the window edges within ``lat.merge_tol``.
    """
    lo, hi = window
    if lo > hi:
        raise LatticeError("window must satisfy lo <= hi")
    if lo < 0:
        raise LatticeError("window must lie in [0, horizon]")
    need = t_minus_s - lo
    if need > lat.horizon + lat.merge_tol:
        raise LatticeError(f"lattice horizon {lat.horizon} too small, need {need}")
    tol = lat.merge_tol
    out = []
    for p in lat.points:
        x = t_minus_s - p.value
        if x < lo - tol or x >= hi - tol:
            continue
        out.append(p)
    return out


class NodeTable:
    """Multi-indices of a lattice arranged for bottom-up recursion.

    Nodes are the lattice's multi-indices; ``values[i]`` is the value of the
    (merged) lattice point that node ``i`` belongs to.  ``children[i, j]`` is the node
    obtained by incrementing coordinate ``j`` of node ``i``, or the sentinel
    index ``size`` when that successor lies beyond the horizon.  ``levels``
    groups nodes by ``sum(n)`` from the deepest level up, so every node is
    processed after all of its successors.
    """

    def __init__(self, lat: Lattice):
        self.lattice = lat
        self.delays = lat.delays
        tuples = lat.tuples()
        self.tuples = tuples
        self.size = len(tuples)
        # every multi-index of a merged point shares the point's value, so a
        # threshold at that value includes all of them or none
        self.values = np.array([p.value for p in lat.points for _ in p.indices])
        index = {n: i for i, n in enumerate(tuples)}
        self.index = index
        n_del = len(lat.delays)
        children = np.full((self.size, n_del), self.size, dtype=np.intp)
        for i, n in enumerate(tuples):
            for j in range(n_del):
                succ = n[:j] + (n[j] + 1,) + n[j + 1:]
                children[i, j] = index.get(succ, self.size)
        self.children = children
        depth = np.array([sum(n) for n in tuples], dtype=np.intp)
        self.levels = [np.flatnonzero(depth == k) for k in range(int(depth.max()), -1, -1)]

    @property
    def horizon(self) -> float:
        return self.lattice.horizon
