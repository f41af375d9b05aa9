"""Direct solution of the difference-delay system by unrolled recursion.

For ``t > s`` the solution satisfies ``y(t) = sum_j D_j(t) y(t - tau_j)``, so
``y(t)`` is a finite combination of initial data values reached after
subtracting lattice offsets ``sum_l n_l tau_l`` from ``t``.  The recursion is
memoized on those multi-indices, which keeps the cost proportional to the
number of lattice points below ``t - s`` instead of ``N ** depth``.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from ._recursion import unroll
from .lattice import LatticePoint, NodeTable, enumerate_lattice
from .model import DEFAULT_COMPAT_TOL, DomainError, InitialProblem, norm

__all__ = [
    "Trajectory",
    "DirectSolver",
    "ContinuityError",
    "IncompatibleDataWarning",
    "eval_solution",
    "sample_trajectory",
]

log = logging.getLogger(__name__)

_CHUNK = 256


class ContinuityError(AssertionError):
    """The trajectory jumps at one or more lattice-shifted times.

    ``jumps`` lists ``(offset, size)`` for every offending time ``s + offset``.
    """

    def __init__(self, message: str, jumps=()):
        super().__init__(message)
        self.jumps = list(jumps)


class IncompatibleDataWarning(UserWarning):
    pass


@dataclass
class Trajectory:
    start: float
    times: np.ndarray
    values: np.ndarray
    jump_offsets: np.ndarray = field(default_factory=lambda: np.zeros(0))
    jump_sizes: np.ndarray = field(default_factory=lambda: np.zeros(0))
    compat_residual: float = 0.0


class DirectSolver:
    """Evaluates the solution of one :class:`InitialProblem`.

    The node table (the memo layout) is cached on the instance and grown on
    demand, so an instance should not be shared between threads without a
    lock.
    """

    def __init__(self, problem: InitialProblem, tol: float = DEFAULT_COMPAT_TOL, warn: bool = True):
        self.problem = problem
        self.tol = tol
        self.residual = problem.compatibility_residual()
        self.compatible = self.residual <= tol
        self._table: NodeTable | None = None
        if warn and not self.compatible:
            msg = f"compatibility residual = {self.residual:.17g}"
            log.warning(msg)
            warnings.warn(msg, IncompatibleDataWarning, stacklevel=2)

    def table(self, horizon: float) -> NodeTable:
        if self._table is None or self._table.horizon < horizon:
            grow = horizon if self._table is None else max(horizon, 2 * self._table.horizon)
            self._table = NodeTable(enumerate_lattice(self.problem.system.delays, grow))
        return self._table

    def _run(self, roots: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
        """Recursion where node ``n`` is internal iff ``value(n) < threshold``."""
        p = self.problem
        sys = p.system
        tau_n = sys.max_delay
        limit = float(np.max(thresholds)) + tau_n
        table = self.table(limit)
        internal = table.values[None, :] < thresholds[:, None]

        def leaf(idx):
            theta = roots[:, None] - table.values[idx][None, :] - p.start
            return p.initial(theta)

        return unroll(table, sys, roots, internal, (sys.dim,), leaf=leaf, limit=limit)

    def evaluate(self, t):
        """Solution value(s) at time(s) ``t``; shape ``t.shape + (d,)``."""
        p = self.problem
        t_arr = np.asarray(t, dtype=float)
        flat = t_arr.reshape(-1)
        if np.any(flat < p.start - p.system.max_delay):
            raise DomainError("solution is only defined for t >= s - tau_N")
        out = np.empty((flat.size, p.system.dim), dtype=complex)
        past = flat <= p.start
        if past.any():
            out[past] = p.initial(flat[past] - p.start)
        future = np.flatnonzero(~past)
        for k in range(0, future.size, _CHUNK):
            sel = future[k:k + _CHUNK]
            roots = flat[sel]
            out[sel] = self._run(roots, roots - p.start)
        return out.reshape(t_arr.shape + (p.system.dim,))

    def limits(self, point: LatticePoint | float, tol: float | None = None):
        """One-sided limits ``(y(s+f-), y(s+f+))`` at a lattice offset ``f``.

        Nodes whose offset equals ``f`` (within ``tol``) sit exactly at time
        ``s``: they read ``phi(0)`` for the left limit and recurse once more
        for the right limit.
        """
        f = point.value if isinstance(point, LatticePoint) else float(point)
        tol = 1e-12 * max(1.0, f) if tol is None else tol
        root = np.array([self.problem.start + f])
        left = self._run(root, np.array([f - tol]))[0]
        right = self._run(root, np.array([f + tol]))[0]
        return left, right

    def growth_bound(self, t_end: float) -> float:
        """Crude bound on how much a jump at ``s`` can be amplified up to ``t_end``."""
        p = self.problem
        sys = p.system
        grid = np.linspace(p.start, max(t_end, p.start), 64)
        g = sum(max(norm(m) for m in c(grid)) for c in sys.coefficients)
        depth = math.ceil((t_end - p.start) / sys.delays[0]) + 1
        return max(1.0, g) ** depth

    def jumps(self, t_end: float):
        """``(offsets, sizes)`` of ``|y(s+f+) - y(s+f-)|`` for every lattice offset ``f <= t_end - s``."""
        p = self.problem
        lat = self.table(t_end - p.start + p.system.max_delay).lattice
        pts = [q for q in lat.points if q.value <= t_end - p.start]
        offsets = np.array([q.value for q in pts])
        sizes = np.zeros(len(pts))
        for i, q in enumerate(pts):
            left, right = self.limits(q)
            sizes[i] = norm(right - left)
        return offsets, sizes

    def check_continuity(self, t_end: float, allowed: float | None = None):
        """Raise :class:`ContinuityError` if some jump up to ``t_end`` exceeds ``allowed``.

        The default allowance scales the compatibility tolerance by the
        worst-case amplification :meth:`growth_bound`.
        """
        if allowed is None:
            allowed = 10 * self.tol * self.growth_bound(t_end) + 1e-12
        offsets, sizes = self.jumps(t_end)
        bad = sizes > allowed
        if bad.any():
            k = int(np.flatnonzero(bad)[0])
            raise ContinuityError(
                f"jump {sizes[k]:.3e} at s+{offsets[k]:.17g} exceeds {allowed:.3e}",
                list(zip(offsets[bad].tolist(), sizes[bad].tolist())))
        return offsets, sizes

    def sample(self, t_end: float, step: float) -> Trajectory:
        """Uniform samples plus every ``s + f``; compatible data is checked for continuity."""
        p = self.problem
        if not step > 0:
            raise ValueError("step must be positive")
        if t_end < p.start:
            raise ValueError("t_end must be >= s")
        n = int(math.floor((t_end - p.start) / step + 1e-9))
        grid = p.start + step * np.arange(n + 1)
        if self.compatible:
            offsets, sizes = self.check_continuity(t_end)
        else:
            offsets, sizes = self.jumps(t_end)
        times = np.union1d(grid, p.start + offsets)
        values = self.evaluate(times)
        return Trajectory(p.start, times, values, offsets, sizes, self.residual)


def eval_solution(p: InitialProblem, t):
    """``y(t)`` for the initial problem ``p`` (see :class:`DirectSolver`)."""
    return DirectSolver(p).evaluate(t)


def sample_trajectory(p: InitialProblem, t_end: float, step: float) -> Trajectory:
    """Uniform samples on ``[s, t_end]`` plus every lattice-shifted point ``s + f``."""
    return DirectSolver(p).sample(t_end, step)
