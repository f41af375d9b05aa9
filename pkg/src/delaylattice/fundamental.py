"""Fundamental solution ``X(t, s)`` and its slices in the second argument.

``X`` is zero for ``t < s`` and satisfies ``X(t, s) = I + sum_j D_j(t) X(t - tau_j, s)``
for ``t >= s``.  For fixed ``t``, ``alpha -> X(t, alpha)`` is left-continuous
and piecewise constant, jumping only at ``alpha = t - f`` with ``f`` in the
delay lattice.  :func:`build_slice` materializes it on ``[s, s + tau_N]`` as a
purely atomic :class:`~delaylattice.bvcalculus.BVFunction`, reading each jump
off pointwise evaluations of the recursion on both sides of the atom.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._recursion import unroll
from .bvcalculus import BVFunction, IntervalSpec, total_variation
from .lattice import Lattice, LatticeError, NodeTable, enumerate_lattice
from .model import DelaySystem, norm

__all__ = [
    "FundamentalSlice",
    "FundamentalSolution",
    "SliceError",
    "eval_fundamental",
    "build_slice",
    "slice_total_variation",
    "recursion_residual",
    "measure_identity_defect",
]


class SliceError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class FundamentalSlice:
    """``alpha -> X(t, alpha)`` on ``window = [s, s + tau_N]``.

    ``atoms`` holds ``(alpha, lattice point, jump)`` with ``jump = X(t, alpha+) - X(t, alpha)``;
    ``plateaus`` are the constant values between consecutive atoms (one more
    than the number of atoms, starting with the value at ``s``).
    """

    t: float
    s: float
    window: IntervalSpec
    atoms: tuple
    plateaus: np.ndarray
    bv: BVFunction

    def __call__(self, alpha):
        return self.bv(alpha)

    @property
    def locations(self) -> np.ndarray:
        return np.array([a for a, _, _ in self.atoms])

    def total_variation(self) -> float:
        return total_variation(self.bv, self.window)


class FundamentalSolution:
    """Pointwise evaluator of ``X`` for one system, caching the lattice node table."""

    def __init__(self, system: DelaySystem):
        self.system = system
        self._table: NodeTable | None = None

    def table(self, horizon: float) -> NodeTable:
        if self._table is None or self._table.horizon < horizon:
            grow = horizon if self._table is None else max(horizon, 2 * self._table.horizon)
            self._table = NodeTable(enumerate_lattice(self.system.delays, max(grow, 0.0)))
        return self._table

    def evaluate_thresholds(self, roots, thresholds) -> np.ndarray:
        """``X(t_q, t_q - theta_q)`` for paired roots ``t_q`` and thresholds ``theta_q``.

        Passing ``theta = t - alpha`` directly avoids rounding ``alpha`` twice.
        Node ``n`` of the recursion is live iff ``sum_l n_l tau_l <= theta``.
        """
        sys = self.system
        roots = np.atleast_1d(np.asarray(roots, dtype=float))
        thresholds = np.broadcast_to(np.asarray(thresholds, dtype=float), roots.shape)
        d = sys.dim
        out = np.zeros((roots.size, d, d), dtype=complex)
        live = thresholds >= 0
        if not live.any():
            return out
        limit = float(np.max(thresholds[live]))
        table = self.table(limit)
        internal = table.values[None, :] <= thresholds[live][:, None]
        out[live] = unroll(table, sys, roots[live], internal, (d, d),
                           const=np.eye(d, dtype=complex), limit=limit)
        return out

    def evaluate(self, t, alpha) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        alpha = np.asarray(alpha, dtype=float)
        t, alpha = np.broadcast_arrays(t, alpha)
        vals = self.evaluate_thresholds(t.reshape(-1), (t - alpha).reshape(-1))
        return vals.reshape(t.shape + (self.system.dim,) * 2)

    def slice(self, t: float, s: float, lat: Lattice | None = None, verify: bool = True,
              snap_tol: float | None = None) -> FundamentalSlice:
        sys = self.system
        tau_n = sys.max_delay
        tms = float(t) - float(s)
        if lat is not None and lat.horizon < tms:
            raise SliceError(f"lattice horizon {lat.horizon} is smaller than t - s = {tms}")
        table = self.table(max(tms, 0.0) + tau_n)
        values = table.lattice.values
        points = table.lattice.points
        tol = snap_tol if snap_tol is not None else 1e-11 * max(1.0, abs(tms), tau_n)

        # offsets x = alpha - s of candidate atoms, snapped onto 0 and the delays
        edges = np.concatenate(([0.0], sys.delays))
        atoms_x, atoms_pt = [], []
        for k in range(values.size - 1, -1, -1):
            x = tms - values[k]
            if x < -tol:
                continue
            if x > tau_n + tol:
                break
            near = np.flatnonzero(np.abs(edges - x) <= tol)
            atoms_x.append(float(edges[near[0]]) if near.size else x)
            atoms_pt.append(points[k])

        # neighbours just outside the window bound the outer plateaus
        above = values[values > tms + tol]
        x_left = tms - above[0] if above.size else -tau_n
        below = values[values < tms - tau_n - tol]
        x_right = tms - below[-1] if below.size else math.inf
        breaks = [min(x_left, -tol)] + atoms_x + [x_right]
        if not math.isfinite(breaks[-1]):
            breaks[-1] = max(breaks[-2], tau_n) + sys.delays[0]
        mids = np.array([0.5 * (a + b) for a, b in zip(breaks[:-1], breaks[1:])])
        plateaus = self.evaluate_thresholds(np.full(mids.size, float(t)), tms - mids)

        if verify:
            probes, owner = [], []
            for k, (a, b) in enumerate(zip(breaks[:-1], breaks[1:])):
                lo, hi = max(a, 0.0), min(b, tau_n)
                if hi <= lo:
                    continue
                for frac in (0.2, 0.8):
                    probes.append(lo + frac * (hi - lo))
                    owner.append(k)
            if probes:
                probes = np.array(probes)
                vals = self.evaluate_thresholds(np.full(probes.size, float(t)), tms - probes)
                dev = max(norm(v - plateaus[k]) for v, k in zip(vals, owner))
                if dev > 1e-10 * (1.0 + max(norm(p) for p in plateaus)):
                    raise SliceError(f"slice is not piecewise constant (deviation {dev:.3e})")

        window = IntervalSpec.closed(s, s + tau_n)
        locs = float(s) + np.array(atoms_x)
        jumps = np.diff(plateaus, axis=0)
        threshold = 1e-10 * (1.0 + max(norm(p) for p in plateaus))
        keep = np.array([norm(j) > threshold for j in jumps], dtype=bool)
        if np.any(np.diff(locs[keep]) <= 0):
            raise SliceError("two atoms snapped onto the same location; lower snap_tol")
        bv = BVFunction(window, (sys.dim, sys.dim), _Const(plateaus[0]), None,
                        locs[keep], jumps[keep], side="left")
        atoms = tuple((float(locs[i]), atoms_pt[i], jumps[i]) for i in np.flatnonzero(keep))
        return FundamentalSlice(float(t), float(s), window, atoms, plateaus, bv)


class _Const:
    def __init__(self, value):
        self.value = value

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(self.value, x.shape + self.value.shape)


def eval_fundamental(sys: DelaySystem, t: float, s: float) -> np.ndarray:
    """``X(t, s)``; the zero matrix when ``t < s``."""
    return FundamentalSolution(sys).evaluate(t, s)


def build_slice(sys: DelaySystem, t: float, s: float, lat: Lattice | None = None,
                verify: bool = True) -> FundamentalSlice:
    """Atomic slice ``alpha -> X(t, alpha)`` on ``[s, s + tau_N]``."""
    if lat is not None and lat.horizon < t - s:
        raise LatticeError(f"lattice horizon {lat.horizon} too small for t - s = {t - s}")
    return FundamentalSolution(sys).slice(t, s, lat, verify)


def slice_total_variation(sys: DelaySystem, t: float, s: float) -> float:
    """``W_[s, s+tau_N](X(t, .))``, the sum of the jump norms in the window."""
    return build_slice(sys, t, s, verify=False).total_variation()


def recursion_residual(fs: FundamentalSolution, t, alpha) -> np.ndarray:
    """``|X(t, a) - I - sum_j D_j(t) X(t - tau_j, a)|`` for paired samples with ``t >= a``.

    The delayed values are evaluated as independent roots, not read back from
    the memo of ``X(t, a)``.
    """
    sys = fs.system
    t = np.asarray(t, dtype=float).reshape(-1)
    alpha = np.asarray(alpha, dtype=float).reshape(-1)
    lhs = fs.evaluate(t, alpha)
    rhs = np.broadcast_to(np.eye(sys.dim, dtype=complex), lhs.shape).copy()
    for j, tau in enumerate(sys.delays):
        rhs = rhs + sys.coefficients[j](t) @ fs.evaluate(t - tau, alpha)
    return np.array([norm(m) for m in lhs - rhs])


def _masses(sl: FundamentalSlice, upto: float) -> dict:
    out = {}
    for alpha, _, jump in sl.atoms:
        if alpha < upto:
            out[alpha] = jump
    return out


def measure_identity_defect(fs: FundamentalSolution, t: float, s: float, match_tol: float = 1e-9) -> float:
    """Largest atom mismatch in ``d X(t, .) = -delta_t I + sum_j D_j(t) d X(t - tau_j, .)`` on ``[s, s + tau_N)``."""
    sys = fs.system
    hi = s + sys.max_delay
    main = _masses(fs.slice(t, s, verify=False), hi)
    shifted = [_masses(fs.slice(t - tau, s, verify=False), hi) for tau in sys.delays]
    coeffs = [c(t) for c in sys.coefficients]
    locs = sorted(set(main) | set().union(*shifted) | ({t} if s <= t < hi else set()))
    clusters: list[list[float]] = []
    for a in locs:
        if clusters and a - clusters[-1][-1] <= match_tol:
            clusters[-1].append(a)
        else:
            clusters.append([a])
    eye = np.eye(sys.dim, dtype=complex)
    worst = 0.0
    for group in clusters:
        lhs = sum((main[a] for a in group if a in main), np.zeros_like(eye))
        rhs = np.zeros_like(eye)
        if any(abs(a - t) <= match_tol for a in group) and s <= t < hi:
            rhs = rhs - eye
        for D, masses in zip(coeffs, shifted):
            for a in group:
                if a in masses:
                    rhs = rhs + D @ masses[a]
        worst = max(worst, norm(lhs - rhs))
    return worst
