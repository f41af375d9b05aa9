"""Stieltjes-Volterra kernels, their resolvents, and Volterra equations.

A kernel ``kappa(t, tau)`` on ``[a, b]^2`` vanishes for ``tau >= t`` and is
left-continuous in ``tau``.  Its resolvent solves

    rho(t, beta) = -kappa(t, beta) + int_[beta, t) d kappa(t, tau) rho(tau, beta)

(the measure multiplies ``rho`` from the left), and the Volterra equation
``y(t) = int_[a, t) d kappa(t, tau) y(tau) + g(t)`` is then solved by
``y(t) = g(t) - int_[a, t) d_alpha rho(t, alpha) g(alpha)``.

Two backends are provided:

* :class:`AtomicKernel`, the exact kernel of a difference-delay system on
  ``[s, s + tau_N]``, whose resolvent is obtained by an exact recursion over
  lattice offsets;
* :class:`GridKernel`, a kernel sampled on a uniform grid, whose resolvent is
  built by damped Picard iteration of ``F_r(Psi)(t, beta) =
  int_[beta, t) exp(-r (t - tau)) d kappa(t, tau) Psi(tau, beta)``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ._recursion import unroll
from .bvcalculus import BVFunction, IntervalSpec, stieltjes_integrate
from .lattice import NodeTable, enumerate_lattice
from .model import DelaySystem, InitialProblem, PiecewiseLinear, norm

__all__ = [
    "AtomicKernel",
    "GridKernel",
    "Resolvent",
    "AtomicResolvent",
    "GridResolvent",
    "ResolventConfig",
    "NonContractionError",
    "VolterraSolution",
    "step_measure",
    "kernel_from_system",
    "forcing_from_initial",
    "forcing_function",
    "build_resolvent",
    "solve_volterra",
    "resolvent_residual",
    "volterra_residual",
    "grid_source_residual",
    "apply_damped_operator",
    "grid_binf_norm",
    "contraction_ratio",
    "picard_volterra",
]

log = logging.getLogger(__name__)

# exp(r (b - a)) must stay representable when undoing the damping
_MAX_EXPONENT = 600.0


class NonContractionError(RuntimeError):
    """Picard iteration could not be made contractive or did not converge."""


def step_measure(system: DelaySystem, t: float, theta):
    """``mu(t, theta) = sum_j D_j(t) h(theta + tau_j)`` with ``h(x) = 1`` iff ``x > 0``.

    ``h(0) = 0`` makes ``theta -> mu(t, theta)`` left-continuous, so that the
    Stieltjes integral of ``y(t + theta)`` over ``[-tau_N, 0)`` recovers every
    delayed term including ``D_N(t) y(t - tau_N)``.
    """
    theta = np.asarray(theta, dtype=float)
    out = np.zeros(theta.shape + (system.dim, system.dim), dtype=complex)
    for tau, coef in zip(system.delays, system.coefficients):
        on = (theta + tau > 0).astype(float)
        out = out + on[..., None, None] * coef(float(t))
    return out


class _Const:
    def __init__(self, value):
        self.value = np.asarray(value, dtype=complex)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(self.value, x.shape + self.value.shape)


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------

class AtomicKernel:
    """``k(t, tau) = mu(t, tau - t) - sum_j D_j(t)`` on ``[a, b] = [s, s + tau_N]``.

    Equivalently ``k(t, tau) = -sum_{j : tau <= t - tau_j} D_j(t)``, so
    ``d k(t, .)`` puts mass ``D_j(t)`` at ``t - tau_j`` for every ``j`` with
    ``t - tau_j >= a``.  The kernel vanishes once ``t - tau < tau_1``, which
    is the small-variation condition with ``eta = tau_1``.
    """

    def __init__(self, system: DelaySystem, a: float, b: float | None = None):
        self.system = system
        self.a = float(a)
        self.b = float(a + system.max_delay if b is None else b)
        self.dim = system.dim
        self._norm: float | None = None

    @property
    def interval(self) -> tuple[float, float]:
        return self.a, self.b

    @property
    def eta(self) -> float:
        return self.system.delays[0]

    def _check_t(self, t):
        if t < self.a or t > self.b:
            raise ValueError(f"t = {t} outside the kernel interval [{self.a}, {self.b}]")

    def atoms(self, t: float) -> list[tuple[float, int, np.ndarray]]:
        """``(location, delay index, weight)`` for every atom of ``d k(t, .)`` in ``[a, t)``."""
        self._check_t(t)
        out = []
        for j, (tau, coef) in enumerate(zip(self.system.delays, self.system.coefficients)):
            loc = t - tau
            if loc >= self.a:
                out.append((loc, j, np.asarray(coef(float(t)), dtype=complex)))
        out.sort(key=lambda item: item[0])
        return out

    def __call__(self, t: float, tau):
        self._check_t(t)
        tau = np.asarray(tau, dtype=float)
        val = step_measure(self.system, t, tau - t) - sum(c(float(t)) for c in self.system.coefficients)
        zero = (tau >= t)[..., None, None]
        return np.where(zero, 0.0, val)

    def measure(self, t: float) -> BVFunction:
        """``tau -> k(t, tau)`` on ``[a, b]`` as a left-continuous step function."""
        atoms = self.atoms(t)
        base = self(t, self.a)
        locs, jumps = [], []
        for loc, _, w in atoms:
            if locs and loc == locs[-1]:
                jumps[-1] = jumps[-1] + w
            else:
                locs.append(loc)
                jumps.append(w)
        return BVFunction(IntervalSpec.closed(self.a, self.b), (self.dim, self.dim), _Const(base),
                          None, locs, np.array(jumps).reshape(len(locs), self.dim, self.dim))

    def norm(self, n_samples: int = 512) -> float:
        """``sup_t W_[a, b](k(t, .))`` (sampled in ``t``, exact in ``tau``)."""
        if self._norm is None:
            sys = self.system
            ts = np.linspace(self.a, self.b, n_samples)
            ts = np.union1d(ts, [self.a + tau for tau in sys.delays if self.a + tau <= self.b])
            total = np.zeros(ts.size)
            for tau, coef in zip(sys.delays, sys.coefficients):
                vals = coef(ts)
                on = ts - tau >= self.a
                total += on * np.array([norm(m) for m in vals])
            self._norm = float(total.max())
        return self._norm

    def variation_near_diagonal(self, width: float, n_samples: int = 256) -> float:
        """``sup_t W_[t - width, t)(k(t, .))``; zero whenever ``width <= tau_1``."""
        sys = self.system
        ts = np.linspace(self.a, self.b, n_samples)
        worst = 0.0
        for t in ts:
            v = sum(norm(c(float(t))) for tau, c in zip(sys.delays, sys.coefficients)
                    if tau <= width and t - tau >= self.a)
            worst = max(worst, v)
        return worst


class GridKernel:
    """Kernel sampled at ``t_i = a + i h``, ``i = 0..n``, as ``K[i, k] = kappa(t_i, t_k)``.

    Each row is read as a left-continuous step function of ``tau`` whose
    measure has mass ``K[i, k + 1] - K[i, k]`` at ``t_k`` for ``k < i``.
    ``source`` keeps the exact kernel when the samples came from one.
    """

    def __init__(self, a: float, b: float, values, source: Callable | None = None):
        values = np.asarray(values, dtype=complex)
        if values.ndim != 4 or values.shape[0] != values.shape[1] or values.shape[2] != values.shape[3]:
            raise ValueError("values must have shape (n + 1, n + 1, d, d)")
        self.a = float(a)
        self.b = float(b)
        self.n = values.shape[0] - 1
        if self.n < 1:
            raise ValueError("need at least two grid points")
        self.dim = values.shape[2]
        self.times = np.linspace(self.a, self.b, self.n + 1)
        self.step = (self.b - self.a) / self.n
        upper = np.triu(np.ones((self.n + 1, self.n + 1), dtype=bool))
        values = values.copy()
        values[upper] = 0.0
        self.values = values
        self.source = source
        inc = np.zeros_like(values)
        inc[:, :-1] = values[:, 1:] - values[:, :-1]
        inc[upper] = 0.0
        self.increments = inc
        self._inc_norms = np.linalg.norm(inc, ord=2, axis=(2, 3)) if self.dim > 1 else np.abs(inc[..., 0, 0])

    @classmethod
    def from_function(cls, func: Callable, a: float, b: float, n: int, dim: int = 1) -> "GridKernel":
        """Sample ``func(t, tau) -> (d, d)`` (vectorized over arrays) on an ``n``-cell grid."""
        ts = np.linspace(a, b, n + 1)
        T, S = np.meshgrid(ts, ts, indexing="ij")
        vals = np.asarray(func(T, S), dtype=complex).reshape(n + 1, n + 1, dim, dim)
        return cls(a, b, vals, source=func)

    @classmethod
    def from_atomic(cls, kernel: AtomicKernel, n: int) -> "GridKernel":
        ts = np.linspace(kernel.a, kernel.b, n + 1)
        vals = np.stack([kernel(float(t), ts) for t in ts])

        def source(t, tau):
            t = np.asarray(t, dtype=float)
            tau = np.asarray(tau, dtype=float)
            t, tau = np.broadcast_arrays(t, tau)
            out = np.empty(t.shape + (kernel.dim, kernel.dim), dtype=complex)
            for idx in np.ndindex(t.shape):
                out[idx] = kernel(float(t[idx]), float(tau[idx]))
            return out

        return cls(kernel.a, kernel.b, vals, source=source)

    @property
    def interval(self) -> tuple[float, float]:
        return self.a, self.b

    def norm(self) -> float:
        """``max_i W(kappa(t_i, .))``."""
        return float(self._inc_norms.sum(axis=1).max())

    def variation_near_diagonal(self, width: float) -> float:
        """``max_i W_[t_i - width, t_i)(kappa(t_i, .))``."""
        lag = self.times[:, None] - self.times[None, :]
        near = (lag > 0) & (lag <= width + 1e-12 * self.step)
        return float((self._inc_norms * near).sum(axis=1).max())

    @property
    def eta(self) -> float:
        """Largest multiple of the step whose near-diagonal variation is at most 1/4."""
        w = self.step
        while w + self.step <= self.b - self.a + 1e-12 and self.variation_near_diagonal(w + self.step) <= 0.25:
            w += self.step
        return w


def kernel_from_system(p: InitialProblem) -> AtomicKernel:
    """The delay-system kernel on ``[s, s + tau_N]``."""
    return AtomicKernel(p.system, p.start)


# ---------------------------------------------------------------------------
# forcing term
# ---------------------------------------------------------------------------

def _check_window(p: InitialProblem, t):
    s, b = p.start, p.start + p.system.max_delay
    t = np.asarray(t, dtype=float)
    if np.any(t < s) or np.any(t > b):
        raise ValueError(f"forcing is only defined on [{s}, {b}]")
    return t


def forcing_from_initial(p: InitialProblem, t):
    """``f(t) = sum_{tau_l in (t - s, tau_N]} D_l(t) phi(t - s - tau_l)``; right-continuous."""
    t = _check_window(p, t)
    sys = p.system
    out = np.zeros(t.shape + (sys.dim,), dtype=complex)
    x = t - p.start
    for tau, coef in zip(sys.delays, sys.coefficients):
        # compare against the atom location s + tau itself, not x against tau,
        # so that t = s + tau is switched off despite rounding in t - s
        on = t < p.start + tau
        if not np.any(on):
            continue
        theta = np.where(on, x - tau, -tau)
        term = np.einsum("...ab,...b->...a", coef(t), p.initial(theta))
        out = out + on[..., None] * term
    return out


def forcing_function(p: InitialProblem, n_grid: int = 65) -> BVFunction:
    """``f`` as a right-continuous :class:`BVFunction` on ``[s, s + tau_N]``.

    Term ``l`` is continuous up to ``s + tau_l`` where it drops by
    ``D_l(s + tau_l) phi(0)``; the continuous part freezes each term at its
    left limit from there on.
    """
    sys = p.system
    s = p.start
    b = s + sys.max_delay
    ends = [s + tau for tau in sys.delays]
    drops = [np.asarray(c(e), dtype=complex) @ p.initial(0.0) for c, e in zip(sys.coefficients, ends)]

    def cont(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape + (sys.dim,), dtype=complex)
        for tau, coef, e, drop in zip(sys.delays, sys.coefficients, ends, drops):
            on = x < e
            xc = np.where(on, x, e)
            term = np.einsum("...ab,...b->...a", coef(xc), p.initial(np.where(on, xc - s - tau, 0.0)))
            out = out + term
        return out

    grid = [np.linspace(s, b, n_grid)]
    if isinstance(p.phi, PiecewiseLinear):
        for tau in sys.delays:
            grid.append(p.phi.times + s + tau)
    for c in sys.coefficients:
        if isinstance(c, PiecewiseLinear):
            grid.append(c.times)
    grid = np.concatenate(grid)
    grid = grid[(grid >= s) & (grid <= b)]
    return BVFunction(IntervalSpec.closed(s, b), (sys.dim,), cont, np.union1d(grid, ends),
                      ends, -np.array(drops), side="right")


# ---------------------------------------------------------------------------
# resolvents
# ---------------------------------------------------------------------------

@dataclass
class ResolventConfig:
    """``r`` is a positive damping rate or ``"auto"``."""

    r: float | str = "auto"
    tol: float = 1e-12
    max_iter: int = 2000
    lambda_target: float = 0.5


class Resolvent:
    """Common interface: pointwise values and the measure of ``rho(t, .)``."""

    kernel = None
    r: float | None = None
    iterations: int = 0
    contraction: float | None = None

    def evaluate(self, t: float, beta) -> np.ndarray:  # pragma: no cover - abstract
        raise NotImplementedError

    def measure(self, t: float) -> BVFunction:  # pragma: no cover - abstract
        raise NotImplementedError


class AtomicResolvent(Resolvent):
    """Exact resolvent of an :class:`AtomicKernel`.

    Substituting the atoms of ``d k(t, .)`` into the resolvent equation gives

        rho(u, beta) = sum_{j : u - tau_j >= beta} D_j(u) (I + rho(u - tau_j, beta)),

    and ``rho(u, beta) = 0`` for ``u <= beta``.  Starting from ``u = t`` the
    recursion only visits ``t - f`` for lattice offsets ``f``; it is
    evaluated bottom-up on the lattice node table.
    """

    def __init__(self, kernel: AtomicKernel):
        self.kernel = kernel
        self.system = kernel.system
        self.r = None
        self.iterations = 0
        self.contraction = None
        self._table: NodeTable | None = None

    def table(self, horizon: float) -> NodeTable:
        if self._table is None or self._table.horizon < horizon:
            grow = horizon if self._table is None else max(horizon, 2 * self._table.horizon)
            self._table = NodeTable(enumerate_lattice(self.system.delays, max(grow, 0.0)))
        return self._table

    def evaluate_thresholds(self, roots, thresholds) -> np.ndarray:
        """``rho(t_q, t_q - theta_q)`` for paired roots and thresholds."""
        sys = self.system
        d = sys.dim
        roots = np.atleast_1d(np.asarray(roots, dtype=float))
        thresholds = np.broadcast_to(np.asarray(thresholds, dtype=float), roots.shape)
        out = np.zeros((roots.size, d, d), dtype=complex)
        live = thresholds > 0
        if not live.any():
            return out
        roots_l = roots[live]
        thr = thresholds[live]
        limit = float(thr.max())
        table = self.table(limit)
        internal = table.values[None, :] <= thr[:, None]
        # sentinel column: successors beyond the table are never live
        live_nodes = np.concatenate([internal, np.zeros((roots_l.size, 1), dtype=bool)], axis=1)

        def const(nodes):
            times = roots_l[:, None] - table.values[nodes][None, :]
            acc = np.zeros((roots_l.size, nodes.size, d, d), dtype=complex)
            for j, coef in enumerate(sys.coefficients):
                child_live = live_nodes[:, table.children[nodes, j]]
                tj = np.where(child_live, times, roots_l[:, None])
                acc = acc + child_live[..., None, None] * coef(tj)
            return acc

        out[live] = unroll(table, sys, roots_l, internal, (d, d), const=const, limit=limit)
        return out

    def evaluate(self, t, beta) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        beta = np.asarray(beta, dtype=float)
        t, beta = np.broadcast_arrays(t, beta)
        vals = self.evaluate_thresholds(t.reshape(-1), (t - beta).reshape(-1))
        return vals.reshape(t.shape + (self.system.dim,) * 2)

    def measure(self, t: float, snap_tol: float | None = None) -> BVFunction:
        """``alpha -> rho(t, alpha)`` on ``[a, b]``, left-continuous and purely atomic."""
        k = self.kernel
        a, b = k.a, k.b
        tms = float(t) - a
        d = self.system.dim
        if tms <= 0:
            return BVFunction(IntervalSpec.closed(a, b), (d, d), None)
        table = self.table(tms)
        values = table.lattice.values
        tol = snap_tol if snap_tol is not None else 1e-11 * max(1.0, abs(tms))
        offs = values[(values > 0) & (values <= tms + tol)]
        xs = np.sort(np.where(np.abs(tms - offs) <= tol, 0.0, tms - offs))
        xs = xs[np.concatenate(([True], np.diff(xs) > 0))] if xs.size else xs
        breaks = np.concatenate(([0.0], xs, [tms]))
        mids = 0.5 * (breaks[:-1] + breaks[1:])
        # by left-continuity the value at alpha = a is the first plateau
        mids[0] = 0.0
        plateaus = self.evaluate_thresholds(np.full(mids.size, float(t)), tms - mids)
        jumps = np.diff(plateaus, axis=0)
        thresh = 1e-13 * (1.0 + max(norm(p) for p in plateaus))
        keep = np.array([norm(j) > thresh for j in jumps], dtype=bool)
        return BVFunction(IntervalSpec.closed(a, b), (d, d), _Const(plateaus[0]), None,
                          a + xs[keep], jumps[keep], side="left")


class GridResolvent(Resolvent):
    """Resolvent samples ``R[i, m] = rho(t_i, t_m)`` of a :class:`GridKernel`.

    Off the grid, ``rho`` is read as piecewise constant: ``t`` rounds down to
    the grid and ``beta`` rounds down as well.
    """

    def __init__(self, kernel: GridKernel, values: np.ndarray, r: float, iterations: int,
                 contraction: float):
        self.kernel = kernel
        self.values = values
        self.r = r
        self.iterations = iterations
        self.contraction = contraction

    def _index(self, x):
        k = self.kernel
        i = np.floor((np.asarray(x, dtype=float) - k.a) / k.step + 1e-9).astype(int)
        return np.clip(i, 0, k.n)

    def evaluate(self, t, beta) -> np.ndarray:
        return self.values[self._index(t), self._index(beta)]

    def measure(self, t: float) -> BVFunction:
        k = self.kernel
        i = int(self._index(t))
        row = self.values[i]
        jumps = np.diff(row, axis=0)
        keep = np.array([np.any(j != 0) for j in jumps], dtype=bool)
        # left-continuous step with value row[m + 1] on (t_m, t_{m + 1}]
        return BVFunction(IntervalSpec.closed(k.a, k.b), (k.dim, k.dim), _Const(row[0]), None,
                          k.times[:-1][keep], jumps[keep], side="left")


def grid_binf_norm(psi: np.ndarray) -> float:
    """``max_i W(psi[i, .])`` for grid samples, counting the step to zero past the end."""
    diffs = np.diff(psi, axis=1, append=np.zeros_like(psi[:, :1]))
    if psi.shape[-1] == 1:
        mags = np.abs(diffs[..., 0, 0])
    else:
        mags = np.linalg.norm(diffs, ord=2, axis=(2, 3))
    return float(mags.sum(axis=1).max())


def _damped_weights(kernel: GridKernel, r: float) -> np.ndarray:
    lag = kernel.times[:, None] - kernel.times[None, :]
    return np.exp(-r * np.maximum(lag, 0.0))[..., None, None] * kernel.increments


def _flat(x: np.ndarray) -> np.ndarray:
    """``(n, m, d, e)`` block array as an ``(n d, m e)`` matrix."""
    n, m, d, e = x.shape
    return x.transpose(0, 2, 1, 3).reshape(n * d, m * e)


def _unflat(x: np.ndarray, d: int, e: int) -> np.ndarray:
    return x.reshape(x.shape[0] // d, d, x.shape[1] // e, e).transpose(0, 2, 1, 3)


def apply_damped_operator(kernel: GridKernel, r: float, psi: np.ndarray) -> np.ndarray:
    """``F_r(psi)[i, m] = sum_{m <= k < i} exp(-r (t_i - t_k)) dK[i, k] psi[k, m]``."""
    d = kernel.dim
    out = _unflat(_flat(_damped_weights(kernel, r)) @ _flat(psi), d, d)
    lower = np.tril(np.ones((kernel.n + 1,) * 2, dtype=bool))
    return np.where(lower[..., None, None], out, 0.0)


def _contraction_bound(kernel: GridKernel, r: float) -> float:
    lag = kernel.times[:, None] - kernel.times[None, :]
    weights = np.exp(-r * np.maximum(lag, 0.0))
    return float((weights * kernel._inc_norms).sum(axis=1).max())


def contraction_ratio(kernel: GridKernel, r: float, psi1: np.ndarray, psi2: np.ndarray) -> float:
    """``|F_r psi1 - F_r psi2| / |psi1 - psi2|`` in the grid norm."""
    num = grid_binf_norm(apply_damped_operator(kernel, r, psi1 - psi2))
    den = grid_binf_norm(psi1 - psi2)
    return num / den if den > 0 else 0.0


def _select_rate(kernel: GridKernel, cfg: ResolventConfig) -> tuple[float, float]:
    span = kernel.b - kernel.a
    cap = _MAX_EXPONENT / span
    if cfg.r != "auto":
        r = float(cfg.r)
        if not r > 0:
            raise ValueError("r must be positive")
        if r > cap:
            raise NonContractionError(f"r = {r} overflows exp(r (b - a)); the limit is {cap:.6g}")
        lam = _contraction_bound(kernel, r)
        if lam >= 1:
            raise NonContractionError(f"F_r is not a contraction for r = {r} (bound {lam:.3g})")
        return r, lam
    knorm = kernel.norm()
    r = (max(math.log(4 * knorm), 0.0) + 1.0) / kernel.eta if knorm > 0 else 1.0 / kernel.eta
    r = min(r, cap)
    while True:
        lam = _contraction_bound(kernel, r)
        if lam < cfg.lambda_target:
            return r, lam
        if r >= cap:
            raise NonContractionError(
                f"no damping rate up to {cap:.6g} reaches lambda < {cfg.lambda_target} "
                f"(last bound {lam:.3g}); the kernel has too much variation near the diagonal")
        r = min(2 * r, cap)


def _picard_grid(kernel: GridKernel, cfg: ResolventConfig, initial=None):
    r, lam = _select_rate(kernel, cfg)
    ts = kernel.times
    damp = np.exp(-r * (ts - kernel.a))[:, None, None, None]
    undamp = math.exp(r * (kernel.b - kernel.a))
    d = kernel.dim
    w = _flat(_damped_weights(kernel, r))
    lower = np.tril(np.ones((kernel.n + 1,) * 2, dtype=bool))[..., None, None]
    rhs = -damp * kernel.values
    cur = np.zeros_like(kernel.values) if initial is None else np.asarray(initial, dtype=complex) * np.exp(
        -r * (ts - kernel.a))[:, None, None, None]
    for it in range(1, cfg.max_iter + 1):
        nxt = rhs + np.where(lower, _unflat(w @ _flat(cur), d, d), 0.0)
        gap = grid_binf_norm(nxt - cur)
        cur = nxt
        # the damped error is at most gap / (1 - lam); undoing the damping
        # multiplies it by at most exp(r (b - a))
        if gap * undamp <= cfg.tol * (1 - lam) * max(1.0, grid_binf_norm(cur / damp)):
            return cur / damp, r, it, lam
    raise NonContractionError(f"Picard iteration did not converge in {cfg.max_iter} steps")


def build_resolvent(kernel, cfg: ResolventConfig | None = None, initial=None) -> Resolvent:
    """Resolvent of an atomic or grid kernel.

    Atomic kernels use the exact recursion.  Grid kernels use the damped
    Picard iteration; the damping is undone relative to ``a`` so that
    ``exp(r t)`` never overflows for large ``t``.
    """
    cfg = cfg or ResolventConfig()
    if isinstance(kernel, AtomicKernel):
        return AtomicResolvent(kernel)
    if isinstance(kernel, GridKernel):
        values, r, its, lam = _picard_grid(kernel, cfg, initial)
        log.info("grid resolvent: r=%g, %d iterations, lambda=%.3g", r, its, lam)
        return GridResolvent(kernel, values, r, its, lam)
    raise TypeError(f"unsupported kernel type {type(kernel).__name__}")


# ---------------------------------------------------------------------------
# Volterra equations
# ---------------------------------------------------------------------------

class VolterraSolution:
    """``y(t) = g(t) - int_[a, t) d_alpha rho(t, alpha) g(alpha)``, evaluated on demand."""

    def __init__(self, resolvent: Resolvent, g: BVFunction):
        self.resolvent = resolvent
        self.g = g
        self.a = resolvent.kernel.a

    def __call__(self, t):
        t_arr = np.asarray(t, dtype=float)
        out = np.array([self._one(float(x)) for x in t_arr.reshape(-1)])
        return out.reshape(t_arr.shape + self.g.shape)

    def _one(self, t: float) -> np.ndarray:
        gt = np.asarray(self.g(np.array([t]))[0])
        if t <= self.a:
            return gt
        meas = self.resolvent.measure(t)
        integral = stieltjes_integrate(meas, self.g, IntervalSpec.left_closed(self.a, t))
        return gt - integral


def solve_volterra(kernel, resolvent: Resolvent, g: BVFunction, times=None):
    """Solve ``y = int d kappa y + g`` through the resolvent.

    Returns ``(times, values, solution)`` where ``solution`` evaluates ``y``
    anywhere on ``[a, b]``.  ``g`` must be a right-continuous
    :class:`BVFunction`.
    """
    if not isinstance(g, BVFunction):
        raise TypeError("g must be a BVFunction")
    if g.side != "right":
        raise ValueError("g must be right-continuous (side='right')")
    if resolvent.kernel is not kernel:
        raise ValueError("resolvent was built for a different kernel")
    sol = VolterraSolution(resolvent, g)
    if times is None:
        times = np.linspace(kernel.a, kernel.b, 65)
    times = np.asarray(times, dtype=float)
    return times, sol(times), sol


def resolvent_residual(kernel, resolvent: Resolvent, t: float, beta: float) -> float:
    """``|rho(t, beta) + kappa(t, beta) - int_[beta, t) d kappa(t, tau) rho(tau, beta)|``.

    For grid kernels the grid measure is used, so this measures how well the
    iteration solved the discrete equation.
    """
    if isinstance(kernel, GridKernel):
        i = int(resolvent._index(t))
        m = int(resolvent._index(beta))
        R = resolvent.values
        integral = sum((kernel.increments[i, k] @ R[k, m] for k in range(m, i)),
                       np.zeros((kernel.dim,) * 2, dtype=complex))
        return norm(R[i, m] + kernel.values[i, m] - integral)
    rho = resolvent.evaluate(t, beta)
    kap = kernel(t, beta)
    if beta >= t:
        return norm(rho + kap)
    meas = kernel.measure(t)
    integral = stieltjes_integrate(meas, lambda x: resolvent.evaluate(x, beta),
                                   IntervalSpec.left_closed(beta, t))
    return norm(rho + kap - integral)


def grid_source_residual(kernel: GridKernel, resolvent: GridResolvent, refine: int = 16) -> float:
    """Residual of the grid resolvent in the equation of the exact ``kernel.source``.

    ``rho(., t_m)`` is interpolated linearly between grid nodes and the
    Stieltjes integral against the exact kernel row is taken with a
    trapezoid sum on a grid ``refine`` times finer.  Returns the maximum over
    grid nodes ``t_m <= t_i``.
    """
    if kernel.source is None:
        raise ValueError("kernel has no exact source")
    R = resolvent.values
    ts = kernel.times
    d = kernel.dim
    worst = 0.0
    for i in range(1, kernel.n + 1):
        t = ts[i]
        for m in range(0, i + 1):
            beta = ts[m]
            exact = np.asarray(kernel.source(np.array(t), np.array(beta)), dtype=complex).reshape(d, d)
            if m == i:
                worst = max(worst, norm(R[i, m] + exact * 0.0))
                continue
            fine = np.linspace(beta, t, (i - m) * refine + 1)
            kv = np.asarray(kernel.source(np.full(fine.shape, t), fine), dtype=complex).reshape(-1, d, d)
            kv[-1] = 0.0
            col = R[m:i + 1, m]
            rv = np.stack([np.interp(fine, ts[m:i + 1], col[:, p, q].real)
                           + 1j * np.interp(fine, ts[m:i + 1], col[:, p, q].imag)
                           for p in range(d) for q in range(d)], axis=-1).reshape(-1, d, d)
            dk = np.diff(kv, axis=0)
            rmid = 0.5 * (rv[:-1] + rv[1:])
            integral = np.einsum("kab,kbc->ac", dk, rmid)
            worst = max(worst, norm(R[i, m] + exact - integral))
    return worst


def volterra_residual(kernel, y: Callable, g: Callable, t: float) -> float:
    """``|y(t) - int_[a, t) d kappa(t, tau) y(tau) - g(t)|`` for an atomic kernel."""
    yt = np.asarray(y(np.array([t]))[0])
    gt = np.asarray(g(np.array([t]))[0])
    if t <= kernel.a:
        return norm(yt - gt)
    integral = stieltjes_integrate(kernel.measure(t), y, IntervalSpec.left_closed(kernel.a, t))
    return norm(yt - integral - gt)


def picard_volterra(kernel: GridKernel, g, initial=None, cfg: ResolventConfig | None = None) -> np.ndarray:
    """Solve the grid Volterra equation for ``y`` directly by damped Picard iteration.

    ``g`` holds the forcing at the grid nodes, shape ``(n + 1, d)``; the
    result has the same shape.  The limit does not depend on ``initial``.
    """
    cfg = cfg or ResolventConfig()
    r, lam = _select_rate(kernel, cfg)
    ts = kernel.times
    damp = np.exp(-r * (ts - kernel.a))[:, None]
    w = _damped_weights(kernel, r)
    g = np.asarray(g, dtype=complex).reshape(kernel.n + 1, -1)
    cur = np.zeros_like(g) if initial is None else np.asarray(initial, dtype=complex).reshape(g.shape) * damp
    rhs = damp * g
    undamp = math.exp(r * (kernel.b - kernel.a))
    for _ in range(cfg.max_iter):
        nxt = rhs + np.einsum("ikab,kb->ia", w, cur)
        gap = float(np.max(np.abs(nxt - cur)))
        cur = nxt
        if gap * undamp <= cfg.tol * (1 - lam) * max(1.0, float(np.max(np.abs(cur / damp)))):
            return cur / damp
    raise NonContractionError(f"Picard iteration did not converge in {cfg.max_iter} steps")
