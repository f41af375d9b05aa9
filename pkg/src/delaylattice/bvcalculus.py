"""Functions of bounded variation and Lebesgue-Stieltjes integration.

A :class:`BVFunction` is stored as a continuous part plus finitely many jumps::

    f(x) = c(x) + sum_{atoms l} J_l * H(x - l)

where ``H(x - l)`` is ``x > l`` for left-continuous functions and ``x >= l``
for right-continuous ones.  The continuous part is any continuous callable
sampled on a grid; it is exact (for variation and quadrature) when it is
piecewise linear on that grid.

Endpoint conventions follow the usual ``a-/a+/b-/b+`` bound notation, encoded
in :class:`IntervalSpec`: a lower bound ``a-`` means ``a`` belongs to the
interval, ``a+`` that it does not; an upper bound ``b+`` means ``b`` belongs to
it, ``b-`` that it does not.

Two different measures can be attached to ``f`` and an interval ``J``:

* ``nu_(f|J)``, the measure of the restricted function, used by
  :func:`stieltjes_integrate` by default;
* ``(nu_f)|J``, the restriction of the measure of ``f`` on its whole domain.

They differ only at endpoints of ``J`` interior to the domain: at a closed
lower end ``a`` unless ``f`` is left-continuous at ``a``, at a closed upper
end ``b`` unless ``f`` is right-continuous at ``b``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .model import MatrixSignal, PiecewiseLinear, norm

__all__ = [
    "IntervalSpec",
    "BVFunction",
    "BVError",
    "total_variation",
    "measure_of",
    "measure_total_variation",
    "stieltjes_integrate",
    "variation_product_bound",
    "partition_variation",
    "refining_partitions",
    "sup_norm",
]

LEFT = "left"
RIGHT = "right"


class BVError(ValueError):
    pass


@dataclass(frozen=True)
class IntervalSpec:
    lo: float
    hi: float
    include_lo: bool = True
    include_hi: bool = True

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise BVError(f"interval needs lo <= hi, got [{self.lo}, {self.hi}]")

    @classmethod
    def closed(cls, a, b):
        return cls(float(a), float(b), True, True)

    @classmethod
    def left_closed(cls, a, b):
        """``[a, b)``, written ``a-`` to ``b-`` in bound notation."""
        return cls(float(a), float(b), True, False)

    @classmethod
    def from_bounds(cls, a, a_side: str, b, b_side: str):
        """Build from bound notation, e.g. ``from_bounds(s, '-', s + tau, '-')`` is ``[s, s+tau)``."""
        for side in (a_side, b_side):
            if side not in "+-" or len(side) != 1:
                raise BVError(f"bound side must be '+' or '-', got {side!r}")
        return cls(float(a), float(b), a_side == "-", b_side == "+")

    @classmethod
    def point(cls, c):
        return cls(float(c), float(c), True, True)

    @property
    def is_empty(self) -> bool:
        return self.lo == self.hi and not (self.include_lo and self.include_hi)

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        lower = x >= self.lo if self.include_lo else x > self.lo
        upper = x <= self.hi if self.include_hi else x < self.hi
        return lower & upper

    def within(self, other: "IntervalSpec") -> bool:
        """True when this interval is a subset of ``other``."""
        if self.is_empty:
            return True
        if self.lo < other.lo or (self.lo == other.lo and self.include_lo and not other.include_lo):
            return False
        if self.hi > other.hi or (self.hi == other.hi and self.include_hi and not other.include_hi):
            return False
        return True

    def __str__(self):
        return f"{'[' if self.include_lo else '('}{self.lo}, {self.hi}{']' if self.include_hi else ')'}"


def _mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Product of a measure mass ``a`` acting on the left of an integrand value ``b``."""
    if a.ndim == 2 and b.ndim in (1, 2) and a.shape[1] == b.shape[0]:
        return a @ b
    return a * b


class BVFunction:
    """Bounded-variation function on ``domain`` with a stored side convention.

    Parameters
    ----------
    domain : IntervalSpec
    shape : tuple
        Shape of one value (``()`` scalar, ``(d,)`` vector, ``(d, d)`` matrix).
    continuous : callable, MatrixSignal or None
        Continuous part ``c``; ``None`` means zero.  Must accept arrays.
    grid : array, optional
        Sample points of ``c`` used for variation and quadrature.  Defaults to
        the breakpoints of a :class:`PiecewiseLinear` part, else the domain ends.
    locations, jumps : arrays
        Atom locations (strictly increasing, inside the closed domain) and the
        jump ``f(l+) - f(l-)`` at each.
    side : {"left", "right"}
        Continuity convention at the atoms.
    """

    def __init__(self, domain: IntervalSpec, shape=(), continuous=None, grid=None,
                 locations=(), jumps=None, side: str = LEFT):
        if side not in (LEFT, RIGHT):
            raise BVError("side must be 'left' or 'right'")
        self.domain = domain
        self.shape = tuple(shape)
        self.side = side
        loc = np.asarray(locations, dtype=float).reshape(-1)
        if jumps is None:
            jumps = np.zeros((0,) + self.shape)
        jumps = np.asarray(jumps, dtype=complex).reshape((loc.size,) + self.shape)
        if np.any(np.diff(loc) <= 0):
            raise BVError("atom locations must be strictly increasing")
        if loc.size and (loc[0] < domain.lo or loc[-1] > domain.hi):
            raise BVError("atom locations must lie inside the domain")
        self.locations = loc
        self.jumps = jumps
        self._c = continuous
        if grid is None:
            pts = [domain.lo, domain.hi]
            if isinstance(continuous, PiecewiseLinear):
                pts.extend(continuous.times)
            grid = pts
        grid = np.unique(np.clip(np.asarray(grid, dtype=float), domain.lo, domain.hi))
        grid = np.union1d(grid, [domain.lo, domain.hi])
        self.grid = grid

    # -- construction helpers -------------------------------------------------
    @classmethod
    def piecewise_linear(cls, times, values, side=LEFT, locations=(), jumps=None,
                         domain: IntervalSpec | None = None):
        values = np.asarray(values, dtype=complex)
        times = np.asarray(times, dtype=float)
        shape = values.shape[1:]
        if values.ndim == 1:
            sig = _ScalarPL(times, values)
        else:
            sig = PiecewiseLinear(times, values)
        if domain is None:
            domain = IntervalSpec.closed(times[0], times[-1])
        return cls(domain, shape, sig, times, locations, jumps, side)

    @classmethod
    def step(cls, domain: IntervalSpec, location: float, height, side=LEFT, base=0.0):
        height = np.asarray(height, dtype=complex)
        shape = height.shape
        base = np.broadcast_to(np.asarray(base, dtype=complex), shape)
        const = _ConstPart(base)
        return cls(domain, shape, const, None, [location], [height], side)

    @classmethod
    def from_plateaus(cls, domain: IntervalSpec, locations, plateaus, side=LEFT,
                      atom_threshold: float | None = None):
        """Piecewise-constant function from values between consecutive atoms.

        ``plateaus[0]`` is the value approaching the first atom from the left,
        ``plateaus[k + 1]`` the value right after atom ``k``.  Jumps whose norm
        does not exceed ``atom_threshold`` (default ``1e-10 (1 + max |plateau|)``)
        are dropped.
        """
        plateaus = np.asarray(plateaus, dtype=complex)
        loc = np.asarray(locations, dtype=float)
        if plateaus.shape[0] != loc.size + 1:
            raise BVError("need one more plateau than atoms")
        shape = plateaus.shape[1:]
        jumps = np.diff(plateaus, axis=0)
        if atom_threshold is None:
            scale = max((norm(v) for v in plateaus), default=0.0)
            atom_threshold = 1e-10 * (1.0 + scale)
        keep = np.array([norm(j) > atom_threshold for j in jumps], dtype=bool)
        return cls(domain, shape, _ConstPart(plateaus[0]), None, loc[keep], jumps[keep], side)

    # -- evaluation -----------------------------------------------------------
    def _cont(self, x: np.ndarray) -> np.ndarray:
        if self._c is None:
            return np.zeros(x.shape + self.shape, dtype=complex)
        return np.asarray(self._c(x), dtype=complex).reshape(x.shape + self.shape)

    def _jump_sum(self, x: np.ndarray, mode: str) -> np.ndarray:
        if mode == "lt":
            active = self.locations[None, :] < x.reshape(-1, 1)
        else:
            active = self.locations[None, :] <= x.reshape(-1, 1)
        out = np.tensordot(active.astype(float), self.jumps, axes=1) if self.locations.size else \
            np.zeros((x.size,) + self.shape, dtype=complex)
        return out.reshape(x.shape + self.shape)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return self._cont(x) + self._jump_sum(x, "lt" if self.side == LEFT else "le")

    def left_limit(self, x):
        x = np.asarray(x, dtype=float)
        return self._cont(x) + self._jump_sum(x, "lt")

    def right_limit(self, x):
        x = np.asarray(x, dtype=float)
        return self._cont(x) + self._jump_sum(x, "le")

    @property
    def atoms(self):
        """List of ``(location, value before, value after)``."""
        pre = self.left_limit(self.locations)
        post = self.right_limit(self.locations)
        return [(float(l), pre[i], post[i]) for i, l in enumerate(self.locations)]

    def _clipped_grid(self, J: IntervalSpec) -> np.ndarray:
        inner = self.grid[(self.grid > J.lo) & (self.grid < J.hi)]
        return np.concatenate(([J.lo], inner, [J.hi]))

    def _check_sub(self, J: IntervalSpec):
        if not J.within(self.domain):
            raise BVError(f"interval {J} is not contained in the domain {self.domain}")

    def atom_mass(self, interval: IntervalSpec) -> np.ndarray:
        """Mass of ``nu_(f|interval)`` at each atom (zero for atoms outside it)."""
        inside = interval.contains(self.locations)
        mass = self.jumps * inside.reshape((-1,) + (1,) * len(self.shape))
        if self.side == LEFT and interval.include_hi:
            mass[self.locations == interval.hi] = 0.0
        if self.side == RIGHT and interval.include_lo:
            mass[self.locations == interval.lo] = 0.0
        return mass


class _ConstPart:
    def __init__(self, value):
        self.value = np.asarray(value, dtype=complex)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(self.value, x.shape + self.value.shape)


class _ScalarPL:
    def __init__(self, times, values):
        self.times = np.asarray(times, dtype=float)
        self.values = np.asarray(values, dtype=complex)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return (np.interp(x, self.times, self.values.real)
                + 1j * np.interp(x, self.times, self.values.imag))


def total_variation(f: BVFunction, J: IntervalSpec | None = None) -> float:
    """``W_J(f)``: continuous-part variation plus the norms of jumps seen inside ``J``.

    A left-continuous jump at ``l`` is seen when ``l`` is in ``J`` and ``J``
    extends to the right of ``l``; a right-continuous one when ``l`` is in
    ``J`` and ``J`` extends to its left.
    """
    J = f.domain if J is None else J
    f._check_sub(J)
    if J.is_empty:
        return 0.0
    pts = f._clipped_grid(J)
    c = f._cont(pts)
    total = sum(norm(d) for d in np.diff(c, axis=0))
    for loc, jump in zip(f.locations, f.jumps):
        if not J.contains(loc):
            continue
        if f.side == LEFT and loc < J.hi:
            total += norm(jump)
        elif f.side == RIGHT and loc > J.lo:
            total += norm(jump)
    return float(total)


def _domain_mass(f: BVFunction) -> np.ndarray:
    """Atom masses of ``nu_f`` with ``f`` considered on its whole domain."""
    return f.atom_mass(f.domain)


def measure_of(f: BVFunction, B: IntervalSpec) -> np.ndarray:
    """``nu_f(B)`` for an interval ``B`` inside the domain of ``f``.

    Atoms interior to the domain carry the full jump ``f(l+) - f(l-)``; a
    closed left end of the domain carries ``f(a+) - f(a)`` and a closed right
    end ``f(b) - f(b-)``.
    """
    f._check_sub(B)
    if B.is_empty:
        return np.zeros(f.shape, dtype=complex)
    inside = B.contains(f.locations)
    atoms = _domain_mass(f)[inside].sum(axis=0) if inside.any() else np.zeros(f.shape, dtype=complex)
    cont = f._cont(np.array([B.hi]))[0] - f._cont(np.array([B.lo]))[0]
    return np.asarray(atoms + cont)


def measure_total_variation(f: BVFunction, J: IntervalSpec | None = None,
                            restrict: str = "function") -> float:
    """Total variation ``|nu|(J)`` of ``nu_(f|J)`` (or ``(nu_f)|J`` with ``restrict="measure"``)."""
    J = f.domain if J is None else J
    f._check_sub(J)
    if J.is_empty:
        return 0.0
    pts = f._clipped_grid(J)
    c = f._cont(pts)
    total = sum(norm(d) for d in np.diff(c, axis=0))
    mass = _restricted_mass(f, J, restrict)
    return float(total + sum(norm(m) for m in mass))


def _restricted_mass(f: BVFunction, J: IntervalSpec, restrict: str) -> np.ndarray:
    if restrict == "function":
        return f.atom_mass(J)
    if restrict == "measure":
        inside = J.contains(f.locations)
        return _domain_mass(f) * inside.reshape((-1,) + (1,) * len(f.shape))
    raise BVError("restrict must be 'function' or 'measure'")


def _eval_integrand(g, x: np.ndarray) -> np.ndarray:
    if isinstance(g, MatrixSignal):
        lo, hi = g.domain
        if x.size and (x.min() < lo or x.max() > hi):
            raise BVError(f"integrand domain [{lo}, {hi}] does not cover the interval")
    return np.asarray(g(x), dtype=complex)


def stieltjes_integrate(f: BVFunction, g: Callable, J: IntervalSpec | None = None,
                        restrict: str = "function"):
    """``int_J g df`` with the mass of ``df`` multiplying ``g`` from the left.

    Atoms contribute ``mass @ g(l)``; the continuous part is integrated by the
    trapezoid rule on the grid of ``f``, exact when ``g`` and ``c`` are both
    linear on each grid cell.  ``restrict`` selects ``nu_(f|J)`` (the default)
    or ``(nu_f)|J``.
    """
    J = f.domain if J is None else J
    f._check_sub(J)
    if J.is_empty:
        return None
    if isinstance(g, MatrixSignal):
        lo, hi = g.domain
        if J.lo < lo or J.hi > hi:
            raise BVError(f"integrand domain [{lo}, {hi}] does not cover {J}")
    mass = _restricted_mass(f, J, restrict)
    total = None
    nz = np.flatnonzero([np.any(m != 0) for m in mass]) if mass.size else np.zeros(0, int)
    if nz.size:
        gv = _eval_integrand(g, f.locations[nz])
        for k, i in enumerate(nz):
            term = _mul(mass[i], gv[k])
            total = term if total is None else total + term
    if J.hi > J.lo and f._c is not None:
        pts = f._clipped_grid(J)
        dc = np.diff(f._cont(pts), axis=0)
        if np.any(dc != 0):
            gv = _eval_integrand(g, pts)
            gmid = 0.5 * (gv[:-1] + gv[1:])
            for k in range(dc.shape[0]):
                term = _mul(dc[k], gmid[k])
                total = term if total is None else total + term
    if total is None:
        probe = _eval_integrand(g, np.array([J.lo]))[0]
        total = _mul(np.zeros(f.shape, dtype=complex), probe)
    return total


def sup_norm(f: BVFunction, J: IntervalSpec | None = None) -> float:
    """``sup_J |f|`` over grid points and the one-sided values at atoms."""
    J = f.domain if J is None else J
    if J.is_empty:
        return 0.0
    pts = f._clipped_grid(J)
    keep = J.contains(pts)
    vals = [norm(v) for v in f(pts[keep])]
    # approach the open ends from inside
    if not J.include_lo:
        vals.append(norm(f.right_limit(np.array([J.lo]))[0]))
    if not J.include_hi:
        vals.append(norm(f.left_limit(np.array([J.hi]))[0]))
    for loc in f.locations:
        if J.lo <= loc <= J.hi:
            if loc > J.lo:
                vals.append(norm(f.left_limit(np.array([loc]))[0]))
            if loc < J.hi:
                vals.append(norm(f.right_limit(np.array([loc]))[0]))
            if J.contains(loc):
                vals.append(norm(f(np.array([loc]))[0]))
    return float(max(vals, default=0.0))


def variation_product_bound(f: BVFunction, g: BVFunction, J: IntervalSpec | None = None) -> float:
    """``W_J(f) sup_J |g| + W_J(g) sup_J |f|``, an upper bound for ``W_J(fg)``."""
    J = f.domain if J is None else J
    return total_variation(f, J) * sup_norm(g, J) + total_variation(g, J) * sup_norm(f, J)


def partition_variation(func: Callable, points) -> float:
    """``sum |func(x_i) - func(x_{i-1})|`` over a sorted partition."""
    pts = np.asarray(points, dtype=float)
    vals = np.asarray(func(pts))
    return float(sum(norm(d) for d in np.diff(vals, axis=0)))


def refining_partitions(f: BVFunction, J: IntervalSpec, levels: int = 6, base: int = 4):
    """Partition sums of ``f`` on ``J`` for dyadically refined partitions.

    Each partition contains the grid of ``f`` and puts points on both sides of
    every atom at a distance that shrinks with the level.  Every sum is a lower
    bound for ``W_J(f)`` and the sequence converges to it.
    """
    out = []
    for k in range(levels):
        n = base * 2 ** k
        pts = np.linspace(J.lo, J.hi, n + 1)
        extra = []
        eps = (J.hi - J.lo) / (n * 8) if J.hi > J.lo else 0.0
        for loc in f.locations:
            if J.contains(loc):
                extra.append(loc)
            if loc - eps > J.lo:
                extra.append(loc - eps)
            if loc + eps < J.hi:
                extra.append(loc + eps)
        pts = np.union1d(np.union1d(pts, extra), f._clipped_grid(J))
        pts = pts[J.contains(pts)] if not (J.include_lo and J.include_hi) else pts
        out.append(partition_variation(f, pts))
    return out
