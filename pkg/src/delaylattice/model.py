"""Difference-delay systems, coefficient signals and initial data.

A system of the form

    y(t) = sum_j D_j(t) y(t - tau_j),   t > s,
    y(s + theta) = phi(theta),          -tau_N <= theta <= 0,

is described by a :class:`DelaySystem` (delays and coefficient signals) and an
:class:`InitialProblem` (system, start time ``s`` and initial data ``phi``).

Signals are continuous matrix- or vector-valued functions of time with a
computable total variation.  Three concrete families are provided:
:class:`Constant`, :class:`TrigPolynomial` and :class:`PiecewiseLinear`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate

__all__ = [
    "MatrixSignal",
    "Constant",
    "TrigPolynomial",
    "PiecewiseLinear",
    "DelaySystem",
    "InitialProblem",
    "DomainError",
    "norm",
    "eval_signal",
    "signal_variation",
    "check_compatibility",
    "DEFAULT_COMPAT_TOL",
    "project_compatible",
    "random_trig_system",
]

DEFAULT_COMPAT_TOL = 1e-9


class DomainError(ValueError):
    """Raised when a signal is evaluated outside its declared domain."""


def norm(x) -> float:
    """Euclidean norm for vectors, spectral norm for matrices, modulus for scalars."""
    x = np.asarray(x)
    if x.ndim == 0:
        return float(abs(x))
    if x.ndim == 1:
        return float(np.linalg.norm(x))
    if x.ndim == 2:
        if x.shape == (1, 1):
            return float(abs(x[0, 0]))
        return float(np.linalg.norm(x, 2))
    raise ValueError(f"norm: unsupported value of shape {x.shape}")


def _as_value(value, shape=None) -> np.ndarray:
    arr = np.asarray(value, dtype=complex)
    if shape is not None and arr.shape != tuple(shape):
        if arr.size == 1 and math.prod(shape) == 1:
            arr = arr.reshape(shape)
        else:
            raise ValueError(f"expected value of shape {tuple(shape)}, got {arr.shape}")
    return arr


class MatrixSignal:
    """Continuous function of time with values of a fixed ``shape``.

    Matrix coefficients have ``shape == (d, d)``; initial data uses ``(d,)``.
    Calling the signal with a scalar returns one value, with an array of times
    it returns a stacked array of shape ``times.shape + shape``.
    """

    shape: tuple[int, ...]

    @property
    def dim(self) -> int:
        return self.shape[0]

    @property
    def domain(self) -> tuple[float, float]:
        return (-math.inf, math.inf)

    def __call__(self, t):
        t_arr = np.asarray(t, dtype=float)
        lo, hi = self.domain
        if np.any(t_arr < lo) or np.any(t_arr > hi):
            raise DomainError(f"time outside signal domain [{lo}, {hi}]")
        out = self._evaluate(t_arr.reshape(-1))
        return out.reshape(t_arr.shape + self.shape)

    def _evaluate(self, t: np.ndarray) -> np.ndarray:  # pragma: no cover - abstract
        raise NotImplementedError

    def variation(self, a: float, b: float) -> float:
        """Total variation on ``[a, b]`` in the norm of :func:`norm`."""
        lo, hi = self.domain
        if a > b:
            raise ValueError("variation interval must satisfy a <= b")
        if a < lo or b > hi:
            raise DomainError(f"interval [{a}, {b}] outside signal domain [{lo}, {hi}]")
        if a == b:
            return 0.0
        return self._variation(a, b)

    def _variation(self, a: float, b: float) -> float:  # pragma: no cover - abstract
        raise NotImplementedError

    def scaled(self, factor: complex) -> "MatrixSignal":  # pragma: no cover - abstract
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class Constant(MatrixSignal):
    """A signal equal to ``value`` for every t."""

    value: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "value", _as_value(self.value))
        if self.value.ndim not in (1, 2):
            raise ValueError("Constant signal value must be a vector or a matrix")
        if self.value.ndim == 2 and self.value.shape[0] != self.value.shape[1]:
            raise ValueError("matrix signals must be square")

    @property
    def shape(self):
        return self.value.shape

    def _evaluate(self, t):
        return np.broadcast_to(self.value, t.shape + self.value.shape).copy()

    def _variation(self, a, b):
        return 0.0

    def scaled(self, factor):
        return Constant(self.value * factor)


@dataclass(frozen=True, eq=False)
class TrigPolynomial(MatrixSignal):
    """Finite sum ``sum_k C_k cos(w_k t) + S_k sin(w_k t)``.

    ``terms`` holds ``(w_k, C_k, S_k)`` triples with angular frequency ``w_k``;
    a constant offset is the term with ``w_k = 0``.  ``period`` is the common
    period of the terms and is kept as metadata.
    """

    terms: tuple
    period: float = 1.0

    def __post_init__(self):
        if not self.terms:
            raise ValueError("TrigPolynomial needs at least one term")
        if not self.period > 0:
            raise ValueError("period must be positive")
        shape = None
        clean = []
        for w, c, s in self.terms:
            c = _as_value(c, shape)
            shape = c.shape
            s = _as_value(s, shape)
            clean.append((float(w), c, s))
        if len(shape) not in (1, 2):
            raise ValueError("TrigPolynomial coefficients must be vectors or matrices")
        object.__setattr__(self, "terms", tuple(clean))
        object.__setattr__(self, "_freqs", np.array([w for w, _, _ in clean]))
        object.__setattr__(self, "_cos", np.stack([c for _, c, _ in clean]))
        object.__setattr__(self, "_sin", np.stack([s for _, _, s in clean]))

    @property
    def shape(self):
        return self._cos.shape[1:]

    def _evaluate(self, t):
        phase = np.outer(t, self._freqs)
        return (np.tensordot(np.cos(phase), self._cos, axes=1)
                + np.tensordot(np.sin(phase), self._sin, axes=1))

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        phase = np.outer(t.reshape(-1), self._freqs)
        w = self._freqs
        out = (np.tensordot(-np.sin(phase) * w, self._cos, axes=1)
               + np.tensordot(np.cos(phase) * w, self._sin, axes=1))
        return out.reshape(t.shape + self.shape)

    def _variation(self, a, b):
        wmax = float(np.max(np.abs(self._freqs)))
        if wmax == 0.0:
            return 0.0
        # split into panels no wider than a quarter of the fastest period so
        # each kink of |derivative| is resolved by the adaptive rule
        n_panels = max(1, int(math.ceil((b - a) * wmax / (math.pi / 2))))
        edges = np.linspace(a, b, n_panels + 1)
        total = 0.0
        for lo, hi in zip(edges[:-1], edges[1:]):
            val, _ = integrate.quad(lambda x: norm(self.derivative(x)), lo, hi,
                                    limit=200, epsabs=1e-13, epsrel=1e-11)
            total += val
        return total

    def scaled(self, factor):
        return TrigPolynomial(tuple((w, c * factor, s * factor) for w, c, s in self.terms),
                              self.period)


@dataclass(frozen=True, eq=False)
class PiecewiseLinear(MatrixSignal):
    """Linear interpolation between ``values[k]`` at sorted ``times[k]``."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=complex)
        if times.ndim != 1 or times.size < 1:
            raise ValueError("times must be a non-empty 1-d sequence")
        if values.shape[0] != times.size:
            raise ValueError("need one sample value per sample time")
        if values.ndim == 1:
            values = values.reshape(-1, 1, 1)
        if values.ndim not in (2, 3):
            raise ValueError("sample values must be vectors or matrices")
        if values.ndim == 3 and values.shape[1] != values.shape[2]:
            raise ValueError("matrix signals must be square")
        if np.any(np.diff(times) <= 0):
            raise ValueError("sample times must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @property
    def shape(self):
        return self.values.shape[1:]

    @property
    def domain(self):
        return (float(self.times[0]), float(self.times[-1]))

    def _evaluate(self, t):
        if self.times.size == 1:
            return np.broadcast_to(self.values[0], t.shape + self.shape).copy()
        k = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, self.times.size - 2)
        t0 = self.times[k]
        t1 = self.times[k + 1]
        w = ((t - t0) / (t1 - t0)).reshape((-1,) + (1,) * len(self.shape))
        return (1.0 - w) * self.values[k] + w * self.values[k + 1]

    def _variation(self, a, b):
        inner = self.times[(self.times > a) & (self.times < b)]
        pts = np.concatenate(([a], inner, [b]))
        vals = self(pts)
        return float(sum(norm(d) for d in np.diff(vals, axis=0)))

    def scaled(self, factor):
        return PiecewiseLinear(self.times, self.values * factor)


def eval_signal(m: MatrixSignal, t: float) -> np.ndarray:
    """Value of ``m`` at time ``t``."""
    return m(t)


def signal_variation(m: MatrixSignal, interval) -> float:
    """Total variation of ``m`` over the closed interval ``[a, b]``."""
    a, b = interval
    return m.variation(float(a), float(b))


@dataclass(frozen=True, eq=False)
class DelaySystem:
    """Delays ``tau_1 < ... < tau_N`` with one coefficient signal per delay."""

    dim: int
    delays: tuple
    coefficients: tuple

    def __post_init__(self):
        delays = tuple(float(x) for x in self.delays)
        coeffs = tuple(self.coefficients)
        if self.dim < 1:
            raise ValueError("dim must be a positive integer")
        if not delays:
            raise ValueError("at least one delay is required")
        if any(not tau > 0 for tau in delays):
            raise ValueError("delays must be strictly positive")
        if any(b <= a for a, b in zip(delays, delays[1:])):
            raise ValueError("delays must be strictly increasing")
        if len(coeffs) != len(delays):
            raise ValueError("need exactly one coefficient signal per delay")
        for c in coeffs:
            if tuple(c.shape) != (self.dim, self.dim):
                raise ValueError(f"coefficient shape {c.shape} does not match dim {self.dim}")
        object.__setattr__(self, "delays", delays)
        object.__setattr__(self, "coefficients", coeffs)

    @property
    def n_delays(self) -> int:
        return len(self.delays)

    @property
    def max_delay(self) -> float:
        return self.delays[-1]

    def coefficient_values(self, t) -> np.ndarray:
        """Stack of ``D_j(t)``: shape ``(N,) + t.shape + (d, d)``."""
        return np.stack([c(t) for c in self.coefficients])

    def scaled(self, factor: complex) -> "DelaySystem":
        return DelaySystem(self.dim, self.delays, tuple(c.scaled(factor) for c in self.coefficients))


@dataclass(frozen=True, eq=False)
class InitialProblem:
    """A system together with start time ``s`` and initial data on ``[-tau_N, 0]``."""

    system: DelaySystem
    start: float
    phi: MatrixSignal
    compat_tol: float = field(default=DEFAULT_COMPAT_TOL)

    def __post_init__(self):
        object.__setattr__(self, "start", float(self.start))
        if self.system.dim == 1 and tuple(self.phi.shape) == (1, 1):
            # scalar data given as a 1x1 signal
            if isinstance(self.phi, PiecewiseLinear):
                object.__setattr__(self, "phi", PiecewiseLinear(self.phi.times, self.phi.values.reshape(-1, 1)))
            elif isinstance(self.phi, Constant):
                object.__setattr__(self, "phi", Constant(self.phi.value.reshape(1)))
        if tuple(self.phi.shape) != (self.system.dim,):
            raise ValueError(f"phi must be C^{self.system.dim}-valued, got shape {self.phi.shape}")
        lo, hi = self.phi.domain
        tau_n = self.system.max_delay
        if isinstance(self.phi, PiecewiseLinear):
            if not (math.isclose(lo, -tau_n, abs_tol=1e-12) and math.isclose(hi, 0.0, abs_tol=1e-12)):
                raise ValueError(f"phi samples must cover exactly [-{tau_n}, 0], got [{lo}, {hi}]")
        elif lo > -tau_n or hi < 0:
            raise ValueError("phi must be defined on [-tau_N, 0]")

    def initial(self, theta) -> np.ndarray:
        """``phi(theta)`` with ``theta`` clamped into ``[-tau_N, 0]`` against rounding."""
        theta = np.clip(np.asarray(theta, dtype=float), -self.system.max_delay, 0.0)
        return self.phi(theta)

    def compatibility_residual(self) -> float:
        sys = self.system
        rhs = sum(sys.coefficients[j](self.start) @ self.initial(-tau)
                  for j, tau in enumerate(sys.delays))
        return norm(self.initial(0.0) - rhs)


def check_compatibility(p: InitialProblem, tol: float = DEFAULT_COMPAT_TOL) -> tuple[bool, float]:
    """Test membership of ``phi`` in the compatibility set at time ``s``.

    Returns ``(ok, residual)`` with ``residual = |phi(0) - sum_j D_j(s) phi(-tau_j)|``.
    """
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    residual = p.compatibility_residual()
    return residual <= tol, residual


def project_compatible(system: DelaySystem, start: float, phi: PiecewiseLinear) -> PiecewiseLinear:
    """Adjust the sample at ``theta = 0`` so that the data becomes compatible.

    Only valid when ``0`` is not itself one of the delayed sample points, which
    holds since all delays are positive.
    """
    rhs = sum(system.coefficients[j](start) @ phi(-tau) for j, tau in enumerate(system.delays))
    values = phi.values.copy()
    values[-1] = rhs
    return PiecewiseLinear(phi.times, values)


def random_trig_system(rng: np.random.Generator, dim: int, delays: Sequence[float],
                       n_terms: int = 2, bound: float = 0.9, period: float | None = None) -> DelaySystem:
    """Random trigonometric-polynomial coefficients with ``sum_k |C_k| + |S_k| <= bound``.

    The bound on the coefficient norms gives ``|D_j(t)| <= bound`` for all t.
    """
    period = float(period if period is not None else rng.uniform(0.5, 3.0))
    coeffs = []
    for _ in delays:
        terms = []
        raw = []
        for k in range(n_terms):
            c = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
            s = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
            if k == 0:
                s = np.zeros_like(s)
            raw.append((2 * math.pi * k / period, c, s))
        total = sum(norm(c) + norm(s) for _, c, s in raw)
        scale = bound / total
        for w, c, s in raw:
            terms.append((w, c * scale, s * scale))
        coeffs.append(TrigPolynomial(tuple(terms), period))
    return DelaySystem(dim, tuple(delays), tuple(coeffs))
