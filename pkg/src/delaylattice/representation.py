"""Solutions written as Stieltjes integrals of the fundamental solution.

For compatible initial data and ``t >= s``,

    y(t) = -sum_j int_[s, s + tau_j) d_alpha X(t, alpha) D_j(alpha) phi(alpha - tau_j - s).

Since ``alpha -> X(t, alpha)`` is purely atomic on ``[s, s + tau_N]`` each
integral is a finite sum over the atoms of the slice built by
:mod:`delaylattice.fundamental`.  :func:`certify_equivalence` compares the
formula with the direct recursion of :mod:`delaylattice.solver`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bvcalculus import IntervalSpec, stieltjes_integrate
from .fundamental import FundamentalSlice, FundamentalSolution
from .model import DomainError, InitialProblem, norm
from .solver import DirectSolver

__all__ = [
    "IncompatibleDataError",
    "CertificationReport",
    "represent_solution",
    "represent_recursive",
    "certify_equivalence",
    "certification_times",
]


class IncompatibleDataError(ValueError):
    """The representation is only valid for data satisfying the compatibility condition."""


@dataclass
class CertificationReport:
    max_error: float
    worst_time: float
    n_times: int
    times: np.ndarray
    errors: np.ndarray

    def summary(self) -> str:
        return f"max error = {self.max_error:.3e} at t = {self.worst_time:.17g} over {self.n_times} times"


def _integrands(p: InitialProblem):
    sys = p.system
    s = p.start
    out = []
    for tau, coef in zip(sys.delays, sys.coefficients):
        def g(alpha, tau=tau, coef=coef):
            alpha = np.asarray(alpha, dtype=float)
            return np.einsum("...ab,...b->...a", coef(alpha), p.initial(alpha - tau - s))
        out.append(g)
    return out


def represent_solution(p: InitialProblem, t: float, *, upper: str = "open", restrict: str = "function",
                       fundamental: FundamentalSolution | None = None,
                       slice_: FundamentalSlice | None = None, check: bool = True) -> np.ndarray:
    """``y(t)`` from the atoms of ``alpha -> X(t, alpha)`` on ``[s, s + tau_N]``.

    Parameters
    ----------
    upper : {"open", "closed"}
        Whether ``s + tau_j`` belongs to the j-th integration interval.  The
        formula uses ``"open"``.
    restrict : {"function", "measure"}
        Measure used on each interval (see :func:`~delaylattice.bvcalculus.stieltjes_integrate`).
        The two choices can only differ at a closed upper end.
    check : bool
        Raise :class:`IncompatibleDataError` if the data is not compatible.
    """
    if upper not in ("open", "closed"):
        raise ValueError("upper must be 'open' or 'closed'")
    sys = p.system
    s = p.start
    if t < s:
        raise DomainError("the representation holds for t >= s")
    if check:
        res = p.compatibility_residual()
        if res > p.compat_tol:
            raise IncompatibleDataError(f"compatibility residual = {res:.17g}")
    if slice_ is None:
        fs = fundamental if fundamental is not None else FundamentalSolution(sys)
        slice_ = fs.slice(t, s, verify=False)
    out = np.zeros(sys.dim, dtype=complex)
    for tau, g in zip(sys.delays, _integrands(p)):
        J = IntervalSpec(s, s + tau, True, upper == "closed")
        out = out - stieltjes_integrate(slice_.bv, g, J, restrict=restrict)
    return out


def represent_recursive(p: InitialProblem, t: float, fundamental: FundamentalSolution | None = None,
                        _memo: dict | None = None) -> np.ndarray:
    """Second route: apply the formula on ``[s, s + tau_N)`` and extend by the recursion.

    Exponential in ``(t - s) / tau_1``; intended for cross-checks on short
    horizons only.
    """
    sys = p.system
    s = p.start
    fs = fundamental if fundamental is not None else FundamentalSolution(sys)
    memo = {} if _memo is None else _memo
    if t <= s:
        return p.initial(t - s)
    if t < s + sys.max_delay:
        return represent_solution(p, t, fundamental=fs)
    if t in memo:
        return memo[t]
    val = sum(np.asarray(coef(t)) @ represent_recursive(p, t - tau, fs, memo)
              for tau, coef in zip(sys.delays, sys.coefficients))
    memo[t] = val
    return val


def certification_times(p: InitialProblem, horizon: float, n_samples: int, straddle: float = 1e-7,
                        seed: int | None = None, lattice_values=None) -> np.ndarray:
    """Uniform samples of ``[s, horizon]``, each ``s + f`` and ``s + f -/+ straddle``, plus random draws."""
    s = p.start
    if horizon < s:
        raise ValueError("horizon must be >= s")
    parts = [np.linspace(s, horizon, max(n_samples, 2))]
    if lattice_values is not None:
        f = np.asarray(lattice_values, dtype=float)
        f = f[f <= horizon - s]
        parts.extend([s + f, s + f - straddle, s + f + straddle])
    if seed is not None:
        rng = np.random.default_rng(seed)
        parts.append(rng.uniform(s, horizon, max(n_samples, 1)))
    times = np.unique(np.concatenate(parts))
    return times[(times >= s) & (times <= horizon)]


def certify_equivalence(p: InitialProblem, horizon: float, n_samples: int = 64, *,
                        straddle: float = 1e-7, seed: int | None = None, upper: str = "open",
                        restrict: str = "function") -> CertificationReport:
    """Largest ``|represent_solution - eval_solution|`` over sampled ``t`` in ``[s, horizon]``.

    The samples include every lattice-shifted time ``s + f`` and points
    ``straddle`` away on each side.
    """
    sys = p.system
    fs = FundamentalSolution(sys)
    lat = fs.table(max(horizon - p.start, 0.0) + sys.max_delay).lattice
    times = certification_times(p, horizon, n_samples, straddle, seed, lat.values)
    direct = DirectSolver(p, warn=False).evaluate(times)
    errors = np.empty(times.size)
    for i, t in enumerate(times):
        rep = represent_solution(p, float(t), upper=upper, restrict=restrict, fundamental=fs)
        errors[i] = norm(rep - direct[i])
    k = int(np.argmax(errors))
    return CertificationReport(float(errors[k]), float(times[k]), times.size, times, errors)
