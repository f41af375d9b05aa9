"""Empirical exponential-decay estimates from slice total variations.

If ``V(t) = W_[s, s + tau_N](X(t, .))`` decays like ``c exp(-alpha (t - s))``
then every solution decays exponentially.  This module samples ``V`` and fits
``log V = log c - alpha (t - s)``.  The fit is a diagnostic only: a positive
rate is evidence, not a proof, and a non-positive one proves nothing.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fundamental import FundamentalSolution
from .model import DelaySystem

__all__ = [
    "DecayEstimate",
    "variation_profile",
    "fit_decay",
    "mid_plateau_times",
    "upper_envelope",
]

DECAY = "decay certified (empirical)"
NO_DECAY = "no decay detected (empirical)"
EXTINCT = "identically zero: finite-time extinction"


@dataclass
class DecayEstimate:
    """Least-squares fit of ``log V`` against ``t - s``.

    ``c`` and ``alpha`` come from all samples with ``V > 0``; the
    ``envelope_*`` fields repeat the fit on the upper hull of the points
    ``(t - s, log V)``, which is the relevant statistic when ``V`` oscillates.
    For an identically zero profile ``c = alpha = 0`` and ``verdict`` reports
    extinction.
    """

    samples: np.ndarray
    c: float
    alpha: float
    residual: float
    envelope_c: float
    envelope_alpha: float
    verdict: str

    @property
    def extinct(self) -> bool:
        return self.verdict == EXTINCT

    def summary(self) -> str:
        if self.extinct:
            return f"verdict: {self.verdict}"
        return (f"c = {self.c:.6g}, alpha = {self.alpha:.6g}, residual = {self.residual:.3e}, "
                f"envelope alpha = {self.envelope_alpha:.6g}; verdict: {self.verdict}")


def mid_plateau_times(lattice_values: np.ndarray, lo: float, hi: float, n_points: int) -> np.ndarray:
    """Move ``n_points`` nominal offsets in ``[lo, hi]`` to the middle of their lattice gap.

    ``V`` changes only when ``t - s`` crosses a lattice value, so sampling in
    the middle of each gap keeps the samples away from those crossings.
    """
    v = np.asarray(lattice_values, dtype=float)
    nominal = np.linspace(lo, hi, n_points)
    k = np.searchsorted(v, nominal, side="right")
    left = v[np.clip(k - 1, 0, v.size - 1)]
    right = np.where(k < v.size, v[np.clip(k, 0, v.size - 1)], np.inf)
    mids = np.where(np.isfinite(right), 0.5 * (left + right), nominal)
    mids = mids[(mids >= lo) & (mids <= hi)]
    return np.unique(mids)


def variation_profile(sys: DelaySystem, s: float, t_max: float, n_points: int = 64,
                      mid_plateau: bool = True) -> np.ndarray:
    """Samples ``(t - s, V(t))`` for ``t`` in ``[s + tau_N, t_max]``, shape ``(k, 2)``."""
    tau_n = sys.max_delay
    if not t_max > s + tau_n:
        raise ValueError("t_max must exceed s + tau_N")
    fs = FundamentalSolution(sys)
    lo, hi = tau_n, t_max - s
    if mid_plateau:
        # one extra delay so that the last gap below hi has a right neighbour
        lat = fs.table(hi + sys.max_delay).lattice
        offsets = mid_plateau_times(lat.values, lo, hi, n_points)
    else:
        offsets = np.linspace(lo, hi, n_points)
    out = np.empty((offsets.size, 2))
    for i, x in enumerate(offsets):
        out[i] = x, fs.slice(s + x, s, verify=False).total_variation()
    return out


def upper_envelope(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Indices of the vertices of the upper convex hull of the points ``(x, y)``."""
    order = np.argsort(x, kind="stable")
    hull: list[int] = []
    for i in order:
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            cross = (x[b] - x[a]) * (y[i] - y[a]) - (y[b] - y[a]) * (x[i] - x[a])
            if cross >= 0:
                hull.pop()
            else:
                break
        hull.append(i)
    return np.array(hull, dtype=int)


def _linear_fit(x, y):
    if np.ptp(x) == 0:
        return float(np.mean(y)), 0.0, 0.0
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (intercept + slope * x)
    return float(intercept), float(-slope), float(np.sqrt(np.mean(resid ** 2)))


def fit_decay(samples) -> DecayEstimate:
    """Fit ``V ~ c exp(-alpha (t - s))`` to profile samples ``(t - s, V)``."""
    samples = np.asarray(samples, dtype=float).reshape(-1, 2)
    x, v = samples[:, 0], samples[:, 1]
    pos = v > 0
    if not pos.any():
        return DecayEstimate(samples, 0.0, 0.0, 0.0, 0.0, 0.0, EXTINCT)
    if pos.sum() < 3:
        raise ValueError("need at least three samples with V > 0 to fit a rate")
    xp, lv = x[pos], np.log(v[pos])
    log_c, alpha, resid = _linear_fit(xp, lv)
    alpha += 0.0  # no negative zero
    hull = upper_envelope(xp, lv)
    env_log_c, env_alpha, _ = _linear_fit(xp[hull], lv[hull])
    env_alpha += 0.0
    verdict = DECAY if alpha > 0 else NO_DECAY
    return DecayEstimate(samples, float(np.exp(log_c)), alpha, resid,
                         float(np.exp(env_log_c)), env_alpha, verdict)
