import itertools
import math

import numpy as np
import pytest

from delaylattice.model import (Constant, DelaySystem, InitialProblem, PiecewiseLinear, project_compatible,
                                random_trig_system)

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def report():
    """Record one pass/fail line per acceptance criterion."""

    def _report(number: int, ok: bool, detail: str):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} ({detail})"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return _report


def scalar_system(coeffs, delays):
    return DelaySystem(1, tuple(delays), tuple(Constant([[c]]) for c in coeffs))


def half_fixture():
    """d = 1, D_1 = 0.5, tau = 1, s = 0, phi(theta) = 1 - theta (compatible)."""
    sys = scalar_system([0.5], [1.0])
    return InitialProblem(sys, 0.0, PiecewiseLinear([-1.0, 0.0], [[2.0], [1.0]]))


# ---------------------------------------------------------------------------
# independent oracles
# ---------------------------------------------------------------------------

def offset(n, delays):
    return math.fsum(k * tau for k, tau in zip(n, delays))


def naive_fundamental(sys, t, s):
    """Plain recursion on multi-indices, no memo: X(t, s) = I + sum_j D_j(t) X(t - tau_j, s)."""
    theta = t - s
    d = sys.dim
    N = sys.n_delays

    def rec(n):
        if offset(n, sys.delays) > theta:
            return np.zeros((d, d), dtype=complex)
        u = t - offset(n, sys.delays)
        out = np.eye(d, dtype=complex)
        for j in range(N):
            m = n[:j] + (n[j] + 1,) + n[j + 1:]
            out = out + np.asarray(sys.coefficients[j](u)) @ rec(m)
        return out

    return rec((0,) * N)


def naive_solution(p, t):
    """Method-of-steps recursion y(t) = sum_j D_j(t) y(t - tau_j), phi before s."""
    sys = p.system
    theta = t - p.start
    N = sys.n_delays

    def rec(n):
        v = offset(n, sys.delays)
        if not v < theta:
            return p.initial(t - v - p.start)
        u = t - v
        out = np.zeros(sys.dim, dtype=complex)
        for j in range(N):
            m = n[:j] + (n[j] + 1,) + n[j + 1:]
            out = out + np.asarray(sys.coefficients[j](u)) @ rec(m)
        return out

    if theta <= 0:
        return p.initial(theta)
    return rec((0,) * N)


def brute_lattice(delays, horizon, merge_tol):
    """All sums n . tau <= horizon from a full N-fold product, merged like the library."""
    ranges = [range(int(math.floor(horizon / tau)) + 1) for tau in delays]
    items = []
    for n in itertools.product(*ranges):
        v = offset(n, delays)
        if v <= horizon:
            items.append((v, n))
    items.sort()
    groups = []
    for v, n in items:
        if groups and v - groups[-1][0] <= merge_tol:
            groups[-1][1].add(n)
        else:
            groups.append((v, {n}))
    return groups


# ---------------------------------------------------------------------------
# random problems
# ---------------------------------------------------------------------------

def random_delays(rng, n, commensurate=False):
    tau1 = rng.uniform(0.5, 1.0)
    if n == 1:
        return (tau1,)
    if commensurate:
        # rational multiples of tau_1 up to 2, so that lattice sums collide
        allowed = [k for k in (1.5, 2.0, 2.5, 3.0, 3.5, 4.0) if k * tau1 <= 2.0]
        mult = np.sort(rng.choice(allowed, size=n - 1, replace=False))
        return (tau1,) + tuple(float(k * tau1) for k in mult)
    rest = np.sort(rng.uniform(tau1 + 0.05, 2.0, size=n - 1))
    while np.any(np.diff(rest) < 0.02):
        rest = np.sort(rng.uniform(tau1 + 0.05, 2.0, size=n - 1))
    return (tau1,) + tuple(float(x) for x in rest)


def random_problem(rng, dim=None, n_delays=None, commensurate=None, start=None, n_phi=7):
    dim = int(rng.integers(1, 4)) if dim is None else dim
    n_delays = int(rng.integers(1, 4)) if n_delays is None else n_delays
    commensurate = bool(rng.integers(0, 2)) if commensurate is None else commensurate
    delays = random_delays(rng, n_delays, commensurate)
    sys = random_trig_system(rng, dim, delays)
    s = float(rng.uniform(-1.0, 1.0)) if start is None else start
    theta = np.linspace(-delays[-1], 0.0, n_phi)
    vals = rng.normal(size=(n_phi, dim)) + 1j * rng.normal(size=(n_phi, dim))
    phi = project_compatible(sys, s, PiecewiseLinear(theta, vals))
    return InitialProblem(sys, s, phi)


def random_bv(rng, shape=None):
    """Piecewise-linear continuous part plus a few jumps, random side and shape."""
    from delaylattice.bvcalculus import BVFunction, IntervalSpec

    shape = [(), (2,), (2, 2)][int(rng.integers(0, 3))] if shape is None else shape
    lo = float(rng.uniform(-1.0, 0.0))
    hi = lo + float(rng.uniform(0.5, 2.0))
    n = int(rng.integers(2, 8))
    times = np.sort(np.concatenate(([lo, hi], rng.uniform(lo, hi, n - 2))))
    vals = rng.normal(size=(n,) + shape) + 1j * rng.normal(size=(n,) + shape)
    k = int(rng.integers(0, 5))
    loc = np.unique(rng.uniform(lo, hi, k))
    if rng.uniform() < 0.5 and loc.size:
        loc[0] = lo  # atom at a domain end
    jumps = rng.normal(size=(loc.size,) + shape)
    side = "left" if rng.uniform() < 0.5 else "right"
    return BVFunction.piecewise_linear(times, vals, side=side, locations=loc, jumps=jumps,
                                       domain=IntervalSpec.closed(lo, hi))
