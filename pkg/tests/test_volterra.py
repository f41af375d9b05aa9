import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from delaylattice.bvcalculus import BVFunction
from delaylattice.fundamental import FundamentalSolution
from delaylattice.model import norm
from delaylattice.solver import eval_solution
from delaylattice.volterra import (AtomicKernel, GridKernel, NonContractionError, ResolventConfig,
                                   apply_damped_operator, build_resolvent, contraction_ratio,
                                   forcing_from_initial, forcing_function, grid_binf_norm,
                                   grid_source_residual, kernel_from_system, picard_volterra,
                                   resolvent_residual, solve_volterra, step_measure, volterra_residual)

from conftest import half_fixture, random_problem, scalar_system

seeds = st.integers(0, 2 ** 31 - 1)


def linear_kernel(c, n, a=0.0, b=1.0):
    # kappa(t, tau) = -c (t - tau); the resolvent is exp(c (t - beta)) - 1
    return GridKernel.from_function(lambda t, tau: -c * (t - tau), a, b, n)


def test_step_measure_left_continuous():
    sys = scalar_system([0.5, 0.25], [1.0, 2.0])
    mu = step_measure(sys, 0.0, np.array([-2.5, -2.0, -1.5, -1.0, -0.5, 0.0]))[:, 0, 0]
    np.testing.assert_allclose(mu, [0.0, 0.0, 0.25, 0.25, 0.75, 0.75])


def test_atomic_kernel_values():
    sys = scalar_system([0.5, 0.25], [1.0, 2.0])
    k = AtomicKernel(sys, 0.0)
    assert (k.a, k.b) == (0.0, 2.0)
    # k(t, tau) = -sum_{tau <= t - tau_j} D_j
    assert k(1.5, 0.2)[0, 0] == -0.5
    assert k(1.5, 0.6)[0, 0] == 0.0
    assert k(2.0, 0.0)[0, 0] == -0.75
    assert k(2.0, 1.0)[0, 0] == -0.5
    locs = [loc for loc, _, _ in k.atoms(2.0)]
    assert locs == [0.0, 1.0]
    meas = k.measure(2.0)
    np.testing.assert_allclose(meas(np.array([0.0, 0.5, 1.0, 1.5]))[:, 0, 0], [-0.75, -0.5, -0.5, 0.0])
    assert k.variation_near_diagonal(0.9) == 0.0
    assert k.variation_near_diagonal(1.0) == 0.5
    with pytest.raises(ValueError):
        k(2.5, 0.0)


def test_resolvent_small_example():
    sys = scalar_system([0.5], [1.0])
    k = AtomicKernel(sys, 0.0)
    res = build_resolvent(k)
    # rho(u, beta) = sum_j D_j (1 + rho(u - tau_j, beta)) when u - tau_j >= beta
    assert res.evaluate(1.5, 0.25)[0, 0] == pytest.approx(0.5)
    assert res.evaluate(0.9, 0.0)[0, 0] == 0.0
    assert res.evaluate(1.0, 0.0)[0, 0] == pytest.approx(0.5)


@settings(max_examples=20, deadline=None)
@given(seeds)
def test_atomic_resolvent_is_fundamental_minus_identity(seed):
    rng = np.random.default_rng(seed)
    p = random_problem(rng)
    k = kernel_from_system(p)
    res = build_resolvent(k)
    fs = FundamentalSolution(p.system)
    t = rng.uniform(k.a, k.b, 30)
    beta = k.a + rng.uniform(0, 1, 30) * (t - k.a)
    eye = np.eye(p.system.dim)
    diff = res.evaluate(t, beta) - (fs.evaluate(t, beta) - eye)
    assert max(norm(m) for m in diff) <= 1e-12


@settings(max_examples=15, deadline=None)
@given(seeds)
def test_atomic_resolvent_residual(seed):
    rng = np.random.default_rng(seed)
    p = random_problem(rng)
    k = kernel_from_system(p)
    res = build_resolvent(k)
    for _ in range(8):
        t = float(rng.uniform(k.a, k.b))
        beta = float(rng.uniform(k.a, t))
        assert resolvent_residual(k, res, t, beta) <= 1e-12


def test_forcing_examples():
    p = half_fixture()
    # f(t) = D_1 phi(t - 1) on [0, 1), zero at t = 1
    np.testing.assert_allclose(forcing_from_initial(p, np.array([0.0, 0.5, 1.0]))[:, 0], [1.0, 0.75, 0.0])
    f = forcing_function(p)
    assert f.side == "right"
    np.testing.assert_allclose(f(np.array([0.0, 0.5, 0.999, 1.0]))[:, 0], [1.0, 0.75, 0.5005, 0.0])
    with pytest.raises(ValueError):
        forcing_from_initial(p, 1.5)


@settings(max_examples=15, deadline=None)
@given(seeds)
def test_forcing_function_matches_pointwise(seed):
    rng = np.random.default_rng(seed)
    p = random_problem(rng)
    s, b = p.start, p.start + p.system.max_delay
    ts = np.concatenate([rng.uniform(s, b, 40), [s, b], [s + tau for tau in p.system.delays]])
    np.testing.assert_allclose(forcing_function(p)(ts), forcing_from_initial(p, ts), atol=1e-12)


@settings(max_examples=15, deadline=None)
@given(seeds)
def test_round_trip_with_direct_solver(seed):
    rng = np.random.default_rng(seed)
    p = random_problem(rng)
    k = kernel_from_system(p)
    res = build_resolvent(k)
    g = forcing_function(p)
    ts = np.sort(rng.uniform(k.a, k.b, 12))
    _, vals, sol = solve_volterra(k, res, g, ts)
    np.testing.assert_allclose(vals, eval_solution(p, ts), atol=1e-10)
    for t in ts[:4]:
        assert volterra_residual(k, sol, g, float(t)) <= 1e-10


def test_solve_volterra_validation():
    p = half_fixture()
    k = kernel_from_system(p)
    res = build_resolvent(k)
    left = BVFunction.piecewise_linear([0.0, 1.0], [[1.0], [1.0]], side="left")
    with pytest.raises(ValueError):
        solve_volterra(k, res, left)
    with pytest.raises(ValueError):
        solve_volterra(kernel_from_system(p), res, forcing_function(p))
    with pytest.raises(TypeError):
        solve_volterra(k, res, lambda t: t)


@pytest.mark.parametrize("c", [0.5, -1.0, 3.0])
def test_grid_resolvent_linear_kernel(c):
    n = 64
    K = linear_kernel(c, n)
    R = build_resolvent(K)
    ts = K.times
    exact = np.exp(c * (ts[:, None] - ts[None, :])) - 1.0
    exact[np.triu_indices(n + 1, 1)] = 0.0
    err = np.abs(R.values[..., 0, 0] - exact).max()
    assert err <= 2 * abs(c) * math.exp(abs(c)) / n
    for i, m in [(n, 0), (n // 2, 3), (5, 5)]:
        assert resolvent_residual(K, R, ts[i], ts[m]) <= 1e-10


@pytest.mark.parametrize("c", [0.5, -1.0])
def test_grid_source_residual_within_five_steps(c):
    K = linear_kernel(c, 64)
    assert grid_source_residual(K, build_resolvent(K)) <= 5 * K.step


def test_grid_source_residual_first_order():
    res = [grid_source_residual(K, build_resolvent(K)) for K in (linear_kernel(3.0, n) for n in (32, 64, 128))]
    # halving the step nearly halves the residual, approaching the asymptotic rate
    assert res[0] / res[1] < res[1] / res[2]
    assert 1.85 <= res[1] / res[2] <= 2.05


def test_damped_operator_contracts():
    K = linear_kernel(2.0, 32)
    R = build_resolvent(K)
    assert R.contraction < 0.5
    rng = np.random.default_rng(5)
    shape = K.values.shape
    for _ in range(5):
        p1, p2 = rng.normal(size=shape), rng.normal(size=shape)
        assert contraction_ratio(K, R.r, p1, p2) <= R.contraction + 1e-12
    zero = np.zeros(shape)
    assert grid_binf_norm(apply_damped_operator(K, R.r, zero)) == 0.0


def test_picard_independent_of_initial_guess():
    K = linear_kernel(1.5, 40)
    rng = np.random.default_rng(2)
    g = rng.normal(size=(41, 1))
    y0 = picard_volterra(K, g)
    y1 = picard_volterra(K, g, initial=rng.normal(size=(41, 1)) * 100)
    np.testing.assert_allclose(y0, y1, atol=1e-9)
    # and the resolvent gives the same grid solution
    R = build_resolvent(K)
    gf = BVFunction.piecewise_linear(K.times, g, side="right")
    _, vals, _ = solve_volterra(K, R, gf, K.times)
    np.testing.assert_allclose(vals, y0, atol=1e-9)


def test_resolvent_independent_of_initial_guess():
    K = linear_kernel(-0.8, 24)
    R0 = build_resolvent(K)
    R1 = build_resolvent(K, initial=np.ones_like(K.values) * 7)
    np.testing.assert_allclose(R0.values, R1.values, atol=1e-10)


def test_non_contraction_detected():
    # a jump of 4 one step below the diagonal in every row; on 450 cells the
    # damping exp(-r h) cannot push it below 1/2 before exp(r (b - a)) overflows
    n = 450
    vals = np.tril(np.full((n + 1, n + 1), -4.0), -1)[..., None, None]
    K = GridKernel(0.0, 1.0, vals)
    with pytest.raises(NonContractionError):
        build_resolvent(K)
    with pytest.raises(NonContractionError):
        build_resolvent(linear_kernel(3.0, 8), ResolventConfig(r=1e-6))
    with pytest.raises(NonContractionError):
        build_resolvent(linear_kernel(1.0, 8), ResolventConfig(r=1e4))


def test_grid_kernel_from_atomic_matches():
    sys = scalar_system([0.5, 0.25], [0.5, 1.0])
    k = AtomicKernel(sys, 0.0)
    K = GridKernel.from_atomic(k, 8)
    for i, t in enumerate(K.times):
        np.testing.assert_allclose(K.values[i, :i + 1, 0, 0], k(float(t), K.times[:i + 1])[:, 0, 0])
    assert K.eta >= K.step
