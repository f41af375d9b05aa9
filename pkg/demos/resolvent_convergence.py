"""Grid resolvents of a sampled delay kernel converging to the exact one.

The kernel of y(t) = D_1(t) y(t - 1/2) + D_2 y(t - 1) is sampled on n cells
and its resolvent computed by damped Picard iteration; the L1 distance to
the exact atomic resolvent shrinks like the step.
"""
import math

import numpy as np

from delaylattice import (AtomicKernel, Constant, DelaySystem, GridKernel, TrigPolynomial,
                          build_resolvent)

d1 = TrigPolynomial(((0.0, [[0.4]], [[0.0]]), (2 * math.pi, [[0.3]], [[0.0]])), 1.0)
system = DelaySystem(1, (0.5, 1.0), (d1, Constant([[0.25]])))
kernel = AtomicKernel(system, 0.0)
exact = build_resolvent(kernel)

m = 384
u = (np.arange(m) + 0.5) / m
T, B = (x.ravel() for x in np.meshgrid(u, u, indexing="ij"))
ref = exact.evaluate(T, B)[:, 0, 0]

print(f"{'n':>5} {'r':>9} {'iters':>6} {'lambda':>7} {'L1 error':>10}")
prev = None
for n in (16, 32, 64, 128, 256):
    res = build_resolvent(GridKernel.from_atomic(kernel, n))
    err = np.mean(np.abs(res.evaluate(T, B)[:, 0, 0] - ref))
    ratio = "" if prev is None else f"  ratio {prev / err:.2f}"
    print(f"{n:5d} {res.r:9.3f} {res.iterations:6d} {res.contraction:7.3f} {err:10.3e}{ratio}")
    prev = err
