"""Decay rates of y(t) = q y(t - 1) estimated from slice variations.

For a single delay the variation of X(t, .) over a window of length tau
is |q|^floor(t - s), so the fitted rate should be -log |q|.
"""
import math

from delaylattice import fit_decay, variation_profile
from delaylattice.model import Constant, DelaySystem

print(f"{'q':>6} {'alpha':>10} {'-log|q|':>10}  verdict")
for q in (0.25, 0.5, 0.9, 1.0, 1.1, 0.0):
    system = DelaySystem(1, (1.0,), (Constant([[q]]),))
    est = fit_decay(variation_profile(system, 0.0, 12.0, 48))
    target = 0.0 - math.log(abs(q)) if q else math.inf
    print(f"{q:6.2f} {est.alpha:10.5f} {target:10.5f}  {est.verdict}")

two = DelaySystem(1, (1.0, math.sqrt(2)), (Constant([[0.45]]), Constant([[-0.35]])))
est = fit_decay(variation_profile(two, 0.0, 14.0, 64))
print("two incommensurate delays:", est.summary())
