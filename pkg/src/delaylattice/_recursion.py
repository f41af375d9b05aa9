"""Bottom-up evaluation of delay recursions on a lattice node table.

A recursion of the form

    Z(u) = const(u) + sum_j D_j(u) Z(u - tau_j)      (u "internal")
    Z(u) = leaf(u)                                   (otherwise)

started at a root time ``t`` only ever visits times ``u = t - sum_l n_l tau_l``.
Keying the memo by the multi-index ``n`` instead of the float ``u`` lets the
whole memo live in one array indexed by :class:`~delaylattice.lattice.NodeTable`
nodes, evaluated level by level for a batch of roots at once.
"""
from __future__ import annotations

from typing import Callable

import numpy as np

from .lattice import NodeTable
from .model import DelaySystem


def _apply(mat: np.ndarray, z: np.ndarray) -> np.ndarray:
    if z.ndim == mat.ndim - 1:
        return np.einsum("...ab,...b->...a", mat, z)
    return mat @ z


def unroll(table: NodeTable, system: DelaySystem, roots: np.ndarray, internal: np.ndarray,
           shape: tuple, const: Callable | np.ndarray | None = None,
           leaf: Callable | None = None, limit: float = np.inf) -> np.ndarray:
    """Evaluate the recursion at every root; returns ``Z`` at node zero.

    ``internal`` is a ``(T, K)`` boolean mask.  ``const`` is either a fixed
    array of ``shape`` or ``const(nodes) -> (T, k) + shape``; ``leaf(nodes)``
    gives values at non-internal nodes (zero if omitted).  Nodes whose value
    exceeds ``limit`` are never touched and read as zero.
    """
    roots = np.asarray(roots, dtype=float)
    n_roots = roots.size
    K = table.size
    Z = np.zeros((n_roots, K + 1) + tuple(shape), dtype=complex)
    for idx in table.levels:
        idx = idx[table.values[idx] <= limit]
        if idx.size == 0:
            continue
        inner = internal[:, idx]
        if leaf is None:
            out = np.zeros((n_roots, idx.size) + tuple(shape), dtype=complex)
        else:
            out = np.array(leaf(idx), dtype=complex)
        cols = inner.any(axis=0)
        if cols.any():
            sub = idx[cols]
            sub_inner = inner[:, cols]
            times = roots[:, None] - table.values[sub][None, :]
            # coefficients are only meaningful where the node is internal;
            # elsewhere evaluate at the root to stay inside signal domains
            times = np.where(sub_inner, times, roots[:, None])
            if const is None:
                acc = np.zeros((n_roots, sub.size) + tuple(shape), dtype=complex)
            elif callable(const):
                acc = np.array(const(sub), dtype=complex)
            else:
                acc = np.broadcast_to(const, (n_roots, sub.size) + tuple(shape)).astype(complex)
            for j, coef in enumerate(system.coefficients):
                acc = acc + _apply(coef(times), Z[:, table.children[sub, j]])
            mask = sub_inner.reshape(sub_inner.shape + (1,) * len(shape))
            out[:, cols] = np.where(mask, acc, out[:, cols])
        Z[:, idx] = out
    return Z[:, 0]
