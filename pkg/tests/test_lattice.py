import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from delaylattice.lattice import (LatticeError, NodeTable, enumerate_lattice, jump_offsets_in_window,
                                  lattice_value)

from conftest import brute_lattice


def test_integer_multiples():
    lat = enumerate_lattice((1.0,), 3.5)
    np.testing.assert_array_equal(lat.values, [0.0, 1.0, 2.0, 3.0])


def test_one_and_sqrt2():
    lat = enumerate_lattice((1.0, math.sqrt(2)), 3.0)
    np.testing.assert_allclose(lat.values, [0, 1, 1.414214, 2, 2.414214, 2.828427, 3], atol=1e-6)


def test_commensurate_merge():
    lat = enumerate_lattice((1.0, 2.0), 4.0)
    pt = lat.points[2]
    assert pt.value == 2.0
    assert set(pt.indices) == {(2, 0), (0, 1)}
    assert len(lat.points[4].indices) == 3  # 4 = 4*1 = 2*1 + 2 = 2*2


def test_invariants():
    lat = enumerate_lattice((0.7, 1.1, 1.9), 6.0)
    assert lat.points[0].value == 0 and lat.points[0].indices == ((0, 0, 0),)
    assert np.all(np.diff(lat.values) > lat.merge_tol)
    for p in lat.points:
        assert len(set(p.indices)) == len(p.indices)
        for n in p.indices:
            assert abs(lattice_value(n, lat.delays) - p.value) <= lat.merge_tol


def test_errors():
    with pytest.raises(LatticeError):
        enumerate_lattice((1.0, -1.0), 2.0)
    with pytest.raises(LatticeError):
        enumerate_lattice((1.0,), -1.0)
    with pytest.raises(LatticeError):
        enumerate_lattice((0.0,), 1.0)


def test_horizon_zero():
    lat = enumerate_lattice((1.0, 2.0), 0.0)
    assert lat.values.tolist() == [0.0]


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.3, 3.0), min_size=1, max_size=3, unique=True), st.floats(0.0, 8.0))
def test_matches_brute_force(delays, horizon):
    delays = tuple(sorted(delays))
    lat = enumerate_lattice(delays, horizon)
    brute = brute_lattice(delays, horizon, lat.merge_tol)
    assert [p.value for p in lat.points] == [v for v, _ in brute]
    assert [set(p.indices) for p in lat.points] == [n for _, n in brute]


def test_jump_offsets_window():
    lat = enumerate_lattice((1.0,), 5.0)
    pts = jump_offsets_in_window(lat, 2.5, (0.0, 1.0))
    assert [p.value for p in pts] == [2.0]
    pts = jump_offsets_in_window(lat, 3.0, (0.0, 1.0))
    assert [p.value for p in pts] == [3.0]
    with pytest.raises(LatticeError):
        jump_offsets_in_window(lat, 9.0, (0.0, 1.0))


def test_node_table_children():
    lat = enumerate_lattice((1.0, 1.5), 4.0)
    table = NodeTable(lat)
    for i, n in enumerate(table.tuples):
        for j in range(2):
            succ = n[:j] + (n[j] + 1,) + n[j + 1:]
            child = table.children[i, j]
            if child == table.size:
                assert lattice_value(succ, lat.delays) > lat.horizon
            else:
                assert table.tuples[child] == succ
