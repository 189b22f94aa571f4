import pytest
from hypothesis import given
from hypothesis import strategies as st

from dsag.partitioning import (
    PartitionState,
    advance_index,
    align_partitions,
    p_start,
    p_stop,
    p_trans,
)


def test_p_start_worked_examples():
    assert p_start(10, 2, 1) == 1
    assert p_start(10, 3, 2) == 4
    assert p_start(10, 2, 2) == 6


def test_p_stop_worked_examples():
    assert p_stop(10, 2, 1) == 5
    assert p_stop(10, 3, 2) == 6
    for n in (1, 7, 33):
        assert p_stop(n, 1, 1) == n


def test_p_trans_worked_examples():
    assert p_trans(10, 2, 3, 2) == 2
    assert p_trans(10, 3, 2, 1) == 1
    for n, p, k in [(10, 3, 2), (50, 7, 5), (9, 9, 9)]:
        assert p_trans(n, p, p, k) == k


def test_advance_index():
    assert advance_index(1, 2) == 2
    assert advance_index(2, 2) == 1
    assert advance_index(1, 1) == 1


def test_align_worked_examples():
    assert align_partitions(10, 2, 3, 1) == 1
    assert align_partitions(10, 2, 4, 1) == 3
    # p unchanged reduces to advance_index
    assert align_partitions(10, 3, 3, 2) == 3


def test_align_example_walkthrough_row():
    # advancing k=1 of p=2 targets row 6; under p_new=4 partition 3 starts at 6
    assert p_start(10, 4, 3) == 6 == p_start(10, 2, 2)


def test_domain_errors():
    with pytest.raises(ValueError):
        p_start(10, 11, 1)
    with pytest.raises(ValueError):
        p_start(10, 2, 3)
    with pytest.raises(ValueError):
        p_stop(10, 2, 0)
    with pytest.raises(ValueError):
        advance_index(3, 2)
    with pytest.raises(ValueError):
        p_trans(10, 2, 0, 1)
    with pytest.raises(ValueError):
        PartitionState(n=10, p=4, k=5)


def test_cover_and_disjointness_exhaustive_small():
    for n in range(1, 26):
        for p in range(1, n + 1):
            prev = 0
            for i in range(1, p + 1):
                a, b = p_start(n, p, i), p_stop(n, p, i)
                assert a == prev + 1
                assert b >= a
                prev = b
            assert prev == n


@st.composite
def npk(draw, max_n=200):
    n = draw(st.integers(1, max_n))
    p = draw(st.integers(1, n))
    k = draw(st.integers(1, p))
    p_new = draw(st.integers(1, n))
    return n, p, p_new, k


@given(npk())
def test_p_trans_containment(args):
    n, p, p_new, k = args
    s = p_start(n, p, k)
    j = p_trans(n, p, p_new, k)
    assert 1 <= j <= p_new
    assert p_start(n, p_new, j) <= s <= p_stop(n, p_new, j)


@given(npk())
def test_align_terminates_and_is_sound(args):
    n, p, p_new, k = args
    k_new = align_partitions(n, p, p_new, k)
    assert 1 <= k_new <= p_new
    # The aligned start row is a partition boundary in both partitionings.
    start = p_start(n, p_new, k_new)
    back = p_trans(n, p_new, p, k_new)
    assert p_start(n, p, back) == start


@given(st.integers(1, 200))
def test_advance_cycle_property(p):
    for k0 in (1, p // 2 + 1, p):
        k = k0
        for _ in range(p):
            k = advance_index(k, p)
        assert k == k0
