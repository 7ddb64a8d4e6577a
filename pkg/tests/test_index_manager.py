import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jtape.chunk_store import TapeError
from jtape.index_manager import MAX_INDEX, LinearIndexManager, ReuseIndexManager


def test_linear_indices_count_up():
    m = LinearIndexManager()
    assert [m.assign_index() for _ in range(3)] == [1, 2, 3]


def test_linear_free_is_noop():
    m = LinearIndexManager()
    m.assign_index()
    m.free_index(1)
    assert m.assign_index() == 2


def test_linear_reset_rewinds():
    m = LinearIndexManager()
    for _ in range(5):
        m.assign_index()
    m.reset(2)
    assert m.assign_index() == 3
    with pytest.raises(TapeError):
        m.reset(10)


def test_linear_overflow_is_fatal():
    m = LinearIndexManager()
    m.counter = MAX_INDEX
    with pytest.raises(TapeError):
        m.assign_index()


def test_reuse_hands_back_freed_index():
    m = ReuseIndexManager()
    assert m.assign_index() == 1
    m.free_index(1)
    assert m.assign_index() == 1


def test_reuse_max_live_counts_simultaneous_indices():
    m = ReuseIndexManager()
    for _ in range(3):
        m.assign_index()
    assert m.max_live == 3


def test_reuse_free_zero_is_noop():
    m = ReuseIndexManager(debug=True)
    m.free_index(0)
    assert m.live == 0 and m.free == []


def test_reuse_free_order_is_lifo():
    m = ReuseIndexManager()
    a, b = m.assign_index(), m.assign_index()
    m.free_index(a)
    m.free_index(b)
    assert [m.assign_index(), m.assign_index()] == [b, a]


def test_reuse_max_live_survives_frees():
    m = ReuseIndexManager()
    idx = [m.assign_index() for _ in range(4)]
    for i in idx:
        m.free_index(i)
    assert m.max_live == 4 and m.live == 0


def test_reuse_double_free_detected_in_debug_mode():
    m = ReuseIndexManager(debug=True)
    i = m.assign_index()
    m.free_index(i)
    with pytest.raises(TapeError):
        m.free_index(i)


def test_reuse_statistics():
    m = ReuseIndexManager()
    a = m.assign_index()
    m.assign_index()
    m.free_index(a)
    assert m.statistics() == {'issued': 2, 'free_stack': 1, 'max_live': 2}


def test_create_destroy_create_keeps_max_live():
    m = ReuseIndexManager()
    n = 50
    first = [m.assign_index() for _ in range(n)]
    for i in first:
        m.free_index(i)
    second = [m.assign_index() for _ in range(n)]
    assert m.max_live == n
    assert sorted(second) == sorted(first)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.booleans(), max_size=300))
def test_reuse_matches_stack_model(ops):
    """Compare against a plain list-as-stack model of the free list."""
    m = ReuseIndexManager(debug=True)
    live, free, counter, peak = [], [], 0, 0
    for create in ops:
        if create or not live:
            if free:
                expected = free.pop()
            else:
                counter += 1
                expected = counter
            assert m.assign_index() == expected
            live.append(expected)
            peak = max(peak, len(live))
        else:
            i = live.pop(len(live) // 2)
            m.free_index(i)
            free.append(i)
        assert len(set(live)) == len(live)
    assert m.max_live == peak
    assert m.live == len(live)


def test_reuse_stress_live_indices_stay_distinct():
    rng = random.Random(7)
    m = ReuseIndexManager()
    live = []
    held = set()
    for _ in range(200_000):
        if live and rng.random() < 0.5:
            k = rng.randrange(len(live))
            live[k], live[-1] = live[-1], live[k]
            i = live.pop()
            held.remove(i)
            m.free_index(i)
        else:
            i = m.assign_index()
            assert i not in held
            held.add(i)
            live.append(i)
    assert m.live == len(live) <= m.max_live
