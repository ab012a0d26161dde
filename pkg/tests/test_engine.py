import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparsezipper.engine import apply_plan, schedule_cycles, sort_functional, zip_functional
from sparsezipper.errors import PlanMismatchError, PreconditionError

f32 = np.float32


def test_sort_example():
    r = sort_functional([5, 8, 5], [], 3, 0, 3)
    assert (r.out1, r.out2) == ([5, 8], [])
    assert (r.ic_a, r.ic_b, r.oc_a, r.oc_b) == (3, 0, 2, 0)
    v1, v2 = apply_plan(r.plan, [f32(1), f32(2), f32(3)], [])
    assert (v1, v2) == ([4.0, 2.0], [])


def test_sort_sides_are_independent():
    r = sort_functional([4, 1, 4], [4, 2], 3, 2, 4)
    assert (r.out1, r.out2) == ([1, 4], [2, 4])
    v1, v2 = apply_plan(r.plan, [1, 2, 3], [10, 20])
    assert v1 == [2, 4] and v2 == [20, 10]


def test_sort_ignores_lanes_past_length():
    r = sort_functional([2, 1, 0xFFFFFFFF, 7], [9], 2, 0, 4)
    assert r.out1 == [1, 2] and r.out2 == []


def test_zip_example():
    r = zip_functional([3, 5, 9], [2, 5, 8], 3, 3, 3)
    assert (r.out1, r.out2) == ([2, 3, 5], [8])
    assert (r.ic_a, r.ic_b, r.oc_a, r.oc_b) == (2, 3, 3, 1)
    a, b = [f32(1), f32(2), f32(3)], [f32(4), f32(5), f32(6)]
    v1, v2 = apply_plan(r.plan, a, b)
    assert v1 == [b[0], a[0], f32(a[1] + b[1])] and v2 == [b[2]]


def test_zip_disjoint_ranges_and_empty_side():
    r = zip_functional([1, 2, 3], [4, 6, 8], 3, 3, 4)
    assert r.out1 == [1, 2, 3] and (r.ic_a, r.ic_b) == (3, 0)
    r = zip_functional([1, 2], [], 2, 0, 4)
    assert r.out1 == [] and (r.ic_a, r.ic_b, r.oc_a) == (0, 0, 0)


def test_zip_rejects_unsorted_and_overlong():
    with pytest.raises(PreconditionError):
        zip_functional([3, 1], [2], 2, 1, 4)
    with pytest.raises(PreconditionError):
        zip_functional([1, 1], [2], 2, 1, 4)
    with pytest.raises(PreconditionError):
        sort_functional([1] * 5, [], 5, 0, 4)


def test_plan_length_mismatch():
    r = sort_functional([1, 2], [], 2, 0, 4)
    with pytest.raises(PlanMismatchError):
        apply_plan(r.plan, [1.0], [])


@settings(max_examples=300, deadline=None)
@given(st.integers(1, 8).flatmap(lambda R: st.tuples(
    st.just(R),
    st.lists(st.integers(0, 3 * R), max_size=R, unique=True).map(sorted),
    st.lists(st.integers(0, 3 * R), max_size=R, unique=True).map(sorted))))
def test_zip_properties(args):
    R, a, b = args
    r = zip_functional(a, b, len(a), len(b), R)
    merged = r.out1 + r.out2
    assert merged == sorted(set(a[:r.ic_a]) | set(b[:r.ic_b]))
    assert len(r.out1) == min(len(merged), R)
    assert r.oc_a + r.oc_b == len(merged) and 0 <= r.oc_b <= R
    # sum of values is conserved over what was consumed
    va = [f32(i + 1) for i in range(len(a))]
    vb = [f32(10 * (i + 1)) for i in range(len(b))]
    v1, v2 = apply_plan(r.plan, va, vb)
    assert sum(v1 + v2) == sum(va[:r.ic_a]) + sum(vb[:r.ic_b])


def test_schedule_closed_form():
    assert schedule_cycles("sort", 3, 1) == 14
    assert schedule_cycles("zip", 3, 3) == 18
    assert schedule_cycles("sort", 16, 16) == 2 * 33 + 30
    assert schedule_cycles("zip", 4, 0) == 0


def test_schedule_bounds():
    with pytest.raises(ValueError):
        schedule_cycles("sort", 3, 4)
    with pytest.raises(ValueError):
        schedule_cycles("merge", 3, 1)
