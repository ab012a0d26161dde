import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparsezipper.errors import PreconditionError
from sparsezipper.matrix import CsrMatrix, KEY_SENTINEL, gen_random, work_per_row
from sparsezipper.stream import (
    KeyValueChunk,
    Partition,
    chunk_merge_oracle,
    chunk_sort_oracle,
    chunked_partition_merge,
    expand_row,
    partition_merge_oracle,
)

f32 = np.float32


def chunk(keys, values=None, R=16):
    values = [1.0] * len(keys) if values is None else values
    return KeyValueChunk(list(keys), list(values), R)


def test_chunk_padding_and_capacity():
    c = chunk([3, 1], R=4)
    assert c.padded_keys() == [3, 1, KEY_SENTINEL, KEY_SENTINEL]
    with pytest.raises(PreconditionError):
        chunk(range(5), R=4)


# -- expansion --------------------------------------------------------------

def test_expand_row_examples():
    a = CsrMatrix(2, 1, [0, 1, 1], [0], [2.0])
    b = CsrMatrix(1, 5, [0, 2], [1, 4], [3.0, 5.0])
    assert expand_row(a, b, 0) == [(1, 6.0), (4, 10.0)]
    assert expand_row(a, b, 1) == []


def test_expand_row_length_is_work():
    a = gen_random(30, 30, 0.2, 1)
    work = work_per_row(a)
    assert [len(expand_row(a, a, i)) for i in range(30)] == work.tolist()


# -- chunk sort -----------------------------------------------------------

def test_sort_oracle_examples():
    a, b, c = f32(0.5), f32(1.25), f32(-2.0)
    out = chunk_sort_oracle(chunk([5, 8, 5], [a, b, c]))
    assert out.keys == [5, 8] and out.values == [f32(a + c), b]
    assert chunk_sort_oracle(chunk([])).len == 0
    full = chunk_sort_oracle(chunk([7, 7, 7, 7], [1.0] * 4))
    assert full.keys == [7] and full.values == [4.0]


def test_sort_oracle_sums_in_position_order():
    vals = [f32(1e8), f32(1.0), f32(-1e8)]
    out = chunk_sort_oracle(chunk([3, 3, 3], vals))
    assert out.values == [f32(f32(vals[0] + vals[1]) + vals[2])]


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 20), st.floats(-10, 10, width=32)), max_size=16))
def test_sort_oracle_properties(pairs):
    c = KeyValueChunk.from_pairs(pairs)
    out = chunk_sort_oracle(c)
    assert out.is_sorted()
    assert set(out.keys) == set(c.keys)
    shadow = sum(float(v) for v in c.values)
    assert sum(float(v) for v in out.values) == pytest.approx(shadow, rel=1e-6, abs=1e-5)


# -- chunk merge ------------------------------------------------------------

def test_merge_oracle_examples():
    merged, na, nb = chunk_merge_oracle(chunk([3, 5, 9], [1, 2, 3]), chunk([2, 5, 8], [4, 5, 6]))
    assert [k for k, _ in merged] == [2, 3, 5, 8]
    assert dict(merged)[5] == 7.0
    assert (na, nb) == (2, 3)
    merged, na, nb = chunk_merge_oracle(chunk([1, 2, 3]), chunk([4, 6, 8]))
    assert [k for k, _ in merged] == [1, 2, 3] and (na, nb) == (3, 0)
    merged, na, nb = chunk_merge_oracle(chunk([1, 4], [1, 2]), chunk([1, 4], [3, 4]))
    assert merged == [(1, 4.0), (4, 6.0)] and (na, nb) == (2, 2)


def test_merge_oracle_empty_and_unsorted():
    assert chunk_merge_oracle(chunk([1, 2]), chunk([])) == ([], 0, 0)
    assert chunk_merge_oracle(chunk([]), chunk([])) == ([], 0, 0)
    with pytest.raises(PreconditionError):
        chunk_merge_oracle(chunk([2, 1]), chunk([3]))
    with pytest.raises(PreconditionError):
        chunk_merge_oracle(chunk([1, 1]), chunk([3]))


sorted_keys = st.lists(st.integers(0, 40), max_size=16, unique=True).map(sorted)


@settings(max_examples=300, deadline=None)
@given(sorted_keys, sorted_keys)
def test_merge_oracle_properties(ka, kb):
    a, b = chunk(ka), chunk(kb)
    merged, na, nb = chunk_merge_oracle(a, b)
    keys = [k for k, _ in merged]
    assert all(x < y for x, y in zip(keys, keys[1:]))
    assert set(keys) == set(ka[:na]) | set(kb[:nb])
    rest = ka[na:] + kb[nb:]
    assert all(r > k for r in rest for k in keys)
    if ka and kb:
        assert na == sum(k <= kb[-1] for k in ka) and nb == sum(k <= ka[-1] for k in kb)


# -- partitions -------------------------------------------------------------

def test_partition_merge_examples():
    p = Partition([1, 3], [f32(1), f32(2)])
    assert partition_merge_oracle(p, Partition()).pairs() == p.pairs()
    out = partition_merge_oracle(Partition([1], [f32(2)]), Partition([1], [f32(3)]))
    assert out.pairs() == [(1, 5.0)]


def _run(rng, n, hi):
    keys = np.sort(rng.choice(hi, size=n, replace=False)).tolist()
    return Partition(keys, [f32(v) for v in rng.standard_normal(n)])


def _brute(p, q):
    acc = {}
    for k, v in p.pairs() + q.pairs():
        acc[k] = f32(acc[k] + v) if k in acc else v
    return sorted(acc.items())


def test_partition_merge_random_lengths():
    rng = np.random.default_rng(4)
    p, q = _run(rng, 100, 300), _run(rng, 37, 300)
    assert partition_merge_oracle(p, q).pairs() == _brute(p, q)


@pytest.mark.parametrize("R", [2, 3, 4, 16])
def test_chunked_merge_reproduces_partition_merge(R):
    rng = np.random.default_rng(R)
    for _ in range(200):
        p = _run(rng, int(rng.integers(0, 10 * R + 1)), 30 * R)
        q = _run(rng, int(rng.integers(0, 10 * R + 1)), 30 * R)
        got, steps = chunked_partition_merge(p, q, R)
        want = partition_merge_oracle(p, q)
        assert got.pairs() == want.pairs()
        if p.len and q.len:
            assert steps >= 1
        else:
            assert steps == 0
