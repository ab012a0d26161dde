import numpy as np
import pytest

from oracles import replay_spz, rows_to_dense
from sparsezipper.errors import DimensionError
from sparsezipper.kernels import (
    KERNELS,
    KernelMismatch,
    KernelResult,
    compare_kernels,
    diff_matrices,
    expand,
    radix_sort_u64,
    spgemm_esc,
    spgemm_spz,
    spgemm_spz_rsort,
)
from sparsezipper.matrix import (
    CsrMatrix,
    gen_banded,
    gen_identity,
    gen_random,
    gen_skewed,
    reference_spgemm,
    work_per_row,
)
from sparsezipper.state import MachineState

ALL = list(KERNELS)


def test_expand_matches_row_work():
    a = gen_random(20, 20, 0.2, 3)
    ptr, cols, prods = expand(a, a)
    assert np.diff(ptr).tolist() == work_per_row(a).tolist()
    assert len(cols) == len(prods) == ptr[-1]


@pytest.mark.parametrize("name", ALL)
def test_identity_gives_b(name):
    b = gen_random(24, 24, 0.2, 5)
    res = compare_kernels(gen_identity(24), b, kernels=[name], R=4)
    assert res.ok
    assert res.results[name].c == b


@pytest.mark.parametrize("name", ALL)
def test_multiplies_equal_total_work(name):
    a = gen_skewed(40, 40, 4, 12, 2, 8)
    res = compare_kernels(a, kernels=[name], R=8)
    assert res.ok
    assert res.results[name].counters.multiplies == int(work_per_row(a).sum())


@pytest.mark.parametrize("name", ALL)
def test_empty_and_rectangular(name):
    e = CsrMatrix(0, 5, [0], [], [])
    assert compare_kernels(e, gen_random(5, 3, 0.5, 1), kernels=[name], R=4).ok
    z = CsrMatrix(6, 6, [0] * 7, [], [])
    assert compare_kernels(z, kernels=[name], R=4).results[name].c.nnz == 0
    a, b = gen_random(9, 13, 0.3, 2), gen_random(13, 7, 0.3, 3)
    assert compare_kernels(a, b, kernels=[name], R=4).ok


@pytest.mark.parametrize("name", ALL)
def test_dimension_mismatch(name):
    kw = {"R": 4} if name.startswith("spz") else {}
    with pytest.raises(DimensionError):
        KERNELS[name](gen_random(3, 4, 0.5, 1), gen_random(3, 4, 0.5, 1), **kw)


def test_radix_sort_u64():
    rng = np.random.default_rng(0)
    keys = rng.integers(0, 2**63, 500, dtype=np.uint64)
    perm = radix_sort_u64(keys)
    assert keys[perm].tolist() == np.sort(keys).tolist()
    dup = np.array([5, 1, 5, 1], dtype=np.uint64)
    assert radix_sort_u64(dup).tolist() == [1, 3, 0, 2]   # stable
    assert radix_sort_u64(np.zeros(0, dtype=np.uint64)).tolist() == []


def test_esc_block_size_does_not_change_result():
    a = gen_skewed(96, 96, 6, 30, 3, 2)
    want = reference_spgemm(a, a)
    outs = [spgemm_esc(a, a, block_rows=k) for k in (1, 8, 64)]
    for o in outs:
        assert diff_matrices(o.c, want).ok
    assert outs[0].c == outs[1].c == outs[2].c
    assert outs[0].counters.multiplies == outs[2].counters.multiplies


def test_spz_requires_matching_R():
    with pytest.raises(DimensionError):
        spgemm_spz(gen_identity(4), gen_identity(4), machine=MachineState(8), R=4)


@pytest.mark.parametrize("R", [2, 4, 16])
@pytest.mark.parametrize("seed", range(4))
def test_spz_iterations_match_lockstep_replay(R, seed):
    a = gen_skewed(3 * R + 1, 3 * R + 1, 2, 3 * R, 2, seed)
    res = spgemm_spz(a, a, R=R)
    sort_its, merge_its, rows = replay_spz(a, a, R)
    assert res.counters.sort_iterations == sort_its
    assert res.counters.merge_iterations == merge_its
    np.testing.assert_array_equal(res.c.to_dense(np.float32), rows_to_dense(rows, res.c.shape))


def test_rsort_replay_uses_sorted_order():
    a = gen_skewed(48, 48, 5, 30, 2, 7)
    res = spgemm_spz_rsort(a, a, R=8)
    work = work_per_row(a)
    order = sorted(range(48), key=lambda i: (-work[i], i))
    sort_its, merge_its, _ = replay_spz(a, a, 8, order)
    assert (res.counters.sort_iterations, res.counters.merge_iterations) == (sort_its, merge_its)
    assert res.counters.ops["output_shuffle_words"] == 2 * res.c.nnz


def test_rsort_on_identity_matches_spz():
    b = gen_random(32, 32, 0.2, 4)
    assert spgemm_spz(gen_identity(32), b, R=8).c == spgemm_spz_rsort(gen_identity(32), b, R=8).c
    # equal work everywhere: the row order is unchanged, so is the instruction stream
    u = gen_skewed(32, 32, 0, 12, 12, 4)
    x = spgemm_spz(gen_identity(32), u, R=8)
    y = spgemm_spz_rsort(gen_identity(32), u, R=8)
    assert x.c == y.c
    assert x.counters.dynamic_instr == y.counters.dynamic_instr


def test_low_work_skips_merging():
    a = gen_banded(40, 1, 1)
    res = spgemm_spz(a, a, R=16)
    assert res.counters.dynamic_instr["MSZIPK"] == 0


def _corrupt(fn, row, col):
    def run(a, b, **kw):
        res = fn(a, b, **kw)
        c = res.c
        vals = c.values.copy()
        k = c.row_ptr[row] + int(np.flatnonzero(c.row(row)[0] == col)[0])
        vals[k] += 1.0
        return KernelResult(CsrMatrix(c.rows, c.cols, c.row_ptr, c.col_idx, vals), res.counters)
    return run


def test_fault_injection_names_coordinate():
    a = gen_random(20, 20, 0.3, 6)
    ref = reference_spgemm(a, a)
    row = int(np.flatnonzero(ref.row_nnz())[3])
    col = int(ref.row(row)[0][0])
    report = compare_kernels(a, kernels={"bad": _corrupt(spgemm_esc, row, col), "esc": spgemm_esc})
    assert report.verdicts["esc"].ok
    assert report.verdicts["bad"].first_divergence == (row, col)
    with pytest.raises(KernelMismatch, match=f"\\({row}, {col}\\)"):
        report.raise_for_mismatch()


def test_diff_reports_pattern_difference():
    x = CsrMatrix.from_dense(np.array([[1.0, 0, 2.0]]))
    y = CsrMatrix.from_dense(np.array([[1.0, 3.0, 2.0]]))
    v = diff_matrices(x, y)
    assert not v.ok and v.first_divergence == (0, 1)


def test_parallel_matches_serial():
    a = gen_random(30, 30, 0.2, 9)
    s = compare_kernels(a, R=4)
    p = compare_kernels(a, R=4, parallel=True)
    assert s.ok and p.ok
    assert [r[:5] for r in s.table()] == [r[:5] for r in p.table()]
