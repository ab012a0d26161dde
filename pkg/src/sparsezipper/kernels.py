"""Row-wise SpGEMM kernels: scalar dense-array, scalar hash, ESC, and the two
merge-based kernels that run on the simulated SparseZipper unit.

Every kernel multiplies in float32 and accumulates in float32, and returns
its product together with the operation counters it gathered.
"""

from __future__ import annotations

import functools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .counters import OpCounters
from .errors import DimensionError, SpzError
from .isa import merge_chunks_program, run_program, sort_chunks_program
from .matrix import CsrMatrix, reference_spgemm, work_per_row
from .state import MachineState

f32 = np.float32


@dataclass
class KernelResult:
    c: CsrMatrix
    counters: OpCounters


def _check_dims(a, b):
    if a.cols != b.rows:
        raise DimensionError(f"cannot multiply {a.shape} by {b.shape}")


def expand(a: CsrMatrix, b: CsrMatrix, rows=None):
    """All intermediate products, row-major and j-major within a row.

    Returns ``(row_ptr, cols, prods)`` where ``row_ptr`` indexes the
    expanded arrays per requested row (all rows by default).
    """
    rows = np.arange(a.rows) if rows is None else np.asarray(rows, dtype=np.int64)
    a_nnz = a.row_nnz()[rows]
    a_pos = np.concatenate([np.arange(a.row_ptr[i], a.row_ptr[i + 1]) for i in rows]) \
        if len(rows) else np.zeros(0, dtype=np.int64)
    a_pos = a_pos.astype(np.int64)
    js = a.col_idx[a_pos]
    lens = b.row_nnz()[js]
    starts = b.row_ptr[js]
    total = int(lens.sum())
    seg = np.repeat(np.cumsum(lens) - lens, lens)
    idx = np.arange(total, dtype=np.int64) - seg + np.repeat(starts, lens)
    cols = b.col_idx[idx]
    prods = np.repeat(a.values[a_pos], lens) * b.values[idx]
    per_a = np.repeat(np.arange(len(rows)), a_nnz)
    work = np.bincount(per_a, weights=lens, minlength=len(rows)).astype(np.int64)
    row_ptr = np.zeros(len(rows) + 1, dtype=np.int64)
    np.cumsum(work, out=row_ptr[1:])
    return row_ptr, cols, prods.astype(np.float32)


def _assemble(rows, cols, rows_out, col_parts, val_parts):
    row_ptr = np.zeros(rows + 1, dtype=np.int64)
    np.cumsum([len(p) for p in col_parts], out=row_ptr[1:])
    ci = np.concatenate(col_parts) if col_parts else np.zeros(0, dtype=np.int64)
    vi = np.concatenate(val_parts) if val_parts else np.zeros(0, dtype=np.float32)
    return CsrMatrix(rows, cols, row_ptr, ci, vi)


# ---------------------------------------------------------------------------
# scalar kernels

def spgemm_scl_array(a: CsrMatrix, b: CsrMatrix) -> KernelResult:
    """Dense accumulator (SPA) per output row, then sort the touched columns."""
    _check_dims(a, b)
    ctr = OpCounters()
    with ctr.phase("preprocessing"):
        dense = np.zeros(b.cols, dtype=np.float32)
        occupied = np.zeros(b.cols, dtype=bool)
    with ctr.phase("expansion") as ph:
        row_ptr, cols, prods = expand(a, b)
        ctr.multiplies = len(cols)
        ph["ops"] += len(cols)
    col_parts, val_parts = [], []
    with ctr.phase("sorting") as ph:
        for i in range(a.rows):
            c = cols[row_ptr[i]:row_ptr[i + 1]]
            p = prods[row_ptr[i]:row_ptr[i + 1]]
            np.add.at(dense, c, p)  # unbuffered, in expansion order
            # inserted-key list: columns in first-touch order
            uniq, first = np.unique(c, return_index=True)
            inserted = c[np.sort(first)]
            occupied[inserted] = True
            keys = np.sort(inserted, kind="quicksort")
            col_parts.append(keys)
            val_parts.append(dense[keys].copy())
            dense[keys] = 0.0
            occupied[keys] = False
            ctr.ops["spa_updates"] += len(c)
            ctr.ops["sorted_keys"] += len(keys)
            ph["ops"] += len(c)
    with ctr.phase("output") as ph:
        out = _assemble(a.rows, b.cols, None, col_parts, val_parts)
        ph["ops"] += out.nnz
    return KernelResult(out, ctr)


_HASH_MUL = 2654435761  # Knuth multiplicative constant


def _table_bits(bound):
    size = 1
    while size < 2 * bound:
        size <<= 1
    return size.bit_length() - 1


def spgemm_scl_hash(a: CsrMatrix, b: CsrMatrix) -> KernelResult:
    """Per-row open-addressing table with linear probing, then sort.

    The table for a row has the smallest power-of-two size holding twice the
    row's work bound.
    """
    _check_dims(a, b)
    ctr = OpCounters()
    with ctr.phase("preprocessing") as ph:
        work = work_per_row(a, b)
        ph["ops"] += a.rows
    with ctr.phase("expansion") as ph:
        row_ptr, cols, prods = expand(a, b)
        ctr.multiplies = len(cols)
        ph["ops"] += len(cols)
    col_parts, val_parts = [], []
    probes = 0
    with ctr.phase("sorting") as ph:
        cl, pl = cols.tolist(), prods.tolist()
        for i in range(a.rows):
            w = int(work[i])
            if w == 0:
                col_parts.append(np.zeros(0, dtype=np.int64))
                val_parts.append(np.zeros(0, dtype=np.float32))
                continue
            bits = _table_bits(w)
            mask = (1 << bits) - 1
            shift = 32 - bits
            tkeys = [-1] * (mask + 1)
            tvals = [f32(0)] * (mask + 1)
            for q in range(row_ptr[i], row_ptr[i + 1]):
                k = cl[q]
                s = ((k * _HASH_MUL) & 0xFFFFFFFF) >> shift if bits else 0
                while True:
                    probes += 1
                    tk = tkeys[s]
                    if tk == k:
                        tvals[s] = tvals[s] + pl[q]
                        break
                    if tk == -1:
                        tkeys[s] = k
                        tvals[s] = f32(pl[q])
                        break
                    s = (s + 1) & mask
            occ = [s for s, tk in enumerate(tkeys) if tk != -1]
            occ.sort(key=tkeys.__getitem__)
            col_parts.append(np.array([tkeys[s] for s in occ], dtype=np.int64))
            val_parts.append(np.array([tvals[s] for s in occ], dtype=np.float32))
            ctr.ops["hash_slots"] += mask + 1
            ph["ops"] += w
    ctr.ops["hash_probes"] = probes
    with ctr.phase("output") as ph:
        out = _assemble(a.rows, b.cols, None, col_parts, val_parts)
        ph["ops"] += out.nnz
    return KernelResult(out, ctr)


# ---------------------------------------------------------------------------
# expand-sort-compress

def radix_sort_u64(keys, counters=None):
    """Stable LSD radix sort of uint64 keys with 8-bit digits.

    Digits that are constant across all keys are skipped. Returns the
    permutation that sorts ``keys``.
    """
    keys = np.asarray(keys, dtype=np.uint64)
    perm = np.arange(len(keys), dtype=np.int64)
    if len(keys) < 2:
        return perm
    for shift in range(0, 64, 8):
        digit = ((keys[perm] >> np.uint64(shift)) & np.uint64(0xFF)).astype(np.int64)
        if np.all(digit == digit[0]):
            if counters is not None:
                counters.ops["radix_passes_skipped"] += 1
            continue
        counts = np.bincount(digit, minlength=256)
        starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
        # rank of each element within its bucket, preserving order
        order = np.argsort(digit, kind="stable")
        rank = np.empty(len(digit), dtype=np.int64)
        rank[order] = np.arange(len(digit)) - starts[digit[order]]
        dest = starts[digit] + rank
        nxt = np.empty_like(perm)
        nxt[dest] = perm
        perm = nxt
        if counters is not None:
            counters.ops["radix_passes"] += 1
            counters.ops["radix_moves"] += len(keys)
    return perm


def spgemm_esc(a: CsrMatrix, b: CsrMatrix, block_rows: int = 16) -> KernelResult:
    """Expand triples for a block of rows, radix-sort by (row, col), compress."""
    _check_dims(a, b)
    if block_rows < 1:
        raise ValueError("block_rows must be >= 1")
    ctr = OpCounters()
    with ctr.phase("preprocessing") as ph:
        work = work_per_row(a, b)
        blocks = [(lo, min(lo + block_rows, a.rows)) for lo in range(0, a.rows, block_rows)]
        ctr.ops["max_block_triples"] = max((int(work[lo:hi].sum()) for lo, hi in blocks), default=0)
        ph["ops"] += a.rows
    col_parts = [None] * a.rows
    val_parts = [None] * a.rows
    for lo, hi in blocks:
        with ctr.phase("expansion") as ph:
            row_ptr, cols, prods = expand(a, b, np.arange(lo, hi))
            local = np.repeat(np.arange(hi - lo, dtype=np.uint64), np.diff(row_ptr))
            keys = (local << np.uint64(32)) | cols.astype(np.uint64)
            ctr.multiplies += len(cols)
            ctr.ops["triples"] += len(cols)
            ph["ops"] += len(cols)
        with ctr.phase("sorting") as ph:
            perm = radix_sort_u64(keys, ctr)
            keys, prods = keys[perm], prods[perm]
            ph["ops"] += len(keys)
        with ctr.phase("output") as ph:
            if len(keys):
                start = np.ones(len(keys), dtype=bool)
                start[1:] = keys[1:] != keys[:-1]
                seg = np.cumsum(start) - 1
                uk = keys[start]
                sums = np.zeros(len(uk), dtype=np.float32)
                np.add.at(sums, seg, prods)  # sequential, in sorted (stable) order
            else:
                uk = keys
                sums = np.zeros(0, dtype=np.float32)
            urow = (uk >> np.uint64(32)).astype(np.int64)
            ucol = (uk & np.uint64(0xFFFFFFFF)).astype(np.int64)
            bounds = np.searchsorted(urow, np.arange(hi - lo + 1))
            for r in range(hi - lo):
                col_parts[lo + r] = ucol[bounds[r]:bounds[r + 1]]
                val_parts[lo + r] = sums[bounds[r]:bounds[r + 1]]
            ph["ops"] += len(uk)
    return KernelResult(_assemble(a.rows, b.cols, None, col_parts, val_parts), ctr)


# ---------------------------------------------------------------------------
# merge-based kernels on the SparseZipper unit

def _spz_group(machine, lanes, exp_ptr, exp_cols, exp_prods, ctr):
    """Compute the output rows mapped to ``lanes`` (expanded-row indices).

    Returns one ``(cols, values)`` pair per lane.
    """
    R = machine.R
    mem = machine.mem
    v = machine.v
    nl = len(lanes)

    with ctr.phase("preprocessing") as ph:
        mem.reset()
        work = [int(exp_ptr[e + 1] - exp_ptr[e]) for e in lanes]
        nchunks = [-(-w // R) for w in work]
        prefix = [0] * nl
        for s in range(1, nl):
            prefix[s] = prefix[s - 1] + nchunks[s - 1] * R
        total = max(1, prefix[-1] + nchunks[-1] * R) if nl else 1
        kbuf = [mem.alloc(4 * total), mem.alloc(4 * total)]
        vbuf = [mem.alloc(4 * total), mem.alloc(4 * total)]
        ph["ops"] += nl

    with ctr.phase("expansion") as ph:
        for s, e in enumerate(lanes):
            lo, hi = exp_ptr[e], exp_ptr[e + 1]
            mem.write_words(kbuf[0] + 4 * prefix[s], exp_cols[lo:hi].astype(np.uint32))
            mem.write_words(vbuf[0] + 4 * prefix[s], exp_prods[lo:hi])
            ph["ops"] += hi - lo
        ctr.multiplies += sum(work)

    # chunk sorting: chunk 2k with chunk 2k+1 of the same stream
    parts = [[] for _ in range(nl)]  # per lane: [start, region_end, length] in words
    with ctr.phase("sorting") as ph:
        iters = max((-(-n // 2) for n in nchunks), default=0)
        prog = sort_chunks_program(kbuf[0], vbuf[0], kbuf[1], vbuf[1])
        for it in range(iters):
            v[0:8] = 0
            for s in range(nl):
                for reg_len, reg_off, reg_out, c in ((0, 2, 6, 2 * it), (1, 3, 7, 2 * it + 1)):
                    if c < nchunks[s]:
                        v[reg_len, s] = min(R, work[s] - c * R)
                        v[reg_off, s] = v[reg_out, s] = 4 * (prefix[s] + c * R)
            ctr += run_program(prog, machine)
            ph["ops"] += 1
            for s in range(nl):
                for reg, c in ((4, 2 * it), (5, 2 * it + 1)):
                    if c < nchunks[s]:
                        parts[s].append([c * R, (c + 1) * R, int(v[reg, s])])
        ctr.sort_iterations += iters

    cur = 1
    with ctr.phase("merging") as ph:
        while any(len(p) > 1 for p in parts):
            src, dst = cur, 1 - cur
            prog = merge_chunks_program(kbuf[src], vbuf[src], kbuf[dst], vbuf[dst])
            queues, new_parts = [], [[] for _ in range(nl)]
            for s in range(nl):
                ps = parts[s]
                pairs = [(ps[i], ps[i + 1]) for i in range(0, len(ps) - 1, 2)]
                if len(ps) % 2:
                    p = ps[-1]
                    _copy(mem, kbuf, vbuf, src, dst, prefix[s] + p[0], prefix[s] + p[0], p[2])
                    ctr.ops["tail_copy_words"] += p[2]
                queues.append(pairs)
            # lane cursors: [p, q, pa, ra, pb, rb, po]
            cur_pair = [None] * nl

            def advance(s):
                while True:
                    cp = cur_pair[s]
                    if cp is not None:
                        p, q, pa, ra, pb, rb, po = cp
                        if ra and rb:
                            return
                        for at, rem in ((pa, ra), (pb, rb)):
                            if rem:
                                _copy(mem, kbuf, vbuf, src, dst, prefix[s] + at, prefix[s] + po, rem)
                                ctr.ops["tail_copy_words"] += rem
                                po += rem
                        new_parts[s].append([p[0], q[1], po - p[0]])
                        cur_pair[s] = None
                    if not queues[s]:
                        return
                    p, q = queues[s].pop(0)
                    cur_pair[s] = [p, q, p[0], p[2], q[0], q[2], p[0]]

            while True:
                for s in range(nl):
                    advance(s)
                active = [s for s in range(nl) if cur_pair[s] is not None]
                if not active:
                    break
                v[0:8] = 0
                for s in active:
                    _, _, pa, ra, pb, rb, po = cur_pair[s]
                    v[0, s], v[1, s] = min(R, ra), min(R, rb)
                    v[2, s], v[3, s] = 4 * (prefix[s] + pa), 4 * (prefix[s] + pb)
                    v[5, s] = 4 * (prefix[s] + po)
                ctr += run_program(prog, machine)
                ctr.merge_iterations += 1
                ph["ops"] += 1
                for s in active:
                    cp = cur_pair[s]
                    na, nb = int(v[6, s]), int(v[7, s])
                    cp[2] += na
                    cp[3] -= na
                    cp[4] += nb
                    cp[5] -= nb
                    cp[6] = int(v[5, s]) // 4 - prefix[s]
            for s in range(nl):
                if len(parts[s]) % 2:
                    new_parts[s].append(parts[s][-1])
            parts = new_parts
            cur = dst

    out = []
    with ctr.phase("output") as ph:
        for s in range(nl):
            if not parts[s]:
                out.append((np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.float32)))
                continue
            start, _, n = parts[s][0]
            keys = mem.read_words(kbuf[cur] + 4 * (prefix[s] + start), n).astype(np.int64)
            vals = mem.read_f32(vbuf[cur] + 4 * (prefix[s] + start), n)
            out.append((keys, vals))
            ph["ops"] += n
    return out


def _copy(mem, kbuf, vbuf, src, dst, from_word, to_word, n):
    if n:
        mem.write_words(kbuf[dst] + 4 * to_word, mem.read_words(kbuf[src] + 4 * from_word, n))
        mem.write_words(vbuf[dst] + 4 * to_word, mem.read_words(vbuf[src] + 4 * from_word, n))


def _machine_for(machine, R):
    if machine is None:
        return MachineState(R or 16)
    if R is not None and machine.R != R:
        raise DimensionError(f"machine has R={machine.R}, kernel asked for R={R}")
    return machine


def _spz(a, b, machine, order, ctr):
    _check_dims(a, b)
    R = machine.R
    with ctr.phase("expansion"):
        exp_ptr, exp_cols, exp_prods = expand(a, b)
    results = [None] * a.rows
    for g in range(0, a.rows, R):
        lanes = order[g:g + R]
        for row, res in zip(lanes, _spz_group(machine, lanes, exp_ptr, exp_cols, exp_prods, ctr)):
            results[row] = res
    return results


def spgemm_spz(a: CsrMatrix, b: CsrMatrix, machine: MachineState = None, R: int = None) -> KernelResult:
    """Merge-based row-wise SpGEMM, R consecutive rows per lockstep group."""
    _check_dims(a, b)
    machine = _machine_for(machine, R)
    ctr = OpCounters()
    results = _spz(a, b, machine, list(range(a.rows)), ctr)
    with ctr.phase("output"):
        c = _assemble(a.rows, b.cols, None, [r[0] for r in results], [r[1] for r in results])
    return KernelResult(c, ctr)


def spgemm_spz_rsort(a: CsrMatrix, b: CsrMatrix, machine: MachineState = None, R: int = None,
                     descending: bool = True) -> KernelResult:
    """Like spgemm_spz but rows are grouped by similar work.

    Row indices (not data) are sorted by work, ties by index; results are
    shuffled back to the original row order at the end.
    """
    _check_dims(a, b)
    machine = _machine_for(machine, R)
    ctr = OpCounters()
    with ctr.phase("preprocessing") as ph:
        work = work_per_row(a, b).tolist()
        compares = 0

        def cmp(i, j):
            nonlocal compares
            compares += 1
            wi, wj = (-work[i], -work[j]) if descending else (work[i], work[j])
            return (wi > wj) - (wi < wj) or (i > j) - (i < j)

        order = sorted(range(a.rows), key=functools.cmp_to_key(cmp))
        ctr.ops["row_sort_compares"] = compares
        ph["ops"] += compares
    results = _spz(a, b, machine, order, ctr)
    with ctr.phase("output") as ph:
        c = _assemble(a.rows, b.cols, None, [r[0] for r in results], [r[1] for r in results])
        ctr.ops["output_shuffle_words"] = 2 * c.nnz
        ph["ops"] += 2 * c.nnz
    return KernelResult(c, ctr)


KERNELS = {
    "scl-array": spgemm_scl_array,
    "scl-hash": spgemm_scl_hash,
    "esc": spgemm_esc,
    "spz": spgemm_spz,
    "spz-rsort": spgemm_spz_rsort,
}


# ---------------------------------------------------------------------------
# comparison harness

class KernelMismatch(SpzError):
    pass


@dataclass
class Verdict:
    ok: bool
    first_divergence: tuple = None   # (row, col)
    message: str = ""


@dataclass
class ComparisonReport:
    reference: CsrMatrix
    results: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)

    @property
    def ok(self):
        return all(v.ok for v in self.verdicts.values())

    def raise_for_mismatch(self):
        for name, v in self.verdicts.items():
            if not v.ok:
                raise KernelMismatch(f"{name}: {v.message}")

    def table(self):
        """Rows of (kernel, ok, multiplies, key_instr_total, merge_iterations, cycle_estimate)."""
        return [(name, self.verdicts[name].ok, r.counters.multiplies, r.counters.key_instr_total,
                 r.counters.merge_iterations, r.counters.cycle_estimate)
                for name, r in self.results.items()]


def diff_matrices(got: CsrMatrix, want: CsrMatrix, rtol=1e-5, atol=1e-6) -> Verdict:
    """Exact pattern, values within ``rtol``/``atol``; names the first bad (row, col)."""
    if got.shape != want.shape:
        return Verdict(False, None, f"shape {got.shape} != {want.shape}")
    for i in range(want.rows):
        gc, gv = got.row(i)
        wc, wv = want.row(i)
        if len(gc) != len(wc) or np.any(gc != wc):
            extra = sorted(set(gc.tolist()) ^ set(wc.tolist()))
            col = extra[0] if extra else int(gc[np.flatnonzero(gc != wc)[0]])
            return Verdict(False, (i, col), f"pattern differs at ({i}, {col})")
        bad = ~np.isclose(gv.astype(np.float64), wv.astype(np.float64), rtol=rtol, atol=atol)
        if np.any(bad):
            k = int(np.flatnonzero(bad)[0])
            col = int(wc[k])
            return Verdict(False, (i, col), f"value at ({i}, {col}): {gv[k]!r} vs {wv[k]!r}")
    return Verdict(True)


def compare_kernels(a, b=None, kernels=None, rtol=1e-5, atol=1e-6, R=16, parallel=False,
                    kernel_args=None) -> ComparisonReport:
    """Run kernels (names or a name->callable dict) and check each against the oracle."""
    b = a if b is None else b
    if kernels is None:
        kernels = list(KERNELS)
    if not isinstance(kernels, dict):
        kernels = {name: KERNELS[name] for name in kernels}
    kernel_args = kernel_args or {}

    def run(name):
        fn = kernels[name]
        kw = dict(kernel_args.get(name, {}))
        if fn in (spgemm_spz, spgemm_spz_rsort):
            kw.setdefault("machine", MachineState(R))
        return fn(a, b, **kw)

    report = ComparisonReport(reference_spgemm(a, b))
    names = list(kernels)
    if parallel:
        with ThreadPoolExecutor() as pool:
            outs = list(pool.map(run, names))
    else:
        outs = [run(n) for n in names]
    for name, res in zip(names, outs):
        report.results[name] = res
        report.verdicts[name] = diff_matrices(res.c, report.reference, rtol, atol)
    return report
