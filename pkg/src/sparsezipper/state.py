"""Architectural state: matrix/vector/counter registers, the reorder plan, memory."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .counters import OpCounters
from .errors import MemoryFault

N_MATRIX_REGS = 16
N_VECTOR_REGS = 32

_LANES = np.arange(64)


class Memory:
    """Flat little-endian memory with a bump allocator.

    Addresses start at ``base`` so that address 0 always faults.
    """

    def __init__(self, base=0x1000):
        self.base = base
        self.buf = bytearray()

    def __len__(self):
        return len(self.buf)

    def alloc(self, nbytes, align=64):
        off = -(-len(self.buf) // align) * align
        self.buf.extend(bytes(off + nbytes - len(self.buf)))
        return self.base + off

    def reset(self):
        self.buf = bytearray()

    def _offset(self, addr, nbytes):
        off = addr - self.base
        if off < 0 or off + nbytes > len(self.buf):
            raise MemoryFault(addr, nbytes)
        return off

    def read_words(self, addr, n):
        if n == 0:
            return np.zeros(0, dtype=np.uint32)
        off = self._offset(addr, 4 * n)
        return np.frombuffer(self.buf, dtype="<u4", count=n, offset=off).copy()

    def write_words(self, addr, data):
        data = np.asarray(data)
        if data.dtype != np.uint32:
            data = data.astype(np.uint32) if data.dtype.kind in "iu" else data.astype("<f4").view("<u4")
        if len(data) == 0:
            return
        off = self._offset(addr, 4 * len(data))
        self.buf[off:off + 4 * len(data)] = data.astype("<u4", copy=False).tobytes()

    def _row_index(self, addrs, lens, width):
        """Word indices and lane mask for a batch of row accesses."""
        off = np.asarray(addrs, dtype=np.int64) - self.base
        lens = np.asarray(lens, dtype=np.int64)
        live = lens > 0
        bad = live & ((off < 0) | (off + 4 * lens > len(self.buf)))
        if bad.any():
            i = int(bad.argmax())
            raise MemoryFault(int(off[i]) + self.base, 4 * int(lens[i]))
        if (off & 3)[live].any():
            return None
        mask = _LANES[:width] < lens[:, None]
        idx = (off >> 2)[:, None] + _LANES[:width]
        return idx[mask], mask

    def read_rows(self, addrs, lens, width):
        """Gather ``lens[i]`` words at ``addrs[i]`` into row i of a zero-filled array."""
        out = np.zeros((len(lens), width), dtype=np.uint32)
        ix = self._row_index(addrs, lens, width)
        if ix is None:
            for i, (a, n) in enumerate(zip(addrs, lens)):
                if n:
                    out[i, :n] = self.read_words(int(a), int(n))
            return out
        idx, mask = ix
        words = np.frombuffer(self.buf, dtype="<u4", count=len(self.buf) // 4)
        out[mask] = words[idx]
        return out

    def write_rows(self, addrs, lens, rows):
        """Scatter the first ``lens[i]`` words of ``rows[i]`` to ``addrs[i]``."""
        ix = self._row_index(addrs, lens, rows.shape[1])
        if ix is None:
            for i, (a, n) in enumerate(zip(addrs, lens)):
                if n:
                    self.write_words(int(a), rows[i, :n])
            return
        idx, mask = ix
        words = np.frombuffer(self.buf, dtype="<u4", count=len(self.buf) // 4)
        words[idx] = rows[mask]
        del words

    def read_f32(self, addr, n):
        return self.read_words(addr, n).view(np.float32)


@dataclass
class ReorderPlan:
    kind: str           # "sort" or "zip"
    regs: tuple         # key registers (td1, td2) the plan was produced from
    rows: list          # PlanRow per matrix-register row


class MachineState:
    """Register files and memory of one core's SparseZipper unit.

    ``R`` is the number of 32-bit lanes per register row (and rows per
    matrix register).
    """

    def __init__(self, R=16):
        if not 2 <= R <= 64:
            raise ValueError("R must lie in [2, 64]")
        self.R = R
        self.tr = np.zeros((N_MATRIX_REGS, R, R), dtype=np.uint32)
        self.v = np.zeros((N_VECTOR_REGS, R), dtype=np.uint32)
        self.ic = np.zeros((2, R), dtype=np.uint32)
        self.oc = np.zeros((2, R), dtype=np.uint32)
        self.plan = None
        self.mem = Memory()
        self.counters = OpCounters()

    def values(self, reg):
        """Float32 view of a matrix register."""
        return self.tr[reg].view(np.float32)

    def snapshot(self, regs=None):
        """JSON-ready dump: registers as hex lanes, counters and a plan summary."""
        regs = range(N_MATRIX_REGS) if regs is None else regs
        plan = None
        if self.plan is not None:
            plan = {
                "kind": self.plan.kind,
                "regs": list(self.plan.regs),
                "rows": [[p.la, p.lb, p.consumed_a, p.consumed_b, p.out_len_1, p.out_len_2]
                         for p in self.plan.rows],
            }
        return {
            "R": self.R,
            "tr": {str(r): [[f"{w:08x}" for w in row] for row in self.tr[r].tolist()] for r in regs},
            "v": [[f"{w:08x}" for w in row] for row in self.v.tolist()],
            "ic": self.ic.tolist(),
            "oc": self.oc.tolist(),
            "plan": plan,
        }

    def snapshot_json(self, regs=None):
        return json.dumps(self.snapshot(regs), sort_keys=True) + "\n"
