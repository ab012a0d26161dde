"""Key-value streams and brute-force reference semantics for chunk operations.

These functions define what sorting and merging a chunk *means*. They are
written independently of the systolic engine so the engine can be checked
against them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import PreconditionError
from .matrix import KEY_SENTINEL, CsrMatrix

f32 = np.float32


@dataclass
class KeyValueChunk:
    """Up to ``capacity`` (key, value) pairs; positions past ``len`` are invalid."""

    keys: list
    values: list
    capacity: int = 16

    def __post_init__(self):
        if len(self.keys) != len(self.values):
            raise PreconditionError("keys and values differ in length")
        if len(self.keys) > self.capacity:
            raise PreconditionError(f"chunk of {len(self.keys)} exceeds capacity {self.capacity}")
        self.keys = [int(k) for k in self.keys]
        self.values = [f32(v) for v in self.values]

    @classmethod
    def from_pairs(cls, pairs, capacity=16):
        pairs = list(pairs)
        return cls([k for k, _ in pairs], [v for _, v in pairs], capacity)

    @property
    def len(self):
        return len(self.keys)

    def padded_keys(self):
        return self.keys + [KEY_SENTINEL] * (self.capacity - self.len)

    def pairs(self):
        return list(zip(self.keys, self.values))

    def is_sorted(self):
        return all(x < y for x, y in zip(self.keys, self.keys[1:]))


@dataclass
class Partition:
    """One sorted run of a stream, stored flat; ``chunks`` slices it by R."""

    keys: list = field(default_factory=list)
    values: list = field(default_factory=list)

    @property
    def len(self):
        return len(self.keys)

    def chunks(self, capacity):
        for lo in range(0, self.len, capacity):
            yield KeyValueChunk(self.keys[lo:lo + capacity], self.values[lo:lo + capacity], capacity)

    def pairs(self):
        return list(zip(self.keys, self.values))


def expand_row(a: CsrMatrix, b: CsrMatrix, i: int):
    """Intermediate (column, product) tuples of output row ``i``, j-major order."""
    out = []
    lo, hi = a.row_ptr[i], a.row_ptr[i + 1]
    for j, x in zip(a.col_idx[lo:hi].tolist(), a.values[lo:hi]):
        cols, vals = b.row(j)
        prods = x * vals  # float32 * float32 -> float32
        out.extend(zip(cols.tolist(), prods))
    return out


def chunk_sort_oracle(c: KeyValueChunk) -> KeyValueChunk:
    """Sort by key; duplicates collapse into one entry summed in input order."""
    order = sorted(range(c.len), key=lambda p: (c.keys[p], p))
    keys, values = [], []
    for p in order:
        if keys and keys[-1] == c.keys[p]:
            values[-1] = f32(values[-1] + c.values[p])
        else:
            keys.append(c.keys[p])
            values.append(c.values[p])
    return KeyValueChunk(keys, values, c.capacity)


def chunk_merge_oracle(a: KeyValueChunk, b: KeyValueChunk):
    """Merge two sorted chunks, keeping only keys whose final place is known.

    A key of one chunk is mergeable iff it is <= the largest key of the
    other chunk. If either chunk is empty nothing is mergeable. Returns
    ``(merged_pairs, consumed_a, consumed_b)``.
    """
    for name, c in (("a", a), ("b", b)):
        if not c.is_sorted():
            raise PreconditionError(f"chunk {name} is not strictly ascending: {c.keys}")
    if a.len == 0 or b.len == 0:
        return [], 0, 0
    max_a, max_b = a.keys[-1], b.keys[-1]
    na = sum(1 for k in a.keys if k <= max_b)
    nb = sum(1 for k in b.keys if k <= max_a)
    merged = []
    i = j = 0
    while i < na or j < nb:
        if j >= nb or (i < na and a.keys[i] < b.keys[j]):
            merged.append((a.keys[i], a.values[i]))
            i += 1
        elif i >= na or b.keys[j] < a.keys[i]:
            merged.append((b.keys[j], b.values[j]))
            j += 1
        else:
            merged.append((a.keys[i], f32(a.values[i] + b.values[j])))
            i += 1
            j += 1
    return merged, na, nb


def partition_merge_oracle(p: Partition, q: Partition) -> Partition:
    """Two-way merge of sorted runs with accumulation of equal keys."""
    keys, values = [], []
    i = j = 0
    while i < p.len and j < q.len:
        kp, kq = p.keys[i], q.keys[j]
        if kp < kq:
            keys.append(kp)
            values.append(p.values[i])
            i += 1
        elif kq < kp:
            keys.append(kq)
            values.append(q.values[j])
            j += 1
        else:
            keys.append(kp)
            values.append(f32(p.values[i] + q.values[j]))
            i += 1
            j += 1
    keys += p.keys[i:] + q.keys[j:]
    values += p.values[i:] + q.values[j:]
    return Partition(keys, values)


def chunked_partition_merge(p: Partition, q: Partition, capacity: int, merge=chunk_merge_oracle):
    """Merge two runs one chunk window at a time, advancing by consumed counts.

    Once a side is exhausted the rest of the other is copied over without
    another merge step. Returns ``(partition, merge_steps)``.
    """
    keys, values = [], []
    i = j = steps = 0
    while i < p.len and j < q.len:
        ca = KeyValueChunk(p.keys[i:i + capacity], p.values[i:i + capacity], capacity)
        cb = KeyValueChunk(q.keys[j:j + capacity], q.values[j:j + capacity], capacity)
        merged, na, nb = merge(ca, cb)
        keys += [k for k, _ in merged]
        values += [v for _, v in merged]
        i += na
        j += nb
        steps += 1
    keys += p.keys[i:] + q.keys[j:]
    values += p.values[i:] + q.values[j:]
    return Partition(keys, values), steps
