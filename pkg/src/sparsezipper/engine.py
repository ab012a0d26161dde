"""Fast functional semantics of the key/value passes and the array cost model.

A key pass (``sort_functional`` / ``zip_functional``) works on one row pair
and returns a :class:`PlanRow` recording where every output slot's value
comes from. ``apply_plan`` replays it on values, which is what the paired
value instruction does.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import PlanMismatchError, PreconditionError

f32 = np.float32

FIRST, SECOND = 0, 1  # source sides: td1 (west) and td2 (north)


@dataclass(frozen=True)
class PlanRow:
    """Reorder record for one row pair.

    ``out1``/``out2`` hold, per output slot, the ``(side, position)`` sources
    whose values are summed left to right.
    """

    kind: str
    la: int
    lb: int
    out1: tuple
    out2: tuple
    consumed_a: int
    consumed_b: int

    @property
    def out_len_1(self):
        return len(self.out1)

    @property
    def out_len_2(self):
        return len(self.out2)


class KeyPassResult(NamedTuple):
    out1: list
    out2: list
    plan: PlanRow
    ic_a: int
    ic_b: int
    oc_a: int
    oc_b: int


def _check_len(la, lb, capacity):
    if la > capacity or lb > capacity:
        raise PreconditionError(f"row length ({la}, {lb}) exceeds R={capacity}")
    if la < 0 or lb < 0:
        raise PreconditionError("negative row length")


def _sort_side(keys, side):
    groups = {}
    for p, k in enumerate(keys):
        groups.setdefault(k, []).append((side, p))
    out = sorted(groups)
    return out, tuple(tuple(groups[k]) for k in out)


def sort_functional(keys_a, keys_b, la, lb, capacity=16) -> KeyPassResult:
    """Sort each side independently, combining duplicate keys."""
    _check_len(la, lb, capacity)
    ka, srcs_a = _sort_side(list(keys_a[:la]), FIRST)
    kb, srcs_b = _sort_side(list(keys_b[:lb]), SECOND)
    plan = PlanRow("sort", la, lb, srcs_a, srcs_b, la, lb)
    return KeyPassResult(ka, kb, plan, la, lb, len(ka), len(kb))


def zip_functional(keys_a, keys_b, la, lb, capacity=16) -> KeyPassResult:
    """Merge two sorted sides; keys above the other side's maximum wait.

    The merged list is split: the smallest ``capacity`` keys go to the first
    output, the remainder to the second.
    """
    _check_len(la, lb, capacity)
    a, b = list(keys_a[:la]), list(keys_b[:lb])
    for name, side in (("first", a), ("second", b)):
        if not all(map(int.__lt__, side, side[1:])):
            raise PreconditionError(f"{name} side is not strictly ascending: {side}")
    merged_keys, sources = [], []
    na = nb = 0
    if a and b:
        na = bisect_right(a, b[-1])
        nb = bisect_right(b, a[-1])
        i = j = 0
        while i < na or j < nb:
            if j >= nb or (i < na and a[i] < b[j]):
                merged_keys.append(a[i])
                sources.append(((FIRST, i),))
                i += 1
            elif i >= na or b[j] < a[i]:
                merged_keys.append(b[j])
                sources.append(((SECOND, j),))
                j += 1
            else:
                merged_keys.append(a[i])
                sources.append(((FIRST, i), (SECOND, j)))
                i += 1
                j += 1
    cut = min(len(merged_keys), capacity)
    plan = PlanRow("zip", la, lb, tuple(sources[:cut]), tuple(sources[cut:]), na, nb)
    return KeyPassResult(merged_keys[:cut], merged_keys[cut:], plan, na, nb,
                         cut, len(merged_keys) - cut)


def apply_plan(plan: PlanRow, values_a, values_b):
    """Shuffle and accumulate values (float32, left-to-right) following ``plan``."""
    if len(values_a) != plan.la or len(values_b) != plan.lb:
        raise PlanMismatchError(
            f"plan expects lengths ({plan.la}, {plan.lb}), got ({len(values_a)}, {len(values_b)})")
    sides = (values_a, values_b)

    def fold(srcs):
        side, pos = srcs[0]
        if len(srcs) == 1:
            return sides[side][pos]
        acc = f32(sides[side][pos])
        for side, pos in srcs[1:]:
            acc = acc + f32(sides[side][pos])
        return acc

    return [fold(s) for s in plan.out1], [fold(s) for s in plan.out2]


def schedule_cycles(kind, n, rows, row_lengths=None):
    """Array occupancy, in cycles, of one key+value instruction pair.

    Micro-ops of ``rows`` row pairs enter back to back. Each micro-op makes a
    pass of ``2n - 1`` PE wavefronts, spends one cycle in the loop-back
    register, then makes the compress pass; its first result leaves the array
    ``2n + 1`` cycles after it entered. The value instruction starts the cycle
    after the top-left PE finishes the last key compress, so

        T = 2 * (2n + 1) + 2 * (rows - 1)

    The data-independent model ignores ``row_lengths``; ``kind`` is accepted
    for symmetry (sort and zip share the schedule). Valid for ``rows <= n``.
    """
    if kind not in ("sort", "zip"):
        raise ValueError(f"unknown pass kind {kind!r}")
    if rows < 0 or rows > n:
        raise ValueError(f"rows must lie in [0, {n}]")
    if rows == 0:
        return 0
    return 2 * (2 * n + 1) + 2 * (rows - 1)
