"""Instruction definitions and the in-order functional executor.

Besides the eight SparseZipper instructions, two host-level vector helpers
(``vadd.vv`` and ``vsll.vi``) exist so the pointer arithmetic of the
assembly listings can run as part of a program.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .counters import OpCounters
from .engine import apply_plan, schedule_cycles, sort_functional, zip_functional
from .errors import ExecutionError, PlanMismatchError, PreconditionError, SpzError
from .matrix import KEY_SENTINEL
from .state import N_MATRIX_REGS, N_VECTOR_REGS, MachineState, ReorderPlan

log = logging.getLogger(__name__)

MNEMONICS = {
    "MLXE": "mlxe.t", "MSXE": "msxe.t",
    "MSSORTK": "mssortk.tt", "MSSORTV": "mssortv.tt",
    "MSZIPK": "mszipk.tt", "MSZIPV": "mszipv.tt",
    "MMV_VI": "mmv.vi", "MMV_VO": "mmv.vo",
    "VADD_VV": "vadd.vv", "VSLL_VI": "vsll.vi",
}
HOST_OPS = ("VADD_VV", "VSLL_VI")


@dataclass(frozen=True)
class Instruction:
    op: str
    args: tuple

    def __post_init__(self):
        if self.op not in MNEMONICS:
            raise ValueError(f"unknown opcode {self.op!r}")

    def __str__(self):
        a = self.args
        m = MNEMONICS[self.op]
        if self.op in ("MLXE", "MSXE"):
            return f"{m} tr{a[0]}, 0({a[1]:#x}), v{a[2]}, v{a[3]}"
        if self.op.startswith("MS"):
            return f"{m} tr{a[0]}, tr{a[1]}, v{a[2]}, v{a[3]}"
        if self.op.startswith("MMV"):
            return f"{m} v{a[0]}, {a[1]:#x}"
        if self.op == "VADD_VV":
            return f"{m} v{a[0]}, v{a[1]}, v{a[2]}"
        return f"{m} v{a[0]}, v{a[1]}, {a[2]}"


def mlxe(td, base, vs_off, vs_len):
    return Instruction("MLXE", (td, base, vs_off, vs_len))


def msxe(ts, base, vs_off, vs_len):
    return Instruction("MSXE", (ts, base, vs_off, vs_len))


def mssortk(td1, td2, vs1, vs2):
    return Instruction("MSSORTK", (td1, td2, vs1, vs2))


def mssortv(td1, td2, vs1, vs2):
    return Instruction("MSSORTV", (td1, td2, vs1, vs2))


def mszipk(td1, td2, vs1, vs2):
    return Instruction("MSZIPK", (td1, td2, vs1, vs2))


def mszipv(td1, td2, vs1, vs2):
    return Instruction("MSZIPV", (td1, td2, vs1, vs2))


def mmv_vi(vd, cimm):
    return Instruction("MMV_VI", (vd, cimm))


def mmv_vo(vd, cimm):
    return Instruction("MMV_VO", (vd, cimm))


def vadd_vv(vd, vs1, vs2):
    return Instruction("VADD_VV", (vd, vs1, vs2))


def vsll_vi(vd, vs, imm):
    return Instruction("VSLL_VI", (vd, vs, imm))


# ---------------------------------------------------------------------------
# execution

def _mreg(i):
    if not 0 <= i < N_MATRIX_REGS:
        raise PreconditionError(f"matrix register tr{i} out of range")


def _vreg(i):
    if not 0 <= i < N_VECTOR_REGS:
        raise PreconditionError(f"vector register v{i} out of range")


def _lengths(state, vs):
    _vreg(vs)
    lens = state.v[vs]
    if np.any(lens > state.R):
        raise PreconditionError(f"v{vs} holds a length above R={state.R}: {lens.tolist()}")
    return lens.astype(np.int64)


def exec_mlxe(state: MachineState, td, base, vs_off, vs_len):
    """Indexed row load; lanes past each row's length are zero-filled."""
    _mreg(td)
    _vreg(vs_off)
    lens = _lengths(state, vs_len)
    addrs = base + state.v[vs_off].astype(np.int64)
    state.tr[td] = state.mem.read_rows(addrs, lens, state.R)
    if state.plan is not None and td in state.plan.regs:
        state.plan = None
    state.counters.mem_uops += state.R


def exec_msxe(state: MachineState, ts, base, vs_off, vs_len):
    _mreg(ts)
    _vreg(vs_off)
    lens = _lengths(state, vs_len)
    addrs = base + state.v[vs_off].astype(np.int64)
    state.mem.write_rows(addrs, lens, state.tr[ts])
    state.counters.mem_uops += state.R


def _key_instr(state, kind, td1, td2, vs1, vs2):
    _mreg(td1)
    _mreg(td2)
    la, lb = _lengths(state, vs1).tolist(), _lengths(state, vs2).tolist()
    fn = sort_functional if kind == "sort" else zip_functional
    R = state.R
    ka, kb = state.tr[td1].tolist(), state.tr[td2].tolist()
    pad = [KEY_SENTINEL] * R
    new1, new2, counts, plans = [], [], [], []
    idle = fn([], [], 0, 0, R)
    for i in range(R):
        if la[i] == 0 and lb[i] == 0:
            res = idle
        else:
            try:
                res = fn(ka[i], kb[i], la[i], lb[i], R)
            except PreconditionError as e:
                raise PreconditionError(f"row {i}: {e}") from None
        new1.append(res.out1 + pad[res.oc_a:])
        new2.append(res.out2 + pad[res.oc_b:])
        counts.append((res.ic_a, res.ic_b, res.oc_a, res.oc_b))
        plans.append(res.plan)
    state.tr[td1] = new1
    state.tr[td2] = new2
    counts = np.array(counts, dtype=np.uint32).T
    state.ic[:] = counts[:2]
    state.oc[:] = counts[2:]
    state.plan = ReorderPlan(kind, (td1, td2), plans)
    state.counters.cycle_estimate += schedule_cycles(kind, R, R)


def _value_instr(state, kind, td1, td2, vs1, vs2):
    _mreg(td1)
    _mreg(td2)
    plan = state.plan
    if plan is None:
        raise PlanMismatchError(f"no reorder plan for a {kind} value instruction")
    if plan.kind != kind:
        raise PlanMismatchError(f"plan was produced by a {plan.kind} key instruction, not {kind}")
    la, lb = _lengths(state, vs1).tolist(), _lengths(state, vs2).tolist()
    v1, v2 = state.values(td1).tolist(), state.values(td2).tolist()
    zero = [0.0] * state.R
    new1, new2 = [], []
    for i, p in enumerate(plan.rows):
        if (la[i], lb[i]) != (p.la, p.lb):
            raise PlanMismatchError(
                f"row {i}: lengths ({la[i]}, {lb[i]}) differ from plan ({p.la}, {p.lb})")
        o1, o2 = apply_plan(p, v1[i][:p.la], v2[i][:p.lb])
        new1.append(o1 + zero[len(o1):])
        new2.append(o2 + zero[len(o2):])
    state.tr[td1] = np.array(new1, dtype=np.float32).view(np.uint32)
    state.tr[td2] = np.array(new2, dtype=np.float32).view(np.uint32)


def exec_mssortk(state, td1, td2, vs1, vs2):
    _key_instr(state, "sort", td1, td2, vs1, vs2)


def exec_mssortv(state, td1, td2, vs1, vs2):
    _value_instr(state, "sort", td1, td2, vs1, vs2)


def exec_mszipk(state, td1, td2, vs1, vs2):
    _key_instr(state, "zip", td1, td2, vs1, vs2)


def exec_mszipv(state, td1, td2, vs1, vs2):
    _value_instr(state, "zip", td1, td2, vs1, vs2)


def exec_mmv(state, vd, which, idx):
    """Copy counter vector IC[idx] (``which='input'``) or OC[idx] into ``vd``."""
    _vreg(vd)
    if idx not in (0, 1):
        raise PreconditionError("counter index must be 0 or 1")
    src = state.ic if which == "input" else state.oc
    state.v[vd] = src[idx]


def exec_vadd(state, vd, vs1, vs2):
    state.v[vd] = state.v[vs1] + state.v[vs2]


def exec_vsll(state, vd, vs, imm):
    state.v[vd] = state.v[vs] << np.uint32(imm)


_DISPATCH = {
    "MLXE": exec_mlxe,
    "MSXE": exec_msxe,
    "MSSORTK": exec_mssortk,
    "MSSORTV": exec_mssortv,
    "MSZIPK": exec_mszipk,
    "MSZIPV": exec_mszipv,
    "MMV_VI": lambda s, vd, c: exec_mmv(s, vd, "input", c),
    "MMV_VO": lambda s, vd, c: exec_mmv(s, vd, "output", c),
    "VADD_VV": exec_vadd,
    "VSLL_VI": exec_vsll,
}


def execute(state: MachineState, instr: Instruction):
    _DISPATCH[instr.op](state, *instr.args)
    state.counters.dynamic_instr[instr.op] += 1


def run_program(instrs, state: MachineState) -> OpCounters:
    """Execute ``instrs`` in order; returns the counters this program added."""
    before = OpCounters()
    before += state.counters
    debug = log.isEnabledFor(logging.DEBUG)
    for idx, instr in enumerate(instrs):
        if debug:
            ic0, oc0 = state.ic.copy(), state.oc.copy()
        try:
            execute(state, instr)
        except SpzError as e:
            raise ExecutionError(idx, instr, e) from e
        if debug:
            log.debug("%-40s dIC=%s dOC=%s", instr,
                      (state.ic.astype(np.int64) - ic0).tolist(),
                      (state.oc.astype(np.int64) - oc0).tolist())
    delta = OpCounters()
    delta.dynamic_instr = state.counters.dynamic_instr - before.dynamic_instr
    delta.cycle_estimate = state.counters.cycle_estimate - before.cycle_estimate
    delta.mem_uops = state.counters.mem_uops - before.mem_uops
    return delta


# ---------------------------------------------------------------------------
# the two listings from the ISA description

def sort_chunks_program(a0, a1, a2, a3):
    """Sort one chunk pair per stream.

    v0/v1 input lengths, v2/v3 input byte offsets, v6/v7 output byte
    offsets; leaves output lengths in v4/v5.
    """
    return [
        mlxe(0, a0, 2, 0),
        mlxe(1, a1, 2, 0),
        mlxe(2, a0, 3, 1),
        mlxe(3, a1, 3, 1),
        mssortk(0, 2, 0, 1),
        mssortv(1, 3, 0, 1),
        mmv_vo(4, 0),
        mmv_vo(5, 1),
        msxe(0, a2, 6, 4),
        msxe(1, a3, 6, 4),
        msxe(2, a2, 7, 5),
        msxe(3, a3, 7, 5),
    ]


def merge_chunks_program(a0, a1, a2, a3):
    """Merge one chunk pair per stream and append the result at v5.

    v0/v1 input lengths, v2/v3 input byte offsets, v5 output byte offsets
    (advanced in place). Leaves consumed counts in v6/v7 and appended
    counts in v8/v9. The pointer bumps scale element counts to bytes
    through v10.
    """
    return [
        mlxe(0, a0, 2, 0),
        mlxe(1, a1, 2, 0),
        mlxe(2, a0, 3, 1),
        mlxe(3, a1, 3, 1),
        mszipk(0, 2, 0, 1),
        mszipv(1, 3, 0, 1),
        mmv_vi(6, 0),
        mmv_vi(7, 1),
        mmv_vo(8, 0),
        mmv_vo(9, 1),
        msxe(0, a2, 5, 8),
        msxe(1, a3, 5, 8),
        vsll_vi(10, 8, 2),
        vadd_vv(5, 5, 10),
        msxe(2, a2, 5, 9),
        msxe(3, a3, 5, 9),
        vsll_vi(10, 9, 2),
        vadd_vv(5, 5, 10),
    ]
