"""Cycle-by-cycle simulation of the extended systolic array.

Tokens move one PE per cycle. A PE fires in the cycle both of its input
ports hold a token of the same micro-op; anything else is a structural
hazard and raises :class:`EngineError`. Cycle 1 is the cycle in which the
first input reaches PE(0, 0).

Geometry (N x N array, PE(r, c), r = row from the top, c = column):

* north lane ``p`` enters column ``p``; west lane ``p`` enters row ``p``
  in sort mode and row ``N-1-p`` in zip mode, so a sorted west chunk reads
  bottom to top;
* a first-pass key leaving the east (south) edge spends one cycle in the
  loop-back register and re-enters at the west (north) edge;
* second-pass outputs are read east bottom-to-top into the first output
  register and south left-to-right into the second.

Every PE records its routing state per (row pair, pass): ``I`` initial (no
valid data), ``F`` forward, ``X`` switch, ``C`` combine. The value
instruction replays these states and never looks at keys.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .engine import FIRST, SECOND, PlanRow
from .errors import EngineError, PreconditionError

f32 = np.float32

INITIAL, FORWARD, SWITCH, COMBINE = "I", "F", "X", "C"


class Token:
    __slots__ = ("key", "valid", "side", "merged", "tag", "origins")

    def __init__(self, key, valid, side, merged=False, tag="", origins=()):
        self.key = key
        self.valid = valid
        self.side = side
        self.merged = merged
        self.tag = tag
        self.origins = origins

    def rank(self):
        return (1, 0) if not self.valid else (0, self.key)

    def label(self):
        if self.valid:
            return str(self.key)
        if self.tag == "x":
            return f"x{self.key}"  # excluded keys keep their value for the next iteration
        return self.tag or "-"


def _invalid(tag, side=None):
    return Token(0, False, side, tag=tag)


@dataclass
class RowInput:
    keys_a: list
    keys_b: list
    la: int
    lb: int
    values_a: list = None
    values_b: list = None


@dataclass
class RowOutput:
    out1: list
    out2: list
    plan: PlanRow
    ic_a: int
    ic_b: int
    oc_a: int
    oc_b: int
    lanes1: list = field(default_factory=list)   # raw key labels per lane
    lanes2: list = field(default_factory=list)
    values1: list = None
    values2: list = None


@dataclass
class CycleTrace:
    """Event log of one simulated instruction pair."""

    n: int
    kind: str
    rows: int
    events: list = field(default_factory=list)
    fires: dict = field(default_factory=dict)   # (r, c) -> [(cycle, instr, row, pass)]
    first_input_cycle: int = 1
    first_output_cycle: int = None
    last_cycle: int = 0
    value_start_cycle: int = None

    @property
    def total_cycles(self):
        return self.last_cycle - self.first_input_cycle + 1 if self.last_cycle else 0

    def pe_schedule(self, r, c):
        return list(self.fires.get((r, c), []))

    def idle_cycles(self, r=0, c=0):
        """Cycles between first and last firing in which PE(r, c) sat idle."""
        busy = sorted(f[0] for f in self.fires.get((r, c), []))
        if not busy:
            return []
        busy_set = set(busy)
        return [t for t in range(busy[0], busy[-1] + 1) if t not in busy_set]

    def pass_transition_stalls(self):
        """Idle top-left-PE cycles between each instruction's two passes."""
        out = []
        for instr in ("key", "value"):
            ops = [(t, p) for t, i, _, p in self.fires.get((0, 0), []) if i == instr]
            if not ops:
                continue
            last_first = max(t for t, p in ops if p == 1)
            first_second = min(t for t, p in ops if p == 2)
            out.append(list(range(last_first + 1, first_second)))
        return out

    def loopback_sequence(self, side="east", row=0, instr="key"):
        """Labels leaving ``side`` after the first pass, in output-lane order.

        East tokens are listed bottom row first, the same order the east
        edge fills the first output register.
        """
        evs = [e for e in self.events if e["event"] == "loopback" and e["side"] == side
               and e["row"] == row and e["instr"] == instr]
        evs.sort(key=lambda e: e["index"], reverse=side == "east")
        return [e["token"] for e in evs]

    def output_sequence(self, side="south", row=0, instr="key"):
        """Final labels on ``side`` in lane order."""
        evs = [e for e in self.events if e["event"] == "output" and e["side"] == side
               and e["row"] == row and e["instr"] == instr]
        evs.sort(key=lambda e: e["lane"])
        return [e["token"] for e in evs]

    def pe_events(self):
        return [e for e in self.events if e["event"] == "pe"]

    def to_json(self):
        doc = {"n": self.n, "kind": self.kind, "rows": self.rows,
               "first_output_cycle": self.first_output_cycle,
               "total_cycles": self.total_cycles, "events": self.events}
        return json.dumps(doc, sort_keys=True, indent=1) + "\n"

    def render_text(self):
        """Grid per cycle: each cell ``state:west/north`` of the firing PE."""
        if self.n > 8:
            raise PreconditionError("text rendering supports n <= 8")
        by_cycle = {}
        for e in self.events:
            by_cycle.setdefault(e["cycle"], []).append(e)
        lines = [f"# {self.kind} trace, n={self.n}, rows={self.rows}"]
        width = 11
        for t in sorted(by_cycle):
            evs = by_cycle[t]
            lines.append(f"cycle {t}")
            grid = [["." for _ in range(self.n)] for _ in range(self.n)]
            for e in evs:
                if e["event"] == "pe":
                    r, c = e["pe"]
                    mark = ("k" if e["instr"] == "key" else "v") + ("c" if e["pass"] == 2 else "s")
                    grid[r][c] = f"{mark}{e['row']}{e['state']}:{e['in'][0]}/{e['in'][1]}"
            for row in grid:
                lines.append("  " + " ".join(cell.ljust(width) for cell in row).rstrip())
            for e in evs:
                if e["event"] == "loopback":
                    lines.append(f"  loop {e['side']}[{e['index']}] row{e['row']} <- {e['token']}")
                elif e["event"] == "output":
                    lines.append(f"  out {e['side']}[{e['lane']}] row{e['row']} = {e['token']}")
                elif e["event"] == "counter":
                    lines.append(f"  {e['counter']}[{e['row']}] = {e['value']}")
        return "\n".join(lines) + "\n"


class _Sim:
    def __init__(self, kind, n, rows, record):
        if kind not in ("sort", "zip"):
            raise ValueError(f"unknown kind {kind!r}")
        if n < 2:
            raise PreconditionError("array dimension must be >= 2")
        if len(rows) > n:
            raise PreconditionError(f"{len(rows)} row pairs exceed array dimension {n}")
        for ri in rows:
            if not (0 <= ri.la <= n and 0 <= ri.lb <= n):
                raise PreconditionError(f"row length ({ri.la}, {ri.lb}) exceeds R={n}")
            if kind == "zip":
                for side in (ri.keys_a[:ri.la], ri.keys_b[:ri.lb]):
                    if any(x >= y for x, y in zip(side, side[1:])):
                        raise PreconditionError(f"zip side not strictly ascending: {list(side)}")
        self.kind, self.n, self.rows, self.record = kind, n, rows, record
        self.trace = CycleTrace(n, kind, len(rows))
        self.arrivals = {}
        self.states = {}            # (r, c, row, pass) -> state
        self.with_values = bool(rows) and all(r.values_a is not None for r in rows)
        k = len(rows)
        self.ic = [[0, 0] for _ in range(k)]
        self.oc = [[0, 0] for _ in range(k)]
        self.out_keys = [[[None] * n, [None] * n] for _ in range(k)]
        self.out_vals = [[[None] * n, [None] * n] for _ in range(k)]
        self.key_compress_left = k  # rows whose PE(0,0) compress op is pending

    # -- plumbing ---------------------------------------------------------
    def _west_row(self, lane):
        return lane if self.kind == "sort" else self.n - 1 - lane

    def _put(self, t, pe, port, tag, item):
        slot = self.arrivals.setdefault(t, {}).setdefault(pe, {})
        if port in slot:
            raise EngineError(f"port collision at PE{pe} {port} in cycle {t}")
        slot[port] = (tag, item)

    def _log(self, **e):
        if self.record:
            self.trace.events.append(e)

    def _inject(self, instr, start):
        n = self.n
        for k, ri in enumerate(self.rows):
            for p in range(n):
                if instr == "key":
                    wa = Token(int(ri.keys_a[p]), True, FIRST, origins=((FIRST, p),)) if p < ri.la \
                        else _invalid("-", FIRST)
                    nb = Token(int(ri.keys_b[p]), True, SECOND, origins=((SECOND, p),)) if p < ri.lb \
                        else _invalid("-", SECOND)
                else:
                    wa = f32(ri.values_a[p]) if p < ri.la else f32(0)
                    nb = f32(ri.values_b[p]) if p < ri.lb else f32(0)
                r = self._west_row(p)
                self._put(start + k + r, (r, 0), "w", (instr, k, 1), wa)
                self._put(start + k + p, (0, p), "n", (instr, k, 1), nb)

    # -- PE behaviour -----------------------------------------------------
    def _key_op(self, r, c, k, pss, w, nn):
        mode = self.kind if pss == 1 else "compress"
        diag = r == c
        if not w.valid and not nn.valid:
            state = INITIAL
            east, south = (nn, w) if diag and mode != "zip" else (w, nn)
        elif diag and mode != "zip":
            state, east, south = SWITCH, nn, w
        elif w.valid and nn.valid and w.key == nn.key:
            if mode == "compress":
                raise EngineError(f"equal valid keys {w.key} in compress pass at PE({r},{c})")
            state = COMBINE
            south = Token(w.key, True, w.side, True, "", w.origins + nn.origins)
            east = _invalid("d", w.side)
        else:
            if mode == "zip" and w.valid and nn.valid:
                if nn.key >= w.key and (nn.side != w.side or nn.merged):
                    w.merged = True
                if w.key >= nn.key and (nn.side != w.side or w.merged):
                    nn.merged = True
            if w.rank() > nn.rank():
                state, east, south = FORWARD, w, nn
            else:
                state, east, south = SWITCH, nn, w
        self.states[(r, c, k, pss)] = state
        return state, east, south

    def _value_op(self, r, c, k, pss, w, nn):
        state = self.states[(r, c, k, pss)]
        if state == COMBINE:
            return state, f32(0), f32(w + nn)
        if state == SWITCH or (state == INITIAL and r == c and (pss == 2 or self.kind == "sort")):
            return state, nn, w
        return state, w, nn

    # -- edges ------------------------------------------------------------
    def _leave(self, t, instr, k, pss, edge, index, item):
        """A token leaves the array on the east (index=row) or south (index=col) edge."""
        n = self.n
        if pss == 1:
            if instr == "key":
                if self.kind == "zip" and item.valid and not item.merged:
                    item = Token(item.key, False, item.side, False, "x")
                if item.valid:
                    for side, _ in item.origins:
                        self.ic[k][side] += 1
                        self._log(event="counter", cycle=t + 1, row=k,
                                  counter=("W_IC", "N_IC")[side], value=self.ic[k][side])
                self._log(event="loopback", cycle=t + 1, instr=instr, row=k, side=edge,
                          index=index, token=item.label())
            elif self.record:
                self._log(event="loopback", cycle=t + 1, instr=instr, row=k, side=edge,
                          index=index, token=_fmt(item))
            pe, port = ((index, 0), "w") if edge == "east" else ((0, index), "n")
            self._put(t + 2, pe, port, (instr, k, 2), item)
            return
        if self.trace.first_output_cycle is None:
            self.trace.first_output_cycle = t
        if edge == "east":
            out, lane = 0, n - 1 - index
        else:
            out, lane = 1, index
        if instr == "key":
            self.out_keys[k][out][lane] = item
            if item.valid:
                self.oc[k][out] += 1
                self._log(event="counter", cycle=t, row=k,
                          counter=("E_OC", "S_OC")[out], value=self.oc[k][out])
            label = item.label()
        else:
            self.out_vals[k][out][lane] = item
            label = _fmt(item)
        self._log(event="output", cycle=t, instr=instr, row=k, side=edge, lane=lane, token=label)

    # -- main loop --------------------------------------------------------
    def run(self):
        n = self.n
        if not self.rows:
            return [], self.trace
        self._inject("key", 1)
        t = 1
        while self.arrivals:
            slots = self.arrivals.pop(t, None)
            if slots is None:
                t += 1
                if t > 100 * n + 100:
                    raise EngineError("simulation did not drain")
                continue
            for (r, c) in sorted(slots):
                ports = slots[(r, c)]
                if "w" not in ports or "n" not in ports:
                    raise EngineError(f"PE({r},{c}) received a single input in cycle {t}")
                (tw, w), (tn, nn) = ports["w"], ports["n"]
                if tw != tn:
                    raise EngineError(f"PE({r},{c}) inputs from different micro-ops in cycle {t}")
                instr, k, pss = tw
                if instr == "key":
                    state, east, south = self._key_op(r, c, k, pss, w, nn)
                    labels = (w.label(), nn.label(), east.label(), south.label())
                else:
                    state, east, south = self._value_op(r, c, k, pss, w, nn)
                    labels = (_fmt(w), _fmt(nn), _fmt(east), _fmt(south)) if self.record else None
                self.trace.fires.setdefault((r, c), []).append((t, instr, k, pss))
                self.trace.last_cycle = t
                if self.record:
                    self._log(event="pe", cycle=t, instr=instr, row=k, pe=[r, c],
                              state=state, **{"pass": pss},
                              **{"in": [labels[0], labels[1]], "out": [labels[2], labels[3]]})
                if c == n - 1:
                    self._leave(t, instr, k, pss, "east", r, east)
                else:
                    self._put(t + 1, (r, c + 1), "w", tw, east)
                if r == n - 1:
                    self._leave(t, instr, k, pss, "south", c, south)
                else:
                    self._put(t + 1, (r + 1, c), "n", tw, south)
                if pss == 1 and r == n - 1 and c == n - 1:
                    self._log(event="pass_end", cycle=t, instr=instr, row=k)
                if instr == "key" and pss == 2 and (r, c) == (0, 0):
                    self.key_compress_left -= 1
                    if self.key_compress_left == 0 and self.with_values:
                        self.trace.value_start_cycle = t + 1
                        self._inject("value", t + 1)
            t += 1
        return self._results(), self.trace

    def _results(self):
        results = []
        for k, ri in enumerate(self.rows):
            lanes1, lanes2 = self.out_keys[k]
            outs, srcs = [], []
            for lanes in (lanes1, lanes2):
                nvalid = sum(1 for tok in lanes if tok.valid)
                if not all(tok.valid for tok in lanes[:nvalid]):
                    raise EngineError(f"row {k}: compress pass left a gap: "
                                      f"{[tok.label() for tok in lanes]}")
                outs.append([tok.key for tok in lanes[:nvalid]])
                srcs.append(tuple(tuple(sorted(tok.origins)) for tok in lanes[:nvalid]))
            plan = PlanRow(self.kind, ri.la, ri.lb, srcs[0], srcs[1], *self.ic[k])
            res = RowOutput(outs[0], outs[1], plan, self.ic[k][0], self.ic[k][1],
                            self.oc[k][0], self.oc[k][1],
                            [tok.label() for tok in lanes1], [tok.label() for tok in lanes2])
            if self.with_values:
                v1, v2 = self.out_vals[k]
                res.values1 = list(v1[:len(outs[0])])
                res.values2 = list(v2[:len(outs[1])])
            results.append(res)
        return results


def _fmt(v):
    return f"{float(v):g}"


def trace_rows(kind, n, rows, record=True):
    """Simulate one key (and, if values are given, value) instruction over rows."""
    return _Sim(kind, n, list(rows), record).run()


def _single(kind, n, chunk_a, chunk_b, la, lb, values_a, values_b, record):
    if (values_a is None) != (values_b is None):
        raise PreconditionError("give values for both sides or for neither")
    pad = [0] * n
    ka = list(chunk_a) + pad[len(chunk_a):]
    kb = list(chunk_b) + pad[len(chunk_b):]
    va = vb = None
    if values_a is not None:
        va = list(values_a) + pad[len(values_a):]
        vb = list(values_b) + pad[len(values_b):]
    la = len(chunk_a) if la is None else la
    lb = len(chunk_b) if lb is None else lb
    results, trace = trace_rows(kind, n, [RowInput(ka, kb, la, lb, va, vb)], record)
    return results[0], trace


def trace_sort(n, chunk_a, chunk_b, la=None, lb=None, values_a=None, values_b=None, record=True):
    """Trace one mssortk (+ mssortv when values are given) micro-op."""
    return _single("sort", n, chunk_a, chunk_b, la, lb, values_a, values_b, record)


def trace_zip(n, chunk_a, chunk_b, la=None, lb=None, values_a=None, values_b=None, record=True):
    """Trace one mszipk (+ mszipv when values are given) micro-op."""
    return _single("zip", n, chunk_a, chunk_b, la, lb, values_a, values_b, record)
