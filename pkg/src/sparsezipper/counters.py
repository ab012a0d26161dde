"""Operation counters collected by the executor and the kernels."""

from __future__ import annotations

import time
from collections import Counter
from contextlib import contextmanager
from dataclasses import dataclass, field

PHASES = ("preprocessing", "expansion", "sorting", "merging", "output")


@dataclass
class OpCounters:
    multiplies: int = 0
    dynamic_instr: Counter = field(default_factory=Counter)
    merge_iterations: int = 0
    sort_iterations: int = 0
    cycle_estimate: int = 0
    mem_uops: int = 0
    ops: Counter = field(default_factory=Counter)
    phase_times: dict = field(default_factory=lambda: {p: {"seconds": 0.0, "ops": 0} for p in PHASES})

    @property
    def key_instr_total(self):
        return self.dynamic_instr["MSSORTK"] + self.dynamic_instr["MSZIPK"]

    def __iadd__(self, other):
        self.multiplies += other.multiplies
        self.dynamic_instr.update(other.dynamic_instr)
        self.merge_iterations += other.merge_iterations
        self.sort_iterations += other.sort_iterations
        self.cycle_estimate += other.cycle_estimate
        self.mem_uops += other.mem_uops
        self.ops.update(other.ops)
        for p, rec in other.phase_times.items():
            mine = self.phase_times.setdefault(p, {"seconds": 0.0, "ops": 0})
            mine["seconds"] += rec["seconds"]
            mine["ops"] += rec["ops"]
        return self

    @contextmanager
    def phase(self, name):
        t0 = time.perf_counter()
        try:
            yield self.phase_times.setdefault(name, {"seconds": 0.0, "ops": 0})
        finally:
            self.phase_times[name]["seconds"] += time.perf_counter() - t0

    def as_dict(self, timings=False):
        """Stable-ordered dict; wall-clock seconds only when ``timings``."""
        d = {
            "multiplies": self.multiplies,
            "key_instr_total": self.key_instr_total,
            "dynamic_instr": dict(sorted(self.dynamic_instr.items())),
            "sort_iterations": self.sort_iterations,
            "merge_iterations": self.merge_iterations,
            "cycle_estimate": self.cycle_estimate,
            "mem_uops": self.mem_uops,
            "ops": {k: int(v) for k, v in sorted(self.ops.items())},
            "phase_ops": {p: int(self.phase_times[p]["ops"]) for p in sorted(self.phase_times)},
        }
        if timings:
            d["phase_seconds"] = {p: self.phase_times[p]["seconds"] for p in sorted(self.phase_times)}
        return d
