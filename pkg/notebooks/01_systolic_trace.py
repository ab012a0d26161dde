"""
Watching the systolic array sort and merge
==========================================

A 3x3 array runs one sort and one merge micro-op. We print the per-cycle
grid and then check the cycle count against the closed form.
"""

# %%
from sparsezipper.engine import schedule_cycles
from sparsezipper.trace import trace_sort, trace_zip

res, tr = trace_sort(3, [], [5, 8, 5], values_a=[], values_b=[1.0, 2.0, 3.0])
print(res.out2, res.values2)          # duplicate 5s combined
print(tr.render_text())

# %%
# merging two sorted chunks: 9 waits for the next iteration
res, tr = trace_zip(3, [3, 5, 9], [2, 5, 8], values_a=[1, 2, 3], values_b=[4, 5, 6])
print("first output", res.out1, "second output", res.out2)
print("consumed", (res.ic_a, res.ic_b), "produced", (res.oc_a, res.oc_b))
print("east loop-back", tr.loopback_sequence("east"))

# %%
print("cycles", tr.total_cycles, "closed form", schedule_cycles("zip", 3, 1))
print("stalls between passes", tr.pass_transition_stalls())
