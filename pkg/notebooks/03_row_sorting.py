"""
Grouping rows by work
=====================

Rows of a group advance in lockstep, so one heavy row keeps the other
lanes waiting. Sorting rows by work before grouping removes most of that
imbalance; this script measures how much.
"""

# %%
import numpy as np

from sparsezipper.kernels import spgemm_spz, spgemm_spz_rsort
from sparsezipper.matrix import dataset_stats, gen_skewed

reductions = []
for seed in range(4):
    a = gen_skewed(256, 256, 16, 64, 2, seed)
    plain = spgemm_spz(a, a).counters.key_instr_total
    rsort = spgemm_spz_rsort(a, a).counters.key_instr_total
    cv = dataset_stats(a).work_variation
    reductions.append(1 - rsort / plain)
    print(f"seed {seed}: work CV {cv:.2f}  key instr {plain} -> {rsort}")

print(f"median reduction {np.median(reductions):.0%}")

# %%
# with equal work everywhere there is nothing to gain
u = gen_skewed(256, 256, 0, 8, 8, 0)
print(spgemm_spz(u, u).counters.key_instr_total, spgemm_spz_rsort(u, u).counters.key_instr_total)
