"""
Five SpGEMM kernels on one matrix
=================================

Every kernel computes A x A for a skewed matrix; the comparison harness
checks each one against the reference product and collects counters.
"""

# %%
from sparsezipper.kernels import compare_kernels
from sparsezipper.matrix import dataset_stats, gen_skewed

a = gen_skewed(256, 256, 16, 64, 2, seed=1)
print(dataset_stats(a))

# %%
report = compare_kernels(a, R=16)
print(f"{'kernel':<10} {'ok':<5} {'mults':>7} {'key instr':>9} {'merge it':>8} {'cycles':>8}")
for name, ok, mults, keys, merges, cycles in report.table():
    print(f"{name:<10} {ok!s:<5} {mults:>7} {keys:>9} {merges:>8} {cycles:>8}")

# %%
# the spz kernels spend their instructions in two phases
spz = report.results["spz"].counters
print(dict(spz.dynamic_instr))
print("sort iterations", spz.sort_iterations, "merge iterations", spz.merge_iterations)
