"""SparseZipper: matrix-ISA SpGEMM kernels on a simulated merge-sort systolic array."""

__version__ = "0.1.0"

from .counters import OpCounters
from .engine import apply_plan, schedule_cycles, sort_functional, zip_functional
from .errors import (
    DimensionError,
    EngineError,
    ExecutionError,
    MemoryFault,
    ParseError,
    PlanMismatchError,
    PreconditionError,
    SpzError,
)
from .isa import Instruction, merge_chunks_program, run_program, sort_chunks_program
from .kernels import (
    KERNELS,
    KernelResult,
    compare_kernels,
    spgemm_esc,
    spgemm_scl_array,
    spgemm_scl_hash,
    spgemm_spz,
    spgemm_spz_rsort,
)
from .matrix import (
    KEY_SENTINEL,
    CooMatrix,
    CsrMatrix,
    coo_to_csr,
    csr_to_coo,
    dataset_stats,
    gen_banded,
    gen_identity,
    gen_random,
    gen_skewed,
    load_matrix,
    parse_matrix_market,
    read_matrix_market,
    reference_spgemm,
    write_matrix_market,
)
from .state import MachineState, Memory
from .stream import KeyValueChunk, Partition, chunk_merge_oracle, chunk_sort_oracle, expand_row
from .trace import CycleTrace, trace_rows, trace_sort, trace_zip
