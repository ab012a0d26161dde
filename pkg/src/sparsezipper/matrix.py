"""Sparse matrix containers, Matrix Market I/O, generators and dataset statistics.

Everything here treats matrices as immutable values. ``CsrMatrix`` is the
exchange format used by every kernel; ``CooMatrix`` only exists as the
landing form for file ingestion.
"""

from __future__ import annotations

import hashlib
import io
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, ParseError

#: Reserved invalid key. Compares greater than every valid column index.
KEY_SENTINEL = 0xFFFFFFFF
MAX_COLS = KEY_SENTINEL  # cols must be strictly below this


@dataclass(frozen=True, eq=False)
class CooMatrix:
    rows: int
    cols: int
    row: np.ndarray
    col: np.ndarray
    val: np.ndarray

    @classmethod
    def from_entries(cls, rows, cols, entries):
        entries = list(entries)
        r = np.array([e[0] for e in entries], dtype=np.int64)
        c = np.array([e[1] for e in entries], dtype=np.int64)
        v = np.array([e[2] for e in entries], dtype=np.float32)
        return cls(rows, cols, r, c, v)

    @property
    def nnz(self):
        return len(self.row)

    @property
    def entries(self):
        """Entries as a sorted list of ``(row, col, value)`` tuples."""
        out = [(int(r), int(c), float(v)) for r, c, v in zip(self.row, self.col, self.val)]
        return sorted(out)

    def normalized(self):
        """Sort by (row, col) and sum duplicate coordinates."""
        if self.nnz == 0:
            return self
        order = np.lexsort((self.col, self.row))
        r, c = self.row[order], self.col[order]
        v = self.val[order].astype(np.float64)
        start = np.ones(len(r), dtype=bool)
        start[1:] = (r[1:] != r[:-1]) | (c[1:] != c[:-1])
        idx = np.flatnonzero(start)
        return CooMatrix(self.rows, self.cols, r[idx], c[idx],
                         np.add.reduceat(v, idx).astype(np.float32))


@dataclass(frozen=True, eq=False)
class CsrMatrix:
    rows: int
    cols: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray
    _digest: list = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "row_ptr", np.ascontiguousarray(self.row_ptr, dtype=np.int64))
        object.__setattr__(self, "col_idx", np.ascontiguousarray(self.col_idx, dtype=np.int64))
        object.__setattr__(self, "values", np.ascontiguousarray(self.values, dtype=np.float32))

    @property
    def shape(self):
        return (self.rows, self.cols)

    @property
    def nnz(self):
        return int(self.row_ptr[-1])

    def row_nnz(self):
        return np.diff(self.row_ptr)

    def row(self, i):
        lo, hi = self.row_ptr[i], self.row_ptr[i + 1]
        return self.col_idx[lo:hi], self.values[lo:hi]

    def check(self):
        """Raise ``ValueError`` if any CSR invariant is violated."""
        rp = self.row_ptr
        if len(rp) != self.rows + 1 or rp[0] != 0:
            raise ValueError("row_ptr must have rows+1 entries starting at 0")
        if np.any(np.diff(rp) < 0):
            raise ValueError("row_ptr must be non-decreasing")
        if rp[-1] != len(self.col_idx) or len(self.col_idx) != len(self.values):
            raise ValueError("row_ptr[-1], col_idx and values disagree on nnz")
        if self.cols >= MAX_COLS:
            raise ValueError("cols must be below the sentinel key")
        if len(self.col_idx):
            if self.col_idx.min() < 0 or self.col_idx.max() >= self.cols:
                raise ValueError("column index out of range")
            owner = np.repeat(np.arange(self.rows), np.diff(rp))
            same_row = owner[1:] == owner[:-1]
            if np.any(np.diff(self.col_idx)[same_row] <= 0):
                raise ValueError("column indices must be strictly ascending within a row")
        return self

    def to_dense(self, dtype=np.float64):
        out = np.zeros((self.rows, self.cols), dtype=dtype)
        rows = np.repeat(np.arange(self.rows), self.row_nnz())
        out[rows, self.col_idx] = self.values
        return out

    @classmethod
    def from_dense(cls, dense):
        dense = np.asarray(dense)
        r, c = np.nonzero(dense)
        coo = CooMatrix(dense.shape[0], dense.shape[1], r, c, dense[r, c].astype(np.float32))
        return coo_to_csr(coo)

    @classmethod
    def empty(cls, rows, cols):
        return cls(rows, cols, np.zeros(rows + 1), np.zeros(0), np.zeros(0))

    def same_pattern(self, other):
        return (self.shape == other.shape
                and np.array_equal(self.row_ptr, other.row_ptr)
                and np.array_equal(self.col_idx, other.col_idx))

    def __eq__(self, other):
        if not isinstance(other, CsrMatrix):
            return NotImplemented
        return self.same_pattern(other) and np.array_equal(self.values, other.values)

    __hash__ = None

    def digest(self):
        """Content hash, used as a cache key."""
        if not self._digest:
            h = hashlib.sha1()
            h.update(struct.pack("<qq", self.rows, self.cols))
            for arr in (self.row_ptr, self.col_idx, self.values):
                h.update(arr.tobytes())
            self._digest.append(h.hexdigest())
        return self._digest[0]


# ---------------------------------------------------------------------------
# conversions

def coo_to_csr(m: CooMatrix) -> CsrMatrix:
    if m.cols >= MAX_COLS:
        raise DimensionError(f"cols={m.cols} collides with the reserved sentinel key")
    n = m.normalized()
    counts = np.bincount(n.row, minlength=m.rows) if n.nnz else np.zeros(m.rows, dtype=np.int64)
    row_ptr = np.zeros(m.rows + 1, dtype=np.int64)
    np.cumsum(counts, out=row_ptr[1:])
    return CsrMatrix(m.rows, m.cols, row_ptr, n.col, n.val)


def csr_to_coo(a: CsrMatrix) -> CooMatrix:
    rows = np.repeat(np.arange(a.rows, dtype=np.int64), a.row_nnz())
    return CooMatrix(a.rows, a.cols, rows, a.col_idx.copy(), a.values.copy())


# ---------------------------------------------------------------------------
# Matrix Market

_FIELDS = ("real", "integer", "pattern")
_SYMMETRIES = ("general", "symmetric")


def parse_matrix_market(text) -> CooMatrix:
    """Parse a Matrix Market coordinate file (bytes or str) into a CooMatrix.

    Supports real/integer/pattern fields with general/symmetric symmetry.
    Indices become 0-based, pattern entries get 1.0, symmetric files are
    expanded (diagonal once) and duplicate coordinates are summed.
    """
    if isinstance(text, (bytes, bytearray)):
        text = text.decode("utf-8")
    lines = text.splitlines()
    if not lines:
        raise ParseError("empty input", 1)
    header = lines[0].split()
    if len(header) != 5 or header[0].lower() != "%%matrixmarket" or header[1].lower() != "matrix":
        raise ParseError("missing '%%MatrixMarket matrix' header", 1)
    fmt, fld, sym = (h.lower() for h in header[2:])
    if fmt != "coordinate":
        raise ParseError(f"unsupported format {fmt!r} (only coordinate)", 1)
    if fld not in _FIELDS:
        raise ParseError(f"unsupported field {fld!r}", 1)
    if sym not in _SYMMETRIES:
        raise ParseError(f"unsupported symmetry {sym!r}", 1)

    lineno = 1
    size = None
    for lineno in range(2, len(lines) + 1):
        s = lines[lineno - 1].strip()
        if not s or s.startswith("%"):
            continue
        size = s.split()
        break
    if size is None:
        raise ParseError("missing size line", lineno)
    try:
        rows, cols, nnz = (int(t) for t in size)
    except ValueError:
        raise ParseError("size line must hold three integers", lineno) from None
    if rows < 0 or cols < 0 or nnz < 0:
        raise ParseError("negative dimension", lineno)

    ntok = 2 if fld == "pattern" else 3
    r = np.empty(nnz, dtype=np.int64)
    c = np.empty(nnz, dtype=np.int64)
    v = np.ones(nnz, dtype=np.float64)
    k = 0
    for lineno in range(lineno + 1, len(lines) + 1):
        s = lines[lineno - 1].strip()
        if not s or s.startswith("%"):
            continue
        toks = s.split()
        if len(toks) != ntok:
            raise ParseError(f"expected {ntok} tokens, got {len(toks)}", lineno)
        if k >= nnz:
            raise ParseError(f"more than the declared {nnz} entries", lineno)
        try:
            i, j = int(toks[0]), int(toks[1])
            if ntok == 3:
                v[k] = int(toks[2]) if fld == "integer" else float(toks[2])
        except ValueError:
            raise ParseError(f"bad entry {s!r}", lineno) from None
        if not (1 <= i <= rows and 1 <= j <= cols):
            raise ParseError(f"index ({i}, {j}) outside {rows}x{cols}", lineno)
        r[k], c[k] = i - 1, j - 1
        k += 1
    if k != nnz:
        raise ParseError(f"declared {nnz} entries but found {k}", len(lines))

    if sym == "symmetric":
        off = r != c
        r, c, v = (np.concatenate([r, c[off]]), np.concatenate([c, r[off]]),
                   np.concatenate([v, v[off]]))
    # sum duplicates in float64 before the single rounding to float32
    if len(r):
        order = np.lexsort((c, r))
        r, c, v = r[order], c[order], v[order]
        start = np.ones(len(r), dtype=bool)
        start[1:] = (r[1:] != r[:-1]) | (c[1:] != c[:-1])
        idx = np.flatnonzero(start)
        r, c, v = r[idx], c[idx], np.add.reduceat(v, idx)
    return CooMatrix(rows, cols, r, c, v.astype(np.float32))


def read_matrix_market(path) -> CooMatrix:
    with open(path, "rb") as fh:
        return parse_matrix_market(fh.read())


def write_matrix_market(m, fh=None) -> str:
    """Write a CooMatrix or CsrMatrix as ``coordinate real general``.

    Values are printed with enough digits to round-trip float32 exactly.
    Returns the text; also writes it to ``fh`` (path or text stream) if given.
    """
    coo = csr_to_coo(m) if isinstance(m, CsrMatrix) else m.normalized()
    buf = io.StringIO()
    buf.write("%%MatrixMarket matrix coordinate real general\n")
    buf.write(f"{coo.rows} {coo.cols} {coo.nnz}\n")
    for i, j, x in zip(coo.row.tolist(), coo.col.tolist(), coo.val.tolist()):
        buf.write(f"{i + 1} {j + 1} {x:.9g}\n")
    text = buf.getvalue()
    if isinstance(fh, (str, bytes)) or hasattr(fh, "__fspath__"):
        with open(fh, "w", encoding="utf-8") as out:
            out.write(text)
    elif fh is not None:
        fh.write(text)
    return text


def load_matrix(path) -> CsrMatrix:
    """Load a ``.mtx`` file or a binary cache file (by magic bytes)."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] == _CACHE_MAGIC:
        return loads_cache(data)
    return coo_to_csr(parse_matrix_market(data))


# ---------------------------------------------------------------------------
# binary cache: magic, version, dims, then little-endian arrays

_CACHE_MAGIC = b"SPZC"
_CACHE_VERSION = 1
_CACHE_HEADER = struct.Struct("<4sIQQQ")


def dumps_cache(a: CsrMatrix) -> bytes:
    head = _CACHE_HEADER.pack(_CACHE_MAGIC, _CACHE_VERSION, a.rows, a.cols, a.nnz)
    return b"".join([head, a.row_ptr.astype("<i8").tobytes(),
                     a.col_idx.astype("<u4").tobytes(), a.values.astype("<f4").tobytes()])


def loads_cache(data: bytes) -> CsrMatrix:
    if len(data) < _CACHE_HEADER.size:
        raise ParseError("truncated cache header")
    magic, version, rows, cols, nnz = _CACHE_HEADER.unpack_from(data)
    if magic != _CACHE_MAGIC:
        raise ParseError("not a sparsezipper cache file")
    if version != _CACHE_VERSION:
        raise ParseError(f"unsupported cache version {version}")
    off = _CACHE_HEADER.size
    need = off + 8 * (rows + 1) + 8 * nnz
    if len(data) != need:
        raise ParseError(f"cache payload has {len(data)} bytes, expected {need}")
    row_ptr = np.frombuffer(data, "<i8", rows + 1, off)
    off += 8 * (rows + 1)
    col_idx = np.frombuffer(data, "<u4", nnz, off)
    off += 4 * nnz
    values = np.frombuffer(data, "<f4", nnz, off)
    return CsrMatrix(rows, cols, row_ptr, col_idx, values).check()


# ---------------------------------------------------------------------------
# reference product

def reference_spgemm(a: CsrMatrix, b: CsrMatrix) -> CsrMatrix:
    """Row-wise product through an ordered map, accumulated in float64.

    This is the oracle every kernel is compared against; it favours being
    obviously right over being fast. Structural zeros produced by exact
    cancellation are kept.
    """
    if a.cols != b.rows:
        raise DimensionError(f"cannot multiply {a.shape} by {b.shape}")
    a_ptr, a_col, a_val = a.row_ptr.tolist(), a.col_idx.tolist(), a.values.astype(np.float64).tolist()
    b_ptr, b_col, b_val = b.row_ptr.tolist(), b.col_idx.tolist(), b.values.astype(np.float64).tolist()
    row_ptr = [0]
    cols, vals = [], []
    for i in range(a.rows):
        acc = {}
        for p in range(a_ptr[i], a_ptr[i + 1]):
            j, x = a_col[p], a_val[p]
            for q in range(b_ptr[j], b_ptr[j + 1]):
                k = b_col[q]
                acc[k] = acc.get(k, 0.0) + x * b_val[q]
        for k in sorted(acc):
            cols.append(k)
            vals.append(acc[k])
        row_ptr.append(len(cols))
    return CsrMatrix(a.rows, b.cols, np.array(row_ptr), np.array(cols, dtype=np.int64),
                     np.array(vals, dtype=np.float64).astype(np.float32))


# ---------------------------------------------------------------------------
# generators

def gen_random(rows, cols, density, seed) -> CsrMatrix:
    """Bernoulli(density) pattern with values uniform in [-1, 1]."""
    if not 0.0 <= density <= 1.0:
        raise ValueError("density must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    mask = rng.random((rows, cols)) < density
    if density >= 1.0:
        mask[:] = True
    r, c = np.nonzero(mask)
    v = rng.uniform(-1.0, 1.0, size=len(r)).astype(np.float32)
    return coo_to_csr(CooMatrix(rows, cols, r, c, v))


def gen_skewed(rows, cols, heavy_rows, heavy_nnz, light_nnz, seed) -> CsrMatrix:
    """Rows with two nnz levels: ``heavy_rows`` random rows get ``heavy_nnz``."""
    if heavy_rows > rows or heavy_nnz > cols or light_nnz > cols:
        raise ValueError("heavy_rows <= rows and nnz parameters <= cols required")
    rng = np.random.default_rng(seed)
    per_row = np.full(rows, light_nnz, dtype=np.int64)
    per_row[rng.choice(rows, size=heavy_rows, replace=False)] = heavy_nnz
    r = np.repeat(np.arange(rows), per_row)
    c = np.concatenate([rng.choice(cols, size=k, replace=False) for k in per_row]
                       or [np.zeros(0, dtype=np.int64)])
    v = rng.uniform(-1.0, 1.0, size=len(r)).astype(np.float32)
    return coo_to_csr(CooMatrix(rows, cols, r, c.astype(np.int64), v))


def gen_identity(n) -> CsrMatrix:
    return CsrMatrix(n, n, np.arange(n + 1), np.arange(n), np.ones(n))


def gen_banded(n, half_width, seed) -> CsrMatrix:
    """Square band matrix |i - j| <= half_width with random values."""
    rng = np.random.default_rng(seed)
    r, c = [], []
    for i in range(n):
        for j in range(max(0, i - half_width), min(n, i + half_width + 1)):
            r.append(i)
            c.append(j)
    v = rng.uniform(-1.0, 1.0, size=len(r)).astype(np.float32)
    return coo_to_csr(CooMatrix(n, n, np.array(r, dtype=np.int64), np.array(c, dtype=np.int64), v))


# ---------------------------------------------------------------------------
# dataset statistics

@dataclass(frozen=True)
class DatasetStats:
    rows: int
    cols: int
    nnz: int
    density: float
    avg_work_per_row: float
    avg_out_nnz_per_row: float
    avg_work_per_group: float
    work_variation: float
    group_size: int = 16

    def as_dict(self):
        return {
            "rows": self.rows,
            "cols": self.cols,
            "nnz": self.nnz,
            "density": self.density,
            "avg_work_per_row": self.avg_work_per_row,
            "avg_out_nnz_per_row": self.avg_out_nnz_per_row,
            "avg_work_per_group": self.avg_work_per_group,
            "work_variation": self.work_variation,
            "group_size": self.group_size,
        }


def work_per_row(a: CsrMatrix, b: CsrMatrix = None) -> np.ndarray:
    """Multiplications needed for each output row of ``a @ b``."""
    b = a if b is None else b
    if a.cols != b.rows:
        raise DimensionError(f"cannot multiply {a.shape} by {b.shape}")
    if a.nnz == 0:
        return np.zeros(a.rows, dtype=np.int64)
    contrib = b.row_nnz()[a.col_idx]
    rows = np.repeat(np.arange(a.rows), a.row_nnz())
    return np.bincount(rows, weights=contrib, minlength=a.rows).astype(np.int64)


def group_work_variation(work, group_size):
    """Per-group coefficient of variation of ``work`` (population std / mean)."""
    out = []
    for g in range(0, len(work), group_size):
        w = np.asarray(work[g:g + group_size], dtype=np.float64)
        m = w.mean()
        out.append(0.0 if m == 0 else float(w.std() / m))
    return np.array(out)


_out_nnz_cache: dict = {}


def product_nnz(a: CsrMatrix, b: CsrMatrix = None) -> int:
    b = a if b is None else b
    key = (a.digest(), b.digest())
    if key not in _out_nnz_cache:
        _out_nnz_cache[key] = reference_spgemm(a, b).nnz
    return _out_nnz_cache[key]


def dataset_stats(a: CsrMatrix, group_size: int = 16, b: CsrMatrix = None) -> DatasetStats:
    """Summary statistics of ``a @ b`` (``b`` defaults to ``a``).

    ``work_variation`` is the mean over groups of ``group_size`` consecutive
    rows of the within-group coefficient of variation; zero-mean groups
    contribute 0.
    """
    work = work_per_row(a, b)
    rows = a.rows
    groups = [int(work[g:g + group_size].sum()) for g in range(0, rows, group_size)]
    cv = group_work_variation(work, group_size)
    cells = rows * a.cols
    return DatasetStats(
        rows=rows,
        cols=a.cols,
        nnz=a.nnz,
        density=a.nnz / cells if cells else 0.0,
        avg_work_per_row=float(work.sum()) / rows if rows else 0.0,
        avg_out_nnz_per_row=product_nnz(a, b) / rows if rows else 0.0,
        avg_work_per_group=float(np.mean(groups)) if groups else 0.0,
        work_variation=float(cv.mean()) if len(cv) else 0.0,
        group_size=group_size,
    )
