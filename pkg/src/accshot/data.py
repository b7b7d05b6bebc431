"""Sparse design matrices, datasets, normalization and sparsity measures.

The design matrix X is n x d (rows are examples, columns are features) and
is stored column-compressed, since every solver in the package works one
feature column at a time.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse

from . import rng as _rng
from .errors import (
    DataError,
    DuplicateIndex,
    EmptyDataset,
    IndexOutOfRange,
    NonFinite,
    ParseError,
    UnsortedIndices,
    ValidationError,
    ZeroColumn,
)

logger = logging.getLogger(__name__)

POWER_TOL = 1e-9
POWER_MAX_ITER = 10000


def _frozen(a, dtype):
    a = np.ascontiguousarray(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SparseColMatrix:
    """Immutable CSC matrix with strict invariants.

    Row indices are 0-based and strictly increasing inside each column and
    no stored value is exactly zero, so the stored pattern is the numeric
    sparsity pattern.
    """

    n_rows: int
    n_cols: int
    col_ptr: np.ndarray
    row_idx: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "col_ptr", _frozen(self.col_ptr, np.int64))
        object.__setattr__(self, "row_idx", _frozen(self.row_idx, np.int64))
        object.__setattr__(self, "values", _frozen(self.values, np.float64))
        self._validate()

    def _validate(self):
        n, d = self.n_rows, self.n_cols
        if n < 1 or d < 1:
            raise DataError(f"matrix shape must be positive, got {(n, d)}")
        cp, ri, v = self.col_ptr, self.row_idx, self.values
        if cp.shape != (d + 1,):
            raise DataError(f"col_ptr must have length {d + 1}")
        if cp[0] != 0 or cp[-1] != len(v) or len(ri) != len(v):
            raise DataError("col_ptr endpoints do not match stored entries")
        if np.any(np.diff(cp) < 0):
            raise DataError("col_ptr must be non-decreasing")
        if len(ri) and (ri.min() < 0 or ri.max() >= n):
            raise DataError("row index out of range")
        if not np.all(np.isfinite(v)):
            raise DataError("stored values must be finite")
        if np.any(v == 0.0):
            raise DataError("explicit zeros are not allowed in stored values")
        # strictly increasing rows within every column
        col_of = np.repeat(np.arange(d), np.diff(cp))
        same_col = col_of[1:] == col_of[:-1]
        if np.any(np.diff(ri)[same_col] <= 0):
            raise DataError("row indices must be strictly increasing within a column")

    # construction -----------------------------------------------------

    @classmethod
    def from_coo(cls, n_rows, n_cols, rows, cols, vals):
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        if len(cols) and (cols.min() < 0 or cols.max() >= n_cols):
            raise DataError("column index out of range")
        order = np.lexsort((rows, cols))
        rows, cols, vals = rows[order], cols[order], vals[order]
        if len(rows) > 1:
            dup = (np.diff(rows) == 0) & (np.diff(cols) == 0)
            if np.any(dup):
                raise DataError("duplicate (row, column) entries")
        col_ptr = np.zeros(n_cols + 1, dtype=np.int64)
        np.cumsum(np.bincount(cols, minlength=n_cols), out=col_ptr[1:])
        return cls(n_rows, n_cols, col_ptr, rows, vals)

    @classmethod
    def from_dense(cls, a):
        a = np.atleast_2d(np.asarray(a, dtype=np.float64))
        rows, cols = np.nonzero(a)
        return cls.from_coo(a.shape[0], a.shape[1], rows, cols, a[rows, cols])

    @classmethod
    def from_scipy(cls, m):
        m = sparse.csc_matrix(m, dtype=np.float64, copy=True)
        m.eliminate_zeros()
        m.sort_indices()
        return cls(m.shape[0], m.shape[1], m.indptr, m.indices, m.data)

    # views ------------------------------------------------------------

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self):
        return len(self.values)

    def column(self, j):
        """(row indices, values) of column ``j`` in storage order."""
        if not 0 <= j < self.n_cols:
            raise IndexError(f"column {j} out of range for d={self.n_cols}")
        a, b = self.col_ptr[j], self.col_ptr[j + 1]
        return self.row_idx[a:b], self.values[a:b]

    def column_nnz(self):
        return np.diff(self.col_ptr)

    def to_scipy(self):
        cached = self.__dict__.get("_csc")
        if cached is None:
            cached = sparse.csc_matrix(
                (self.values, self.row_idx, self.col_ptr), shape=self.shape
            )
            object.__setattr__(self, "_csc", cached)
        return cached

    def toarray(self):
        return self.to_scipy().toarray()

    def scale_columns(self, factors):
        """Return X @ diag(factors); factors must be nonzero."""
        factors = np.asarray(factors, dtype=np.float64)
        per_entry = np.repeat(factors, self.column_nnz())
        return SparseColMatrix(self.n_rows, self.n_cols, self.col_ptr, self.row_idx, self.values * per_entry)

    def __eq__(self, other):
        if not isinstance(other, SparseColMatrix):
            return NotImplemented
        return (
            self.shape == other.shape
            and np.array_equal(self.col_ptr, other.col_ptr)
            and np.array_equal(self.row_idx, other.row_idx)
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None

    # products ---------------------------------------------------------

    def matvec(self, w):
        """X @ w, accumulated column by column in storage order."""
        w = np.asarray(w, dtype=np.float64)
        return self.to_scipy() @ w

    def column_dots(self, g, cols=None):
        """Per-column inner products sum_i X_ij g_i.

        Each column is reduced over its own stored entries only, so the value
        for column j is the same whether j is requested alone, in a subset or
        as part of the full X^T g.
        """
        g = np.asarray(g, dtype=np.float64)
        if cols is None:
            starts = self.col_ptr[:-1]
            lengths = np.diff(self.col_ptr)
            prod = self.values * g[self.row_idx]
        else:
            cols = np.asarray(cols, dtype=np.int64)
            if cols.size == 0:
                return np.zeros(0)
            idx, starts, lengths = self._gather(cols)
            prod = self.values[idx] * g[self.row_idx[idx]]
        return segment_sums(prod, starts, lengths)

    def _gather(self, cols):
        """Storage positions of the entries of ``cols`` plus segment offsets."""
        a = self.col_ptr[cols]
        lengths = self.col_ptr[cols + 1] - a
        offsets = np.zeros(len(cols), dtype=np.int64)
        np.cumsum(lengths[:-1], out=offsets[1:])
        total = int(lengths.sum())
        idx = np.arange(total, dtype=np.int64) - np.repeat(offsets - a, lengths)
        return idx, offsets, lengths

    def gather_columns(self, cols):
        """Rows, values and per-column lengths of a set of columns."""
        cols = np.asarray(cols, dtype=np.int64)
        idx, _, lengths = self._gather(cols)
        return self.row_idx[idx], self.values[idx], lengths


def segment_sums(prod, starts, lengths):
    out = np.zeros(len(lengths))
    nonempty = lengths > 0
    if prod.size:
        sums = np.add.reduceat(prod, starts[nonempty]) if nonempty.any() else np.zeros(0)
        out[nonempty] = sums
    return out


@dataclass(frozen=True, eq=False)
class Dataset:
    X: SparseColMatrix
    y: np.ndarray
    scales: np.ndarray = None
    normalized: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "y", _frozen(self.y, np.float64))
        if self.y.shape != (self.X.n_rows,):
            raise DataError(f"y has length {len(self.y)}, expected {self.X.n_rows}")
        if not np.all(np.isfinite(self.y)):
            raise DataError("labels must be finite")
        if self.normalized != (self.scales is not None):
            raise DataError("scales must be present exactly when normalized is true")
        if self.scales is not None:
            object.__setattr__(self, "scales", _frozen(self.scales, np.float64))
            if self.scales.shape != (self.X.n_cols,) or np.any(self.scales <= 0):
                raise DataError("scales must be positive with one entry per column")
            sq = segment_sums(self.X.values**2, self.X.col_ptr[:-1], self.X.column_nnz())
            if np.any(np.abs(sq - 1.0) > 1e-10):
                raise DataError("normalized dataset has a column with norm != 1")

    @property
    def n(self):
        return self.X.n_rows

    @property
    def d(self):
        return self.X.n_cols

    def normalize(self):
        """Return the normalized copy (no-op if already normalized)."""
        if self.normalized:
            return self
        Xn, scales = normalize_columns(self.X)
        return Dataset(Xn, self.y, scales, True, dict(self.meta))

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        same_scales = (self.scales is None and other.scales is None) or (
            self.scales is not None
            and other.scales is not None
            and np.array_equal(self.scales, other.scales)
        )
        return (
            self.X == other.X
            and np.array_equal(self.y, other.y)
            and self.normalized == other.normalized
            and same_scales
        )

    __hash__ = None


@dataclass(frozen=True)
class SparsityReport:
    row_counts: np.ndarray
    kappa: int
    kappa_bar: float
    rho: float
    rho_converged: bool

    def ordering_holds(self, slack=1e-6):
        return self.rho <= self.kappa_bar + slack and self.kappa_bar <= self.kappa + 1e-12


# operations -------------------------------------------------------------


def normalize_columns(X):
    """Scale every column to unit Euclidean norm.

    Returns the normalized matrix and the removed per-column norms.
    Raises ZeroColumn for an empty column; see :func:`drop_zero_columns`.
    """
    nnz = X.column_nnz()
    empty = np.flatnonzero(nnz == 0)
    if empty.size:
        raise ZeroColumn(int(empty[0]))
    scales = np.sqrt(segment_sums(X.values**2, X.col_ptr[:-1], nnz))
    Xn = SparseColMatrix(X.n_rows, X.n_cols, X.col_ptr, X.row_idx, X.values / np.repeat(scales, nnz))
    return Xn, scales


def drop_zero_columns(X):
    """Remove empty columns; returns the reduced matrix and kept column ids."""
    nnz = X.column_nnz()
    kept = np.flatnonzero(nnz > 0)
    if kept.size == X.n_cols:
        return X, kept
    if kept.size == 0:
        raise EmptyDataset("every column is empty")
    logger.warning("dropping %d empty column(s): %s", X.n_cols - kept.size,
                   np.flatnonzero(nnz == 0)[:10].tolist())
    rows, vals, lengths = X.gather_columns(kept)
    col_ptr = np.zeros(kept.size + 1, dtype=np.int64)
    np.cumsum(lengths, out=col_ptr[1:])
    return SparseColMatrix(X.n_rows, kept.size, col_ptr, rows, vals), kept


def unscale_solution(w, scales):
    """Map a solution of the normalized problem back to original features."""
    w = np.asarray(w, dtype=np.float64)
    scales = np.asarray(scales, dtype=np.float64)
    if w.shape != scales.shape:
        raise ValidationError(f"length mismatch: w has {w.shape}, scales has {scales.shape}")
    if np.any(scales <= 0):
        raise ValidationError("scales must be positive")
    return w / scales


def row_counts(X):
    """Number of stored nonzeros per row, in one pass over the storage."""
    return np.bincount(X.row_idx, minlength=X.n_rows).astype(np.int64)


def sparsity_measures(X):
    """Return ``(row_counts, kappa, kappa_bar)``.

    kappa is the largest row sparsity; kappa_bar is the largest over columns
    of sum_i kappa_i X_ij^2, meaningful on normalized data.
    """
    counts = row_counts(X)
    kappa = int(counts.max())
    weighted = counts[X.row_idx] * X.values**2
    kappa_bar = float(segment_sums(weighted, X.col_ptr[:-1], X.column_nnz()).max())
    return counts, kappa, kappa_bar


def spectral_radius(X, tol=POWER_TOL, max_iter=POWER_MAX_ITER, seed=0, return_history=False):
    """Largest eigenvalue of X^T X by power iteration on v -> X^T (X v).

    The start vector is a pseudo-random unit vector drawn from ``seed``.
    Returns ``(rho, converged)``; converged means the relative change of
    the Rayleigh quotient fell to ``tol`` or below.
    """
    if not tol > 0:
        raise ValidationError("tol must be positive")
    if max_iter < 1:
        raise ValidationError("max_iter must be at least 1")
    gen = _rng.stream(seed, _rng.POWER)
    v = gen.standard_normal(X.n_cols)
    v /= np.linalg.norm(v)
    csc = X.to_scipy()
    csr = csc.T.tocsr()
    history = []
    rho_prev = None
    converged = False
    for _ in range(max_iter):
        xv = csc @ v
        rho = float(xv @ xv)  # Rayleigh quotient, v has unit norm
        if not math.isfinite(rho):
            raise NonFinite("power iteration produced a non-finite estimate")
        history.append(rho)
        if rho_prev is not None and abs(rho - rho_prev) <= tol * abs(rho):
            converged = True
            break
        rho_prev = rho
        z = csr @ xv
        nz = np.linalg.norm(z)
        if nz == 0.0:
            # v in the null space: rho is 0 only if X is 0, which the
            # matrix invariants exclude; restart from a fresh direction
            v = gen.standard_normal(X.n_cols)
            v /= np.linalg.norm(v)
            continue
        v = z / nz
    if return_history:
        return rho, converged, history
    return rho, converged


def analyze_sparsity(X, tol=POWER_TOL, max_iter=POWER_MAX_ITER, seed=0):
    counts, kappa, kappa_bar = sparsity_measures(X)
    rho, converged = spectral_radius(X, tol, max_iter, seed)
    return SparsityReport(counts, kappa, kappa_bar, rho, converged)


# file format ------------------------------------------------------------

_META_PREFIX = "# meta "


def save_dataset(ds, path):
    """Write ``ds`` in the sparse text format.

    Values are written with ``repr`` (shortest round-trip form). Column
    count and normalization scales travel in a ``# meta`` comment line.
    """
    meta = {
        "n_cols": ds.d,
        "normalized": ds.normalized,
        "scales": None if ds.scales is None else [float(s) for s in ds.scales],
    }
    csr = ds.X.to_scipy().tocsr()
    csr.sort_indices()
    lines = ["# accshot sparse dataset", _META_PREFIX + json.dumps(meta)]
    for i in range(ds.n):
        a, b = csr.indptr[i], csr.indptr[i + 1]
        feats = " ".join(f"{j + 1}:{float(v)!r}" for j, v in zip(csr.indices[a:b], csr.data[a:b]))
        lines.append(f"{float(ds.y[i])!r} {feats}".rstrip())
    Path(path).write_text("\n".join(lines) + "\n")


def load_dataset(path):
    """Parse a sparse text dataset (``label idx:value ...``, 1-based)."""
    text = Path(path).read_text()
    meta = {}
    labels, rows, cols, vals = [], [], [], []
    max_col = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            if line.startswith(_META_PREFIX):
                try:
                    meta = json.loads(line[len(_META_PREFIX):])
                except json.JSONDecodeError as exc:
                    raise ParseError(lineno, f"bad meta line: {exc}") from None
            continue
        tokens = line.split()
        try:
            label = float(tokens[0])
        except ValueError:
            raise ParseError(lineno, f"bad label {tokens[0]!r}") from None
        i = len(labels)
        labels.append(label)
        prev = 0
        for tok in tokens[1:]:
            idx_s, sep, val_s = tok.partition(":")
            if not sep:
                raise ParseError(lineno, f"expected idx:value, got {tok!r}")
            try:
                idx = int(idx_s)
                val = float(val_s)
            except ValueError:
                raise ParseError(lineno, f"bad token {tok!r}") from None
            if idx < 1:
                raise IndexOutOfRange(lineno, f"feature index {idx} < 1")
            if idx == prev:
                raise DuplicateIndex(lineno, f"duplicate feature index {idx}")
            if idx < prev:
                raise UnsortedIndices(lineno, f"feature index {idx} after {prev}")
            if not math.isfinite(val):
                raise ParseError(lineno, f"non-finite value in {tok!r}")
            if val == 0.0:
                raise ParseError(lineno, f"explicit zero in {tok!r}")
            prev = idx
            rows.append(i)
            cols.append(idx - 1)
            vals.append(val)
        max_col = max(max_col, prev)
    if not labels:
        raise EmptyDataset(f"{path}: no examples")
    d = int(meta.get("n_cols") or max_col)
    if max_col > d:
        raise IndexOutOfRange(0, f"feature index {max_col} exceeds declared n_cols={d}")
    if d < 1:
        raise EmptyDataset(f"{path}: no features")
    X = SparseColMatrix.from_coo(len(labels), d, rows, cols, vals)
    scales = meta.get("scales")
    return Dataset(
        X,
        np.array(labels),
        None if scales is None else np.array(scales, dtype=np.float64),
        bool(meta.get("normalized", False)),
        {"source": str(path)},
    )
