"""Single-pass sufficient statistics: n, column sums and the cross-product matrix.

Two accumulators live here:

* :class:`SuffStats` holds raw moments (``s = sum x``, ``S = X^T X``). Each
  chunk is summed row by row in ascending row order, column pairs in
  row-major upper-triangle order, with no compensation. This is the primary
  path, and it carries the cancellation behaviour of raw moments.
* :class:`CoMoments` holds centred co-moments merged with the pairwise update.
  It is the numerically stable reference used in diagnostics and tests.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import BinaryFormatError, NonFiniteValueError, SchemaMismatchError, TruncatedFileError
from .reduce import PrecisionMode, ReductionPlan, ReductionStats, reduce_stream, run_reduction
from .schema import Chunk, DatasetSchema

SIDECAR_MAGIC = b"SSTATSUF"
SIDECAR_VERSION = 1
_SIDECAR_HEAD = struct.Struct("<8sIIQII")
_PRECISION_CODES = {PrecisionMode.BINARY64: 0, PrecisionMode.BINARY32_DIAGNOSTIC: 1}

# rows per internal block; bounds temporary memory, does not affect results
_BLOCK_ROWS = 2048


def _upper_indices(p: int):
    return np.triu_indices(p)


def _symmetric_from_upper(upper: np.ndarray, p: int) -> np.ndarray:
    S = np.zeros((p, p))
    iu, ju = _upper_indices(p)
    S[iu, ju] = upper
    S[ju, iu] = upper
    return S


@dataclass(frozen=True, eq=False)
class SuffStats:
    n: int
    s: np.ndarray
    S: np.ndarray
    schema: DatasetSchema
    precision: PrecisionMode = PrecisionMode.BINARY64

    @property
    def p(self) -> int:
        return self.schema.p

    @classmethod
    def empty(cls, schema: DatasetSchema,
              precision: PrecisionMode = PrecisionMode.BINARY64) -> "SuffStats":
        return cls(0, np.zeros(schema.p), np.zeros((schema.p, schema.p)), schema,
                   PrecisionMode(precision))

    def upper(self) -> np.ndarray:
        return self.S[_upper_indices(self.p)]

    def identical(self, other: "SuffStats") -> bool:
        """Bit-for-bit equality of every field."""
        return (self.n == other.n and self.schema == other.schema
                and self.precision == other.precision
                and self.s.tobytes() == other.s.tobytes()
                and self.S.tobytes() == other.S.tobytes())


def _check_finite(chunk: Chunk):
    finite = np.isfinite(chunk.values)
    if not finite.all():
        r, c = np.argwhere(~finite)[0]
        raise NonFiniteValueError(chunk.start_row + int(r), int(c), float(chunk.values[r, c]))


def accumulate_chunk(chunk: Chunk, schema: DatasetSchema,
                     precision: PrecisionMode = PrecisionMode.BINARY64) -> SuffStats:
    precision = PrecisionMode(precision)
    if chunk.p != schema.p:
        raise SchemaMismatchError(f"chunk has {chunk.p} columns, schema {schema.p}")
    _check_finite(chunk)
    p = schema.p
    dtype = precision.dtype
    # buffer layout: p column values, then products (j, k>=j) in row-major order
    offsets = np.concatenate([[0], np.cumsum(np.arange(p, 0, -1))]) + p
    width = int(offsets[-1])
    acc = np.zeros(width, dtype=dtype)
    for start in range(0, chunk.row_count, _BLOCK_ROWS):
        X = chunk.values[start:start + _BLOCK_ROWS].astype(dtype, copy=False)
        # C-ordered and >= 2 columns wide, so sum(axis=0) adds rows in order
        buf = np.empty((X.shape[0], width), dtype=dtype)
        buf[:, :p] = X
        for j in range(p):
            np.multiply(X[:, j:j + 1], X[:, j:], out=buf[:, offsets[j]:offsets[j + 1]])
        buf[0] += acc
        acc = buf.sum(axis=0)
    acc = acc.astype(np.float64)
    return SuffStats(chunk.row_count, acc[:p], _symmetric_from_upper(acc[p:], p), schema, precision)


def merge_suffstats(a: SuffStats, b: SuffStats) -> SuffStats:
    if a.schema != b.schema:
        raise SchemaMismatchError("cannot merge statistics with different schemas")
    if a.precision != b.precision:
        raise SchemaMismatchError("cannot merge statistics with different precision modes")
    mode = a.precision
    return SuffStats(a.n + b.n, mode.round(a.s + b.s), mode.round(a.S + b.S), a.schema, mode)


def compute_suffstats(source, schema: DatasetSchema, plan: ReductionPlan,
                      stats: Optional[ReductionStats] = None) -> SuffStats:
    """One pass over a binary dataset through the reduction engine."""
    if source.p != schema.p:
        raise SchemaMismatchError(f"dataset has {source.p} columns, schema {schema.p}")
    return run_reduction(
        source, plan,
        lambda chunk: accumulate_chunk(chunk, schema, plan.precision),
        merge_suffstats,
        SuffStats.empty(schema, plan.precision),
        stats,
    )


def compute_suffstats_stream(stream, chunk_rows: int,
                             precision: PrecisionMode = PrecisionMode.BINARY64,
                             stats: Optional[ReductionStats] = None) -> SuffStats:
    """Same pass over a CSV stream; equals the binary result for the same ``chunk_rows``."""
    schema, precision = stream.schema, PrecisionMode(precision)
    return reduce_stream(stream, chunk_rows,
                         lambda chunk: accumulate_chunk(chunk, schema, precision),
                         merge_suffstats, SuffStats.empty(schema, precision), stats)


@dataclass(frozen=True, eq=False)
class CoMoments:
    n: int
    mean: np.ndarray
    M2: np.ndarray
    schema: DatasetSchema

    @classmethod
    def empty(cls, schema: DatasetSchema) -> "CoMoments":
        return cls(0, np.zeros(schema.p), np.zeros((schema.p, schema.p)), schema)

    def covariance(self, ddof: int = 1) -> np.ndarray:
        if self.n <= ddof:
            raise ValueError(f"need n > ddof (n={self.n}, ddof={ddof})")
        return self.M2 / (self.n - ddof)


def accumulate_comoments(chunk: Chunk, schema: DatasetSchema) -> CoMoments:
    if chunk.p != schema.p:
        raise SchemaMismatchError(f"chunk has {chunk.p} columns, schema {schema.p}")
    _check_finite(chunk)
    X = chunk.values
    mean = X.mean(axis=0)
    D = X - mean
    M2 = D.T @ D
    M2 = (M2 + M2.T) / 2
    return CoMoments(chunk.row_count, mean, M2, schema)


def merge_comoments(a: CoMoments, b: CoMoments) -> CoMoments:
    if a.schema != b.schema:
        raise SchemaMismatchError("cannot merge co-moments with different schemas")
    if a.n == 0:
        return b
    if b.n == 0:
        return a
    n = a.n + b.n
    delta = b.mean - a.mean
    mean = a.mean + delta * (b.n / n)
    M2 = a.M2 + b.M2 + np.outer(delta, delta) * (a.n * b.n / n)
    return CoMoments(n, mean, M2, a.schema)


def compute_comoments(source, schema: DatasetSchema, plan: ReductionPlan,
                      stats: Optional[ReductionStats] = None) -> CoMoments:
    return run_reduction(source, plan, lambda chunk: accumulate_comoments(chunk, schema),
                         merge_comoments, CoMoments.empty(schema), stats)


def compute_comoments_stream(stream, chunk_rows: int,
                             stats: Optional[ReductionStats] = None) -> CoMoments:
    schema = stream.schema
    return reduce_stream(stream, chunk_rows, lambda chunk: accumulate_comoments(chunk, schema),
                         merge_comoments, CoMoments.empty(schema), stats)


# -- sidecar persistence -----------------------------------------------------
#
#   magic "SSTATSUF" | version u32 | precision u32 | n u64 | p u32 | reserved u32
#   p x u8 column role (1 = identifier)
#   p x (u16 length, utf-8 name)
#   p x f64 column sums
#   p(p+1)/2 x f64 upper triangle of S, row-major
#
# All integers and floats little-endian.

def encode_suffstats(ss: SuffStats) -> bytes:
    p = ss.p
    parts = [_SIDECAR_HEAD.pack(SIDECAR_MAGIC, SIDECAR_VERSION, _PRECISION_CODES[ss.precision],
                                ss.n, p, 0)]
    parts.append(bytes(1 if j in ss.schema.identifier_columns else 0 for j in range(p)))
    for name in ss.schema.column_names:
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw)
    parts.append(np.asarray(ss.s, dtype="<f8").tobytes())
    parts.append(np.asarray(ss.upper(), dtype="<f8").tobytes())
    return b"".join(parts)


def decode_suffstats(data: bytes) -> SuffStats:
    if len(data) < _SIDECAR_HEAD.size:
        raise TruncatedFileError("sidecar shorter than its header")
    magic, version, prec, n, p, _ = _SIDECAR_HEAD.unpack_from(data)
    if magic != SIDECAR_MAGIC:
        raise BinaryFormatError(f"bad sidecar magic {magic!r}")
    if version != SIDECAR_VERSION:
        raise BinaryFormatError(f"unsupported sidecar version {version}")
    modes = {code: mode for mode, code in _PRECISION_CODES.items()}
    if prec not in modes or p < 1:
        raise BinaryFormatError("corrupt sidecar header")
    pos = _SIDECAR_HEAD.size

    def take(size: int) -> bytes:
        nonlocal pos
        if pos + size > len(data):
            raise TruncatedFileError("sidecar is truncated")
        chunk = data[pos:pos + size]
        pos += size
        return chunk

    roles = take(p)
    names = []
    for _ in range(p):
        (length,) = struct.unpack("<H", take(2))
        names.append(take(length).decode("utf-8"))
    s = np.frombuffer(take(8 * p), dtype="<f8").astype(np.float64)
    m = p * (p + 1) // 2
    upper = np.frombuffer(take(8 * m), dtype="<f8").astype(np.float64)
    if pos != len(data):
        raise BinaryFormatError(f"{len(data) - pos} trailing bytes after sidecar payload")
    schema = DatasetSchema(tuple(names), frozenset(j for j in range(p) if roles[j]))
    return SuffStats(n, s, _symmetric_from_upper(upper, p), schema, modes[prec])


def save_suffstats(ss: SuffStats, path) -> None:
    Path(path).write_bytes(encode_suffstats(ss))


def load_suffstats(path) -> SuffStats:
    return decode_suffstats(Path(path).read_bytes())
