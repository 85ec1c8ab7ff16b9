"""Partitioned parallel reduction over a binary dataset.

Workers pull row ranges from a shared queue, but partial results are merged
strictly in ascending range order, starting from the identity. The result is
therefore bit-identical for any worker count.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable, Optional

import numpy as np

from .errors import ReductionError
from .schema import Chunk


class PrecisionMode(str, Enum):
    BINARY64 = "binary64"
    BINARY32_DIAGNOSTIC = "binary32"

    @property
    def dtype(self) -> np.dtype:
        return np.dtype(np.float64 if self is PrecisionMode.BINARY64 else np.float32)

    def round(self, x):
        """Round a binary64 result to this mode's accumulator precision."""
        if self is PrecisionMode.BINARY64:
            return x
        return np.asarray(x, dtype=np.float32).astype(np.float64)


@dataclass(frozen=True)
class Partition:
    ranges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        expect = 0
        for start, count in self.ranges:
            if start != expect or count < 1:
                raise ValueError("ranges must be contiguous, ordered and non-empty")
            expect = start + count

    @property
    def n_rows(self) -> int:
        if not self.ranges:
            return 0
        start, count = self.ranges[-1]
        return start + count

    def __len__(self):
        return len(self.ranges)


def plan_partitions(n_rows: int, chunk_rows: int) -> Partition:
    if chunk_rows < 1:
        raise ValueError("chunk_rows must be >= 1")
    if n_rows < 1:
        raise ValueError("n_rows must be >= 1")
    return Partition(tuple((s, min(chunk_rows, n_rows - s)) for s in range(0, n_rows, chunk_rows)))


def default_workers() -> int:
    env = os.environ.get("SSTAT_WORKERS")
    if env:
        value = int(env)
        if value < 1:
            raise ValueError("SSTAT_WORKERS must be >= 1")
        return value
    return os.cpu_count() or 1


@dataclass(frozen=True)
class ReductionPlan:
    partition: Partition
    worker_count: int = 1
    precision: PrecisionMode = PrecisionMode.BINARY64
    merge_order: str = "by-range-index"  # the only supported order

    def __post_init__(self):
        if self.worker_count < 1:
            raise ValueError("worker_count must be >= 1")
        object.__setattr__(self, "precision", PrecisionMode(self.precision))


@dataclass
class ReductionStats:
    read_seconds: float = 0.0     # summed over workers
    compute_seconds: float = 0.0  # summed over workers
    wall_seconds: float = 0.0
    bytes_read: int = 0
    chunks: int = 0


def run_reduction(source, plan: ReductionPlan, per_chunk: Callable[[Chunk], Any],
                  merge: Callable[[Any, Any], Any], identity: Any,
                  stats: Optional[ReductionStats] = None) -> Any:
    """Apply ``per_chunk`` to every range of ``plan`` and fold with ``merge``.

    ``source`` needs ``n`` and ``read_rows(start, count)``, as
    :class:`sstat.binfile.BinaryDataset` provides. If ``stats`` is given it is
    filled with timing and volume figures.
    """
    if source.n != plan.partition.n_rows:
        raise ValueError(f"plan covers {plan.partition.n_rows} rows, source has {source.n}")
    ranges = plan.partition.ranges
    t0 = time.perf_counter()

    def task(idx: int):
        start, count = ranges[idx]
        try:
            r0 = time.perf_counter()
            chunk = source.read_rows(start, count)
            r1 = time.perf_counter()
            part = per_chunk(chunk)
            r2 = time.perf_counter()
        except Exception as exc:
            raise ReductionError(idx, start, count, exc) from exc
        return part, r1 - r0, r2 - r1, chunk.values.nbytes

    acc = identity
    totals = ReductionStats()

    def fold(result):
        nonlocal acc
        part, rt, ct, nbytes = result
        acc = merge(acc, part)
        totals.read_seconds += rt
        totals.compute_seconds += ct
        totals.bytes_read += nbytes
        totals.chunks += 1

    if plan.worker_count == 1 or len(ranges) == 1:
        for idx in range(len(ranges)):
            fold(task(idx))
    else:
        # Bounded look-ahead keeps at most ~2 chunks per worker in flight.
        window = 2 * plan.worker_count
        with ThreadPoolExecutor(plan.worker_count, thread_name_prefix="sstat") as pool:
            pending = {}
            nxt = 0
            try:
                for idx in range(len(ranges)):
                    while nxt < len(ranges) and nxt < idx + window:
                        pending[nxt] = pool.submit(task, nxt)
                        nxt += 1
                    fold(pending.pop(idx).result())
            except BaseException:
                for fut in pending.values():
                    fut.cancel()
                raise

    totals.wall_seconds = time.perf_counter() - t0
    if stats is not None:
        stats.__dict__.update(totals.__dict__)
    return acc


def reduce_stream(stream, chunk_rows: int, per_chunk: Callable[[Chunk], Any],
                  merge: Callable[[Any, Any], Any], identity: Any,
                  stats: Optional[ReductionStats] = None) -> Any:
    """Sequential counterpart of :func:`run_reduction` for a chunk stream.

    ``stream`` needs ``next_chunk(max_rows)`` (a CSV
    :class:`~sstat.ingest.StreamHandle`). Chunks of ``chunk_rows`` rows are
    merged in order, so the result equals a binary-file reduction planned with
    the same ``chunk_rows``. Read time here includes text parsing.
    """
    if chunk_rows < 1:
        raise ValueError("chunk_rows must be >= 1")
    t0 = time.perf_counter()
    totals = ReductionStats()
    acc = identity
    idx = 0
    while True:
        r0 = time.perf_counter()
        chunk = stream.next_chunk(chunk_rows)
        r1 = time.perf_counter()
        totals.read_seconds += r1 - r0
        if chunk is None:
            break
        try:
            part = per_chunk(chunk)
        except Exception as exc:
            raise ReductionError(idx, chunk.start_row, chunk.row_count, exc) from exc
        acc = merge(acc, part)
        totals.compute_seconds += time.perf_counter() - r1
        totals.bytes_read += chunk.values.nbytes
        totals.chunks += 1
        idx += 1
    totals.wall_seconds = time.perf_counter() - t0
    if stats is not None:
        stats.__dict__.update(totals.__dict__)
    return acc


def ordered_sum(block: np.ndarray, initial: np.ndarray, dtype=np.float64) -> np.ndarray:
    """Column sums of ``block`` added strictly row by row, starting at ``initial``.

    numpy sums along axis 0 in row order only when that axis is not the
    contiguous one; the buffer is C-ordered with at least two columns so the
    order is fixed and a naive loop reproduces the result bit for bit.
    """
    rows, m = block.shape
    buf = np.empty((rows, max(m, 2)), dtype=dtype)
    buf[:, :m] = block
    if m == 1:
        buf[:, 1] = 0
    buf[0, :m] += np.asarray(initial, dtype=dtype)
    return buf.sum(axis=0)[:m]


_I64_LIMIT = 2.0 ** 63
_EXACT_BLOCK = 1 << 30


def exact_integer_sum(col: np.ndarray) -> Optional[int]:
    """Exact sum of an integral column, or ``None`` if any value is not an integer in (-2**63, 2**63)."""
    if not (np.all(np.isfinite(col)) and np.all(np.floor(col) == col)
            and np.all(np.abs(col) < _I64_LIMIT)):
        return None
    total = 0
    for s in range(0, col.size, _EXACT_BLOCK):
        xi = col[s:s + _EXACT_BLOCK].astype(np.int64)
        # split into 32-bit halves so neither int64 partial sum can overflow
        lo = int((xi & 0xFFFFFFFF).sum())
        hi = int((xi >> 32).sum())
        total += (hi << 32) + lo
    return total


@dataclass(frozen=True)
class ColumnSumResult:
    column: int
    n_rows: int
    float_sum: float
    exact_sum: Optional[int]
    precision: PrecisionMode = PrecisionMode.BINARY64
    notes: tuple[str, ...] = ()

    @property
    def float_exact(self) -> Optional[bool]:
        """Whether the float path equals the exact integer sum (None if no exact sum)."""
        if self.exact_sum is None:
            return None
        return self.float_sum == self.exact_sum

    @property
    def float_approximate(self) -> bool:
        return self.float_exact is False


@dataclass(frozen=True)
class _SumPart:
    n: int
    fsum: float
    exact: Optional[int]
    bad_row: Optional[int] = None


def _column_sum_ops(column: int, mode: PrecisionMode):
    dtype = mode.dtype

    def per_chunk(chunk: Chunk) -> _SumPart:
        col = chunk.values[:, column]
        fsum = float(ordered_sum(col.reshape(-1, 1).astype(dtype), np.zeros(1, dtype), dtype)[0])
        exact = exact_integer_sum(col)
        bad = None
        if exact is None:
            ok = np.isfinite(col) & (np.floor(col) == col) & (np.abs(col) < _I64_LIMIT)
            bad = chunk.start_row + int(np.argmin(ok))
        return _SumPart(chunk.row_count, fsum, exact, bad)

    def merge(a: _SumPart, b: _SumPart) -> _SumPart:
        fsum = float(mode.round(a.fsum + b.fsum))
        exact = a.exact + b.exact if a.exact is not None and b.exact is not None else None
        bad = a.bad_row if a.bad_row is not None else b.bad_row
        return _SumPart(a.n + b.n, fsum, exact, bad)

    return per_chunk, merge, _SumPart(0, 0.0, 0)


def _column_sum_result(column: int, total: _SumPart, mode: PrecisionMode) -> ColumnSumResult:
    notes = []
    if total.exact is None:
        notes.append(f"exact sum unavailable: non-integral or out-of-range value at row {total.bad_row}")
    elif total.fsum != total.exact:
        notes.append("float sum is approximate: differs from the exact integer sum")
    return ColumnSumResult(column, total.n, total.fsum, total.exact, mode, tuple(notes))


def column_sum(source, column: int, plan: ReductionPlan,
               stats: Optional[ReductionStats] = None) -> ColumnSumResult:
    """Float and exact-integer sums of one column of a binary dataset."""
    if not 0 <= column < source.p:
        raise IndexError(f"column {column} outside 0..{source.p - 1}")
    ops = _column_sum_ops(column, plan.precision)
    return _column_sum_result(column, run_reduction(source, plan, *ops, stats), plan.precision)


def column_sum_stream(stream, column: int, chunk_rows: int,
                      precision: PrecisionMode = PrecisionMode.BINARY64,
                      stats: Optional[ReductionStats] = None) -> ColumnSumResult:
    """:func:`column_sum` over a CSV stream."""
    p = stream.schema.p
    if not 0 <= column < p:
        raise IndexError(f"column {column} outside 0..{p - 1}")
    mode = PrecisionMode(precision)
    ops = _column_sum_ops(column, mode)
    return _column_sum_result(column, reduce_stream(stream, chunk_rows, *ops, stats), mode)


def identifier_expected_sum(n_rows: int) -> int:
    return n_rows * (n_rows + 1) // 2
