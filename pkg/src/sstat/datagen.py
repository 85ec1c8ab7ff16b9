"""Deterministic synthetic dataset generators.

Random draws come from SplitMix64 streams keyed by ``(seed, row index)``, so
any row can be produced independently of every other row. That makes the
output independent of block size and worker count.

Stream layout: ``row_key(seed, row)`` seeds a per-row SplitMix64 stream; the
k-th draw of that row (k = 1, 2, ...) is ``mix64(row_key + k * GOLDEN)``.
Bounded integers use modulo reduction with rejection of the biased tail,
so ``rand_between`` is exactly uniform.
"""

from __future__ import annotations

import hashlib
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .errors import InvalidRangeError, SstatError
from .schema import DatasetSchema

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_ROW_MULT = 0xD1B54A32D192ED03

# Table1 draw ranges (inclusive).
B_RANGE = (3, 8)
C_RANGE = (1, 10)
D_RANGE = (1, 100)


class GenerationError(SstatError, OSError):
    def __init__(self, message: str, rows_written: int):
        self.rows_written = rows_written
        super().__init__(f"{message} (rows written: {rows_written})")


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def _mix64_np(z: np.ndarray) -> np.ndarray:
    z = z ^ (z >> np.uint64(30))
    z = z * np.uint64(0xBF58476D1CE4E5B9)
    z = z ^ (z >> np.uint64(27))
    z = z * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def row_key(seed: int, row: int) -> int:
    return mix64(mix64(seed) ^ ((row * _ROW_MULT) & MASK64))


def _row_keys_np(seed: int, rows: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        return _mix64_np(np.uint64(mix64(seed)) ^ (rows.astype(np.uint64) * np.uint64(_ROW_MULT)))


def _draws_np(keys: np.ndarray, position: int) -> np.ndarray:
    """The ``position``-th draw (1-based) for every row key."""
    with np.errstate(over="ignore"):
        return _mix64_np(keys + np.uint64((position * GOLDEN) & MASK64))


@dataclass
class RngState:
    """SplitMix64 stream: ``seed`` is the stream key, ``position`` the draws consumed."""

    seed: int
    position: int = 0

    @classmethod
    def for_row(cls, seed: int, row: int) -> "RngState":
        return cls(row_key(seed, row), 0)

    def next_u64(self) -> int:
        self.position += 1
        return mix64(self.seed + self.position * GOLDEN)


def _rejection_limit(span: int) -> int:
    return (1 << 64) - ((1 << 64) % span)


def rand_between(lo: int, hi: int, rng: RngState) -> int:
    """Uniform integer in ``[lo, hi]``, both ends inclusive."""
    if lo > hi:
        raise InvalidRangeError(f"empty range [{lo}, {hi}]")
    span = hi - lo + 1
    limit = _rejection_limit(span)
    while True:
        x = rng.next_u64()
        if x < limit:
            return lo + x % span


def round_half_away(x: float) -> float:
    r = math.floor(abs(x))
    if abs(x) - r >= 0.5:
        r += 1
    return math.copysign(r, x)


# Table1 derived columns. int() in the source pseudocode truncates toward zero.

def derive_e(b: int, c: int) -> float:
    return float(math.trunc(math.log(c) / math.log(b) * 100))


def derive_f(b: int, d: int) -> float:
    return round_half_away((math.log(d) / math.log(b)) * 10000)


def derive_g(c: int) -> float:
    return float(math.trunc(abs(math.cos(c)) * 100))


def derive_h(d: int) -> float:
    return float(math.trunc(abs(math.sin(d)) * 100))


def derive_i(c: int) -> float:
    cot_c = 1.0 / math.tan(c)
    return round_half_away(abs(cot_c) * 1000)


def derive_j(d: int) -> float:
    return abs(math.tan(d))


def derive_k(c: int, d: int) -> float:
    return float(d // c)


@dataclass(frozen=True)
class Record:
    A: int
    B: float
    C: float
    D: float
    E: float
    F: float
    G: float
    H: float
    I: float
    J: float
    K: float

    def as_tuple(self) -> tuple:
        return (self.A, self.B, self.C, self.D, self.E, self.F,
                self.G, self.H, self.I, self.J, self.K)


def record_from_draws(index: int, b: int, c: int, d: int) -> Record:
    return Record(
        A=index, B=float(b), C=float(c), D=float(d),
        E=derive_e(b, c), F=derive_f(b, d), G=derive_g(c), H=derive_h(d),
        I=derive_i(c), J=derive_j(d), K=derive_k(c, d),
    )


def make_record(index: int, rng: RngState) -> Record:
    if index < 1:
        raise InvalidRangeError("row index is 1-based")
    b = rand_between(*B_RANGE, rng)
    c = rand_between(*C_RANGE, rng)
    d = rand_between(*D_RANGE, rng)
    return record_from_draws(index, b, c, d)


def _lookup_tables() -> dict[str, np.ndarray]:
    # Every derived column depends on at most two small integer draws, so the
    # vectorised generator indexes tables built from the scalar formulas above.
    # This keeps block output bit-identical to make_record.
    bs = range(B_RANGE[0], B_RANGE[1] + 1)
    cs = range(C_RANGE[0], C_RANGE[1] + 1)
    ds = range(D_RANGE[0], D_RANGE[1] + 1)
    return {
        "E": np.array([[derive_e(b, c) for c in cs] for b in bs]),
        "F": np.array([[derive_f(b, d) for d in ds] for b in bs]),
        "G": np.array([derive_g(c) for c in cs]),
        "H": np.array([derive_h(d) for d in ds]),
        "I": np.array([derive_i(c) for c in cs]),
        "J": np.array([derive_j(d) for d in ds]),
        "K": np.array([[derive_k(c, d) for d in ds] for c in cs]),
    }


_TABLES = _lookup_tables()


@dataclass(frozen=True)
class Table1:
    """The 11-column synthetic dataset: identifier A plus variables B..K."""

    name = "table1"

    @property
    def schema(self) -> DatasetSchema:
        return DatasetSchema.table1()

    @property
    def integer_columns(self) -> frozenset[int]:
        return frozenset(range(11)) - {9}


@dataclass(frozen=True)
class IidUniform:
    """``p`` independent Uniform[lo, hi) columns after the identifier."""

    p: int = 10
    lo: float = 0.0
    hi: float = 1.0
    name = "iid-uniform"

    def __post_init__(self):
        if self.p < 1:
            raise InvalidRangeError("IidUniform needs p >= 1")
        if not self.lo < self.hi:
            raise InvalidRangeError(f"empty interval [{self.lo}, {self.hi})")

    @property
    def schema(self) -> DatasetSchema:
        return DatasetSchema.iid_uniform(self.p)

    @property
    def integer_columns(self) -> frozenset[int]:
        return frozenset({0})


GeneratorKind = Union[Table1, IidUniform]


def _bounded_block(draws: np.ndarray, lo: int, hi: int) -> tuple[np.ndarray, np.ndarray]:
    span = hi - lo + 1
    limit = _rejection_limit(span)
    rejected = draws >= np.uint64(limit) if limit < (1 << 64) else np.zeros(draws.shape, bool)
    return (draws % np.uint64(span)).astype(np.int64) + lo, rejected


def generate_block(kind: GeneratorKind, seed: int, start_row: int, count: int) -> np.ndarray:
    """Rows ``start_row .. start_row+count-1`` (1-based) as a float64 array.

    Column 0 holds the identifier; it is exact as float64 only below 2**53.
    """
    rows = np.arange(start_row, start_row + count, dtype=np.uint64)
    keys = _row_keys_np(seed, rows)
    if isinstance(kind, IidUniform):
        out = np.empty((count, kind.p + 1))
        out[:, 0] = rows
        width = kind.hi - kind.lo
        for j in range(kind.p):
            u = (_draws_np(keys, j + 1) >> np.uint64(11)).astype(np.float64) * 2.0**-53
            out[:, j + 1] = kind.lo + width * u
        return out

    b, rej_b = _bounded_block(_draws_np(keys, 1), *B_RANGE)
    c, rej_c = _bounded_block(_draws_np(keys, 2), *C_RANGE)
    d, rej_d = _bounded_block(_draws_np(keys, 3), *D_RANGE)
    # A rejected draw shifts the rest of that row's stream; redo such rows serially.
    for i in np.flatnonzero(rej_b | rej_c | rej_d):
        rng = RngState.for_row(seed, int(rows[i]))
        b[i] = rand_between(*B_RANGE, rng)
        c[i] = rand_between(*C_RANGE, rng)
        d[i] = rand_between(*D_RANGE, rng)

    bi, ci, di = b - B_RANGE[0], c - C_RANGE[0], d - D_RANGE[0]
    t = _TABLES
    out = np.empty((count, 11))
    out[:, 0] = rows
    out[:, 1] = b
    out[:, 2] = c
    out[:, 3] = d
    out[:, 4] = t["E"][bi, ci]
    out[:, 5] = t["F"][bi, di]
    out[:, 6] = t["G"][ci]
    out[:, 7] = t["H"][di]
    out[:, 8] = t["I"][ci]
    out[:, 9] = t["J"][di]
    out[:, 10] = t["K"][ci, di]
    return out


def row_format(kind: GeneratorKind) -> str:
    p = kind.schema.p
    ints = kind.integer_columns
    return ",".join("%d" if j in ints else "%.17g" for j in range(p)) + "\n"


def format_block(kind: GeneratorKind, start_row: int, block: np.ndarray) -> str:
    fmt = row_format(kind)
    cols = [range(start_row, start_row + block.shape[0])]
    cols += [block[:, j].tolist() for j in range(1, block.shape[1])]
    return "".join(map(fmt.__mod__, zip(*cols)))


@dataclass(frozen=True)
class GenerationSummary:
    rows_written: int
    bytes_written: int
    checksum: str  # blake2b-64 of the file bytes, hex


def generate_csv(
    n_rows: int,
    kind: GeneratorKind,
    seed: int,
    out_path: Union[str, os.PathLike],
    *,
    header: bool = False,
    block_rows: int = 1 << 17,
) -> GenerationSummary:
    if n_rows < 1:
        raise InvalidRangeError("n_rows must be >= 1")
    if block_rows < 1:
        raise InvalidRangeError("block_rows must be >= 1")
    hasher = hashlib.blake2b(digest_size=8)
    written = 0
    nbytes = 0
    try:
        with open(Path(out_path), "wb") as fh:
            if header:
                line = (",".join(kind.schema.column_names) + "\n").encode("ascii")
                fh.write(line)
                hasher.update(line)
                nbytes += len(line)
            start = 1
            while written < n_rows:
                count = min(block_rows, n_rows - written)
                block = generate_block(kind, seed, start, count)
                data = format_block(kind, start, block).encode("ascii")
                fh.write(data)
                hasher.update(data)
                nbytes += len(data)
                written += count
                start += count
    except OSError as exc:
        raise GenerationError(f"cannot write {out_path}: {exc.strerror or exc}", written) from exc
    return GenerationSummary(written, nbytes, hasher.hexdigest())
