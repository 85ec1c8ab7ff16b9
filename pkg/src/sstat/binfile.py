"""Fixed-width binary dataset format.

Layout (little-endian)::

    offset  size  field
    0       8     magic b"SSTATBIN"
    8       4     format version (u32) = 1
    12      8     row count n (u64)
    20      4     column count p (u32)
    24      40    reserved, all zero
    64      n*p*8 row-major binary64 values

File size is always ``64 + n*p*8``.

The checksum is BLAKE2b with an 8-byte digest over the value section. The
header is not hashed; it is checked field by field instead (magic, version,
counts against the file size and the source CSV, reserved bytes zero). Together
the two checks cover every byte of the file.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import BinaryFormatError, RowRangeError, SstatError, TruncatedFileError
from .ingest import DEFAULT_CHUNK_ROWS, _strip_eol, open_csv_stream, parse_line
from .schema import Chunk, DatasetSchema

MAGIC = b"SSTATBIN"
VERSION = 1
HEADER_SIZE = 64
_HEADER = struct.Struct("<8sIQI")
DTYPE = np.dtype("<f8")


@dataclass(frozen=True)
class BinaryHeader:
    row_count: int
    column_count: int
    version: int = VERSION

    def pack(self) -> bytes:
        raw = _HEADER.pack(MAGIC, self.version, self.row_count, self.column_count)
        return raw + bytes(HEADER_SIZE - len(raw))

    @property
    def expected_size(self) -> int:
        return HEADER_SIZE + self.row_count * self.column_count * 8

    @classmethod
    def unpack(cls, raw: bytes) -> "BinaryHeader":
        if len(raw) < HEADER_SIZE:
            raise TruncatedFileError(f"header is {len(raw)} bytes, expected {HEADER_SIZE}")
        magic, version, n, p = _HEADER.unpack_from(raw)
        if magic != MAGIC:
            raise BinaryFormatError(f"bad magic {magic!r}")
        if version != VERSION:
            raise BinaryFormatError(f"unsupported format version {version}")
        if any(raw[_HEADER.size:HEADER_SIZE]):
            raise BinaryFormatError("reserved header bytes are not zero")
        if p < 1:
            raise BinaryFormatError("column count must be >= 1")
        return cls(n, p, version)


def read_header(path) -> BinaryHeader:
    with open(path, "rb") as fh:
        return BinaryHeader.unpack(fh.read(HEADER_SIZE))


class BinaryDataset:
    """Read-only random access to a converted dataset.

    Opening checks the header and that the file size matches it. Safe to share
    between threads: every read opens its own view of the file.
    """

    def __init__(self, path):
        self.path = Path(path)
        self.header = read_header(self.path)
        size = self.path.stat().st_size
        if size != self.header.expected_size:
            raise TruncatedFileError(
                f"{self.path}: size {size} bytes, header implies {self.header.expected_size}")

    @property
    def n(self) -> int:
        return self.header.row_count

    @property
    def p(self) -> int:
        return self.header.column_count

    def read_rows(self, start_row: int, count: int) -> Chunk:
        if count < 1 or start_row < 0 or start_row + count > self.n:
            raise RowRangeError(
                f"rows [{start_row}, {start_row + count}) outside [0, {self.n})")
        p = self.p
        values = np.fromfile(self.path, dtype=DTYPE, count=count * p,
                             offset=HEADER_SIZE + start_row * p * 8)
        if values.size != count * p:
            raise TruncatedFileError(f"{self.path}: short read at row {start_row}")
        return Chunk(start_row, values.reshape(count, p).astype(np.float64, copy=False))

    def payload_checksum(self) -> str:
        return _payload_checksum_raw(self.path)


def read_rows(bin_path, start_row: int, count: int) -> Chunk:
    return BinaryDataset(bin_path).read_rows(start_row, count)


def is_binary_dataset(path) -> bool:
    try:
        with open(path, "rb") as fh:
            return fh.read(len(MAGIC)) == MAGIC
    except OSError:
        return False


class ConversionError(SstatError):
    def __init__(self, message: str, rows_written: int):
        self.rows_written = rows_written
        super().__init__(f"{message} (rows written: {rows_written})")


@dataclass(frozen=True)
class ConversionSummary:
    rows: int
    columns: int
    bytes: int
    checksum: str


def convert_csv_to_binary(csv_path, bin_path, schema: DatasetSchema, *,
                          header: bool = False,
                          chunk_rows: int = DEFAULT_CHUNK_ROWS) -> ConversionSummary:
    """Stream ``csv_path`` into the binary format, one chunk in memory at a time.

    Parse errors from the CSV propagate unchanged. The row count is patched
    into the header once the stream ends.
    """
    p = schema.p
    hasher = hashlib.blake2b(digest_size=8)
    rows = 0
    stream = open_csv_stream(csv_path, schema, header=header)
    try:
        with stream, open(bin_path, "wb") as out:
            out.write(BinaryHeader(0, p).pack())
            while (chunk := stream.next_chunk(chunk_rows)) is not None:
                data = chunk.values.astype(DTYPE, copy=False).tobytes()
                out.write(data)
                hasher.update(data)
                rows += chunk.row_count
            if rows == 0:
                raise ConversionError(f"{csv_path} holds no data rows", 0)
            out.seek(0)
            out.write(BinaryHeader(rows, p).pack())
    except OSError as exc:
        _discard(bin_path)
        raise ConversionError(f"conversion to {bin_path} failed: {exc}", rows) from exc
    except BaseException:
        _discard(bin_path)
        raise
    return ConversionSummary(rows, p, HEADER_SIZE + rows * p * 8, hasher.hexdigest())


def _discard(path):
    try:
        Path(path).unlink(missing_ok=True)
    except OSError:
        pass


def write_binary(bin_path, blocks, p: int) -> ConversionSummary:
    """Write an iterable of ``(rows, p)`` arrays directly, without a CSV source."""
    hasher = hashlib.blake2b(digest_size=8)
    rows = 0
    with open(bin_path, "wb") as out:
        out.write(BinaryHeader(0, p).pack())
        for block in blocks:
            block = np.asarray(block, dtype=DTYPE).reshape(-1, p)
            data = block.tobytes()
            out.write(data)
            hasher.update(data)
            rows += block.shape[0]
        out.seek(0)
        out.write(BinaryHeader(rows, p).pack())
    return ConversionSummary(rows, p, HEADER_SIZE + rows * p * 8, hasher.hexdigest())


def csv_payload_checksum(csv_path, schema: DatasetSchema, *, header: bool = False,
                         chunk_rows: int = DEFAULT_CHUNK_ROWS) -> tuple[str, int]:
    """Checksum the value section a conversion of ``csv_path`` would produce."""
    hasher = hashlib.blake2b(digest_size=8)
    rows = 0
    with open_csv_stream(csv_path, schema, header=header) as stream:
        for chunk in stream.iter_chunks(chunk_rows):
            hasher.update(chunk.values.astype(DTYPE, copy=False).tobytes())
            rows += chunk.row_count
    return hasher.hexdigest(), rows


def spot_rows(n: int, spot_count: int) -> list[int]:
    """Rows to spot-check: always 0, n//2 and n-1, then evenly spaced extras."""
    chosen = {0, n // 2, n - 1}
    extra = max(0, min(spot_count, n) - len(chosen))
    if extra:
        for k in range(1, extra + 1):
            chosen.add((k * n) // (extra + 1))
        # evenly spaced picks can collide with the fixed three on small n
        fill = iter(range(n))
        while len(chosen) < min(spot_count, n):
            chosen.add(next(fill))
    return sorted(chosen)


@dataclass
class ValidationReport:
    size_ok: bool = False
    counts_ok: bool = False
    rows_checked: list[tuple[int, bool]] = field(default_factory=list)
    checksum_ok: Optional[bool] = None
    details: list[str] = field(default_factory=list)
    csv_rows: Optional[int] = None
    bin_rows: Optional[int] = None
    bin_columns: Optional[int] = None
    checksum: Optional[str] = None

    @property
    def passed(self) -> bool:
        return (self.size_ok and self.counts_ok and bool(self.rows_checked)
                and all(ok for _, ok in self.rows_checked)
                and self.checksum_ok is not False)

    @property
    def verdict(self) -> str:
        return "pass" if self.passed else "fail"

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "size_ok": self.size_ok,
            "counts_ok": self.counts_ok,
            "rows_checked": [{"row": r, "match": ok} for r, ok in self.rows_checked],
            "checksum_ok": self.checksum_ok,
            "checksum": self.checksum,
            "csv_rows": self.csv_rows,
            "bin_rows": self.bin_rows,
            "bin_columns": self.bin_columns,
            "details": list(self.details),
        }


def _scan_csv(csv_path, wanted: set[int], header: bool) -> tuple[int, dict[int, bytes]]:
    found = {}
    n = 0
    with open(csv_path, "rb") as fh:
        if header:
            fh.readline()
        for i, line in enumerate(fh):
            if i in wanted:
                found[i] = _strip_eol(line)
            n = i + 1
    return n, found


def validate_binary(bin_path, csv_path, spot_count: int = 3, with_checksum: bool = False, *,
                    schema: Optional[DatasetSchema] = None, header: bool = False,
                    expected_checksum: Optional[str] = None,
                    chunk_rows: int = DEFAULT_CHUNK_ROWS) -> ValidationReport:
    """Compare a converted file against its CSV source.

    Never raises for a bad file: every problem lands in the report. When
    ``with_checksum`` is set and no ``expected_checksum`` is given, the
    reference checksum is recomputed by re-parsing the whole CSV.
    """
    rep = ValidationReport()
    try:
        hdr = read_header(bin_path)
    except (OSError, BinaryFormatError) as exc:
        rep.details.append(f"header: {exc}")
        return rep
    rep.bin_rows, rep.bin_columns = hdr.row_count, hdr.column_count
    size = Path(bin_path).stat().st_size
    rep.size_ok = size == hdr.expected_size
    if not rep.size_ok:
        rep.details.append(f"size: file is {size} bytes, header implies {hdr.expected_size}")

    n, p = hdr.row_count, hdr.column_count
    wanted = spot_rows(n, spot_count) if n else []
    try:
        csv_rows, lines = _scan_csv(csv_path, set(wanted), header)
    except OSError as exc:
        rep.details.append(f"csv: {exc}")
        return rep
    rep.csv_rows = csv_rows
    rep.counts_ok = csv_rows == n and (schema is None or schema.p == p)
    if csv_rows != n:
        rep.details.append(f"rows: csv has {csv_rows}, binary header says {n}")
    if schema is not None and schema.p != p:
        rep.details.append(f"columns: schema has {schema.p}, binary header says {p}")

    for row in wanted:
        ok = False
        try:
            expected = np.array(parse_line(lines[row], p, row + 1), dtype=DTYPE)
            got = _read_row_raw(bin_path, hdr, row)
            ok = got is not None and got.tobytes() == expected.tobytes()
            if not ok:
                rep.details.append(f"row {row}: binary values differ from csv")
        except KeyError:
            rep.details.append(f"row {row}: missing from csv")
        except (ValueError, SstatError) as exc:
            rep.details.append(f"row {row}: {exc}")
        rep.rows_checked.append((row, ok))

    if with_checksum:
        actual = _payload_checksum_raw(bin_path)
        rep.checksum = actual
        if expected_checksum is None:
            try:
                expected_checksum, _ = csv_payload_checksum(
                    csv_path, schema or DatasetSchema.generic(p), header=header,
                    chunk_rows=chunk_rows)
            except (ValueError, SstatError, OSError) as exc:
                rep.details.append(f"checksum: cannot re-parse csv: {exc}")
                rep.checksum_ok = False
                return rep
        rep.checksum_ok = actual == expected_checksum
        if not rep.checksum_ok:
            rep.details.append(f"checksum: {actual} != expected {expected_checksum}")
    return rep


def _read_row_raw(bin_path, hdr: BinaryHeader, row: int) -> Optional[np.ndarray]:
    vals = np.fromfile(bin_path, dtype=DTYPE, count=hdr.column_count,
                       offset=HEADER_SIZE + row * hdr.column_count * 8)
    return vals if vals.size == hdr.column_count else None


def _payload_checksum_raw(bin_path) -> str:
    hasher = hashlib.blake2b(digest_size=8)
    with open(bin_path, "rb") as fh:
        fh.seek(HEADER_SIZE)
        while data := fh.read(1 << 24):
            hasher.update(data)
    return hasher.hexdigest()
