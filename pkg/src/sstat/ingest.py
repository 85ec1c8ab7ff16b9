"""Chunked CSV reader producing binary64 row blocks.

Parsing is strict: every field must be a plain decimal literal (optional sign,
digits, optional fraction, optional exponent). Whitespace, quotes, ``nan`` and
``inf`` are rejected. Bulk chunks go through :func:`numpy.loadtxt`, which is
correctly rounded; anything that fails the fast path is re-parsed line by line
to produce an exact row/column diagnostic.
"""

from __future__ import annotations

import io
import itertools
import os
import re
from pathlib import Path
from typing import Iterator, Optional

import numpy as np

from .errors import CsvParseError, FieldCountError, HeaderMismatchError
from .schema import Chunk, DatasetSchema

DEFAULT_CHUNK_ROWS = 1 << 20

NUMBER_RE = re.compile(rb"[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?")
_ALLOWED = b"0123456789+-.eE,\n"
# Below this many rows the per-call overhead of loadtxt outweighs its speed.
_FAST_PATH_MIN_ROWS = 64

ERROR_POLICIES = ("fail", "skip")


def parse_line(line: bytes, p: int, row: int) -> list[float]:
    """Strictly parse one CSV line (no line terminator) into ``p`` floats."""
    fields = line.split(b",")
    if len(fields) != p:
        raise FieldCountError(row, p, len(fields))
    out = []
    for col, field in enumerate(fields, start=1):
        if NUMBER_RE.fullmatch(field) is None:
            raise CsvParseError(row, col, field.decode("ascii", "replace"))
        out.append(float(field))
    return out


def _strip_eol(line: bytes) -> bytes:
    if line.endswith(b"\n"):
        line = line[:-1]
    if line.endswith(b"\r"):
        line = line[:-1]
    return line


class StreamHandle:
    """Sequential chunk reader over one CSV file.

    Not thread-safe; one owner at a time.
    """

    def __init__(self, path, schema: DatasetSchema, *, header: bool = False,
                 error_policy: str = "fail"):
        if error_policy not in ERROR_POLICIES:
            raise ValueError(f"error_policy must be one of {ERROR_POLICIES}")
        self.path = Path(path)
        self.schema = schema
        self.error_policy = error_policy
        self.position = 0          # data rows delivered so far
        self.lines_read = 0        # data lines consumed, including skipped ones
        self.skipped_rows = 0
        self.skipped_errors: list[Exception] = []
        self._eof = False
        self._fh = _open_readable(self.path)
        if header:
            self._check_header()

    def _check_header(self):
        first = self._fh.readline()
        names = tuple(f.decode("ascii", "replace") for f in _strip_eol(first).split(b","))
        if names != self.schema.column_names:
            self.close()
            raise HeaderMismatchError(
                f"header {list(names)} does not match schema {list(self.schema.column_names)}")

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def __iter__(self) -> Iterator[Chunk]:
        return self.iter_chunks()

    def iter_chunks(self, max_rows: int = DEFAULT_CHUNK_ROWS) -> Iterator[Chunk]:
        while (chunk := self.next_chunk(max_rows)) is not None:
            yield chunk

    def next_chunk(self, max_rows: int = DEFAULT_CHUNK_ROWS) -> Optional[Chunk]:
        """Up to ``max_rows`` parsed rows, or ``None`` at end of stream."""
        if max_rows < 1:
            raise ValueError("max_rows must be >= 1")
        while not self._eof:
            lines = list(itertools.islice(self._fh, max_rows))
            if len(lines) < max_rows:
                self._eof = True
            if not lines:
                break
            first_row = self.lines_read + 1
            self.lines_read += len(lines)
            values = self._parse(lines, first_row)
            if values.shape[0] == 0:
                continue  # every line skipped
            chunk = Chunk(self.position, values)
            self.position += values.shape[0]
            return chunk
        return None

    def _parse(self, lines: list[bytes], first_row: int) -> np.ndarray:
        p = self.schema.p
        if len(lines) >= _FAST_PATH_MIN_ROWS:
            values = _fast_parse(lines, p)
            if values is not None:
                return values
        rows = []
        for offset, line in enumerate(lines):
            try:
                rows.append(parse_line(_strip_eol(line), p, first_row + offset))
            except (CsvParseError, FieldCountError) as exc:
                if self.error_policy == "fail":
                    raise
                self.skipped_rows += 1
                if len(self.skipped_errors) < 100:
                    self.skipped_errors.append(exc)
        return np.array(rows, dtype=np.float64).reshape(len(rows), p)


def _fast_parse(lines: list[bytes], p: int) -> Optional[np.ndarray]:
    block = b"".join(lines)
    if not block.endswith(b"\n"):
        block += b"\n"
    if b"\r" in block:
        block = block.replace(b"\r\n", b"\n")
    if block.translate(None, _ALLOWED):
        return None
    n = len(lines)
    if block.count(b",") != n * (p - 1) or block.count(b"\n") != n:
        return None
    try:
        values = np.loadtxt(io.BytesIO(block), delimiter=",", dtype=np.float64,
                            comments=None, ndmin=2, quotechar=None)
    except ValueError:
        return None
    if values.shape != (n, p) or np.isnan(values).any():
        return None
    return values


def _open_readable(path: Path):
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    if path.is_dir():
        raise IsADirectoryError(f"not a readable file (directory): {path}")
    if not os.access(path, os.R_OK):
        raise PermissionError(f"file is not readable: {path}")
    return open(path, "rb")


def open_csv_stream(path, schema: DatasetSchema, *, header: bool = False,
                    error_policy: str = "fail") -> StreamHandle:
    return StreamHandle(path, schema, header=header, error_policy=error_policy)


def count_rows(path, *, header: bool = False) -> int:
    with open(path, "rb") as fh:
        n = sum(1 for _ in fh)
    return n - 1 if header and n else n
