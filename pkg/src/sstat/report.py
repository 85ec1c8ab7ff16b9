"""Machine-readable run reports.

One JSON document per command invocation. Floating-point results are
written as decimal strings that round-trip to the identical binary64 value
(``float(s) == x``), and wide integers (exact sums) as decimal strings, so
no reader loses precision. Timings are plain JSON numbers.

The structure is described by ``report_schema.json`` next to this module.
"""

from __future__ import annotations

import json
import math
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Optional

import numpy as np

from . import __version__

REPORT_SCHEMA_VERSION = 1


def fmt_float(x) -> str:
    """Shortest decimal string that parses back to the same binary64."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def parse_float(s: str) -> float:
    return float(s)


def encode(value: Any) -> Any:
    """Recursively convert results into JSON-safe values."""
    if isinstance(value, (bool, np.bool_)) or value is None:
        return bool(value) if value is not None else None
    if isinstance(value, (float, np.floating)):
        return fmt_float(value)
    if isinstance(value, (int, np.integer)):
        value = int(value)
        # keep small counts as numbers, anything beyond 2**53 as a string
        return value if abs(value) <= 2 ** 53 else str(value)
    if isinstance(value, np.ndarray):
        return encode(value.tolist())
    if isinstance(value, dict):
        return {str(k): encode(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [encode(v) for v in value]
    if isinstance(value, Path):
        return str(value)
    if hasattr(value, "value") and isinstance(value.value, str):  # enums
        return value.value
    return value


@dataclass
class RunReport:
    command: str
    config: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    counts: dict = field(default_factory=dict)
    results: dict = field(default_factory=dict)
    status: str = "ok"
    exit_code: int = 0
    error: Optional[dict] = None

    @contextmanager
    def timed(self, stage: str):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.timings[stage] = self.timings.get(stage, 0.0) + time.perf_counter() - t0

    def fail(self, exit_code: int, exc: Optional[BaseException] = None, message: str = ""):
        self.status = "error" if exit_code == 2 else "failed"
        self.exit_code = exit_code
        if exc is not None:
            self.error = {"type": type(exc).__name__, "message": str(exc)}
            cols = getattr(exc, "columns", None)
            if cols is not None:
                self.error["columns"] = list(cols)
                names = getattr(exc, "names", None)
                if names is not None:
                    self.error["column_names"] = list(names)
        elif message:
            self.error = {"type": "Failure", "message": message}

    def to_dict(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "tool": "sstat",
            "tool_version": __version__,
            "command": self.command,
            "config": encode(self.config),
            "timings": {k: float(v) for k, v in self.timings.items()},
            "counts": encode(self.counts),
            "results": encode(self.results),
            "status": self.status,
            "exit_code": self.exit_code,
            "error": self.error,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"

    def write(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")


def load_schema() -> dict:
    return json.loads(resources.files("sstat").joinpath("report_schema.json").read_text("utf-8"))


def decode_matrix(rows) -> np.ndarray:
    return np.array([[parse_float(v) for v in row] for row in rows], dtype=np.float64)
