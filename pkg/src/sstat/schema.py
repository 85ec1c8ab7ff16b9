"""Dataset schema and the row-block type passed between pipeline stages."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TABLE1_COLUMNS = ("A", "B", "C", "D", "E", "F", "G", "H", "I", "J", "K")


@dataclass(frozen=True)
class DatasetSchema:
    column_names: tuple[str, ...]
    identifier_columns: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "column_names", tuple(self.column_names))
        object.__setattr__(self, "identifier_columns", frozenset(self.identifier_columns))
        if not self.column_names:
            raise ValueError("schema needs at least one column")
        bad = [i for i in self.identifier_columns if not 0 <= i < len(self.column_names)]
        if bad:
            raise ValueError(f"identifier column index out of range: {sorted(bad)}")

    @property
    def p(self) -> int:
        return len(self.column_names)

    @property
    def variable_columns(self) -> list[int]:
        return [i for i in range(self.p) if i not in self.identifier_columns]

    def select(self, keep: list[int]) -> "DatasetSchema":
        """Schema restricted to ``keep`` (in the given order)."""
        pos = {old: new for new, old in enumerate(keep)}
        return DatasetSchema(
            tuple(self.column_names[i] for i in keep),
            frozenset(pos[i] for i in self.identifier_columns if i in pos),
        )

    @classmethod
    def table1(cls) -> "DatasetSchema":
        return cls(TABLE1_COLUMNS, frozenset({0}))

    @classmethod
    def iid_uniform(cls, p: int) -> "DatasetSchema":
        return cls(("A",) + tuple(f"X{i}" for i in range(1, p + 1)), frozenset({0}))

    @classmethod
    def generic(cls, p: int, identifier_columns=()) -> "DatasetSchema":
        return cls(tuple(f"c{i}" for i in range(p)), frozenset(identifier_columns))


@dataclass
class Chunk:
    """A contiguous block of rows, row-major binary64, shape ``(row_count, p)``."""

    start_row: int
    values: np.ndarray

    def __post_init__(self):
        if self.values.ndim != 2:
            raise ValueError("chunk values must be 2-D (rows, columns)")
        if self.values.shape[0] < 1:
            raise ValueError("chunk must hold at least one row")

    @property
    def row_count(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    @property
    def end_row(self) -> int:
        return self.start_row + self.row_count
