import numpy as np
import pytest

from sstat.binfile import convert_csv_to_binary
from sstat.datagen import IidUniform, Table1, generate_csv
from sstat.schema import DatasetSchema


def parse_csv_reference(path, p):
    """Independent CSV reader: plain split and float(), no numpy parsing."""
    rows = []
    with open(path) as fh:
        for line in fh:
            fields = line.rstrip("\n").split(",")
            assert len(fields) == p
            rows.append([float(f) for f in fields])
    return np.array(rows, dtype=np.float64).reshape(-1, p)


@pytest.fixture(scope="session")
def table1_small(tmp_path_factory):
    """2000-row Table1 CSV and its binary conversion."""
    d = tmp_path_factory.mktemp("t1small")
    csv, bin_ = d / "t1.csv", d / "t1.bin"
    generate_csv(2000, Table1(), 42, csv)
    convert_csv_to_binary(csv, bin_, DatasetSchema.table1())
    return csv, bin_


@pytest.fixture(scope="session")
def table1_1e5(tmp_path_factory):
    d = tmp_path_factory.mktemp("t1e5")
    csv, bin_ = d / "t1.csv", d / "t1.bin"
    generate_csv(100_000, Table1(), 42, csv)
    convert_csv_to_binary(csv, bin_, DatasetSchema.table1())
    return csv, bin_


@pytest.fixture(scope="session")
def uniform_1e5(tmp_path_factory):
    d = tmp_path_factory.mktemp("u1e5")
    csv, bin_ = d / "u.csv", d / "u.bin"
    generate_csv(100_000, IidUniform(10, 0.0, 1.0), 7, csv)
    convert_csv_to_binary(csv, bin_, DatasetSchema.iid_uniform(10))
    return csv, bin_


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
