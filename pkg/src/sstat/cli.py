"""Command-line front end.

Subcommands follow the pipeline order: generate, convert, validate, sum,
suffstats, analyze, pca, plus ``pipeline`` which runs them all.

Exit codes: 0 success, 1 operational or validation failure, 2 usage error.
Every command can write a JSON run report (``--report PATH``) or print it
instead of the text summary (``--json``).
"""

from __future__ import annotations

import argparse
import hashlib
import sys
import time
from pathlib import Path
from typing import Optional

import numpy as np

from .analysis import analyze
from .binfile import (BinaryDataset, MAGIC as BIN_MAGIC, convert_csv_to_binary,
                      is_binary_dataset, read_header, validate_binary)
from .datagen import IidUniform, Table1, generate_csv
from .errors import CancellationError, SstatError
from .ingest import DEFAULT_CHUNK_ROWS, StreamHandle
from .pca import Basis, format_pca_table, run_pca
from .reduce import (PrecisionMode, ReductionPlan, ReductionStats, column_sum, column_sum_stream,
                     default_workers, identifier_expected_sum, plan_partitions)
from .report import RunReport
from .schema import DatasetSchema
from .suffstats import (SIDECAR_MAGIC, SuffStats, compute_comoments, compute_comoments_stream,
                        compute_suffstats, compute_suffstats_stream, encode_suffstats,
                        load_suffstats)

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    """Bad arguments discovered after parsing (exit 2)."""


# -- argument helpers ----------------------------------------------------------

def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _nonneg_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {value}")
    return value


def _seed(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 1 << 64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return value


def parse_schema(spec: str, p: Optional[int] = None) -> DatasetSchema:
    """``table1``, ``iid-uniform:P``, ``columns:N`` or ``columns:N:id=I[,J]``.

    ``auto`` picks table1 for 11 columns and iid-uniform otherwise; both put
    the identifier in column 0.
    """
    if spec == "auto":
        if p is None:
            raise UsageError("schema 'auto' needs a readable input")
        if p == 11:
            return DatasetSchema.table1()
        if p > 1:
            return DatasetSchema.iid_uniform(p - 1)
        return DatasetSchema.generic(1, (0,))
    try:
        if spec == "table1":
            schema = DatasetSchema.table1()
        elif spec.startswith("iid-uniform:"):
            schema = DatasetSchema.iid_uniform(int(spec.split(":", 1)[1]))
        elif spec.startswith("columns:"):
            parts = spec.split(":")
            ids = ()
            if len(parts) == 3 and parts[2].startswith("id="):
                ids = tuple(int(x) for x in parts[2][3:].split(",") if x)
            elif len(parts) != 2:
                raise ValueError
            schema = DatasetSchema.generic(int(parts[1]), ids)
        else:
            raise ValueError
    except ValueError:
        raise UsageError(f"bad schema {spec!r}; use table1, iid-uniform:P, columns:N[:id=I,...]")
    if p is not None and schema.p != p:
        raise UsageError(f"schema {spec!r} has {schema.p} columns, input has {p}")
    return schema


def _csv_field_count(path: Path, header: bool) -> int:
    with open(path, "rb") as fh:
        if header:
            fh.readline()
        line = fh.readline()
    if not line.strip():
        raise SstatError(f"{path} holds no data rows")
    return line.count(b",") + 1


def _input_schema(path: Path, spec: str, header: bool = False) -> tuple[str, DatasetSchema]:
    """Detect the input format and resolve its schema."""
    if is_binary_dataset(path):
        return "binary", parse_schema(spec, read_header(path).column_count)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    return "csv", parse_schema(spec, _csv_field_count(path, header))


def _workers(args) -> int:
    if getattr(args, "workers", None) is not None:
        return args.workers
    try:
        return default_workers()
    except ValueError as exc:
        raise UsageError(str(exc))


def parse_exclusions(text: Optional[str], schema: DatasetSchema) -> list[int]:
    """Comma-separated column names or 0-based indices."""
    if not text:
        return []
    out = []
    for item in (t.strip() for t in text.split(",")):
        if not item:
            continue
        if item in schema.column_names:
            out.append(schema.column_names.index(item))
        elif item.lstrip("-").isdigit() and 0 <= int(item) < schema.p:
            out.append(int(item))
        else:
            raise UsageError(f"unknown column {item!r} in --exclude")
    return out


def _load_sidecar(path: Path) -> SuffStats:
    with open(path, "rb") as fh:
        magic = fh.read(len(SIDECAR_MAGIC))
    if magic != SIDECAR_MAGIC:
        what = "a binary dataset" if magic == BIN_MAGIC else "raw data or an unknown file"
        raise UsageError(f"{path} is {what}, not a sufficient-statistics sidecar; "
                         "analyze and pca read only sidecars (run 'sstat suffstats' first)")
    return load_suffstats(path)


def _bytes_digest(data: bytes) -> str:
    return hashlib.blake2b(data, digest_size=8).hexdigest()


def _out(args, text: str = ""):
    if not getattr(args, "json", False):
        print(text)


# -- stage implementations (shared by the subcommands and the pipeline) ------

def _stage_sum(path: Path, schema: DatasetSchema, fmt: str, column: int, args, rep: RunReport,
               expected_rows: Optional[int], header: bool = False) -> bool:
    if not 0 <= column < schema.p:
        raise UsageError(f"column {column} out of range 0..{schema.p - 1}")
    precision = PrecisionMode(args.precision)
    stats = ReductionStats()
    with rep.timed("sum"):
        if fmt == "binary":
            ds = BinaryDataset(path)
            plan = ReductionPlan(plan_partitions(ds.n, args.chunk_rows), _workers(args), precision)
            res = column_sum(ds, column, plan, stats)
        else:
            with StreamHandle(path, schema, header=header) as stream:
                res = column_sum_stream(stream, column, args.chunk_rows, precision, stats)
    check_n = expected_rows
    if check_n is None and column in schema.identifier_columns:
        check_n = res.n_rows
    result = {
        "column": column,
        "column_name": schema.column_names[column],
        "n_rows": res.n_rows,
        "precision": precision.value,
        "float_sum": res.float_sum,
        "exact_sum": None if res.exact_sum is None else str(res.exact_sum),
        "float_exact": res.float_exact,
        "float_approximate": res.float_approximate,
        "notes": list(res.notes),
        "expected_sum": None,
        "match": None,
    }
    ok = True
    if check_n is not None:
        expected = identifier_expected_sum(check_n)
        result["expected_sum"] = str(expected)
        result["match"] = res.exact_sum == expected and res.n_rows == check_n
        ok = bool(result["match"])
    rep.results["sum"] = result
    rep.counts["sum_rows"] = res.n_rows
    rep.counts["sum_bytes_read"] = stats.bytes_read
    _out(args, f"sum of column {column} ({schema.column_names[column]}) over {res.n_rows} rows")
    _out(args, f"  float ({precision.value}): {res.float_sum!r}")
    _out(args, f"  exact: {res.exact_sum if res.exact_sum is not None else 'unavailable'}")
    for note in res.notes:
        _out(args, f"  note: {note}")
    if check_n is not None:
        _out(args, f"  expected n(n+1)/2 with n={check_n}: {result['expected_sum']} "
                   f"-> {'match' if ok else 'MISMATCH'}")
    return ok


def _stage_suffstats(path: Path, schema: DatasetSchema, fmt: str, args, rep: RunReport,
                     stage: str = "suffstats", header: bool = False) -> SuffStats:
    precision = PrecisionMode(args.precision)
    stats = ReductionStats()
    t0 = time.perf_counter()
    if fmt == "binary":
        ds = BinaryDataset(path)
        plan = ReductionPlan(plan_partitions(ds.n, args.chunk_rows), _workers(args), precision)
        ss = compute_suffstats(ds, schema, plan, stats)
    else:
        with StreamHandle(path, schema, header=header) as stream:
            ss = compute_suffstats_stream(stream, args.chunk_rows, precision, stats)
    rep.timings[stage] = time.perf_counter() - t0
    rep.timings[f"{stage}_read"] = stats.read_seconds
    rep.timings[f"{stage}_accumulate"] = stats.compute_seconds
    rep.counts[f"{stage}_rows"] = ss.n
    rep.counts[f"{stage}_bytes_read"] = stats.bytes_read
    rep.counts[f"{stage}_chunks"] = stats.chunks
    rep.results[stage] = {
        "input_format": fmt,
        "n": ss.n,
        "precision": ss.precision.value,
        "column_names": list(schema.column_names),
        "identifier_columns": sorted(schema.identifier_columns),
        "s": ss.s,
        "S": ss.S,
        "sidecar_digest": _bytes_digest(encode_suffstats(ss)),
    }
    _out(args, f"{stage}: n={ss.n}, p={ss.p}, {fmt} input, {ss.precision.value}; "
               f"read {stats.read_seconds:.3f}s, accumulate {stats.compute_seconds:.3f}s, "
               f"wall {rep.timings[stage]:.3f}s")
    if getattr(args, "with_comoments", False):
        with rep.timed(f"{stage}_comoments"):
            if fmt == "binary":
                ds = BinaryDataset(path)
                plan = ReductionPlan(plan_partitions(ds.n, args.chunk_rows), _workers(args))
                cm = compute_comoments(ds, schema, plan)
            else:
                with StreamHandle(path, schema, header=header) as stream:
                    cm = compute_comoments_stream(stream, args.chunk_rows)
        rep.results[stage]["comoments"] = {"mean": cm.mean, "M2": cm.M2}
    return ss


def _stage_analyze(ss: SuffStats, args, rep: RunReport) -> bool:
    exclude = parse_exclusions(args.exclude, ss.schema)
    with rep.timed("analyze"):
        res = analyze(ss, ddof=args.ddof, exclude=exclude,
                      include_identifier=args.include_identifier)
    d = res.diagnostics
    rep.results["analyze"] = {
        "n": res.n,
        "ddof": res.ddof,
        "precision": ss.precision.value,
        "included_columns": list(res.included_columns),
        "column_names": list(res.column_names),
        "mean": res.mean,
        "covariance": res.covariance,
        "correlation": res.correlation,
        "diagnostics": {
            "kappa": d.kappa,
            "threshold": d.threshold,
            "flagged_columns": [res.included_columns[j] for j in d.flagged_columns],
            "negative_variance_columns": [res.included_columns[j]
                                          for j in d.negative_variance_columns],
        },
    }
    names = res.column_names
    _out(args, f"analysis of {res.n} rows, columns {', '.join(names)} (ddof={res.ddof})")
    _out(args, "means: " + " ".join(f"{names[j]}={m:.10g}" for j, m in enumerate(res.mean)))
    _out(args, "variances: " + " ".join(f"{names[j]}={v:.10g}"
                                        for j, v in enumerate(np.diag(res.covariance))))
    for j in d.flagged_columns:
        _out(args, f"warning: column {names[j]} kappa={d.kappa[j]:.6g} > {d.threshold} "
                   "(variance dominated by the mean term)")
    if res.correlation is not None:
        _out(args, "correlation:")
        for j, row in enumerate(res.correlation):
            _out(args, f"  {names[j]:>4} " + " ".join(f"{v:9.6f}" for v in row))
        return True
    err = res.correlation_error
    rep.fail(EXIT_FAIL, err)
    print(f"error: {err}", file=sys.stderr)
    return False


def _stage_pca(ss: SuffStats, args, rep: RunReport) -> bool:
    exclude = parse_exclusions(args.exclude, ss.schema)
    try:
        with rep.timed("pca"):
            res = run_pca(ss, Basis(args.basis), exclude, ddof=args.ddof,
                          include_identifier=args.include_identifier)
    except CancellationError as exc:
        rep.fail(EXIT_FAIL, exc)
        print(f"error: {exc}", file=sys.stderr)
        return False
    rep.results["pca"] = {
        "basis": res.basis.value,
        "included_columns": list(res.included_columns),
        "column_names": list(res.column_names),
        "eigenvalues": res.eigenvalues,
        "variance_percent": res.variance_percent,
        "cumulative_percent": res.cumulative_percent,
        "loadings": res.loadings,
        "negative_variance_columns": list(res.negative_variance_columns),
    }
    _out(args, format_pca_table(res).rstrip("\n"))
    return True


# -- subcommands -----------------------------------------------------------------

def _kind(args):
    if args.kind == "table1":
        return Table1()
    return IidUniform(args.p, args.lo, args.hi)


def cmd_generate(args, rep: RunReport) -> int:
    kind = _kind(args)
    with rep.timed("generate"):
        summary = generate_csv(args.rows, kind, args.seed, args.out, header=args.header)
    rep.counts.update(rows=summary.rows_written, bytes=summary.bytes_written)
    rep.results["generate"] = {"path": str(args.out), "kind": kind.name,
                               "rows_written": summary.rows_written,
                               "bytes_written": summary.bytes_written,
                               "checksum": summary.checksum}
    _out(args, f"wrote {summary.rows_written} rows ({summary.bytes_written} bytes) to {args.out}; "
               f"checksum {summary.checksum}")
    return EXIT_OK


def cmd_convert(args, rep: RunReport) -> int:
    _, schema = _input_schema(args.csv, args.schema, args.header)
    with rep.timed("convert"):
        summary = convert_csv_to_binary(args.csv, args.out, schema, header=args.header,
                                        chunk_rows=args.chunk_rows)
    rep.counts.update(rows=summary.rows, bytes=summary.bytes)
    rep.results["convert"] = {"path": str(args.out), "rows": summary.rows,
                              "columns": summary.columns, "bytes": summary.bytes,
                              "checksum": summary.checksum}
    _out(args, f"converted {summary.rows} rows x {summary.columns} columns to {args.out} "
               f"({summary.bytes} bytes); payload checksum {summary.checksum}")
    return EXIT_OK


def cmd_validate(args, rep: RunReport) -> int:
    schema = None
    if args.schema != "auto":
        schema = parse_schema(args.schema)
    with rep.timed("validate"):
        vr = validate_binary(args.bin, args.csv, args.spot_count,
                             args.checksum or args.expected_checksum is not None,
                             schema=schema, header=args.header,
                             expected_checksum=args.expected_checksum,
                             chunk_rows=args.chunk_rows)
    rep.results["validate"] = vr.to_dict()
    _out(args, f"validation {vr.verdict}: size {'ok' if vr.size_ok else 'BAD'}, "
               f"counts {'ok' if vr.counts_ok else 'BAD'}, "
               f"{sum(ok for _, ok in vr.rows_checked)}/{len(vr.rows_checked)} spot rows match"
               + ("" if vr.checksum_ok is None else
                  f", checksum {'ok' if vr.checksum_ok else 'BAD'}"))
    for line in vr.details:
        _out(args, f"  {line}")
    if not vr.passed:
        rep.fail(EXIT_FAIL, message="validation failed: " + "; ".join(vr.details))
    return rep.exit_code


def cmd_sum(args, rep: RunReport) -> int:
    fmt, schema = _input_schema(args.input, args.schema, args.header)
    if not 0 <= args.column < schema.p:
        raise UsageError(f"column {args.column} out of range 0..{schema.p - 1}")
    if not _stage_sum(args.input, schema, fmt, args.column, args, rep, args.rows, args.header):
        rep.fail(EXIT_FAIL, message="column sum does not match n(n+1)/2")
    return rep.exit_code


def cmd_suffstats(args, rep: RunReport) -> int:
    fmt, schema = _input_schema(args.input, args.schema, args.header)
    ss = _stage_suffstats(args.input, schema, fmt, args, rep, header=args.header)
    with rep.timed("write_sidecar"):
        data = encode_suffstats(ss)
        Path(args.out).write_bytes(data)
    rep.results["suffstats"]["sidecar"] = str(args.out)
    _out(args, f"sidecar written to {args.out} ({len(data)} bytes, digest {_bytes_digest(data)})")
    return EXIT_OK


def cmd_analyze(args, rep: RunReport) -> int:
    ss = _load_sidecar(args.sidecar)
    if args.precision is not None and ss.precision is not PrecisionMode(args.precision):
        raise UsageError(f"sidecar was accumulated in {ss.precision.value}, "
                         f"not {args.precision}")
    _stage_analyze(ss, args, rep)
    return rep.exit_code


def cmd_pca(args, rep: RunReport) -> int:
    ss = _load_sidecar(args.sidecar)
    _stage_pca(ss, args, rep)
    return rep.exit_code


def _flip_byte(path: Path, offset: int):
    with open(path, "r+b") as fh:
        fh.seek(offset)
        b = fh.read(1)
        if not b:
            raise UsageError(f"corruption offset {offset} is past the end of {path}")
        fh.seek(offset)
        fh.write(bytes([b[0] ^ 0xFF]))


def cmd_pipeline(args, rep: RunReport) -> int:
    work = Path(args.workdir)
    work.mkdir(parents=True, exist_ok=True)
    csv_path, bin_path, side_path = work / "data.csv", work / "data.bin", work / "data.suf"
    kind = _kind(args)
    schema = kind.schema

    with rep.timed("generate"):
        gen = generate_csv(args.rows, kind, args.seed, csv_path)
    rep.counts.update(rows=gen.rows_written, csv_bytes=gen.bytes_written)
    rep.results["generate"] = {"path": str(csv_path), "kind": kind.name,
                               "rows_written": gen.rows_written, "checksum": gen.checksum}
    _out(args, f"generate: {gen.rows_written} rows -> {csv_path} ({rep.timings['generate']:.2f}s)")

    with rep.timed("convert"):
        conv = convert_csv_to_binary(csv_path, bin_path, schema, chunk_rows=args.chunk_rows)
    rep.counts["bin_bytes"] = conv.bytes
    rep.results["convert"] = {"path": str(bin_path), "rows": conv.rows, "columns": conv.columns,
                              "bytes": conv.bytes, "checksum": conv.checksum}
    _out(args, f"convert: {conv.bytes} bytes -> {bin_path} ({rep.timings['convert']:.2f}s)")

    if args.inject_corruption is not None:
        _flip_byte(bin_path, args.inject_corruption)
        rep.results["injected_corruption_offset"] = args.inject_corruption

    with rep.timed("validate"):
        vr = validate_binary(bin_path, csv_path, args.spot_count, args.checksum, schema=schema,
                             expected_checksum=conv.checksum if args.checksum else None)
    rep.results["validate"] = vr.to_dict()
    _out(args, f"validate: {vr.verdict}")
    for line in vr.details:
        _out(args, f"  {line}")
    if not vr.passed:
        rep.fail(EXIT_FAIL, message="validation failed; later stages skipped: "
                                    + "; ".join(vr.details))
        return rep.exit_code

    sum_args = argparse.Namespace(**{**vars(args), "precision": "binary64"})
    if not _stage_sum(bin_path, schema, "binary", 0, sum_args, rep, args.rows):
        rep.fail(EXIT_FAIL, message="identifier sum does not match n(n+1)/2; later stages skipped")
        return rep.exit_code

    ss = _stage_suffstats(bin_path, schema, "binary", args, rep)
    with rep.timed("write_sidecar"):
        Path(side_path).write_bytes(encode_suffstats(ss))
    rep.results["suffstats"]["sidecar"] = str(side_path)

    if args.csv_baseline:
        ss_csv = _stage_suffstats(csv_path, schema, "csv", args, rep, stage="suffstats_csv")
        speedup = rep.timings["suffstats_csv"] / rep.timings["suffstats"]
        rep.results["data_movement"] = {
            "binary_seconds": rep.timings["suffstats"],
            "csv_seconds": rep.timings["suffstats_csv"],
            "binary_read_seconds": rep.timings["suffstats_read"],
            "csv_read_seconds": rep.timings["suffstats_csv_read"],
            "speedup": speedup,
            "identical_statistics": ss_csv.identical(ss),
        }
        _out(args, f"data movement: binary pass {speedup:.2f}x faster than the CSV pass")

    ss = _load_sidecar(side_path)  # downstream stages see only the sidecar
    if not _stage_analyze(ss, args, rep):
        return rep.exit_code
    _stage_pca(ss, args, rep)
    return rep.exit_code


# -- parser --------------------------------------------------------------------------

def _add_common(sp, report=True):
    if report:
        sp.add_argument("--report", type=Path, help="write the JSON run report here")
        sp.add_argument("--json", action="store_true",
                        help="print the JSON run report instead of the text summary")


def _add_reduce(sp, precision=True):
    sp.add_argument("--workers", type=_positive_int,
                    help="worker threads (default: SSTAT_WORKERS or available CPUs)")
    sp.add_argument("--chunk-rows", type=_positive_int, default=DEFAULT_CHUNK_ROWS)
    if precision:
        sp.add_argument("--precision", choices=[m.value for m in PrecisionMode],
                        default=PrecisionMode.BINARY64.value)


def _add_analysis(sp):
    sp.add_argument("--ddof", type=int, choices=(0, 1), default=1)
    sp.add_argument("--include-identifier", action="store_true",
                    help="keep identifier columns (excluded by default)")
    sp.add_argument("--exclude", help="comma-separated column names or 0-based indices")


def _add_kind(sp):
    sp.add_argument("--rows", type=_positive_int, required=True)
    sp.add_argument("--kind", choices=("table1", "iid-uniform"), default="table1")
    sp.add_argument("--p", type=_positive_int, default=10, help="iid-uniform column count")
    sp.add_argument("--lo", type=float, default=0.0)
    sp.add_argument("--hi", type=float, default=1.0)
    sp.add_argument("--seed", type=_seed, default=42)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sstat", description=__doc__.split("\n")[0])
    from . import __version__
    parser.add_argument("--version", action="version", version=f"sstat {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    sp = sub.add_parser("generate", help="write a synthetic CSV dataset")
    _add_kind(sp)
    sp.add_argument("--out", type=Path, required=True)
    sp.add_argument("--header", action="store_true", help="write a header line")
    _add_common(sp)
    sp.set_defaults(func=cmd_generate)

    sp = sub.add_parser("convert", help="convert CSV to the fixed-width binary format")
    sp.add_argument("--csv", type=Path, required=True)
    sp.add_argument("--out", type=Path, required=True)
    sp.add_argument("--schema", default="auto")
    sp.add_argument("--header", action="store_true", help="CSV starts with a header line")
    sp.add_argument("--chunk-rows", type=_positive_int, default=DEFAULT_CHUNK_ROWS)
    _add_common(sp)
    sp.set_defaults(func=cmd_convert)

    sp = sub.add_parser("validate", help="check a binary file against its CSV source")
    sp.add_argument("--bin", type=Path, required=True)
    sp.add_argument("--csv", type=Path, required=True)
    sp.add_argument("--spot-count", type=_positive_int, default=3)
    sp.add_argument("--checksum", action="store_true",
                    help="also compare the payload checksum (re-parses the whole CSV)")
    sp.add_argument("--expected-checksum", help="compare against this checksum instead")
    sp.add_argument("--schema", default="auto")
    sp.add_argument("--header", action="store_true")
    sp.add_argument("--chunk-rows", type=_positive_int, default=DEFAULT_CHUNK_ROWS)
    _add_common(sp)
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("sum", help="sum one column and check the identifier invariant")
    sp.add_argument("--input", type=Path, required=True, help="binary dataset or CSV")
    sp.add_argument("--column", type=_nonneg_int, default=0)
    sp.add_argument("--rows", type=_positive_int,
                    help="expected row count n; the sum is compared against n(n+1)/2")
    sp.add_argument("--schema", default="auto")
    sp.add_argument("--header", action="store_true")
    _add_reduce(sp)
    _add_common(sp)
    sp.set_defaults(func=cmd_sum)

    sp = sub.add_parser("suffstats", help="one pass: n, column sums, cross-product matrix")
    sp.add_argument("--input", type=Path, required=True, help="binary dataset or CSV")
    sp.add_argument("--out", type=Path, required=True, help="sidecar file to write")
    sp.add_argument("--schema", default="auto")
    sp.add_argument("--header", action="store_true")
    sp.add_argument("--with-comoments", action="store_true",
                    help="also run the centred co-moment pass and report it")
    _add_reduce(sp)
    _add_common(sp)
    sp.set_defaults(func=cmd_suffstats)

    sp = sub.add_parser("analyze", help="means, covariance, correlation from a sidecar")
    sp.add_argument("--sidecar", type=Path, required=True)
    sp.add_argument("--precision", choices=[m.value for m in PrecisionMode],
                    help="require the sidecar to have been accumulated in this precision")
    _add_analysis(sp)
    _add_common(sp)
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("pca", help="principal components from a sidecar")
    sp.add_argument("--sidecar", type=Path, required=True)
    sp.add_argument("--basis", choices=[b.value for b in Basis], default=Basis.CORRELATION.value)
    _add_analysis(sp)
    _add_common(sp)
    sp.set_defaults(func=cmd_pca)

    sp = sub.add_parser("pipeline", help="generate, convert, validate, sum, suffstats, "
                                         "analyze, pca")
    _add_kind(sp)
    sp.add_argument("--workdir", type=Path, required=True)
    sp.add_argument("--spot-count", type=_positive_int, default=3)
    sp.add_argument("--no-checksum", dest="checksum", action="store_false",
                    help="skip the payload checksum during validation")
    sp.add_argument("--csv-baseline", action="store_true",
                    help="also time the sufficient-statistics pass over the CSV")
    sp.add_argument("--basis", choices=[b.value for b in Basis], default=Basis.CORRELATION.value)
    sp.add_argument("--inject-corruption", type=_nonneg_int, metavar="OFFSET",
                    help=argparse.SUPPRESS)
    _add_reduce(sp)
    _add_analysis(sp)
    _add_common(sp)
    sp.set_defaults(func=cmd_pipeline)
    return parser


def _config_echo(args) -> dict:
    return {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items()
            if k not in ("func", "json", "command")}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse: usage errors exit 2, --help/--version exit 0
        return int(exc.code or 0)
    rep = RunReport(args.command, config=_config_echo(args))
    try:
        rep.exit_code = args.func(args, rep)
    except UsageError as exc:
        rep.fail(EXIT_USAGE, exc)
        print(f"sstat {args.command}: error: {exc}", file=sys.stderr)
    except (SstatError, OSError, ValueError) as exc:
        rep.fail(EXIT_FAIL, exc)
        print(f"sstat {args.command}: error: {exc}", file=sys.stderr)
    if rep.exit_code == EXIT_OK:
        rep.status = "ok"
    if args.report is not None:
        try:
            rep.write(args.report)
        except OSError as exc:
            print(f"sstat: cannot write report {args.report}: {exc}", file=sys.stderr)
            return EXIT_FAIL
    if args.json:
        sys.stdout.write(rep.to_json())
    return rep.exit_code


if __name__ == "__main__":
    sys.exit(main())
