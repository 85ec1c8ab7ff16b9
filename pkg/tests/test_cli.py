import json
import subprocess
import sys

import jsonschema
import numpy as np
import pytest

from sstat.cli import main, parse_exclusions, parse_schema
from sstat.report import RunReport, decode_matrix, encode, fmt_float, load_schema
from sstat.schema import DatasetSchema
from sstat.suffstats import SuffStats, load_suffstats, save_suffstats

SCHEMA = load_schema()


def run(argv, tmp_path, name="r.json"):
    report = tmp_path / name
    code = main(argv + ["--report", str(report)])
    doc = json.loads(report.read_text())
    jsonschema.validate(doc, SCHEMA)
    assert doc["exit_code"] == code
    return code, doc


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["generate", "--rows", "5000", "--seed", "42", "--out", str(d / "d.csv")]) == 0
    assert main(["convert", "--csv", str(d / "d.csv"), "--out", str(d / "d.bin")]) == 0
    assert main(["suffstats", "--input", str(d / "d.bin"), "--out", str(d / "d.suf")]) == 0
    return d


def test_generate(tmp_path):
    code, doc = run(["generate", "--rows", "1000", "--kind", "table1", "--seed", "42",
                     "--out", str(tmp_path / "g.csv")], tmp_path)
    assert code == 0 and doc["status"] == "ok"
    assert len((tmp_path / "g.csv").read_text().splitlines()) == 1000
    assert doc["counts"]["rows"] == 1000 and doc["command"] == "generate"
    assert doc["timings"]["generate"] >= 0


def test_generate_missing_out_is_usage_error(capsys):
    assert main(["generate", "--rows", "10"]) == 2
    assert "--out" in capsys.readouterr().err


def test_generate_unwritable_is_io_error(tmp_path, capsys):
    code, doc = run(["generate", "--rows", "10", "--out", str(tmp_path / "no" / "x.csv")], tmp_path)
    assert code == 1 and doc["status"] == "failed"
    assert doc["error"]["type"] == "GenerationError"


def test_help_and_version(capsys):
    assert main(["--help"]) == 0
    assert main(["--version"]) == 0
    assert main([]) == 2


def test_convert_validate_pass(workdir, tmp_path):
    code, doc = run(["validate", "--bin", str(workdir / "d.bin"), "--csv", str(workdir / "d.csv"),
                     "--checksum"], tmp_path)
    assert code == 0
    v = doc["results"]["validate"]
    assert v["verdict"] == "pass" and v["checksum_ok"] is True
    assert [r["row"] for r in v["rows_checked"]] == [0, 2500, 4999]


def test_convert_deterministic(workdir, tmp_path):
    out = tmp_path / "again.bin"
    assert main(["convert", "--csv", str(workdir / "d.csv"), "--out", str(out),
                 "--chunk-rows", "999"]) == 0
    assert out.read_bytes() == (workdir / "d.bin").read_bytes()


def test_convert_malformed(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("1,2,3\n2,4,x7\n")
    code, doc = run(["convert", "--csv", str(bad), "--out", str(tmp_path / "b.bin"),
                     "--schema", "columns:3"], tmp_path)
    assert code == 1
    assert "row 2, column 3" in doc["error"]["message"]
    assert "row 2, column 3" in capsys.readouterr().err


def test_validate_corrupted(workdir, tmp_path):
    raw = bytearray((workdir / "d.bin").read_bytes())
    raw[64 + 2500 * 88 + 40] ^= 0x10
    bad = tmp_path / "bad.bin"
    bad.write_bytes(bytes(raw))
    code, doc = run(["validate", "--bin", str(bad), "--csv", str(workdir / "d.csv")], tmp_path)
    assert code == 1 and doc["results"]["validate"]["verdict"] == "fail"


def test_validate_expected_checksum(workdir, tmp_path):
    _, conv = run(["convert", "--csv", str(workdir / "d.csv"), "--out", str(tmp_path / "c.bin")],
                  tmp_path, "conv.json")
    checksum = conv["results"]["convert"]["checksum"]
    code, _ = run(["validate", "--bin", str(tmp_path / "c.bin"), "--csv", str(workdir / "d.csv"),
                   "--expected-checksum", checksum], tmp_path)
    assert code == 0
    code, _ = run(["validate", "--bin", str(tmp_path / "c.bin"), "--csv", str(workdir / "d.csv"),
                   "--expected-checksum", "00" * 8], tmp_path)
    assert code == 1


def test_sum_identifier(workdir, tmp_path):
    code, doc = run(["sum", "--input", str(workdir / "d.bin"), "--column", "0"], tmp_path)
    s = doc["results"]["sum"]
    assert code == 0 and s["match"] is True
    assert s["exact_sum"] == s["expected_sum"] == str(5000 * 5001 // 2)
    assert float(s["float_sum"]) == 5000 * 5001 // 2 and s["float_approximate"] is False


def test_sum_on_csv_and_explicit_rows(workdir, tmp_path):
    code, doc = run(["sum", "--input", str(workdir / "d.csv"), "--rows", "5000"], tmp_path)
    assert code == 0 and doc["results"]["sum"]["match"] is True
    code, doc = run(["sum", "--input", str(workdir / "d.csv"), "--rows", "4999"], tmp_path)
    assert code == 1 and doc["results"]["sum"]["match"] is False


def test_sum_duplicated_row_detected(workdir, tmp_path):
    lines = (workdir / "d.csv").read_bytes().splitlines(keepends=True)
    tampered = tmp_path / "dup.csv"
    tampered.write_bytes(b"".join(lines[:100] + [lines[99]] + lines[100:]))
    assert main(["convert", "--csv", str(tampered), "--out", str(tmp_path / "dup.bin")]) == 0
    code, doc = run(["sum", "--input", str(tmp_path / "dup.bin")], tmp_path)
    assert code == 1 and doc["results"]["sum"]["match"] is False
    assert "n(n+1)/2" in doc["error"]["message"]


def test_sum_replaced_row_detected(workdir, tmp_path):
    lines = (workdir / "d.csv").read_bytes().splitlines(keepends=True)
    tampered = tmp_path / "rep.csv"
    tampered.write_bytes(b"".join(lines[:100] + [lines[99]] + lines[101:]))
    code, _ = run(["sum", "--input", str(tampered)], tmp_path)
    assert code == 1


def test_sum_column_out_of_range(workdir, tmp_path):
    code, doc = run(["sum", "--input", str(workdir / "d.bin"), "--column", "11"], tmp_path)
    assert code == 2 and doc["status"] == "error"


def test_sum_non_identifier_column_no_check(workdir, tmp_path):
    code, doc = run(["sum", "--input", str(workdir / "d.bin"), "--column", "9"], tmp_path)
    s = doc["results"]["sum"]
    assert code == 0 and s["match"] is None and s["exact_sum"] is None and s["notes"]


def test_suffstats_report_and_sidecar(workdir, tmp_path):
    side = tmp_path / "s.suf"
    code, doc = run(["suffstats", "--input", str(workdir / "d.bin"), "--out", str(side),
                     "--workers", "2", "--chunk-rows", "700", "--with-comoments"], tmp_path)
    assert code == 0
    t = doc["timings"]
    assert {"suffstats", "suffstats_read", "suffstats_accumulate"} <= set(t)
    ss = load_suffstats(side)
    r = doc["results"]["suffstats"]
    assert r["n"] == ss.n == 5000
    assert np.array_equal(decode_matrix(r["S"]), ss.S)
    assert [float(v) for v in r["s"]] == ss.s.tolist()
    assert "comoments" in r


def test_worker_sweep_identical_sidecars(workdir, tmp_path, monkeypatch):
    blobs = set()
    for w in range(1, 9):
        side = tmp_path / f"w{w}.suf"
        monkeypatch.setenv("SSTAT_WORKERS", str(w))
        assert main(["suffstats", "--input", str(workdir / "d.bin"), "--out", str(side),
                     "--chunk-rows", "613"]) == 0
        blobs.add(side.read_bytes())
    assert len(blobs) == 1


def test_bad_workers_env(workdir, tmp_path, monkeypatch):
    monkeypatch.setenv("SSTAT_WORKERS", "0")
    code, _ = run(["suffstats", "--input", str(workdir / "d.bin"), "--out", str(tmp_path / "x")],
                  tmp_path)
    assert code == 2


def test_suffstats_csv_equals_binary(workdir, tmp_path):
    assert main(["suffstats", "--input", str(workdir / "d.csv"), "--out", str(tmp_path / "c.suf"),
                 "--chunk-rows", "1000"]) == 0
    assert main(["suffstats", "--input", str(workdir / "d.bin"), "--out", str(tmp_path / "b.suf"),
                 "--chunk-rows", "1000"]) == 0
    assert (tmp_path / "c.suf").read_bytes() == (tmp_path / "b.suf").read_bytes()


def test_analyze(workdir, tmp_path):
    code, doc = run(["analyze", "--sidecar", str(workdir / "d.suf")], tmp_path)
    a = doc["results"]["analyze"]
    assert code == 0
    assert len(a["covariance"]) == 10 and len(a["correlation"][0]) == 10
    assert a["column_names"] == list("BCDEFGHIJK")
    ss = load_suffstats(workdir / "d.suf")
    from sstat.analysis import analyze
    res = analyze(ss)
    assert np.array_equal(decode_matrix(a["correlation"]), res.correlation)
    code, doc = run(["analyze", "--sidecar", str(workdir / "d.suf"), "--exclude", "J,K,4"], tmp_path)
    assert doc["results"]["analyze"]["column_names"] == list("BCDFGHI")
    code, _ = run(["analyze", "--sidecar", str(workdir / "d.suf"), "--exclude", "Z"], tmp_path)
    assert code == 2


@pytest.mark.parametrize("name", ["d.csv", "d.bin"])
def test_analyze_and_pca_refuse_raw_data(workdir, tmp_path, name):
    for cmd in ("analyze", "pca"):
        code, doc = run([cmd, "--sidecar", str(workdir / name)], tmp_path)
        assert code == 2 and "sidecar" in doc["error"]["message"]


def test_analyze_precision_guard(workdir, tmp_path):
    code, _ = run(["analyze", "--sidecar", str(workdir / "d.suf"), "--precision", "binary32"],
                  tmp_path)
    assert code == 2


def test_analyze_cancellation_exit_1(tmp_path, capsys):
    schema = DatasetSchema(("A", "x", "y"), {0})
    ss = SuffStats(4, np.array([10.0, 4.0, 2.0]),
                   np.array([[30.0, 10.0, 5.0], [10.0, 3.0, 1.0], [5.0, 1.0, 3.0]]), schema)
    save_suffstats(ss, tmp_path / "neg.suf")
    code, doc = run(["analyze", "--sidecar", str(tmp_path / "neg.suf"), "--include-identifier"],
                    tmp_path)
    assert code == 1
    assert doc["error"]["type"] == "CancellationError"
    assert doc["error"]["columns"] == [1] and doc["error"]["column_names"] == ["x"]
    assert "x" in capsys.readouterr().err
    code, doc = run(["pca", "--sidecar", str(tmp_path / "neg.suf")], tmp_path)
    assert code == 1 and doc["error"]["columns"] == [1]
    code, doc = run(["pca", "--sidecar", str(tmp_path / "neg.suf"), "--basis", "covariance"],
                    tmp_path)
    assert code == 0 and doc["results"]["pca"]["negative_variance_columns"] == [1]


def test_pca_uniform(tmp_path, capsys):
    csv = tmp_path / "u.csv"
    assert main(["generate", "--rows", "20000", "--kind", "iid-uniform", "--seed", "7",
                 "--out", str(csv)]) == 0
    assert main(["suffstats", "--input", str(csv), "--out", str(tmp_path / "u.suf")]) == 0
    capsys.readouterr()
    code, doc = run(["pca", "--sidecar", str(tmp_path / "u.suf")], tmp_path)
    ev = [float(v) for v in doc["results"]["pca"]["eigenvalues"]]
    assert code == 0 and len(ev) == 10 and all(abs(v - 1) < 0.1 for v in ev)
    out = capsys.readouterr().out
    assert out.startswith("PCA Results") and "PC10: Eigenvalue =" in out


def test_pipeline_small(tmp_path):
    code, doc = run(["pipeline", "--rows", "20000", "--seed", "42", "--workdir",
                     str(tmp_path / "w"), "--csv-baseline", "--chunk-rows", "4096"], tmp_path)
    assert code == 0
    r = doc["results"]
    for stage in ("generate", "convert", "validate", "sum", "suffstats", "suffstats_csv",
                  "analyze", "pca", "data_movement"):
        assert stage in r
    assert r["validate"]["verdict"] == "pass" and r["sum"]["match"] is True
    assert r["data_movement"]["identical_statistics"] is True
    code2, doc2 = run(["pipeline", "--rows", "20000", "--seed", "42", "--workdir",
                       str(tmp_path / "w2"), "--chunk-rows", "4096"], tmp_path, "r2.json")
    assert doc2["results"]["analyze"] == r["analyze"] and doc2["results"]["pca"] == r["pca"]


def test_pipeline_halts_on_corruption(tmp_path):
    # flip a byte inside the middle row (spot-checked) of the converted file
    offset = 64 + 5000 * 88 + 16
    code, doc = run(["pipeline", "--rows", "10000", "--workdir", str(tmp_path / "w"),
                     "--inject-corruption", str(offset)], tmp_path)
    assert code == 1
    assert doc["results"]["validate"]["verdict"] == "fail"
    assert "suffstats" not in doc["results"] and "pca" not in doc["results"]
    assert not (tmp_path / "w" / "data.suf").exists()


def test_pipeline_checksum_catches_unsampled_corruption(tmp_path):
    offset = 64 + 1234 * 88 + 3
    code, doc = run(["pipeline", "--rows", "10000", "--workdir", str(tmp_path / "w"),
                     "--inject-corruption", str(offset)], tmp_path)
    assert code == 1 and doc["results"]["validate"]["checksum_ok"] is False


def test_json_stdout(workdir, capsys):
    assert main(["sum", "--input", str(workdir / "d.bin"), "--json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    jsonschema.validate(doc, SCHEMA)


def test_module_and_script_entry_points(workdir):
    for cmd in ([sys.executable, "-m", "sstat"], ["sstat"]):
        p = subprocess.run(cmd + ["sum", "--input", str(workdir / "d.bin")],
                           capture_output=True, text=True)
        assert p.returncode == 0 and "match" in p.stdout
    p = subprocess.run([sys.executable, "-m", "sstat", "sum"], capture_output=True, text=True)
    assert p.returncode == 2


def test_parse_schema():
    assert parse_schema("table1") == DatasetSchema.table1()
    assert parse_schema("auto", 11) == DatasetSchema.table1()
    assert parse_schema("auto", 4) == DatasetSchema.iid_uniform(3)
    assert parse_schema("columns:3:id=0,2").identifier_columns == frozenset({0, 2})
    from sstat.cli import UsageError
    for bad in ("nope", "columns:x", "columns:3:foo"):
        with pytest.raises(UsageError):
            parse_schema(bad)
    with pytest.raises(UsageError):
        parse_schema("table1", 5)
    assert parse_exclusions("A, 3", DatasetSchema.table1()) == [0, 3]


@pytest.mark.parametrize("x", [0.1, -0.0, 1e300, 5e-324, 1 / 3, 2.0**53 + 2, float("inf")])
def test_float_round_trip(x):
    assert float(fmt_float(x)) == x
    jsonschema.validate({"v": fmt_float(x)}, {"properties": {"v": SCHEMA["$defs"]["float"]}})


def test_encode_wide_ints_and_arrays():
    doc = encode({"a": 2**70, "b": np.arange(3.0), "c": [np.float32(0.5)], "d": np.int64(4)})
    assert doc == {"a": str(2**70), "b": ["0.0", "1.0", "2.0"], "c": ["0.5"], "d": 4}
    rep = RunReport("sum")
    rep.fail(2, ValueError("x"))
    assert rep.to_dict()["status"] == "error"
