import json
import os

import argparse
import pytest

from rellich_lab.cli import RunConfig, atomic_write, csv_body, parse_range, run


def test_parse_range():
    assert parse_range("10:1000:48") == [10.0, 1000.0, 48]
    for bad in ("10:1000", "a:b:c", "5:1:4", "1:5:1"):
        with pytest.raises(argparse.ArgumentTypeError):
            parse_range(bad)


def test_usage_errors_exit_2(tmp_path, capsys):
    assert run(["scan-f", "--bogus"]) == 2
    assert run(["nope"]) == 2
    assert run(["scan-f", "--rho", "1:2", "--out", str(tmp_path)]) == 2
    assert run(["scan-f", "--field", "unknown-kind", "--out", str(tmp_path)]) == 2


def test_scan_g_example(tmp_path):
    code = run(["scan-g", "--n", "3", "--field", "identity", "--solution", "bessel",
                "--delta", "0.5", "--rho", "10:1000:48", "--out", str(tmp_path)])
    assert code == 0
    doc = json.loads((tmp_path / "scan-g.json").read_text())
    assert doc["passed"] and doc["summary"]["scans"]["0.5"]["n_violations"] == 0


def test_small_ell_reports_and_exits_1(tmp_path):
    assert run(["scan-f", "--ell", "0.1", "--out", str(tmp_path)]) == 1
    lines = (tmp_path / "scan-f.csv").read_text().splitlines()
    assert lines[0].startswith("# config: ") and lines[1].startswith("# generated: ")
    assert lines[2] == "ell,rho,sign,log_norm_value,diff,violation_flag"
    assert len(lines) == 3 + 64


def test_header_round_trip_reproduces_report(tmp_path):
    first = tmp_path / "a"
    assert run(["growth", "--R", "10:400:16", "--delta", "0.5", "--out", str(first)]) == 0
    text = (first / "growth.csv").read_text()
    cfg = RunConfig.from_header(text)
    assert cfg.subcommand == "growth" and cfg.R == [10.0, 400.0, 16]
    assert run(["growth", "--config", str(first / "growth.csv")]) == 0
    assert csv_body((first / "growth.csv").read_text()) == csv_body(text)


def test_json_config_file(tmp_path):
    cfg = RunConfig("lp-threshold", outdir=str(tmp_path / "out"))
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg.to_record()))
    assert run(["lp-threshold", "--config", str(path)]) == 0
    assert (tmp_path / "out" / "lp-threshold.json").exists()


def test_atomic_write_leaves_no_temp(tmp_path):
    target = tmp_path / "x" / "r.csv"
    atomic_write(str(target), "a\n")
    atomic_write(str(target), "b\n")
    assert target.read_text() == "b\n"
    assert os.listdir(target.parent) == ["r.csv"]


def test_dc1_variable_field(tmp_path):
    assert run(["dc1", "--field", "rank-one-fixed", "--c", "0.5", "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "dc1.json").read_text())
    assert doc["summary"]["properties"]["ii"]["slope"] < -0.85
