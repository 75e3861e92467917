import csv
import subprocess
import sys

import yaml

from tieekf.cli import main


def test_list_scenarios(capsys):
    assert main(["list-scenarios"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 9
    assert lines[-1].startswith("extreme-3DC\t")
    assert "iterations=400" in lines[-1]


def test_validate_config(tmp_path, capsys):
    assert main(["validate-config"]) == 0
    assert capsys.readouterr().out.strip() == "config OK"
    assert main(["validate-config", "--print-effective"]) == 0
    eff = yaml.safe_load(capsys.readouterr().out)
    assert eff["camera"]["fx"] == 500.0
    bad = tmp_path / "bad.yaml"
    bad.write_text("nonsense: 1\n")
    assert main(["validate-config", "--config", str(bad)]) == 2
    assert "config error" in capsys.readouterr().err


def test_run_writes_reports_and_is_byte_reproducible(tmp_path, capsys):
    args = ["run", "--scenario", "single-high-3DC", "--iterations", "2", "--seed", "3"]
    assert main(args + ["--out", str(tmp_path / "a"), "--timeseries"]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    out = capsys.readouterr().out
    assert "single-high-3DC" in out and "improvement" in out
    a, b = (tmp_path / d / "samples.csv" for d in "ab")
    assert a.read_bytes() == b.read_bytes()
    with open(tmp_path / "a" / "summary.csv") as fh:
        assert [r["iterations"] for r in csv.DictReader(fh)] == ["2", "2"]
    assert len(list((tmp_path / "a" / "timeseries" / "single-high-3DC").iterdir())) == 4


def test_run_with_config_and_flag(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("scenarios:\n  mine: {trajectory: SLS, level: low, perturbed_ids: [0, 2], iterations: 1}\n")
    assert main(["run", "--scenario", "mine", "--config", str(cfg), "--per-corner-independent",
                 "--out", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "samples.csv").read_text().count("mine,") == 2


def test_unknown_scenario(tmp_path, capsys):
    assert main(["run", "--scenario", "nope", "--out", str(tmp_path)]) == 2
    assert "unknown scenario" in capsys.readouterr().err


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "tieekf", "list-scenarios"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "all-high-SLS" in proc.stdout
