import csv
import io
import json
import subprocess
import sys

import pytest

from edg_control import cli
from edg_control.cli import (EXIT_COMPARISON, EXIT_IO, EXIT_OK, EXIT_STABILIZATION, EXIT_USAGE,
                             RunConfig, parse_config, run)
from edg_control.errors import InvalidComparison


def test_defaults():
    cfg, verbose = parse_config([])
    assert cfg == RunConfig()
    assert (cfg.problem, cfg.k, cfg.approach, cfg.levels) == ("paper", 0, "od", (8, 16, 32, 64))
    assert (cfg.gamma, cfg.tau1, cfg.format, cfg.tau2_override) == (1.0, 1.0, "csv", None)
    assert verbose == 0


def test_table4_configuration():
    cfg, _ = parse_config(["--k", "1", "--approach", "do"])
    assert cfg.k == 1 and cfg.approach == "do" and cfg.levels == (8, 16, 32, 64)


def test_flags_parsed():
    cfg, _ = parse_config(["--levels", "2,4", "--gamma", "0.5", "--tau2-override", "1",
                           "--format", "json", "--problem", "divergent"])
    assert cfg.levels == (2, 4) and cfg.gamma == 0.5 and cfg.tau2_override == 1.0
    assert cfg.format == "json" and cfg.problem == "divergent"


@pytest.mark.parametrize("argv", [["--gamma", "-1"], ["--tau1", "0"], ["--levels", "a,b"],
                                  ["--levels", "8,4"], ["--levels", "0,2"], ["--k", "x"],
                                  ["--approach", "sideways"], ["--problem", "none"],
                                  ["--format", "xml"], ["--bogus"], ["--levels", ","]])
def test_usage_errors(argv, capsys):
    assert run(argv) == EXIT_USAGE
    assert capsys.readouterr().err


def test_config_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# study\nk = 1\nlevels = 2,4\ngamma=3\ntau2-override = 0.5\n")
    cfg, _ = parse_config(["--config", str(path), "--gamma", "2"])
    assert cfg.k == 1 and cfg.levels == (2, 4) and cfg.tau2_override == 0.5
    assert cfg.gamma == 2.0  # flag wins


def test_config_file_errors(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour = blue\n")
    assert run(["--config", str(bad)]) == EXIT_USAGE
    bad.write_text("k 1\n")
    assert run(["--config", str(bad)]) == EXIT_USAGE
    assert run(["--config", str(tmp_path / "missing.cfg")]) == EXIT_IO


def read_csv(text):
    return list(csv.reader(io.StringIO(text)))


def test_run_writes_csv_and_table_matches(tmp_path, capsys):
    out = tmp_path / "rates.csv"
    assert run(["--levels", "2,4", "--k", "1", "--output", str(out)]) == EXIT_OK
    rows = read_csv(out.read_text())
    assert rows[0] == ["level", "h_over_sqrt2", "field", "error", "order"]
    assert len(rows) == 1 + 2 * 5
    table = capsys.readouterr().out.splitlines()
    body = [line.split() for line in table[2:]]
    for row, line in zip(rows[1:], body):
        assert line[:3] == [row[0], row[2], row[3]]
        assert (line[3] if len(line) > 3 else "") == row[4]


def test_default_run_row_count(tmp_path):
    out = tmp_path / "default.csv"
    assert run(["--output", str(out)]) == EXIT_OK
    rows = read_csv(out.read_text())
    assert len(rows) == 1 + 4 * 5
    assert [r[0] for r in rows[1::5]] == ["8", "16", "32", "64"]


def test_stdout_report_when_no_output(capsys):
    assert run(["--levels", "2", "--format", "json"]) == EXIT_OK
    text = capsys.readouterr().out
    data = json.loads(text[text.index("{"):])
    assert data["levels"] == [2]


def test_both_reports_discrepancy(tmp_path, capsys):
    out = tmp_path / "r.json"
    assert run(["--levels", "2,4", "--approach", "both", "--format", "json",
                "--output", str(out)]) == EXIT_OK
    assert "OD/DO relative discrepancy" in capsys.readouterr().out
    data = json.loads(out.read_text())
    assert all(max(d.values()) <= 1e-8 for d in data["discrepancy"])


def test_missing_output_directory(tmp_path, capsys):
    assert run(["--levels", "2", "--output", str(tmp_path / "no" / "x.csv")]) == EXIT_IO
    assert "I/O error" in capsys.readouterr().err


def test_stabilization_failure(capsys):
    assert run(["--levels", "2", "--tau1", "0.1"]) == EXIT_STABILIZATION
    assert "stabilization" in capsys.readouterr().err


def test_error_status_mapping(monkeypatch, capsys):
    def boom(*args, **kwargs):
        raise InvalidComparison("mismatch")
    monkeypatch.setattr(cli, "run_convergence", boom)
    assert run(["--levels", "2"]) == EXIT_COMPARISON


def test_dumps(tmp_path):
    mats, meshes = tmp_path / "m", tmp_path / "g"
    mats.mkdir()
    meshes.mkdir()
    assert run(["--levels", "2", "--approach", "both", "--dump-matrices", str(mats),
                "--dump-mesh", str(meshes), "--output", str(tmp_path / "r.csv")]) == EXIT_OK
    assert sorted(p.name for p in mats.iterdir()) == ["kkt_n2_k0.txt", "od_n2_k0.txt"]
    assert (meshes / "mesh_n2.txt").read_text().startswith("# vertices 9")
    assert run(["--levels", "2", "--dump-mesh", str(tmp_path / "none")]) == EXIT_IO


def test_help_lists_exit_statuses():
    proc = subprocess.run([sys.executable, "-m", "edg_control", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "exit status" in proc.stdout
    for code in range(10):
        assert f"  {code}  " in proc.stdout


def test_module_exit_code():
    proc = subprocess.run([sys.executable, "-m", "edg_control", "--gamma", "-1"],
                          capture_output=True, text=True)
    assert proc.returncode == EXIT_USAGE
