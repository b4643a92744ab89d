import json
import subprocess
import sys

import numpy as np
import pytest

from fracpara.cli import main
from fracpara.dnmap import DNMatrix


def load(run):
    return json.loads((run / "results.json").read_text())


def test_op_check_single_order(tmp_path, capsys):
    out = tmp_path / "op"
    assert main(["op-check", "--s", "0.5", "--out", str(out)]) == 0
    data = load(out)
    assert data["command"] == "op-check" and data["scenario"] == "default1d"
    names = [c["name"] for c in data["checks"]]
    assert len(names) == 3 and all(n.startswith("route_agreement") for n in names)
    for c in data["checks"]:
        assert c["passed"] and c["params"]["grid"]["Nx"] == 64 and "quadrature" in c["params"]
    assert (out / "route_errors.csv").exists()
    printed = capsys.readouterr().out
    assert printed.count("PASS route_agreement") == 3


def test_results_reproducible_modulo_timestamp(tmp_path):
    runs = []
    for tag in ("a", "b"):
        out = tmp_path / tag
        assert main(["dn-local", "--seed", "7", "--out", str(out), "--emit-plots", "false"]) == 0
        text = (out / "results.json").read_text()
        runs.append([line for line in text.splitlines() if '"timestamp"' not in line])
    assert runs[0] == runs[1]
    assert list(load(tmp_path / "a")) == sorted(load(tmp_path / "a"))


def test_dn_archive_and_heatmap(tmp_path):
    out = tmp_path / "dn"
    assert main(["dn-local", "--out", str(out)]) == 0
    dn = DNMatrix.load(out / "dn_local.npz")
    assert dn.kind == "local" and dn.entries.shape[0] == len(dn.rows)
    assert (out / "dn_local.png").stat().st_size > 0


def test_failing_check_exits_one(tmp_path, capsys):
    cfg = tmp_path / "tight.toml"
    cfg.write_text("[checks]\nroute_agreement = 1e-9\n")
    assert main(["op-check", "--s", "0.5", "--config", str(cfg), "--out", str(tmp_path / "r")]) == 1
    captured = capsys.readouterr()
    assert "FAIL route_agreement" in captured.out
    assert "failed checks: route_agreement" in captured.err
    assert not load(tmp_path / "r")["passed"]


def test_disabled_check_is_skipped(tmp_path, capsys):
    cfg = tmp_path / "skip.toml"
    cfg.write_text('[checks]\nroute_agreement = 1e-9\ndisable = ["route_agreement"]\n')
    assert main(["op-check", "--s", "0.5", "--config", str(cfg), "--out", str(tmp_path / "r")]) == 0
    assert "SKIP route_agreement" in capsys.readouterr().out


@pytest.mark.parametrize("body", ["[grid]\nNx = = 4\n", "[grid]\nNx = 'x'\n", "[bogus]\n"])
def test_config_errors_exit_two(tmp_path, body, capsys):
    cfg = tmp_path / "bad.toml"
    cfg.write_text(body)
    assert main(["op-check", "--config", str(cfg), "--out", str(tmp_path / "r")]) == 2
    err = capsys.readouterr().err
    assert "config error" in err and "line" in err
    assert not (tmp_path / "r").exists()


def test_usage_errors_exit_two(tmp_path):
    assert main(["op-check", "--refine", "0", "--out", str(tmp_path / "r")]) == 2
    assert main(["no-such-command"]) == 2
    assert main(["op-check", "--emit-plots", "maybe"]) == 2


def test_decay_and_kernel_plots_then_report(tmp_path, capsys):
    runs = []
    for cmd in ("decay", "kernel-check"):
        out = tmp_path / cmd
        assert main([cmd, "--out", str(out)]) == 0
        runs.append(str(out))
    assert (tmp_path / "decay" / "decay_slopes.png").exists()
    assert (tmp_path / "kernel-check" / "kernel_profiles.png").exists()
    rep = tmp_path / "report"
    assert main(["report", *runs, "--out", str(rep)]) == 0
    rows = (rep / "summary.csv").read_text().splitlines()
    n_checks = sum(len(load(tmp_path / c)["checks"]) for c in ("decay", "kernel-check"))
    assert len(rows) == 1 + n_checks
    assert (rep / "summary.md").read_text().startswith("| command |")
    assert (rep / "summary.png").stat().st_size > 0
    assert main(["report", str(tmp_path / "missing"), "--out", str(rep)]) == 2


def test_convergence_plot_under_refinement(tmp_path):
    out = tmp_path / "op"
    assert main(["op-check", "--s", "0.5", "--refine", "2", "--out", str(out)]) == 0
    data = load(out)
    orders = [c for c in data["checks"] if c["name"].startswith("convergence_order")]
    assert orders and all(c["value"] >= 1 for c in orders)
    assert (out / "op_check_s0.5.png").exists()


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "fracpara.cli", "kernel-check", "--out", str(tmp_path / "k"),
                           "--emit-plots", "no"], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "PASS kernel-check" in proc.stdout
