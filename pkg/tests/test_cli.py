import csv
import json
import math
import subprocess
import sys

import pytest

from ddepi.cli import OUTPUT_ENV, main
from ddepi.scenario import load_scenario, resolve_config


def rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_run_table1_sigma5(tmp_path, capsys):
    assert main(["run", "--config", "ode_table1_sigma5.cfg", "--out", str(tmp_path)]) == 0
    data = rows(tmp_path / "ode_table1_sigma5" / "totals.csv")
    assert len(data) - 1 == 1069
    assert data[0] == ["t", "S", "I", "R", "D", "N"]
    assert (tmp_path / "ode_table1_sigma5" / "summary.txt").exists()
    assert "1069 rows" in capsys.readouterr().out


def test_run_missing_config(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "missing.cfg")]) == 2
    assert "missing.cfg" in capsys.readouterr().err


def test_run_invalid_config(tmp_path):
    cfg = tmp_path / "bad.cfg"
    doc = load_scenario(resolve_config("ode_table1_sigma5")).to_dict()
    doc["grid"]["dt"] = 0.3
    cfg.write_text(json.dumps(doc))
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_run_divergence_exit_code(tmp_path, capsys):
    cfg = tmp_path / "diverge.cfg"
    doc = load_scenario(resolve_config("ode_phi_unstable_sigma15_nolockdown")).to_dict()
    doc["output"]["allow_divergence"] = False
    cfg.write_text(json.dumps(doc))
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path)]) == 3
    assert "ode_phi_unstable_sigma15_nolockdown" in capsys.readouterr().err


def test_run_io_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("not a directory")
    assert main(["run", "--config", "ode_table1_sigma5", "--out", str(blocker)]) == 4


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "env_out"))
    assert main(["run", "--config", "ode_table1_sigma10"]) == 0
    assert (tmp_path / "env_out" / "ode_table1_sigma10" / "totals.csv").exists()


def test_run_pde_lockdown_snapshots(tmp_path):
    assert main(["run", "--config", "pde_lockdown.cfg", "--out", str(tmp_path)]) == 0
    snaps = sorted((tmp_path / "pde_lockdown" / "snapshots").glob("*.csv"))
    expected = load_scenario(resolve_config("pde_lockdown")).output.snapshots
    assert len(snaps) == len(expected)
    data = rows(snaps[0])
    assert data[0] == ["x", "s", "i", "r", "d"] and len(data) == 2002


# ---- stability


def test_stability_unstable(tmp_path, capsys):
    assert main(["stability", "--phi-r", "0.09375", "--phi-d", "0.0125", "--sigma", "15", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert out.splitlines()[0].startswith("UNSTABLE")
    roots = rows(tmp_path / "roots.csv")
    assert roots[0] == ["branch", "re", "im"] and len(roots) == 52
    assert float(roots[1][1]) > 0


def test_stability_point(tmp_path, capsys):
    assert main(["stability", "--point", "0.5,-1", "--out", str(tmp_path)]) == 0
    assert capsys.readouterr().out.startswith("STABLE")
    assert all(float(r[1]) < 0 for r in rows(tmp_path / "roots.csv")[1:])
    boundary = rows(tmp_path / "boundary.csv")
    assert boundary[0] == ["phi", "a", "b"] and len(boundary) == 401


def test_stability_trivial_margin(tmp_path, capsys):
    assert main(["stability", "--phi-r", "0", "--phi-d", "0", "--sigma", "5", "--out", str(tmp_path)]) == 0
    first = capsys.readouterr().out.splitlines()[0]
    assert first.startswith(f"STABLE (margin {math.pi / 2!r})")


def test_stability_allee_adds_contractivity(tmp_path, capsys):
    assert main(["stability", "--phi-r", "0.03", "--phi-d", "0.02", "--sigma", "5", "--mu", "0.1",
                 "--allee-A", "1", "--out", str(tmp_path)]) == 0
    assert "contractivity: STABLE" in capsys.readouterr().out


@pytest.mark.parametrize("argv", [
    ["stability", "--phi-r", "abc", "--phi-d", "0", "--sigma", "5"],
    ["stability", "--phi-r", "0.1", "--phi-d", "0", "--sigma", "-5"],
    ["stability", "--phi-r", "-0.1", "--phi-d", "0", "--sigma", "5"],
    ["stability", "--phi-r", "0.1"],
    ["stability", "--point", "1"],
    ["stability", "--point", "nan,1"],
    ["stability", "--point", "1,1", "--sigma", "5"],
])
def test_stability_bad_input(argv, tmp_path):
    with_out = argv + ["--out", str(tmp_path)]
    try:
        code = main(with_out)
    except SystemExit as e:  # argparse rejects non-numeric input itself
        code = e.code
    assert code == 2


# ---- compare


def test_compare_homogeneous_reduction(tmp_path, capsys):
    assert main(["compare", "--ode-config", "ode_table1_sigma10", "--pde-config", "pde_homogeneous_sigma10",
                 "--out", str(tmp_path)]) == 0
    line = capsys.readouterr().out.strip()
    assert "exact reduction" in line
    metrics = dict(l.split(" = ") for l in
                   (tmp_path / "compare_ode_table1_sigma10__pde_homogeneous_sigma10" / "metrics.txt").read_text().splitlines())
    assert float(metrics["max_rel_state_diff"]) < 1e-6
    assert float(metrics["max_rel_d_diff"]) < 1e-6
    paired = rows(tmp_path / "compare_ode_table1_sigma10__pde_homogeneous_sigma10" / "paired.csv")
    assert paired[0][:2] == ["t", "S_ode"] and len(paired) == 1070


def test_compare_matched_aggregate(tmp_path, capsys):
    assert main(["compare", "--ode-config", "ode_table1_sigma10", "--pde-config", "pde_table1_sigma10",
                 "--match-initial", "--out", str(tmp_path)]) == 0
    line = capsys.readouterr().out
    assert "approximation" in line and "peak_i_rel_diff" in line


def test_compare_mismatched_sigma(tmp_path, capsys):
    assert main(["compare", "--ode-config", "ode_table1_sigma5", "--pde-config", "pde_table1_sigma10",
                 "--out", str(tmp_path)]) == 2
    assert "delay differs" in capsys.readouterr().err


def test_compare_mismatched_schedule(tmp_path, capsys):
    assert main(["compare", "--ode-config", "ode_table1_sigma10_lockdown", "--pde-config",
                 "pde_table1_sigma10_lockdown", "--out", str(tmp_path)]) == 2
    assert "schedules differ" in capsys.readouterr().err


def test_compare_wrong_model(tmp_path):
    assert main(["compare", "--ode-config", "pde_table1_sigma10", "--pde-config", "pde_table1_sigma10",
                 "--out", str(tmp_path)]) == 2


# ---- sweep and listing


def test_sweep_parallel(tmp_path, capsys):
    assert main(["sweep", "ode_table1_sigma5", "ode_table1_sigma10", "ode_phi_periodic_sigma15",
                 "--jobs", "2", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out.splitlines()
    assert len(out) == 3 and all(l.startswith("ok ") for l in out)
    assert (tmp_path / "ode_phi_periodic_sigma15" / "totals.csv").exists()


def test_sweep_reports_worst_exit(tmp_path, capsys):
    assert main(["sweep", "ode_table1_sigma5", str(tmp_path / "nope.cfg"), "--jobs", "1", "--out", str(tmp_path)]) == 2
    assert "config-error" in capsys.readouterr().out


def test_list_scenarios(capsys):
    assert main(["list-scenarios"]) == 0
    out = capsys.readouterr().out
    assert "ode_table1_sigma20" in out and "pde_lockdown" in out


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "ddepi.cli", "stability", "--point", "0,-2", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("UNSTABLE")


def test_subcommand_required():
    with pytest.raises(SystemExit) as err:
        main([])
    assert err.value.code == 2
