import json
import shutil
from pathlib import Path

import pytest

from conftest import ROOT
from qlschrod.cli import main, norm_ratio_report, preflight
from qlschrod.config import ConfigError, RunConfig

BENCH = ROOT / "configs" / "benchmark.json"
SWEEP = ROOT / "configs" / "sweep.json"
SMALL = ["--set", "grid.nodes=200"]


def test_shipped_benchmark_preflight_passes():
    rep = preflight(RunConfig.load(BENCH))
    assert rep["ok"] and rep["hard_ok"], rep["checks"]
    assert rep["a"] == 0.0625 and rep["k"] == 6.0
    assert rep["seam"]["max_derivative_mismatch"] <= 1e-4


def test_preflight_cli_exit_codes(capsys):
    assert main(["preflight", str(BENCH)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["checks"]["Q0_range"]


@pytest.mark.parametrize("override", [
    ["--set", "nonlinearity.p=3.0", "--set", 'nonlinearity.mixed=[{"b":1,"alpha":1.5,"beta":1.5}]'],
    ["--set", "penalization.a=10"],
])
def test_hard_failures_refuse_to_solve(override, tmp_path, capsys):
    assert main(["preflight", str(BENCH), *override]) == 2
    assert main(["solve", str(BENCH), "--out", str(tmp_path / "o"), *override]) == 2
    assert not list((tmp_path / "o").glob("eps_*"))
    assert (tmp_path / "o" / "preflight.json").exists()


def test_solve_writes_artifacts(tmp_path):
    out = tmp_path / "run"
    code = main(["solve", str(BENCH), "--out", str(out), *SMALL])
    assert code in (0, 1)
    sub = out / "eps_1"
    for name in ("result.json", "trace.csv", "fields.csv", "decay.csv", "verification.json"):
        assert (sub / name).stat().st_size > 0, name
    res = json.loads((sub / "result.json").read_text())
    assert res["status"] == "converged" and res["checks"]["positivity"]
    assert (sub / "fields.csv").read_text().splitlines()[0] == "r,w,z,u,v"
    manifest = (out / "manifest.txt").read_text()
    assert BENCH.read_text().rstrip("\n") in manifest and "seed 0" in manifest
    # exit code mirrors the checks
    assert code == (0 if res["ok"] else 1)


def test_epsilon_flag_and_bit_exact_rerun(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        main(["solve", str(BENCH), "--out", str(d), "--epsilon", "0.5", *SMALL])
    assert [p.name for p in a.iterdir() if p.is_dir()] == ["eps_0p5"]
    for f in sorted((a / "eps_0p5").iterdir()):
        assert f.read_bytes() == (b / "eps_0p5" / f.name).read_bytes(), f.name


def test_unwritable_output(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    code = main(["solve", str(BENCH), "--out", str(blocker / "sub"), *SMALL])
    assert code != 0
    assert "error" in capsys.readouterr().err


def test_four_epsilons_give_four_results_and_trend(tmp_path):
    out = tmp_path / "sweep"
    code = main(["sweep", str(SWEEP), "--out", str(out)])
    assert code in (0, 1)
    assert len([p for p in out.iterdir() if p.is_dir() and p.name.startswith("eps_")]) == 4
    trend = json.loads((out / "m_eps_trend.json").read_text())
    assert len(trend["boundary_max"]["scaled_domain"]["m_eps"]) == 4
    assert len(trend["norm_ratio"]["ratio"]) == 4


def test_sweep_needs_three_epsilons(tmp_path, capsys):
    assert main(["sweep", str(BENCH), "--out", str(tmp_path)]) == 2
    assert "three" in capsys.readouterr().err


def test_transform_table(tmp_path, capsys):
    assert main(["transform-table", "--min", "0", "--max", "1", "--step", "0.25"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "t,f,f_prime,f_second" and len(lines) == 6
    target = tmp_path / "t.csv"
    assert main(["transform-table", "--min", "0", "--max", "1", "--step", "0.25", "--out", str(target)]) == 0
    assert target.read_text().splitlines() == lines


def test_parse_error_reports_location(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{\n  "dimension": 3,\n  "grid": {"kind": "radial",,}\n}\n')
    assert main(["preflight", str(bad)]) == 2
    err = capsys.readouterr().err
    assert "bad.json:3:" in err


def test_config_validation_errors():
    raw = json.loads(BENCH.read_text())
    with pytest.raises(ConfigError):
        RunConfig({**raw, "epsilon_list": [0.5, 1.0]})
    with pytest.raises(ConfigError):
        RunConfig({**raw, "epsilon_list": [1.5]})
    with pytest.raises(ConfigError):
        RunConfig({**raw, "solver": {"unknown": 1}})
    with pytest.raises(ConfigError):
        RunConfig({**raw, "verification": {"bogus": 1}})
    with pytest.raises(ConfigError):
        RunConfig({k: v for k, v in raw.items() if k != "grid"})
    with pytest.raises(ConfigError):
        RunConfig.load(BENCH.parent / "missing.json")


def test_overrides_apply():
    cfg = RunConfig.load(BENCH, [("grid.nodes", 256), ("seed", 7)])
    assert cfg.grid().nodes == 256 and cfg.solver().seed == 7
    assert cfg.echo() == BENCH.read_text()


def test_norm_ratio_report():
    rows = [{"epsilon": 1.0, "energy": 1.0, "x_norm_sq": 2.0},
            {"epsilon": 0.5, "energy": 1.0, "x_norm_sq": 2.1}]
    rep = norm_ratio_report(rows, 3, 0.1)
    assert rep["ratio"] == [1.0, 1.05] and rep["no_increasing_trend"] is True
    rows[1]["x_norm_sq"] = 3.0
    assert norm_ratio_report(rows, 3, 0.1)["no_increasing_trend"] is False
    assert norm_ratio_report(rows[:1], 3, 0.1)["no_increasing_trend"] is None
