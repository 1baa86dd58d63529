import csv
import json

import pytest

from profitlag import cli


def run(args, tmp_path, capsys):
    code = cli.main(args + ["--outdir", str(tmp_path)])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_analyze_sm_example(tmp_path, capsys):
    code, out, _ = run(["analyze", "sm", "--q", "0.1", "--gamma", "0.9"], tmp_path, capsys)
    assert code == 0
    doc = json.loads(out)
    assert doc["profit_lag_weeks"] == pytest.approx(10.1839, abs=1e-3)
    assert doc["profit_lag"]["status"] == "profitable"
    assert doc["apparent_hashrate"] == 0.10183882  # 9 significant digits
    assert json.loads((tmp_path / "analyze_sm.json").read_text()) == doc
    man = json.loads((tmp_path / "analyze_sm.manifest.json").read_text())
    assert set(man) == {"command", "parameters", "seed", "tool_version", "outputs", "wall_clock_seconds", "argv"}
    assert man["outputs"] == [str(tmp_path / "analyze_sm.json")]


def test_analyze_hm_and_never(tmp_path, capsys):
    _, out, _ = run(["analyze", "hm", "--q", "0.2"], tmp_path, capsys)
    doc = json.loads(out)
    assert doc["revenue_ratio"] == pytest.approx(0.2 / 600)
    assert doc["profit_lag"]["status"] == "baseline"
    _, out, _ = run(["analyze", "ism", "--q", "0.1", "--gamma", "0", "--out", "ism0"], tmp_path, capsys)
    assert json.loads(out)["profit_lag"]["status"] == "never profitable"


@pytest.mark.parametrize("args,flag", [
    (["analyze", "sm", "--q", "0.7"], "--q"),
    (["analyze", "sm", "--q", "0.1", "--gamma", "2"], "--gamma"),
    (["analyze", "sm", "--q", "0.1", "--proto-tau0", "-1"], "--proto-tau0"),
    (["analyze", "sm", "--q", "0.1", "--proto-n0", "0"], "--proto-n0"),
    (["simulate", "sm", "--q", "0.1", "--runs", "0"], "--runs"),
    (["sweep", "--q-range", "0:0.6:0.1"], "--q-range"),
    (["sweep", "--gamma-range", "bad"], "--gamma-range"),
    (["curve", "sm", "--q", "0.1", "--horizon", "0"], "--horizon"),
])
def test_validation_exit_code(args, flag, tmp_path, capsys):
    code, _, err = run(args, tmp_path, capsys)
    assert code == 2
    assert flag in err


def test_argparse_errors_exit_2(tmp_path, capsys):
    assert run(["analyze", "xx", "--q", "0.1"], tmp_path, capsys)[0] == 2
    assert run(["analyze", "sm"], tmp_path, capsys)[0] == 2


def test_io_error(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    code, _, err = run(["analyze", "sm", "--q", "0.1", "--out", str(blocker / "sub" / "x")], tmp_path, capsys)
    assert code == 3


def test_curve_outputs(tmp_path, capsys):
    code, _, _ = run(["curve", "sm", "--q", "0.1", "--gamma", "0.9", "--horizon", "8"], tmp_path, capsys)
    assert code == 0
    rows = list(csv.reader((tmp_path / "curve_sm.csv").open()))
    assert rows[0] == ["chain_progress_periods", "delta_coinbase_units"]
    assert float(rows[2][1]) == pytest.approx(-14.8282406)
    svg = (tmp_path / "curve_sm.svg").read_text()
    assert svg.lstrip().startswith("<?xml") and "</svg>" in svg
    run(["curve", "sm", "--q", "0.1", "--gamma", "0.9", "--horizon", "8", "--out", "again"], tmp_path, capsys)
    assert (tmp_path / "again.svg").read_bytes() == (tmp_path / "curve_sm.svg").read_bytes()


def test_curve_anm_and_ism(tmp_path, capsys):
    run(["curve", "anm", "--q", "0.1", "--horizon", "6", "--no-svg"], tmp_path, capsys)
    rows = list(csv.reader((tmp_path / "curve_anm.csv").open()))[1:]
    assert all(float(d) >= 0 for _, d in rows)
    assert not (tmp_path / "curve_anm.svg").exists()
    run(["curve", "ism", "--q", "0.1", "--gamma", "0.9", "--no-svg"], tmp_path, capsys)
    rows = [(float(p), float(d)) for p, d in list(csv.reader((tmp_path / "curve_ism.csv").open()))[1:]]
    last_neg = max(p for p, d in rows if d <= 0)
    assert 13 <= last_neg < 14


def test_sweep(tmp_path, capsys):
    code, _, _ = run(["sweep", "--q-range", "0.05:0.45:0.05", "--gamma-range", "0:1:0.25"], tmp_path, capsys)
    assert code == 0
    rows = list(csv.DictReader((tmp_path / "sweep.csv").open()))
    assert list(rows[0]) == ["q", "gamma", "best_strategy", "ratio_hm", "ratio_sm", "ratio_ism", "ratio_anm"]
    assert len(rows) == 9 * 5
    assert all(float(r["ratio_anm"]) > float(r["ratio_hm"]) for r in rows)
    assert all(not (float(r["ratio_ism"]) > float(r["ratio_hm"]) and float(r["ratio_ism"]) >= float(r["ratio_sm"]))
               for r in rows)
    assert (tmp_path / "sweep.svg").exists() and (tmp_path / "sweep.manifest.json").exists()


def test_simulate_and_rerun_identical(tmp_path, capsys):
    args = ["simulate", "sm", "--q", "0.3", "--gamma", "0.5", "--runs", "20", "--periods", "3", "--seed", "42",
            "--proto-n0", "64", "--events"]
    code, out, _ = run(args, tmp_path, capsys)
    assert code == 0
    doc = json.loads(out)
    assert set(doc["statistics"]["apparent_hashrate"]) == {"value", "stderr", "analytic", "z"}
    first = (tmp_path / "simulate_sm.json").read_bytes()
    events = (tmp_path / "simulate_sm.events.csv").read_bytes()
    assert events.startswith(b"run_id,time_s,producer,disposition,height,difficulty\n")
    code, _, _ = run(args + ["--out", "second"], tmp_path, capsys)
    assert (tmp_path / "second.json").read_bytes() == first
    code = cli.main(["rerun", str(tmp_path / "simulate_sm.manifest.json"), "--out", str(tmp_path / "third")])
    capsys.readouterr()
    assert code == 0
    assert (tmp_path / "third.json").read_bytes() == first
    assert (tmp_path / "third.events.csv").read_bytes() == events


def test_simulate_horizon_exit_4(tmp_path, capsys):
    args = ["simulate", "sm", "--q", "0.1", "--gamma", "0.9", "--runs", "400", "--periods", "2", "--profit-lag"]
    code, _, err = run(args, tmp_path, capsys)
    assert code == 4 and "horizon" in err
    code, out, _ = run(args[:-1], tmp_path, capsys)
    assert code == 0
    assert json.loads(out)["profit_lag"]["empirical"]["status"] == "horizon too short"


def test_simulate_hm(tmp_path, capsys):
    code, out, _ = run(["simulate", "hm", "--q", "0.3", "--runs", "200", "--periods", "2", "--proto-n0", "256"],
                       tmp_path, capsys)
    st = json.loads(out)["statistics"]["apparent_hashrate"]
    assert abs(st["value"] - 0.3) < 4 * st["stderr"]


def test_compare(tmp_path, capsys):
    code, out, _ = run(["compare", "hm", "anm", "--q", "0.3", "--runs", "50", "--periods", "2",
                        "--proto-n0", "128"], tmp_path, capsys)
    assert code == 0
    doc = json.loads(out)
    assert doc["ranking_analytic"] == ["anm", "hm"]
    assert set(doc["strategies"]) == {"hm", "anm"}


def test_env_output_dir(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_DIR_ENV, str(tmp_path / "env"))
    assert cli.main(["analyze", "anm", "--q", "0.2"]) == 0
    capsys.readouterr()
    assert (tmp_path / "env" / "analyze_anm.json").exists()


def test_rerun_bad_manifest(tmp_path, capsys):
    bad = tmp_path / "bad.manifest.json"
    bad.write_text("{}")
    assert cli.main(["rerun", str(bad)]) == 2
    assert cli.main(["rerun", str(tmp_path / "missing.json")]) == 3
