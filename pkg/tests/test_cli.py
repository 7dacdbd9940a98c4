import json
import re
from pathlib import Path

import numpy as np
import pytest

from disorient.cli import cli
from disorient.report import emit_figures
from disorient.errors import ContractViolation

SMALL = {"days": 40, "base_rate": 60, "spikes": [[20, 6.0]], "ooc_fraction": 0.3,
         "duplicate_fraction": 0.02,
         "trajectory": {"kind": "parabolic", "peak_day": 15, "peak_value": 0.76, "end_value": 0.7}}


@pytest.fixture
def scenario(tmp_path):
    f = tmp_path / "scenario.json"
    f.write_text(json.dumps(SMALL))
    return f


@pytest.fixture
def simulated(tmp_path, scenario):
    out = tmp_path / "sim"
    assert cli(["simulate", "--config", str(scenario), "--seed", "2", "--out", str(out)]) == 0
    return out


def _outputs(d):
    return {p.name: p.read_bytes() for p in sorted(Path(d).iterdir()) if p.name != "manifest.json"}


def test_unknown_flag_and_subcommand(capsys):
    assert cli(["test-basic", "--in", "x.csv", "--bogus"]) == 1
    assert "usage" in capsys.readouterr().err
    assert cli(["frobnicate"]) == 1
    assert cli([]) == 1


def test_missing_input_is_io_error(tmp_path):
    out = tmp_path / "out"
    assert cli(["test-basic", "--in", str(tmp_path / "missing.csv"), "--out", str(out)]) == 2
    assert not out.exists()


def test_contract_violation_exit_one(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("c1,c2\n2,0\n1,2\n")  # uneven rater counts
    out = tmp_path / "out"
    assert cli(["agree", "--in", str(bad), "--out", str(out)]) == 1
    assert not out.exists()


def test_pipeline_subcommands(tmp_path, simulated):
    posts, labels = simulated / "posts.jsonl", simulated / "labels.csv"
    run = lambda *a: cli([*map(str, a), "--out", str(tmp_path / a[0])])
    assert run("ingest", "--in", posts) == 0
    assert run("aggregate", "--in", posts, "--labels", labels) == 0
    pol = tmp_path / "aggregate" / "polarity.csv"
    assert run("test-basic", "--in", pol, "--mc-reps", 10000) == 0
    assert run("test-running", "--in", pol, "--w-grid", "7,10,15", "--mc-reps", 10000) == 0
    assert run("test-variance", "--in", pol) == 0
    assert run("smooth", "--in", pol, "--h-grid", "0.01,0.5,10") == 0
    assert run("fit", "--in", pol) == 0
    assert run("train", "--in", posts, "--labels", labels) == 0
    model = tmp_path / "train"
    assert run("classify", "--in", posts, "--model", model / "model.json",
               "--vocab", model / "vocab.json") == 0
    assert run("eval", "--pred", tmp_path / "classify" / "predictions.csv", "--labels", labels) == 0
    ev = json.loads((tmp_path / "eval" / "eval.json").read_text())
    assert ev["accuracy"] >= 0.95
    outcomes = (tmp_path / "test-basic" / "outcomes.csv").read_text().splitlines()
    assert outcomes[1] == "date,method,statistic,p_value,sig10,sig05,sig01"
    summary = json.loads((tmp_path / "test-running" / "test_summary.json").read_text())
    assert set(summary["window_sensitivity"]) == {"7", "10", "15"}


def test_manifest_hash_is_embedded(tmp_path, simulated):
    out = tmp_path / "agg"
    cli(["aggregate", "--in", str(simulated / "posts.jsonl"), "--labels",
         str(simulated / "labels.csv"), "--out", str(out)])
    manifest = json.loads((out / "manifest.json").read_text())
    h = manifest["manifest_hash"]
    assert (out / "polarity.csv").read_text().startswith(f"# manifest {h}\n")
    assert json.loads((out / "summary.json").read_text())["manifest"] == h
    assert set(manifest["input_digests"]) == {"posts.jsonl", "labels.csv"}
    assert {"subcommand", "config_hash", "seed", "tool_version", "timestamps"} <= set(manifest)


def test_report_all_small_is_deterministic(tmp_path, scenario):
    args = ["report-all", "--config", str(scenario), "--seed", "7", "--mc-reps", "10000"]
    assert cli(args + ["--out", str(tmp_path / "a")]) == 0
    assert cli(args + ["--out", str(tmp_path / "b")]) == 0
    a, b = _outputs(tmp_path / "a"), _outputs(tmp_path / "b")
    assert a == b
    assert sum(n.endswith(".svg") for n in a) == 5
    assert sum(n.endswith(".csv") for n in a) == 4
    h = json.loads((tmp_path / "a" / "manifest.json").read_text())["manifest_hash"]
    for name, data in a.items():
        assert h.encode() in data, name
    svg = a["fig1_interactions.svg"].decode()
    assert svg.lstrip().startswith("<svg") or svg.startswith("<?xml")
    assert re.search(r"<circle|<path|<polyline", a["fig2_basic.svg"].decode())


def test_different_seed_changes_outputs(tmp_path, scenario):
    base = ["report-all", "--config", str(scenario), "--mc-reps", "10000"]
    cli(base + ["--seed", "1", "--out", str(tmp_path / "a")])
    cli(base + ["--seed", "2", "--out", str(tmp_path / "b")])
    assert _outputs(tmp_path / "a")["polarity.csv"] != _outputs(tmp_path / "b")["polarity.csv"]


def test_emit_figures_reports_missing_artifacts():
    with pytest.raises(ContractViolation, match="test-running"):
        emit_figures({}, which=("fig3_running",))


def test_calibrate_cli(tmp_path, capsys):
    cfg = tmp_path / "null.json"
    cfg.write_text(json.dumps({"days": 60, "base_rate": 80}))
    assert cli(["calibrate", "--test", "variance", "--config", str(cfg), "--replicates", "5",
                "--out", str(tmp_path / "cal")]) == 0
    res = json.loads((tmp_path / "cal" / "calibration.json").read_text())
    assert set(res["alphas"]) == {"0.10", "0.05", "0.01"}
    assert "alpha=0.05" in capsys.readouterr().out
