import json
import os

import pytest

from diffwatt import simulate
from diffwatt.cli import RunConfig, main, run_pipeline


@pytest.fixture(scope="module")
def waste_pair(tmp_path_factory):
    out = tmp_path_factory.mktemp("waste")
    manifest = simulate.preset("tf32_misconfig")
    return simulate.write_scenario(manifest, str(out))


@pytest.fixture(scope="module")
def null_pair(tmp_path_factory):
    out = tmp_path_factory.mktemp("null")
    manifest = simulate.preset("layout_null")
    return simulate.write_scenario(manifest, str(out))


def test_validate_ok(waste_pair, capsys):
    assert main(["validate", waste_pair[0]]) == 0
    assert "OK" in capsys.readouterr().out


def test_validate_broken_file(tmp_path, capsys):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"type":"tensor"}\n')
    assert main(["validate", str(bad)]) == 1
    assert "error" in capsys.readouterr().err


def test_graph_dot_output(waste_pair, tmp_path):
    dot = tmp_path / "g.dot"
    assert main(["graph", waste_pair[0], "--dot", str(dot)]) == 0
    assert dot.read_text().startswith("digraph")


def test_tensors_lists_pairs(waste_pair, capsys):
    assert main(["tensors", waste_pair[0], waste_pair[1], "--epsilon", "1e-3"]) == 0
    out = capsys.readouterr().out
    assert "x0" in out


def test_match_writes_pairs_json(waste_pair, tmp_path):
    out = tmp_path / "pairs.json"
    assert main(["match", waste_pair[0], waste_pair[1], "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["pairs"]
    assert all({"nodes_a", "nodes_b", "depth"} <= set(p) for p in doc["pairs"])


def test_energy_ledger_json(waste_pair, capsys):
    assert main(["energy", waste_pair[0], "--method", "ground_truth"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["method"] == "ground_truth"
    assert doc["total_joules"] > 0


def test_detect_exit_code_and_findings(waste_pair, tmp_path):
    out = tmp_path / "findings.json"
    code = main(["detect", waste_pair[0], waste_pair[1], "--threshold", "0.10",
                 "--method", "ground_truth", "--out", str(out)])
    assert code == 2
    doc = json.loads(out.read_text())
    assert any(f["verdict"] == "waste" for f in doc["findings"])


def test_diagnose_from_findings_file(waste_pair, tmp_path):
    findings = tmp_path / "findings.json"
    main(["detect", waste_pair[0], waste_pair[1], "--out", str(findings)])
    out = tmp_path / "diagnosis.json"
    assert main(["diagnose", waste_pair[0], waste_pair[1],
                 "--findings", str(findings), "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["diagnoses"][0]["kind"] == "misconfiguration"
    assert doc["diagnoses"][0]["source"] == "config:matmul.allow_tf32"


def test_run_exit_codes(waste_pair, null_pair, tmp_path):
    assert main(["run", null_pair[0], null_pair[1],
                 "--out-dir", str(tmp_path / "null_out")]) == 0
    assert main(["run", waste_pair[0], waste_pair[1],
                 "--out-dir", str(tmp_path / "waste_out")]) == 2
    assert main(["run", waste_pair[0], str(tmp_path / "missing.jsonl"),
                 "--out-dir", str(tmp_path / "err_out")]) == 1


def test_run_writes_reports_and_figures(waste_pair, tmp_path):
    out = tmp_path / "out"
    code = main(["run", waste_pair[0], waste_pair[1], "--out-dir", str(out),
                 "--keep-intermediates"])
    assert code == 2
    assert (out / "report.json").exists()
    assert (out / "findings.tsv").read_text().startswith("rank\t")
    assert (out / "summary.txt").exists()
    assert (out / "figures" / "segment_energy.png").exists()
    assert (out / "figures" / "power_timeline.png").exists()
    assert (out / "intermediates.json").exists()
    doc = json.loads((out / "report.json").read_text())
    assert doc["diagnoses"][0]["source"] == "config:matmul.allow_tf32"
    assert doc["matching"]["pair_count"] >= 1


def test_pipeline_reports_are_idempotent(waste_pair, tmp_path):
    cfg1 = RunConfig(out_dir=str(tmp_path / "r1"))
    cfg2 = RunConfig(out_dir=str(tmp_path / "r2"))
    run_pipeline(waste_pair[0], waste_pair[1], cfg1)
    run_pipeline(waste_pair[0], waste_pair[1], cfg2)
    r1 = json.loads((tmp_path / "r1" / "report.json").read_text())
    r2 = json.loads((tmp_path / "r2" / "report.json").read_text())
    for doc in (r1, r2):
        doc["matching"].pop("wall_time_s")
    assert r1 == r2


def test_simulate_preset_and_manifest(tmp_path):
    out1 = tmp_path / "p"
    assert main(["simulate", "--preset", "attention_block", "--out-dir", str(out1)]) == 0
    assert (out1 / "trace_a.jsonl").exists()

    manifest_path = tmp_path / "m.json"
    manifest = simulate.ScenarioManifest(workload="cli", seed=5, template="chain", length=3)
    manifest_path.write_text(json.dumps(manifest.to_dict(include_expected=False)))
    out2 = tmp_path / "m"
    assert main(["simulate", "--manifest", str(manifest_path), "--out-dir", str(out2)]) == 0
    assert (out2 / "trace_b.jsonl").exists()


def test_seed_env_override(tmp_path, monkeypatch):
    manifest = simulate.ScenarioManifest(workload="env", seed=5, template="chain", length=3)
    path = tmp_path / "m.json"
    path.write_text(json.dumps(manifest.to_dict(include_expected=False)))
    monkeypatch.setenv("DIFFWATT_SEED", "99")
    main(["simulate", "--manifest", str(path), "--out-dir", str(tmp_path / "a")])
    monkeypatch.delenv("DIFFWATT_SEED")
    main(["simulate", "--manifest", str(path), "--out-dir", str(tmp_path / "b")])
    a = (tmp_path / "a" / "trace_a.jsonl").read_text().splitlines()[0]
    b = (tmp_path / "b" / "trace_a.jsonl").read_text().splitlines()[0]
    assert json.loads(a)["seed"] == 99
    assert json.loads(b)["seed"] == 5


def test_fuzz_writes_scenarios(tmp_path):
    out = tmp_path / "corpus"
    assert main(["fuzz", "--seed", "7", "--count", "3", "--out-dir", str(out)]) == 0
    subdirs = sorted(p.name for p in out.iterdir())
    assert subdirs == ["scenario_000", "scenario_001", "scenario_002"]
    for sub in subdirs:
        assert (out / sub / "ground_truth.json").exists()


def test_selfcheck_passes(tmp_path, capsys):
    assert main(["selfcheck", "--out-dir", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") >= 5
    assert "FAIL" not in out
    assert (tmp_path / "sampler_errors.png").exists()


def test_selfcheck_with_loose_threshold_misses_the_misconfig(capsys):
    # With the threshold cranked to 0.5 the 12.5%-style preset falls below it.
    code = main(["selfcheck", "--threshold", "0.5"])
    out = capsys.readouterr().out
    assert code == 1
    assert "FAIL misconfiguration preset" in out
