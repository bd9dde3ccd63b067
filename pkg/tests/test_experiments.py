import json
import os

import pytest

import rcmwalk as rw
from rcmwalk.cli import main as cli_main
from rcmwalk.experiments import (
    ConfigError,
    ExperimentConfig,
    RunManifest,
    emit_report,
    run_experiment,
)


def decay_config(tmp_path, ensemble=2):
    return ExperimentConfig(
        kind="decay-fit",
        d=2,
        L=64,
        seed=7,
        outdir=str(tmp_path / "out"),
        law=rw.homogeneous(1.0),
        n_grid=(16, 64),
        ensemble=ensemble,
        params={"fit_min": 16, "fit_max": 64, "exponent_window": (0.8, 1.2)},
    )


def test_config_round_trip(tmp_path):
    cfg = decay_config(tmp_path)
    back = ExperimentConfig.from_json(cfg.to_json())
    assert back.descriptor() == cfg.descriptor()
    assert back.config_hash() == cfg.config_hash()


def test_validation_names_offending_field(tmp_path):
    cfg = decay_config(tmp_path)
    cfg.L = 32  # < n_max = 64
    with pytest.raises(ConfigError, match="^L:"):
        cfg.validate()
    cfg2 = decay_config(tmp_path)
    cfg2.kind = "unknown"
    with pytest.raises(ConfigError, match="^kind:"):
        cfg2.validate()


def test_decay_fit_run_and_determinism(tmp_path):
    cfg = decay_config(tmp_path)
    m1 = run_experiment(cfg)
    assert m1.summary["checks"]["exponents_in_window"]
    assert all(0.9 < e < 1.1 for e in m1.summary["exponents"])
    # deterministic re-run: identical output checksums
    m2 = run_experiment(cfg)
    assert m1.outputs == m2.outputs
    assert m1.config_hash == m2.config_hash
    text, ok = emit_report(m1)
    assert ok and "PASS" in text and "decay-fit" in text
    assert "+-" in text  # exponent CI rendered
    # manifest round-trips
    loaded = RunManifest.load(os.path.join(cfg.outdir, "manifest.json"))
    assert loaded.outputs == m1.outputs


def test_support_cap_truncates_with_marker(tmp_path):
    cfg = decay_config(tmp_path, ensemble=1)
    cfg.params["max_support_sites"] = (2 * 32 + 1) ** 2  # caps n_max at 32
    cfg.params["fit_min"] = 8
    cfg.params["fit_max"] = 64
    manifest = run_experiment(cfg)
    assert manifest.summary["truncated"]
    assert manifest.summary["n_max_effective"] == 32
    text, _ = emit_report(manifest)
    assert "TRUNCATED" in text


def test_parallel_workers_do_not_change_results(tmp_path):
    cfg = decay_config(tmp_path, ensemble=3)
    serial = run_experiment(cfg, max_workers=1)
    parallel = run_experiment(cfg, max_workers=3)
    assert serial.outputs == parallel.outputs


def test_gn_scan_and_report(tmp_path):
    cfg = ExperimentConfig(
        kind="gn-scan",
        d=2,
        L=8,
        seed=3,
        outdir=str(tmp_path / "gn"),
        ensemble=300,
        params={"p": 0.65, "N_grid": [2, 8]},
    )
    manifest = run_experiment(cfg)
    text, ok = emit_report(manifest)
    assert "gn.csv" in manifest.outputs
    assert manifest.summary["estimates"][1] > manifest.summary["estimates"][0]
    assert ok


def test_failed_check_reports_fail():
    manifest = RunManifest(
        config={"kind": "decay-fit", "d": 2},
        config_hash="x",
        code_version="0",
        started="",
        finished="",
        task_seeds=[],
        outputs={"a.csv": "00"},
        summary={"kind": "decay-fit", "exponents": [], "checks": {"broken": False}},
    )
    text, ok = emit_report(manifest)
    assert not ok and "FAIL: broken" in text


def test_empty_manifest_errors():
    manifest = RunManifest(
        config={}, config_hash="", code_version="", started="", finished="",
        task_seeds=[], outputs={}, summary={},
    )
    with pytest.raises(ConfigError):
        emit_report(manifest)


def test_trap_bound_experiment(tmp_path):
    cfg = ExperimentConfig(
        kind="trap-bound",
        d=2,
        L=24,
        seed=1,
        outdir=str(tmp_path / "tb"),
        law=rw.homogeneous(1.0),
        n_grid=(8, 10, 12),
        params={"anchor": (4, 0), "orient": 0, "weak": 0.01},
    )
    manifest = run_experiment(cfg)
    assert manifest.summary["checks"]["exact_dominates_bound"]


def test_annealed_experiment(tmp_path):
    cfg = ExperimentConfig(
        kind="annealed",
        d=2,
        L=8,
        seed=2,
        outdir=str(tmp_path / "an"),
        law=rw.two_value(0.7, 20),
        n_grid=(4, 8),
        ensemble=6,
    )
    manifest = run_experiment(cfg)
    assert len(manifest.summary["means"]) == 2


def test_cli_sample_and_kernel(tmp_path, capsys):
    out = tmp_path / "f.rcmf"
    rc = cli_main(
        ["sample", "--law", "two-value:0.7:10", "--d", "2", "--L", "8",
         "--seed", "5", "--out", str(out)]
    )
    assert rc == 0 and out.exists()
    loaded = rw.load_field(out)
    assert loaded.law.kind == "two_value"
    csv_out = tmp_path / "series.csv"
    rc = cli_main(
        ["kernel", "--field", str(out), "--mode", "exact", "--n-max", "8",
         "--out", str(csv_out)]
    )
    assert rc == 0 and csv_out.exists()
    rc = cli_main(
        ["kernel", "--field", str(out), "--mode", "mc", "--n-max", "4",
         "--walkers", "1000"]
    )
    assert rc == 0


def test_cli_run_and_report(tmp_path):
    cfg = decay_config(tmp_path, ensemble=1)
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(cfg.to_json())
    rc = cli_main(["run", "--config", str(cfg_path)])
    assert rc == 0
    rc = cli_main(["report", "--manifest", str(tmp_path / "out" / "manifest.json")])
    assert rc == 0


def test_cli_usage_errors(tmp_path):
    with pytest.raises(SystemExit) as exc:
        cli_main(["kernel", "--mode", "bogus"])
    assert exc.value.code == 2
    rc = cli_main(["run", "--config", str(tmp_path / "missing.json")])
    assert rc == 2
    # config validation error -> exit 2
    bad = decay_config(tmp_path)
    bad.L = 8
    p = tmp_path / "bad.json"
    p.write_text(bad.to_json())
    assert cli_main(["run", "--config", str(p)]) == 2


def test_cli_coarse_iso_traps(tmp_path):
    rc = cli_main(
        ["coarse", "--law", "two-value:0.7:10", "--d", "2", "--L", "10",
         "--seed", "3", "--alpha", "1.0", "--anchors", "20",
         "--out", str(tmp_path / "coarse")]
    )
    assert rc == 0 and (tmp_path / "coarse" / "census.csv").exists()
    rc = cli_main(
        ["iso", "--law", "homogeneous:1.0", "--d", "2", "--L", "1",
         "--seed", "0", "--mode", "exhaustive", "--out", str(tmp_path / "iso")]
    )
    assert rc == 0 and (tmp_path / "iso" / "profile.csv").exists()
    rc = cli_main(
        ["traps", "--law", "two-value:0.55:50", "--d", "2", "--L", "12",
         "--seed", "1", "--weak-max", "0.02", "--n-grid", "16", "64",
         "--out", str(tmp_path / "traps")]
    )
    assert rc == 0 and (tmp_path / "traps" / "manifest.json").exists()


def test_cli_gn(tmp_path):
    rc = cli_main(
        ["gn", "--p", "0.65", "--N-grid", "2", "6", "--ensemble", "150",
         "--seed", "4", "--out", str(tmp_path / "gn")]
    )
    assert rc == 0


def test_output_root_env(tmp_path, monkeypatch):
    monkeypatch.setenv("RCMWALK_OUT", str(tmp_path))
    monkeypatch.chdir(tmp_path)
    rc = cli_main(["sample", "--law", "homogeneous:1.0", "--d", "2", "--L", "3",
                   "--seed", "0"])
    assert rc == 0 and (tmp_path / "field.rcmf").exists()
