"""End-to-end exercises of the command-line interface.

The flow test drives synth -> ingest -> run -> report through real files in a
temp directory; the rest pin exit codes and the override flags.
"""

import json
from pathlib import Path

from click.testing import CliRunner

from coinfactors.cli import main
from coinfactors.panel import write_panel_csv
from coinfactors.synth import generate_synthetic, scenario


def _config(path: Path, doc: dict) -> str:
    path.write_text(json.dumps(doc, indent=2))
    return str(path)


def _capm_specs() -> list[dict]:
    return [
        {"label": "capm-u", "factors": "CAPM", "beta": {"mode": "unconditional"}},
        {"label": "capm-c", "factors": "CAPM", "beta": {"mode": "conditional"}},
    ]


def _snapshot(directory: Path) -> dict[str, bytes]:
    return {
        str(p.relative_to(directory)): p.read_bytes()
        for p in sorted(directory.rglob("*"))
        if p.is_file()
    }


def test_version_flag():
    result = CliRunner().invoke(main, ["--version"])
    assert result.exit_code == 0
    assert "coinfactors" in result.output


def test_synth_ingest_run_report_flow(tmp_path):
    runner = CliRunner()

    synth_dir = tmp_path / "synth"
    synth_cfg = _config(
        tmp_path / "synth.json",
        {
            "synth": {"scenario": "B", "n_coins": 25, "n_days": 480, "emit_raw": True},
            "seed": 11,
            "output_dir": str(synth_dir),
        },
    )
    result = runner.invoke(main, ["synth", "--config", synth_cfg])
    assert result.exit_code == 0, result.output + result.stderr
    assert "scenario B" in result.output and "seed 11" in result.output
    assert (synth_dir / "panel.csv").is_file()
    assert (synth_dir / "truth.json").is_file()
    assert (synth_dir / "raw" / "epu.csv").is_file()
    assert (synth_dir / "raw" / "riskfree.csv").is_file()
    market = sorted((synth_dir / "raw" / "market").glob("*.csv"))
    assert len(market) == 26  # 25 coins plus the BTC conditioning series
    assert (synth_dir / "raw" / "market" / "BTC.csv") in market

    manifest = json.loads((synth_dir / "manifest.json").read_text())
    assert manifest["command"] == "synth"
    assert manifest["seed"] == 11
    assert manifest["inputs"] == {}
    assert manifest["outputs"] == sorted(manifest["outputs"])
    assert "panel.csv" in manifest["outputs"] and "truth.json" in manifest["outputs"]
    assert manifest["config"]["synth"]["scenario"] == "B"
    assert "timestamp" not in manifest and "created" not in manifest

    ingest_dir = tmp_path / "ingest"
    ingest_cfg = _config(
        tmp_path / "ingest.json",
        {
            "data": {
                "market_dir": str(synth_dir / "raw" / "market"),
                "epu_file": str(synth_dir / "raw" / "epu.csv"),
                "riskfree_file": str(synth_dir / "raw" / "riskfree.csv"),
            },
            "output_dir": str(ingest_dir),
        },
    )
    result = runner.invoke(main, ["ingest", "--config", ingest_cfg])
    assert result.exit_code == 0, result.output + result.stderr
    assert "panel:" in result.output and "26 coins" in result.output
    assert (ingest_dir / "panel.csv").is_file()
    assert (ingest_dir / "drops.csv").is_file()
    manifest = json.loads((ingest_dir / "manifest.json").read_text())
    assert manifest["command"] == "ingest"
    names = {Path(key).name for key in manifest["inputs"]}
    assert names >= {"epu.csv", "riskfree.csv"}
    assert all(len(digest) == 64 for digest in manifest["inputs"].values())

    run_dir = tmp_path / "run"
    run_cfg = _config(
        tmp_path / "run.json",
        {
            "panel_file": str(ingest_dir / "panel.csv"),
            "specs": _capm_specs(),
            "output_dir": str(run_dir),
        },
    )
    result = runner.invoke(main, ["run", "--config", run_cfg])
    assert result.exit_code == 0, result.output + result.stderr
    assert "capm-u:" in result.output and "capm-c:" in result.output
    for name in ("comparison.csv", "anomalies.csv", "pairs.csv", "comparison.md"):
        assert (run_dir / name).is_file()
    for label in ("capm-u", "capm-c"):
        for suffix in ("factors", "first_pass", "risk_adjusted", "crosssection"):
            assert (run_dir / f"{label}_{suffix}.csv").is_file()
        assert (run_dir / f"{label}_cumulative.svg").is_file()
    manifest = json.loads((run_dir / "manifest.json").read_text())
    assert manifest["command"] == "run"
    assert {Path(key).name for key in manifest["inputs"]} == {"panel.csv"}
    assert manifest["config"]["econometrics"]["significance_z"] == 1.96

    before = _snapshot(run_dir)
    result = runner.invoke(main, ["run", "--config", run_cfg])
    assert result.exit_code == 0, result.output + result.stderr
    assert _snapshot(run_dir) == before  # byte-identical rerun

    result = runner.invoke(main, ["report", "--output", str(run_dir)])
    assert result.exit_code == 0, result.output + result.stderr
    assert "re-rendered" in result.output
    assert _snapshot(run_dir) == before  # re-render reproduces the same bytes


def test_synth_seed_and_output_overrides(tmp_path):
    runner = CliRunner()
    section = {"scenario": "A", "n_coins": 6, "n_days": 220, "emit_raw": False}

    plain_dir = tmp_path / "plain"
    plain_cfg = _config(
        tmp_path / "plain.json",
        {"synth": dict(section), "seed": 7, "output_dir": str(plain_dir)},
    )
    assert runner.invoke(main, ["synth", "--config", plain_cfg]).exit_code == 0

    ignored_dir = tmp_path / "ignored"
    override_dir = tmp_path / "override"
    override_cfg = _config(
        tmp_path / "override.json",
        {"synth": dict(section), "seed": 1, "output_dir": str(ignored_dir)},
    )
    result = CliRunner().invoke(
        main,
        [
            "synth",
            "--config",
            override_cfg,
            "--seed",
            "7",
            "--output",
            str(override_dir),
        ],
    )
    assert result.exit_code == 0, result.output + result.stderr
    assert not ignored_dir.exists()

    plain_panel = (plain_dir / "panel.csv").read_bytes()
    assert (override_dir / "panel.csv").read_bytes() == plain_panel
    manifest = json.loads((override_dir / "manifest.json").read_text())
    assert manifest["seed"] == 7


def test_missing_config_file_is_validation_error(tmp_path):
    result = CliRunner().invoke(main, ["synth", "--config", str(tmp_path / "nope.json")])
    assert result.exit_code == 2
    assert "error:" in result.stderr


def test_unknown_config_key_is_validation_error(tmp_path):
    cfg = _config(tmp_path / "cfg.json", {"bogus": 1, "output_dir": str(tmp_path / "o")})
    result = CliRunner().invoke(main, ["ingest", "--config", cfg])
    assert result.exit_code == 2
    assert "bogus" in result.stderr


def test_synth_requires_section_and_seed(tmp_path):
    out = str(tmp_path / "out")
    no_section = _config(tmp_path / "a.json", {"output_dir": out, "seed": 3})
    result = CliRunner().invoke(main, ["synth", "--config", no_section])
    assert result.exit_code == 2

    no_seed = _config(
        tmp_path / "b.json",
        {
            "synth": {"scenario": "A", "n_coins": 5, "n_days": 210},
            "output_dir": out,
        },
    )
    result = CliRunner().invoke(main, ["synth", "--config", no_seed])
    assert result.exit_code == 2
    assert "seed" in result.stderr


def test_run_requires_specs(tmp_path, synth_a):
    panel, _ = synth_a
    panel_path = tmp_path / "panel.csv"
    write_panel_csv(panel, panel_path)
    cfg = _config(
        tmp_path / "cfg.json",
        {"panel_file": str(panel_path), "output_dir": str(tmp_path / "out")},
    )
    result = CliRunner().invoke(main, ["run", "--config", cfg])
    assert result.exit_code == 2
    assert "specs" in result.stderr


def test_run_rejects_riskfree_mode_mismatch_with_panel_file(tmp_path, synth_a):
    panel, _ = synth_a
    panel_path = tmp_path / "panel.csv"
    write_panel_csv(panel, panel_path)
    spec = {
        "label": "capm-btc",
        "factors": "CAPM",
        "beta": {"mode": "unconditional"},
        "riskfree_mode": "btc",
    }
    cfg = _config(
        tmp_path / "cfg.json",
        {
            "panel_file": str(panel_path),
            "specs": [spec],
            "output_dir": str(tmp_path / "out"),
        },
    )
    result = CliRunner().invoke(main, ["run", "--config", cfg])
    assert result.exit_code == 2
    assert "btc" in result.stderr


def test_run_estimation_failure_exits_4(tmp_path):
    panel, _ = generate_synthetic(scenario("A", n_coins=6, n_days=220, seed=3))
    panel_path = tmp_path / "panel.csv"
    write_panel_csv(panel, panel_path)
    cfg = _config(
        tmp_path / "cfg.json",
        {
            "panel_file": str(panel_path),
            "specs": _capm_specs()[:1],
            "pipeline": {"floor_base": 10000},
            "output_dir": str(tmp_path / "out"),
        },
    )
    result = CliRunner().invoke(main, ["run", "--config", cfg])
    assert result.exit_code == 4
    assert "capm-u" in result.stderr


def test_unwritable_output_dir_exits_3(tmp_path):
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    cfg = _config(
        tmp_path / "cfg.json",
        {
            "synth": {"scenario": "A", "n_coins": 5, "n_days": 210},
            "seed": 2,
            "output_dir": str(blocker / "out"),
        },
    )
    result = CliRunner().invoke(main, ["synth", "--config", cfg])
    assert result.exit_code == 3


def test_report_requires_manifest(tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    result = CliRunner().invoke(main, ["report", "--output", str(empty)])
    assert result.exit_code == 2
    assert "manifest" in result.stderr
