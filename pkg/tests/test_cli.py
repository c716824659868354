import hashlib
import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from iota_sim.cli import main

TRAIN_TOML = """\
[train]
dims = [4, 8, 2]
miners = [["honest"], ["honest"]]
seed = 7
epochs = 2
b_min = 1
batch_size = 4
"""


@pytest.fixture
def runner():
    return CliRunner()


def _hash_dir(d: Path) -> dict:
    return {
        p.name: hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(d.iterdir())
        if p.is_file()
    }


class TestTrain:
    def test_emits_artifacts(self, runner, tmp_path):
        cfg = tmp_path / "scenario.toml"
        cfg.write_text(TRAIN_TOML)
        out = tmp_path / "out"
        result = runner.invoke(main, ["train", "--config", str(cfg), "--out", str(out)])
        assert result.exit_code == 0, result.output
        names = {p.name for p in out.iterdir()}
        assert {
            "losses.csv",
            "b_eff.csv",
            "transfers.csv",
            "scores.csv",
            "pathways.csv",
            "incentives.csv",
            "losses.svg",
            "manifest.json",
        } <= names

    def test_rerun_byte_identical(self, runner, tmp_path):
        cfg = tmp_path / "scenario.toml"
        cfg.write_text(TRAIN_TOML)
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        for out in (out_a, out_b):
            result = runner.invoke(main, ["train", "--config", str(cfg), "--out", str(out)])
            assert result.exit_code == 0, result.output
        assert _hash_dir(out_a) == _hash_dir(out_b)

    def test_manifest_reproduces_run(self, runner, tmp_path):
        cfg = tmp_path / "scenario.toml"
        cfg.write_text(TRAIN_TOML)
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        result = runner.invoke(main, ["train", "--config", str(cfg), "--out", str(out_a)])
        assert result.exit_code == 0, result.output
        result = runner.invoke(
            main, ["train", "--config", str(out_a / "manifest.json"), "--out", str(out_b)]
        )
        assert result.exit_code == 0, result.output
        assert _hash_dir(out_a) == _hash_dir(out_b)

    def test_seed_override_changes_outputs(self, runner, tmp_path):
        cfg = tmp_path / "scenario.toml"
        cfg.write_text(TRAIN_TOML)
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        runner.invoke(main, ["train", "--config", str(cfg), "--out", str(out_a)])
        runner.invoke(main, ["train", "--config", str(cfg), "--seed", "8", "--out", str(out_b)])
        assert (out_a / "losses.csv").read_bytes() != (out_b / "losses.csv").read_bytes()

    def test_bad_config_exits_2(self, runner, tmp_path):
        cfg = tmp_path / "bad.toml"
        cfg.write_text("[train]\ndims = [4, 2]\n")  # missing miners
        result = runner.invoke(main, ["train", "--config", str(cfg)])
        assert result.exit_code == 2

    def test_missing_file_exits_2(self, runner):
        result = runner.invoke(main, ["train", "--config", "no/such/file.toml"])
        assert result.exit_code == 2


class TestResilience:
    def test_sweep(self, runner, tmp_path):
        out = tmp_path / "out"
        result = runner.invoke(
            main,
            ["bar-resilience", "--n", "10", "--k-max", "5", "--trials", "50", "--out", str(out)],
        )
        assert result.exit_code == 0, result.output
        rows = (out / "resilience.csv").read_text().strip().splitlines()
        assert rows[0] == "N,k,analytic_fraction,empirical_fraction"
        assert len(rows) == 7

    def test_k_max_exceeding_n_exits_2(self, runner, tmp_path):
        result = runner.invoke(
            main, ["bar-resilience", "--n", "5", "--k-max", "6", "--out", str(tmp_path)]
        )
        assert result.exit_code == 2


class TestClasp:
    def test_flags_reported(self, runner, tmp_path):
        cfg = tmp_path / "clasp.toml"
        cfg.write_text(
            '[clasp]\nlayers = 5\nminers_per_layer = 5\nmalicious = ["L1M0", "L3M4"]\n'
            "samples = 10000\nseed = 0\n"
        )
        out = tmp_path / "out"
        result = runner.invoke(main, ["clasp", "--config", str(cfg), "--out", str(out)])
        assert result.exit_code == 0, result.output
        assert "L1M0" in result.output and "L3M4" in result.output
        assert (out / "clasp_report.csv").exists()
        assert (out / "clasp_z.svg").exists()


class TestIncentiveSweep:
    def test_sweep_emits_grid(self, runner, tmp_path):
        cfg = tmp_path / "sweep.toml"
        cfg.write_text(
            "[sweep]\ngammas_hours = [1.0, 2.0]\nt_syncs_hours = [0.5, 1.0]\n"
            "horizon_hours = 60.0\nseed = 0\n"
        )
        out = tmp_path / "out"
        result = runner.invoke(main, ["incentive-sweep", "--config", str(cfg), "--out", str(out)])
        assert result.exit_code == 0, result.output
        rows = (out / "incentive_sweep.csv").read_text().strip().splitlines()
        assert len(rows) == 5  # header + 2x2 grid

    def test_short_horizon_exits_2(self, runner, tmp_path):
        cfg = tmp_path / "sweep.toml"
        cfg.write_text(
            "[sweep]\ngammas_hours = [10.0]\nt_syncs_hours = [1.0]\nhorizon_hours = 5.0\n"
        )
        result = runner.invoke(
            main, ["incentive-sweep", "--config", str(cfg), "--out", str(tmp_path / "o")]
        )
        assert result.exit_code == 2


class TestManifest:
    def test_contents(self, runner, tmp_path):
        out = tmp_path / "out"
        result = runner.invoke(
            main,
            ["bar-resilience", "--n", "6", "--k-max", "3", "--trials", "10", "--seed", "4", "--out", str(out)],
        )
        assert result.exit_code == 0, result.output
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["command"] == "bar-resilience"
        assert manifest["seed"] == 4
        assert "resilience.csv" in manifest["artifacts"]
