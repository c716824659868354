"""Scenario runner and metric emitter.

Each subcommand wraps one experiment family, loads a TOML config, runs it
deterministically from a single seed, and emits CSV files (canonical),
SVG charts (convenience) and a JSON run-manifest that can be fed back as
``--config`` to reproduce the run byte for byte.

Exit codes: 0 success, 2 config error, 3 protocol violation.
"""

import csv
import json
import os
import sys
from pathlib import Path

import click
import tomli

from . import __version__, butterfly, charts
from .clasp import run_toy_experiment
from .errors import InvalidConfigError, IotaSimError, ProtocolViolationError
from .incentives import stability_sweep
from .orchestrator import ScenarioConfig, run_scenario

HOUR = 3600.0


def _fail_config(message: str):
    click.echo(f"config error: {message}", err=True)
    sys.exit(2)


def _load_config(path: str | None, section: str) -> dict:
    """Read a TOML config (or a previously emitted JSON manifest)."""
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        _fail_config(f"no such file: {path}")
    try:
        if p.suffix == ".json":
            manifest = json.loads(p.read_text())
            return manifest.get("config", {})
        raw = tomli.loads(p.read_text())
    except (tomli.TOMLDecodeError, json.JSONDecodeError) as exc:
        _fail_config(f"cannot parse {path}: {exc}")
    return raw.get(section, raw)


def _out_dir(out: str | None) -> Path:
    d = Path(out or os.environ.get("IOTA_SIM_OUT", "out"))
    d.mkdir(parents=True, exist_ok=True)
    return d


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _write_manifest(out: Path, command: str, config: dict, seed: int, artifacts) -> None:
    manifest = {
        "tool_version": __version__,
        "command": command,
        "seed": seed,
        "config": config,
        "artifacts": sorted(str(a.name) for a in artifacts),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


@click.group()
@click.version_option(__version__)
def main():
    """Deterministic simulator for orchestrated decentralized training."""


@main.command()
@click.option("--config", "config_path", type=str, default=None, help="TOML config or manifest.")
@click.option("--seed", type=int, default=None, help="Override the scenario seed.")
@click.option("--out", type=str, default=None, help="Output directory (env IOTA_SIM_OUT).")
def train(config_path, seed, out):
    """Run a full training scenario and emit loss/B_eff/transfer/score CSVs."""
    raw = _load_config(config_path, "train")
    if seed is not None:
        raw["seed"] = seed
    try:
        config = ScenarioConfig.from_dict(raw)
    except InvalidConfigError as exc:
        _fail_config(str(exc))
    out_dir = _out_dir(out)
    try:
        report = run_scenario(config)
    except ProtocolViolationError as exc:
        click.echo(f"protocol violation: {exc}", err=True)
        sys.exit(3)

    artifacts = []

    def emit(name, header, rows):
        path = out_dir / name
        _write_csv(path, header, rows)
        artifacts.append(path)

    emit("losses.csv", ["step", "epoch", "loss"], report.losses)
    emit("b_eff.csv", ["epoch", "b_eff", "total_batches"], report.b_eff)
    emit(
        "transfers.csv",
        ["actor", "bytes_uploaded", "bytes_downloaded"],
        [(a, u, d) for a, (u, d) in report.transfers.items()],
    )
    emit(
        "scores.csv",
        ["epoch", "validator", "miner", "min_similarity", "passed", "score", "sim_time"],
        [
            (r["epoch"], r["validator"], r["miner"], r["min_similarity"], r["passed"], r["score"], r["sim_time"])
            for r in report.scores
        ],
    )
    n_layers = config.n_layers
    emit(
        "pathways.csv",
        ["sample_k"] + [f"layer{i}_miner" for i in range(n_layers)] + ["loss"],
        [(r.sample_k, *r.pathway, r.loss) for r in report.pathway_records],
    )
    emit(
        "incentives.csv",
        ["miner", "layer", "incentive", "flagged"],
        [
            (m, report.miner_layers[m], v, m in report.flags)
            for m, v in sorted(report.incentives.items())
        ],
    )
    svg = charts.line_chart(
        {"loss": [(s, l) for s, _, l in report.losses]},
        "training loss",
        "step",
        "mean squared error",
    )
    (out_dir / "losses.svg").write_text(svg)
    artifacts.append(out_dir / "losses.svg")
    _write_manifest(out_dir, "train", config.to_dict(), config.seed, artifacts)
    click.echo(f"wrote {len(artifacts) + 1} artifacts to {out_dir}")


@main.command("bar-resilience")
@click.option("--config", "config_path", type=str, default=None)
@click.option("--n", type=int, default=None, help="Miners in the layer.")
@click.option("--k-max", type=int, default=None, help="Largest failure count to sweep.")
@click.option("--trials", type=int, default=None, help="Monte-Carlo draws per k.")
@click.option("--seed", type=int, default=None)
@click.option("--out", type=str, default=None)
def bar_resilience(config_path, n, k_max, trials, seed, out):
    """Analytic vs Monte-Carlo valid-shard fraction under miner failures."""
    raw = _load_config(config_path, "resilience")
    n = n if n is not None else int(raw.get("n", 50))
    k_max = k_max if k_max is not None else int(raw.get("k_max", 25))
    trials = trials if trials is not None else int(raw.get("trials", 1000))
    seed = seed if seed is not None else int(raw.get("seed", 0))
    if n < 2:
        _fail_config(f"--n must be >= 2, got {n}")
    if k_max > n:
        _fail_config(f"--k-max {k_max} exceeds --n {n}")
    out_dir = _out_dir(out)
    ks = list(range(k_max + 1))
    empirical = butterfly.monte_carlo_resilience(n, ks, trials, seed)
    rows = [(n, k, butterfly.valid_shard_fraction(n, k), empirical[k]) for k in ks]
    path = out_dir / "resilience.csv"
    _write_csv(path, ["N", "k", "analytic_fraction", "empirical_fraction"], rows)
    svg = charts.line_chart(
        {
            "analytic": [(k, a) for _, k, a, _ in rows],
            "empirical": [(k, e) for _, k, _, e in rows],
        },
        f"merge resilience, N={n}",
        "failed miners k",
        "valid shard fraction",
    )
    (out_dir / "resilience.svg").write_text(svg)
    config = {"n": n, "k_max": k_max, "trials": trials, "seed": seed}
    _write_manifest(out_dir, "bar-resilience", config, seed, [path, out_dir / "resilience.svg"])
    click.echo(f"wrote resilience sweep for N={n} to {out_dir}")


@main.command("clasp")
@click.option("--config", "config_path", type=str, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--out", type=str, default=None)
def clasp_cmd(config_path, seed, out):
    """Pathway-loss attribution on the stochastic toy pipeline."""
    raw = _load_config(config_path, "clasp")
    layers = int(raw.get("layers", 5))
    miners_per_layer = int(raw.get("miners_per_layer", 5))
    malicious = list(raw.get("malicious", []))
    samples = int(raw.get("samples", 10000))
    z_threshold = float(raw.get("z_threshold", 2.5))
    seed = seed if seed is not None else int(raw.get("seed", 0))
    if layers < 1 or miners_per_layer < 1 or samples < 1:
        _fail_config("layers, miners_per_layer and samples must all be >= 1")
    out_dir = _out_dir(out)
    try:
        records, report = run_toy_experiment(
            layers, miners_per_layer, malicious, samples, seed, z_threshold
        )
    except IotaSimError as exc:
        _fail_config(str(exc))
    report_path = out_dir / "clasp_report.csv"
    _write_csv(
        report_path,
        ["miner", "layer", "count", "avg_loss", "z", "flagged"],
        [(s.miner_id, s.layer, s.count, s.avg_loss, s.z, s.flagged) for s in report.stats],
    )
    records_path = out_dir / "clasp_records.csv"
    _write_csv(
        records_path,
        ["sample_k"] + [f"layer{i}_miner" for i in range(layers)] + ["loss"],
        [(r.sample_k, *r.pathway, r.loss) for r in records],
    )
    ordered = sorted(report.stats, key=lambda s: -s.z)
    svg = charts.bar_chart(
        [s.miner_id for s in ordered],
        [s.z for s in ordered],
        "per-miner loss z-scores (descending)",
        "z-score",
        highlight=report.flagged,
    )
    (out_dir / "clasp_z.svg").write_text(svg)
    config = {
        "layers": layers,
        "miners_per_layer": miners_per_layer,
        "malicious": malicious,
        "samples": samples,
        "z_threshold": z_threshold,
        "seed": seed,
    }
    _write_manifest(
        out_dir, "clasp", config, seed, [report_path, records_path, out_dir / "clasp_z.svg"]
    )
    click.echo(f"flagged: {sorted(report.flagged) or 'none'}")


@main.command("incentive-sweep")
@click.option("--config", "config_path", type=str, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--out", type=str, default=None)
def incentive_sweep(config_path, seed, out):
    """Incentive stability (CV) over a (gamma, sync interval) grid."""
    raw = _load_config(config_path, "sweep")
    gammas_h = list(raw.get("gammas_hours", [1.0, 2.0, 5.0, 10.0]))
    t_syncs_h = list(raw.get("t_syncs_hours", [0.25, 0.5, 1.0]))
    horizon_h = float(raw.get("horizon_hours", 30.0 * max(gammas_h, default=10.0)))
    score_noise = float(raw.get("score_noise", 0.2))
    seed = seed if seed is not None else int(raw.get("seed", 0))
    if not gammas_h or not t_syncs_h:
        _fail_config("gammas_hours and t_syncs_hours must be non-empty")
    out_dir = _out_dir(out)
    try:
        cells = stability_sweep(
            [g * HOUR for g in gammas_h],
            [t * HOUR for t in t_syncs_h],
            horizon_h * HOUR,
            seed,
            score_noise=score_noise,
        )
    except IotaSimError as exc:
        _fail_config(str(exc))
    path = out_dir / "incentive_sweep.csv"
    _write_csv(
        path,
        ["gamma_hours", "t_sync_hours", "n_scores_expected", "n_scores_measured", "cv"],
        [
            (c.gamma / HOUR, c.t_sync / HOUR, c.n_scores_expected, c.n_scores_measured, c.cv)
            for c in cells
        ],
    )
    grid = [
        [next(c.cv for c in cells if c.gamma == g * HOUR and c.t_sync == t * HOUR) for t in t_syncs_h]
        for g in gammas_h
    ]
    svg = charts.heatmap(
        [f"{g:g}h" for g in gammas_h],
        [f"{t:g}h" for t in t_syncs_h],
        grid,
        "incentive stability (coefficient of variation)",
        "sync interval",
        "decay window",
    )
    (out_dir / "incentive_sweep.svg").write_text(svg)
    config = {
        "gammas_hours": gammas_h,
        "t_syncs_hours": t_syncs_h,
        "horizon_hours": horizon_h,
        "score_noise": score_noise,
        "seed": seed,
    }
    _write_manifest(out_dir, "incentive-sweep", config, seed, [path, out_dir / "incentive_sweep.svg"])
    click.echo(f"wrote sweep of {len(cells)} cells to {out_dir}")


if __name__ == "__main__":
    main()
