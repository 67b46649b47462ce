"""Command-line surface: generation, evaluation, training, pretraining,
dataset collection, placement transfer, annealing, rendering, plotting.

Exit codes: 0 success, 2 input/config error, 3 runtime divergence. Standard
output carries machine-readable JSON only; human logs go to standard error.
Every run directory gets a reproducibility manifest; interrupted artifacts
keep a ``.partial`` suffix.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import os
import platform
import sys
from dataclasses import dataclass, field
from pathlib import Path

import click
import numpy as np

from . import __version__, kernels
from .anneal import SaConfig, SweepResult, anneal as run_anneal, budget_configs, sweep
from .cost import evaluate, route_nets, smooth_congestion
from .env import EnvConfig
from .errors import Diverged, MacroplaceError, SchemaError
from .fdplace import FdParams
from .grid import GridSpec, Placement, select_grid
from .netlist import GenSpec, Netlist, generate_synthetic, load_netlist, save_netlist
from .neural import PlacementNet, load_checkpoint, save_checkpoint
from .render import render_curve_svg, render_svg
from .train import (
    PpoConfig,
    PretrainConfig,
    collect_dataset,
    load_dataset,
    pretrain_supervised,
    train_ppo,
    transfer,
)


# ---------------------------------------------------------------------------
# Run configuration (strict JSON, defaults everywhere)


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    netlists: tuple[str, ...] = ()
    batches: int = 50
    env: EnvConfig = field(default_factory=EnvConfig)
    ppo: PpoConfig = field(default_factory=PpoConfig)
    pretrain: PretrainConfig = field(default_factory=PretrainConfig)
    sa: SaConfig = field(default_factory=SaConfig)
    sa_sweep: int = 1
    sa_budget: int | None = None
    dataset_lams: tuple[float, ...] = (0.01,)
    dataset_seeds: tuple[int, ...] = (0,)
    snapshots_per_run: int = 10
    snapshot_interval: int = 1


def _build_dataclass(cls, doc: dict, where: str):
    names = {f.name for f in dataclasses.fields(cls)}
    extra = set(doc) - names
    if extra:
        raise SchemaError(f"{where}: unknown keys {sorted(extra)}")
    return cls(**doc)


def parse_run_config(text: str) -> RunConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise SchemaError(f"config is not valid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise SchemaError("config must be a JSON object")
    allowed = {
        "seed", "netlists", "batches", "env", "fd", "ppo", "pretrain", "sa",
        "sa_sweep", "sa_budget", "dataset_lams", "dataset_seeds",
        "snapshots_per_run", "snapshot_interval",
    }
    extra = set(doc) - allowed
    if extra:
        raise SchemaError(f"config: unknown keys {sorted(extra)}")
    seed = int(doc.get("seed", 0))
    fd = _build_dataclass(FdParams, doc.get("fd", {}), "config.fd")
    env_doc = dict(doc.get("env", {}))
    env = EnvConfig(
        lam=float(env_doc.pop("lam", 0.01)),
        max_density=float(env_doc.pop("max_density", 0.6)),
        seed=int(env_doc.pop("seed", seed)),
        fd_params=fd,
        q_table={int(k): float(v) for k, v in env_doc.pop("q_table", {}).items()} or None,
    )
    if env_doc:
        raise SchemaError(f"config.env: unknown keys {sorted(env_doc)}")
    ppo_doc = dict(doc.get("ppo", {}))
    ppo_doc.setdefault("seed", seed)
    pre_doc = dict(doc.get("pretrain", {}))
    pre_doc.setdefault("seed", seed)
    sa_doc = dict(doc.get("sa", {}))
    sa_doc.setdefault("seed", seed)
    if "moves" in sa_doc:
        sa_doc["moves"] = tuple(sa_doc["moves"])
    return RunConfig(
        seed=seed,
        netlists=tuple(doc.get("netlists", [])),
        batches=int(doc.get("batches", 50)),
        env=env,
        ppo=_build_dataclass(PpoConfig, ppo_doc, "config.ppo"),
        pretrain=_build_dataclass(PretrainConfig, pre_doc, "config.pretrain"),
        sa=_build_dataclass(SaConfig, sa_doc, "config.sa"),
        sa_sweep=int(doc.get("sa_sweep", 1)),
        sa_budget=doc.get("sa_budget"),
        dataset_lams=tuple(doc.get("dataset_lams", (0.01,))),
        dataset_seeds=tuple(doc.get("dataset_seeds", (0,))),
        snapshots_per_run=int(doc.get("snapshots_per_run", 10)),
        snapshot_interval=int(doc.get("snapshot_interval", 1)),
    )


def load_run_config(path: str | None) -> RunConfig:
    if path is None:
        return RunConfig()
    return parse_run_config(Path(path).read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# Placement interchange


def placement_to_json(placement: Placement) -> str:
    doc = {
        "positions": {
            str(k): {"x": v[0], "y": v[1]}
            for k, v in sorted(placement.positions.items())
        },
        "grid_cells": {
            str(k): {"row": v[0], "col": v[1]}
            for k, v in sorted(placement.grid_cells.items())
        },
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def placement_from_json(text: str) -> Placement:
    doc = json.loads(text)
    if not isinstance(doc, dict) or set(doc) - {"positions", "grid_cells"}:
        raise SchemaError("placement: expected only 'positions' and 'grid_cells'")
    positions = {}
    for k, v in doc.get("positions", {}).items():
        if set(v) != {"x", "y"}:
            raise SchemaError(f"placement position {k}: expected x and y")
        positions[int(k)] = (float(v["x"]), float(v["y"]))
    cells = {}
    for k, v in doc.get("grid_cells", {}).items():
        if set(v) != {"row", "col"}:
            raise SchemaError(f"placement cell {k}: expected row and col")
        cells[int(k)] = (int(v["row"]), int(v["col"]))
    return Placement(positions=positions, grid_cells=cells)


def write_manifest(out_dir: Path, command: str, config_doc) -> None:
    import torch

    manifest = {
        "command": command,
        "config": config_doc,
        "versions": {
            "macroplace": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "torch": torch.__version__,
            "kernels": kernels.impl.IMPL_NAME,
        },
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8"
    )


def _fail(message: str, code: int) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


# ---------------------------------------------------------------------------
# Commands


@click.group()
def main() -> None:
    """Macro placement toolkit: RL placer, SA baseline, shared cost kernel."""


@main.command()
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--spec", "spec_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
def generate(seed: int, spec_path: str, out_path: str) -> None:
    """Generate a synthetic netlist JSON file (deterministic in --seed)."""
    try:
        spec = GenSpec.from_dict(json.loads(Path(spec_path).read_text(encoding="utf-8")))
        nl = generate_synthetic(seed, spec)
    except (MacroplaceError, json.JSONDecodeError, TypeError, ValueError) as e:
        _fail(str(e), 2)
    save_netlist(nl, out_path)
    click.echo(f"wrote {out_path}", err=True)


@main.command("eval")
@click.option("--netlist", "netlist_path", type=click.Path(exists=True), required=True)
@click.option("--placement", "placement_path", type=click.Path(exists=True), required=True)
@click.option("--lam", type=float, default=0.01, show_default=True)
@click.option("--max-density", type=float, default=0.6, show_default=True)
def eval_cmd(netlist_path: str, placement_path: str, lam: float, max_density: float) -> None:
    """Evaluate a placement file; prints the cost breakdown JSON."""
    try:
        nl = load_netlist(netlist_path)
        placement = placement_from_json(Path(placement_path).read_text(encoding="utf-8"))
        grid = select_grid(nl)
        breakdown = evaluate(nl, placement, grid, lam=lam, max_density=max_density)
    except MacroplaceError as e:
        _fail(str(e), 2)
    click.echo(json.dumps(breakdown.to_dict(), sort_keys=True))


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
@click.option("--out-dir", type=click.Path(), required=True)
@click.option("--checkpoint", "init_checkpoint", type=click.Path(exists=True), default=None)
def train(config_path: str, out_dir: str, init_checkpoint: str | None) -> None:
    """PPO training over the configured netlists; writes checkpoint + metrics."""
    out = Path(out_dir)
    try:
        cfg = load_run_config(config_path)
        if not cfg.netlists:
            raise SchemaError("config.netlists must list at least one netlist")
        netlists = [load_netlist(p) for p in cfg.netlists]
        model = (
            load_checkpoint(init_checkpoint, shared_only=True)
            if init_checkpoint else None
        )
    except MacroplaceError as e:
        _fail(str(e), 2)
    write_manifest(out, "train", json.loads(Path(config_path).read_text()))
    metrics_path = out / "metrics.jsonl"
    stream = open(metrics_path.with_suffix(".jsonl.partial"), "w", encoding="utf-8")

    def on_batch(_idx, _model, entry):
        stream.write(json.dumps(entry, sort_keys=True) + "\n")
        stream.flush()

    try:
        result = train_ppo(
            netlists, batches=cfg.batches, model=model, config=cfg.ppo,
            env_config=cfg.env, callback=on_batch,
        )
    except Diverged as e:
        stream.close()
        save_checkpoint(model if model is not None else PlacementNet(seed=cfg.ppo.seed),
                        out / "checkpoint.npz.partial")
        _fail(str(e), 3)
    stream.close()
    os.replace(metrics_path.with_suffix(".jsonl.partial"), metrics_path)
    save_checkpoint(result.model, out / "checkpoint.npz")
    click.echo(json.dumps({"batches": cfg.batches,
                           "final_mean_reward": result.curve[-1]["mean_reward"]}))


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
def dataset(config_path: str, out_path: str) -> None:
    """Collect a placement dataset (JSON-lines) for supervised pretraining."""
    try:
        cfg = load_run_config(config_path)
        if not cfg.netlists:
            raise SchemaError("config.netlists must list at least one netlist")
        netlists = [load_netlist(p) for p in cfg.netlists]
    except MacroplaceError as e:
        _fail(str(e), 2)
    partial = out_path + ".partial"
    records = collect_dataset(
        netlists, cfg.dataset_lams, cfg.dataset_seeds,
        cfg.snapshots_per_run, out_path=partial,
        snapshot_interval=cfg.snapshot_interval, config=cfg.ppo,
    )
    os.replace(partial, out_path)
    write_manifest(Path(out_path).parent, "dataset",
                   json.loads(Path(config_path).read_text()))
    click.echo(json.dumps({"records": len(records), "path": out_path}))


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
@click.option("--dataset", "dataset_path", type=click.Path(exists=True), required=True)
@click.option("--out-dir", type=click.Path(), required=True)
def pretrain(config_path: str, dataset_path: str, out_dir: str) -> None:
    """Supervised reward-prediction pretraining; writes the encoder checkpoint."""
    out = Path(out_dir)
    try:
        cfg = load_run_config(config_path)
        netlists = [load_netlist(p) for p in cfg.netlists]
        records = load_dataset(dataset_path)
        result = pretrain_supervised(records, netlists, config=cfg.pretrain)
    except MacroplaceError as e:
        _fail(str(e), 2)
    write_manifest(out, "pretrain", json.loads(Path(config_path).read_text()))
    save_checkpoint(result.model, out / "pretrained.npz")
    (out / "curves.json").write_text(
        json.dumps({"train": result.train_curve, "valid": result.valid_curve}),
        encoding="utf-8",
    )
    click.echo(json.dumps({"epochs": cfg.pretrain.epochs,
                           "final_valid_loss": result.valid_curve[-1]}))


@main.command()
@click.option("--netlist", "netlist_path", type=click.Path(exists=True), required=True)
@click.option("--checkpoint", "checkpoint_path", type=click.Path(exists=True), default=None)
@click.option("--mode", type=click.Choice(["zero-shot", "finetune", "scratch"]),
              default="zero-shot", show_default=True)
@click.option("--duration", type=int, default=0, show_default=True,
              help="finetune/scratch training batches")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--out", "out_path", type=click.Path(), required=True)
def place(netlist_path: str, checkpoint_path: str | None, mode: str, duration: int,
          config_path: str | None, out_path: str) -> None:
    """Place a netlist with a (pre)trained policy; writes the placement JSON."""
    try:
        cfg = load_run_config(config_path)
        nl = load_netlist(netlist_path)
        mode_key = {"zero-shot": "zero_shot", "finetune": "finetune",
                    "scratch": "from_scratch"}[mode]
        if mode_key != "from_scratch" and checkpoint_path is None:
            raise SchemaError("--checkpoint is required unless --mode scratch")
        result = transfer(
            checkpoint_path if checkpoint_path else PlacementNet(seed=cfg.ppo.seed),
            nl, mode_key, duration=duration, config=cfg.ppo, env_config=cfg.env,
        )
    except Diverged as e:
        _fail(str(e), 3)
    except MacroplaceError as e:
        _fail(str(e), 2)
    if result.placement is None:
        _fail("no feasible placement produced (episode dead-ended)", 3)
    Path(out_path).write_text(placement_to_json(result.placement), encoding="utf-8")
    click.echo(json.dumps(result.cost.to_dict(), sort_keys=True))


@main.command("anneal")
@click.option("--netlist", "netlist_path", type=click.Path(exists=True), required=True)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--out-dir", type=click.Path(), required=True)
def anneal_cmd(netlist_path: str, config_path: str | None, out_dir: str) -> None:
    """Simulated-annealing placement (single chain or hyperparameter sweep)."""
    out = Path(out_dir)
    try:
        cfg = load_run_config(config_path)
        nl = load_netlist(netlist_path)
    except MacroplaceError as e:
        _fail(str(e), 2)
    write_manifest(
        out, "anneal",
        json.loads(Path(config_path).read_text()) if config_path else {},
    )
    if cfg.sa_sweep > 1:
        configs = (
            budget_configs(cfg.sa_sweep, cfg.sa_budget, seed=cfg.seed,
                           shift_radius=cfg.sa.shift_radius)
            if cfg.sa_budget
            else [dataclasses.replace(cfg.sa, seed=cfg.seed + i)
                  for i in range(cfg.sa_sweep)]
        )
        result: SweepResult = sweep(nl, configs, cfg.env)
        with open(out / "sweep.csv", "w", newline="", encoding="utf-8") as f:
            writer = csv.DictWriter(f, fieldnames=list(result.rows[0].keys()))
            writer.writeheader()
            writer.writerows(result.rows)
        best = result.best
        payload = {
            "configs": len(configs),
            "total_evaluations": result.total_evaluations,
            "best": best.best_cost.to_dict(),
        }
    else:
        best = run_anneal(nl, cfg.sa, cfg.env)
        payload = {
            "evaluations": best.evaluations,
            "accepted": best.accepted,
            "rejected": best.rejected,
            "best": best.best_cost.to_dict(),
        }
    (out / "best_placement.json").write_text(
        placement_to_json(best.best_placement), encoding="utf-8"
    )
    click.echo(json.dumps(payload, sort_keys=True))


@main.command()
@click.option("--netlist", "netlist_path", type=click.Path(exists=True), required=True)
@click.option("--placement", "placement_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--congestion", "with_congestion", is_flag=True, default=False)
def render(netlist_path: str, placement_path: str, out_path: str,
           with_congestion: bool) -> None:
    """Render a placement to SVG (deterministic byte output)."""
    try:
        nl = load_netlist(netlist_path)
        placement = placement_from_json(Path(placement_path).read_text(encoding="utf-8"))
        missing = [n.id for n in nl.nodes
                   if n.id not in placement.positions and n.kind.value != "port"]
        if missing:
            raise SchemaError(f"placement incomplete: missing nodes {missing[:5]}")
        grid = select_grid(nl)
        cong = (
            smooth_congestion(route_nets(nl, placement, grid))
            if with_congestion else None
        )
    except MacroplaceError as e:
        _fail(str(e), 2)
    Path(out_path).write_text(render_svg(nl, placement, grid, cong), encoding="utf-8")
    click.echo(f"wrote {out_path}", err=True)


@main.command()
@click.option("--metrics", "metrics_path", type=click.Path(exists=True), required=True)
@click.option("--field", "field_name", default="mean_reward", show_default=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
def plot(metrics_path: str, field_name: str, out_path: str) -> None:
    """Plot one field of a metrics JSON-lines stream to SVG."""
    points = []
    with open(metrics_path, "r", encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            entry = json.loads(line)
            if field_name in entry:
                points.append((float(entry["batch"]), float(entry[field_name])))
    Path(out_path).write_text(render_curve_svg(points, title=field_name),
                              encoding="utf-8")
    click.echo(f"wrote {out_path}", err=True)


if __name__ == "__main__":
    main()
