"""PPO policy optimization, placement-dataset generation, supervised
reward-prediction pretraining, and the zero-shot / finetune / from-scratch
transfer protocols."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, asdict
from typing import Callable, Literal, Mapping, Sequence

import numpy as np
import torch

from .cost import CostBreakdown, infeasible_reward
from .env import (
    EnvConfig,
    MASK_SIDE,
    Observation,
    Trajectory,
    rollout,
    terminal_observation,
)
from .errors import DeadEndError, Diverged, EmptyDataset
from .grid import GridSpec, Placement
from .netlist import Netlist
from .neural import (
    PlacementNet,
    TorchPolicy,
    load_checkpoint,
    masked_log_probs,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PpoConfig:
    clip_eps: float = 0.2
    epochs: int = 4
    episodes_per_batch: int = 16
    learning_rate: float = 3e-4
    value_weight: float = 0.5
    entropy_weight: float = 0.01
    gamma: float = 1.0  # terminal-reward episodic task; returns are constant
    seed: int = 0


def compute_advantages(traj: Trajectory) -> tuple[np.ndarray, np.ndarray]:
    """Per-step returns-to-go and advantages for one episode.

    With gamma = 1 and reward only at the terminal step, the return at every
    step is the episode reward; the advantage is return minus the recorded
    value estimate. Batch-level normalization happens in the caller.
    """
    G = np.full(len(traj.steps), traj.reward, dtype=np.float64)
    values = np.array([s.value for s in traj.steps], dtype=np.float64)
    return G, G - values


def normalize_advantages(adv: np.ndarray) -> np.ndarray:
    return (adv - adv.mean()) / (adv.std() + 1e-8)


def clipped_surrogate(ratio, advantage, clip_eps: float):
    """min(r * A, clip(r, 1 - eps, 1 + eps) * A), elementwise."""
    ratio = torch.as_tensor(ratio)
    advantage = torch.as_tensor(advantage)
    clipped = torch.clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps)
    return torch.minimum(ratio * advantage, clipped * advantage)


def ppo_loss(
    model: PlacementNet,
    batch: Sequence[tuple[str, Trajectory]],
    advantages: np.ndarray,
    returns: np.ndarray,
    config: PpoConfig,
) -> tuple[torch.Tensor, dict]:
    """Clipped-surrogate PPO loss over a batch of (netlist-key, trajectory).

    loss = -E[min(r A, clip(r, 1-eps, 1+eps) A)]
           + value_weight * MSE(value, return)
           - entropy_weight * mean masked entropy
    """
    states = []
    masks = []
    actions128 = []
    old_logp = []
    for key, traj in batch:
        for rec in traj.steps:
            emb = model.encode(rec.observation, key)
            states.append(emb.state())
            m = np.zeros((MASK_SIDE, MASK_SIDE), dtype=bool)
            m[: rec.observation.rows, : rec.observation.cols] = rec.mask.astype(bool)
            masks.append(m.ravel())
            r, c = divmod(rec.action, rec.observation.cols)
            actions128.append(r * MASK_SIDE + c)
            old_logp.append(rec.log_prob)

    dtype = next(model.parameters()).dtype
    states_t = torch.stack(states)
    mask_t = torch.as_tensor(np.array(masks))
    act_t = torch.as_tensor(np.array(actions128), dtype=torch.long)
    old_logp_t = torch.as_tensor(np.array(old_logp), dtype=dtype)
    adv_t = torch.as_tensor(advantages, dtype=dtype)
    ret_t = torch.as_tensor(returns, dtype=dtype)

    logits = model.policy_logits(states_t).reshape(len(states), -1)
    logp_all = masked_log_probs(logits, mask_t)
    logp = logp_all.gather(1, act_t.unsqueeze(1)).squeeze(1)
    probs = torch.exp(logp_all)
    plogp = torch.where(mask_t, probs * logp_all, torch.zeros_like(probs))
    entropy = -plogp.sum(dim=1)

    ratio = torch.exp(logp - old_logp_t)
    surrogate = clipped_surrogate(ratio, adv_t, config.clip_eps)
    policy_loss = -surrogate.mean()

    values = model.value_forward(states_t)
    value_loss = torch.mean((values - ret_t) ** 2)

    loss = (
        policy_loss
        + config.value_weight * value_loss
        - config.entropy_weight * entropy.mean()
    )
    parts = {
        "policy_loss": float(policy_loss.detach()),
        "value_loss": float(value_loss.detach()),
        "entropy": float(entropy.mean().detach()),
    }
    return loss, parts


BatchCallback = Callable[[int, PlacementNet, dict], None]


@dataclass
class TrainResult:
    model: PlacementNet
    curve: list[dict] = field(default_factory=list)


def train_ppo(
    netlists: Sequence[Netlist],
    batches: int,
    model: PlacementNet | None = None,
    config: PpoConfig | None = None,
    env_config: EnvConfig | None = None,
    callback: BatchCallback | None = None,
) -> TrainResult:
    """Round-robin episode collection + clipped-objective updates.

    Deterministic in (netlists, initial model, config): episode seeds come
    from one master generator, sampling uses numpy, torch stays on CPU.
    Raises Diverged when the loss goes non-finite.
    """
    config = config or PpoConfig()
    env_config = env_config or EnvConfig()
    if model is None:
        model = PlacementNet(seed=config.seed)
    keys = [model.bind_netlist(nl) for nl in netlists]
    policies = [TorchPolicy(model, nl) for nl in netlists]
    opt = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    master = np.random.default_rng(config.seed)
    curve: list[dict] = []

    for batch_idx in range(batches):
        batch: list[tuple[str, Trajectory]] = []
        for e in range(config.episodes_per_batch):
            i = e % len(netlists)
            seed_e = int(master.integers(2**31))
            try:
                traj = rollout(netlists[i], policies[i], "sample", seed_e, env_config)
            except DeadEndError as exc:
                traj = exc.trajectory
            batch.append((keys[i], traj))

        returns_list = []
        adv_list = []
        for _, traj in batch:
            G, A = compute_advantages(traj)
            returns_list.append(G)
            adv_list.append(A)
        returns = np.concatenate(returns_list)
        advantages = normalize_advantages(np.concatenate(adv_list))

        model.train()
        parts = {}
        for _ in range(config.epochs):
            loss, parts = ppo_loss(model, batch, advantages, returns, config)
            if not torch.isfinite(loss):
                raise Diverged(f"non-finite loss at batch {batch_idx}")
            opt.zero_grad()
            loss.backward()
            opt.step()
        model.eval()
        model.train_steps += 1

        entry = {
            "batch": batch_idx,
            "mean_reward": float(np.mean([t.reward for _, t in batch])),
            "best_reward": float(np.max([t.reward for _, t in batch])),
            "aborted": sum(1 for _, t in batch if t.aborted),
            **parts,
        }
        curve.append(entry)
        if callback is not None:
            callback(batch_idx, model, entry)
    return TrainResult(model=model, curve=curve)


# ---------------------------------------------------------------------------
# Placement dataset generation (for supervised pretraining)


@dataclass(frozen=True)
class PlacementDatasetRecord:
    netlist: str            # source netlist fingerprint
    lam: float
    seed: int
    snapshot: int
    label_wirelength: float
    label_congestion: float
    grid_rows: int
    grid_cols: int
    positions: Mapping[int, tuple[float, float]]
    grid_cells: Mapping[int, tuple[int, int]]

    def to_json(self) -> str:
        doc = asdict(self)
        doc["positions"] = {str(k): list(v) for k, v in self.positions.items()}
        doc["grid_cells"] = {str(k): list(v) for k, v in self.grid_cells.items()}
        return json.dumps(doc, sort_keys=True)

    @staticmethod
    def from_json(line: str) -> "PlacementDatasetRecord":
        doc = json.loads(line)
        doc["positions"] = {
            int(k): (float(v[0]), float(v[1])) for k, v in doc["positions"].items()
        }
        doc["grid_cells"] = {
            int(k): (int(v[0]), int(v[1])) for k, v in doc["grid_cells"].items()
        }
        return PlacementDatasetRecord(**doc)

    def placement(self) -> Placement:
        return Placement(dict(self.positions), dict(self.grid_cells))


def collect_dataset(
    netlists: Sequence[Netlist],
    lams: Sequence[float],
    seeds: Sequence[int],
    snapshots_per_run: int,
    out_path=None,
    snapshot_interval: int = 1,
    config: PpoConfig | None = None,
) -> list[PlacementDatasetRecord]:
    """Train fresh policies per (netlist, lambda, seed) and snapshot the
    greedy placement every ``snapshot_interval`` batches.

    Labels are the cost module's evaluation of the stored placement. Failing
    runs are skipped with a logged count; record count is
    len(netlists) * len(lams) * len(seeds) * snapshots_per_run when all runs
    succeed.
    """
    config = config or PpoConfig()
    records: list[PlacementDatasetRecord] = []
    skipped = 0
    for nl in netlists:
        fp = nl.fingerprint()
        for lam in lams:
            for seed in seeds:
                env_config = EnvConfig(lam=lam, seed=seed)
                model = PlacementNet(seed=seed)
                policy = TorchPolicy(model, nl)
                taken = 0

                def snap(batch_idx, _model, _entry):
                    nonlocal taken
                    if (batch_idx + 1) % snapshot_interval or taken >= snapshots_per_run:
                        return
                    traj = rollout(nl, policy, "greedy", seed, env_config)
                    records.append(
                        PlacementDatasetRecord(
                            netlist=fp, lam=lam, seed=seed, snapshot=taken,
                            label_wirelength=traj.cost.wirelength,
                            label_congestion=traj.cost.congestion,
                            grid_rows=traj.steps[0].observation.rows,
                            grid_cols=traj.steps[0].observation.cols,
                            positions={
                                k: tuple(v)
                                for k, v in traj.final_placement.positions.items()
                            },
                            grid_cells={
                                k: tuple(v)
                                for k, v in traj.final_placement.grid_cells.items()
                            },
                        )
                    )
                    taken += 1

                try:
                    train_ppo(
                        [nl], batches=snapshots_per_run * snapshot_interval,
                        model=model,
                        config=PpoConfig(**{**asdict(config), "seed": seed}),
                        env_config=env_config, callback=snap,
                    )
                except Exception as exc:  # noqa: BLE001 - skip failed runs
                    skipped += 1
                    log.warning("dataset run (lam=%s seed=%s) failed: %s", lam, seed, exc)
    if skipped:
        log.warning("%d dataset runs skipped", skipped)
    if out_path is not None:
        with open(out_path, "w", encoding="utf-8") as f:
            for rec in records:
                f.write(rec.to_json() + "\n")
    return records


def load_dataset(path) -> list[PlacementDatasetRecord]:
    with open(path, "r", encoding="utf-8") as f:
        return [PlacementDatasetRecord.from_json(line) for line in f if line.strip()]


# ---------------------------------------------------------------------------
# Supervised pretraining


@dataclass(frozen=True)
class PretrainConfig:
    epochs: int = 30
    learning_rate: float = 1e-3
    wirelength_weight: float = 1.0
    congestion_weight: float = 1.0
    valid_fraction: float = 0.2
    batch_size: int = 32
    seed: int = 0


@dataclass
class PretrainResult:
    model: PlacementNet
    train_curve: list[float]
    valid_curve: list[float]


def _record_observation(
    rec: PlacementDatasetRecord, nl: Netlist
) -> Observation:
    grid = GridSpec(
        rows=rec.grid_rows, cols=rec.grid_cols,
        cell_width=nl.canvas_width / rec.grid_cols,
        cell_height=nl.canvas_height / rec.grid_rows,
        canvas_width=nl.canvas_width, canvas_height=nl.canvas_height,
    )
    return terminal_observation(nl, rec.placement(), grid)


def pretrain_supervised(
    records: Sequence[PlacementDatasetRecord],
    netlists: Sequence[Netlist],
    model: PlacementNet | None = None,
    config: PretrainConfig | None = None,
    valid_records: Sequence[PlacementDatasetRecord] | None = None,
) -> PretrainResult:
    """Regression of (wirelength, congestion) labels from terminal states.

    Minimizes the weighted sum of the per-target squared errors over the
    training split; reports the validation loss per epoch. When
    ``valid_records`` is given it is used as the validation set instead of an
    internal split (the training set is then all of ``records``).
    """
    config = config or PretrainConfig()
    if not records:
        raise EmptyDataset("no records to pretrain on")
    by_fp = {nl.fingerprint(): nl for nl in netlists}
    if model is None:
        model = PlacementNet(seed=config.seed)
    for nl in netlists:
        model.bind_netlist(nl)

    def prepare(recs):
        out = []
        for rec in recs:
            nl = by_fp[rec.netlist]
            obs = _record_observation(rec, nl)
            label = (rec.label_wirelength, rec.label_congestion)
            out.append((nl.fingerprint(), obs, label))
        return out

    rng = np.random.default_rng(config.seed)
    if valid_records is None:
        idx = rng.permutation(len(records))
        n_valid = max(1, int(round(config.valid_fraction * len(records))))
        valid_idx = set(idx[:n_valid].tolist())
        train_set = prepare([r for i, r in enumerate(records) if i not in valid_idx])
        valid_set = prepare([r for i, r in enumerate(records) if i in valid_idx])
    else:
        train_set = prepare(records)
        valid_set = prepare(valid_records)

    dtype = next(model.parameters()).dtype
    w_wl = config.wirelength_weight
    w_cg = config.congestion_weight
    opt = torch.optim.Adam(model.parameters(), lr=config.learning_rate)

    def batch_loss(items):
        preds = []
        labels = []
        for key, obs, label in items:
            emb = model.encode(obs, key)
            preds.append(model.reward_forward(emb))
            labels.append(torch.tensor(label, dtype=dtype))
        pred = torch.stack(preds)
        lab = torch.stack(labels)
        return (
            w_wl * torch.mean((pred[:, 0] - lab[:, 0]) ** 2)
            + w_cg * torch.mean((pred[:, 1] - lab[:, 1]) ** 2)
        )

    train_curve: list[float] = []
    valid_curve: list[float] = []
    for _epoch in range(config.epochs):
        model.train()
        order = rng.permutation(len(train_set))
        epoch_losses = []
        for start in range(0, len(order), config.batch_size):
            items = [train_set[i] for i in order[start : start + config.batch_size]]
            loss = batch_loss(items)
            opt.zero_grad()
            loss.backward()
            opt.step()
            epoch_losses.append(float(loss.detach()))
        model.eval()
        with torch.no_grad():
            vloss = float(batch_loss(valid_set)) if valid_set else float("nan")
        train_curve.append(float(np.mean(epoch_losses)))
        valid_curve.append(vloss)
    return PretrainResult(model=model, train_curve=train_curve, valid_curve=valid_curve)


# ---------------------------------------------------------------------------
# Transfer protocols


@dataclass
class TransferResult:
    placement: Placement | None
    cost: CostBreakdown | None
    eval_curve: list[dict]
    model: PlacementNet


def greedy_cost(model: PlacementNet, nl: Netlist, env_config: EnvConfig) -> tuple:
    """(placement, cost, reward) of a greedy rollout; dead ends yield the
    penalty reward and no placement."""
    policy = TorchPolicy(model, nl)
    try:
        traj = rollout(nl, policy, "greedy", 0, env_config)
        return traj.final_placement, traj.cost, traj.reward
    except DeadEndError:
        return None, None, infeasible_reward(env_config.lam)


def transfer(
    source: PlacementNet | str,
    nl: Netlist,
    mode: Literal["zero_shot", "finetune", "from_scratch"],
    duration: int = 0,
    config: PpoConfig | None = None,
    env_config: EnvConfig | None = None,
) -> TransferResult:
    """Apply a pretrained policy to a (presumed unseen) netlist.

    zero_shot: one greedy rollout of the loaded weights. finetune: PPO on the
    target netlist starting from the loaded weights. from_scratch: same
    budget from a fresh initialization. The eval curve holds the greedy cost
    before training (entry 0 == zero-shot) and after every batch.
    """
    config = config or PpoConfig()
    env_config = env_config or EnvConfig()
    if mode == "from_scratch":
        model = PlacementNet(seed=config.seed)
    elif isinstance(source, str):
        model = load_checkpoint(source, shared_only=True)
    else:
        model = source
    model.bind_netlist(nl)

    eval_curve: list[dict] = []

    def record(batch_idx: int, train_entry: dict | None = None) -> None:
        placement, cost, reward = greedy_cost(model, nl, env_config)
        eval_curve.append(
            {"batch": batch_idx, "reward": reward,
             "cost": cost.to_dict() if cost else None,
             "train": train_entry}
        )

    record(0)
    if mode != "zero_shot" and duration > 0:
        train_ppo(
            [nl], batches=duration, model=model, config=config,
            env_config=env_config,
            callback=lambda b, _m, entry: record(b + 1, entry),
        )
    placement, cost, _ = greedy_cost(model, nl, env_config)
    return TransferResult(placement=placement, cost=cost, eval_curve=eval_curve,
                          model=model)
