"""Differentiable networks: graph encoder over netlist star edges, metadata
encoder, deconvolution policy head, value head, and the reward-prediction
head used for supervised pretraining.

The encoder follows the edge-centric update
    e_ij = fc1(concat(fc0(v_i) | fc0(v_j) | w_ij)),
    v_i  = mean of incident edge embeddings,
repeated for a fixed number of rounds; the graph embedding is the mean over
edge embeddings. Per-edge scalar weights are learnable and netlist-specific
(initialized from net weights; fresh netlists get fresh vectors, which is
what lets one set of shared weights transfer across blocks).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .env import MASK_SIDE, Observation
from .errors import AllMasked, CheckpointMismatch, ShapeMismatch
from .netlist import Netlist

EMBED = 32
STATE_DIM = 3 * EMBED          # graph | current node | metadata
DECONV_CHANNELS = (16, 8, 4, 2, 1)
CHECKPOINT_VERSION = 1


@dataclass
class Embeddings:
    node: torch.Tensor      # (N, 32)
    edge: torch.Tensor      # (E, 32)
    graph: torch.Tensor     # (32,)
    current: torch.Tensor   # (32,)
    metadata: torch.Tensor  # (32,)

    def state(self) -> torch.Tensor:
        return torch.cat([self.graph, self.current, self.metadata])


class PlacementNet(nn.Module):
    """Encoder plus policy/value/reward heads; one instance serves many netlists."""

    def __init__(self, rounds: int = 3, feature_dim: int = 8, meta_dim: int = 9,
                 seed: int = 0):
        super().__init__()
        self.rounds = rounds
        self.feature_dim = feature_dim
        self.meta_dim = meta_dim
        self.proj = nn.Linear(feature_dim, EMBED)
        self.fc0 = nn.Linear(EMBED, EMBED)
        self.fc1 = nn.Linear(2 * EMBED + 1, EMBED)
        self.meta_encoder = nn.Sequential(
            nn.Linear(meta_dim, EMBED), nn.Tanh(), nn.Linear(EMBED, EMBED)
        )
        self.combiner = nn.Sequential(
            nn.Linear(STATE_DIM, 128), nn.Tanh(), nn.Linear(128, 512), nn.Tanh()
        )
        layers: list[nn.Module] = []
        in_ch = EMBED
        for i, out_ch in enumerate(DECONV_CHANNELS):
            layers.append(
                nn.ConvTranspose2d(in_ch, out_ch, kernel_size=3, stride=2,
                                   padding=1, output_padding=1)
            )
            if i < len(DECONV_CHANNELS) - 1:
                layers.append(nn.BatchNorm2d(out_ch))
                layers.append(nn.Tanh())
            in_ch = out_ch
        self.deconv = nn.Sequential(*layers)
        self.value_head = nn.Sequential(
            nn.Linear(STATE_DIM, EMBED), nn.Tanh(), nn.Linear(EMBED, 1)
        )
        self.reward_head = nn.Sequential(
            nn.Linear(2 * EMBED, EMBED), nn.Tanh(), nn.Linear(EMBED, 2)
        )
        self.edge_weights = nn.ParameterDict()
        self.train_steps = 0
        self._graph_cache: dict[str, tuple] = {}
        init_params(self, seed)

    # -- netlist binding -----------------------------------------------

    def bind_netlist(self, nl: Netlist) -> str:
        """Register (or reuse) the learnable per-edge weights for a netlist."""
        key = nl.fingerprint()
        if key not in self.edge_weights:
            w = torch.tensor(
                [w for _, _, w in nl.star_edges()],
                dtype=next(self.parameters()).dtype,
            )
            self.edge_weights[key] = nn.Parameter(w)
        return key

    # -- encoder ---------------------------------------------------------

    def encode(self, obs: Observation, key: str) -> Embeddings:
        dtype = next(self.parameters()).dtype
        feats = torch.as_tensor(obs.node_features, dtype=dtype)
        if feats.shape[1] != self.feature_dim:
            raise ShapeMismatch(
                f"node features have width {feats.shape[1]}, expected {self.feature_dim}"
            )
        n_nodes = feats.shape[0]
        v = torch.tanh(self.proj(feats))

        n_edges = obs.edge_index.shape[0]
        if key not in self.edge_weights:
            raise ShapeMismatch(f"netlist {key} not bound")
        w = self.edge_weights[key]
        if w.shape[0] != n_edges:
            raise ShapeMismatch(
                f"edge weights for {key} have length {w.shape[0]}, expected {n_edges}"
            )

        edge = torch.zeros((0, EMBED), dtype=dtype)
        if n_edges:
            cached = self._graph_cache.get(key)
            if cached is None or cached[0] != (n_nodes, n_edges):
                ei = torch.as_tensor(obs.edge_index, dtype=torch.long)
                a, b = ei[:, 0].contiguous(), ei[:, 1].contiguous()
                both = torch.cat([a, b])
                counts = torch.bincount(both, minlength=n_nodes)
                cached = (
                    (n_nodes, n_edges), a, b, both,
                    counts.clamp(min=1).numpy().astype(np.float64),
                    (counts == 0).unsqueeze(1),
                )
                self._graph_cache[key] = cached
            _, a, b, both, deg_np, isolated = cached
            deg = torch.as_tensor(deg_np, dtype=dtype)
            # fc1(concat(h_a | h_b | w)) split into per-block matmuls to avoid
            # materializing the (E, 65) concatenation every round
            w1 = self.fc1.weight[:, :EMBED]
            w2 = self.fc1.weight[:, EMBED : 2 * EMBED]
            w3 = self.fc1.weight[:, 2 * EMBED]
            w_col = w.unsqueeze(1) * w3.unsqueeze(0)
            for _ in range(self.rounds):
                h = torch.tanh(self.fc0(v))
                ha = h @ w1.T
                hb = h @ w2.T
                edge = torch.tanh(ha[a] + hb[b] + w_col + self.fc1.bias)
                sums = torch.zeros((n_nodes, EMBED), dtype=dtype)
                sums.index_add_(0, a, edge)
                sums.index_add_(0, b, edge)
                v = torch.where(isolated, v, sums / deg.unsqueeze(1))

        graph = edge.mean(dim=0) if n_edges else torch.zeros(EMBED, dtype=dtype)
        current = (
            v[obs.current_node]
            if 0 <= obs.current_node < n_nodes
            else torch.zeros(EMBED, dtype=dtype)
        )
        meta = torch.as_tensor(obs.metadata, dtype=dtype)
        if meta.shape[0] != self.meta_dim:
            raise ShapeMismatch(
                f"metadata has width {meta.shape[0]}, expected {self.meta_dim}"
            )
        meta_emb = self.meta_encoder(torch.log1p(meta))
        return Embeddings(node=v, edge=edge, graph=graph, current=current,
                          metadata=meta_emb)

    # -- heads -------------------------------------------------------------

    def policy_logits(self, states: torch.Tensor) -> torch.Tensor:
        """(B, STATE_DIM) -> (B, 128, 128) raw cell logits."""
        z = self.combiner(states).view(-1, EMBED, 4, 4)
        return self.deconv(z).squeeze(1)

    def policy_forward(
        self, emb: Embeddings, mask128: np.ndarray | torch.Tensor, training: bool = False
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """Masked action distribution over the 128x128 grid.

        Returns (probabilities, logits); probabilities are softmax over
        feasible cells and exactly zero elsewhere.
        """
        mode = self.training
        if mode != training:
            self.train(training)
        try:
            logits = self.policy_logits(emb.state().unsqueeze(0))[0]
        finally:
            if mode != training:
                self.train(mode)
        mask = torch.as_tensor(mask128, dtype=torch.bool).reshape(MASK_SIDE, MASK_SIDE)
        if not mask.any():
            raise AllMasked("feasibility mask is all zero")
        probs = masked_probabilities(logits.reshape(1, -1), mask.reshape(1, -1))[0]
        return probs.reshape(MASK_SIDE, MASK_SIDE), logits

    def value_forward(self, states: torch.Tensor) -> torch.Tensor:
        """(B, STATE_DIM) -> (B,) value estimates."""
        return self.value_head(states).squeeze(-1)

    def reward_forward(self, emb: Embeddings) -> torch.Tensor:
        """(wirelength, congestion) prediction from graph + metadata embeddings."""
        return self.reward_head(torch.cat([emb.graph, emb.metadata]))

    # -- checkpoint surface --------------------------------------------------

    def encoder_state(self) -> dict[str, torch.Tensor]:
        """The transferable encoder block (prediction/policy heads excluded)."""
        prefixes = ("proj.", "fc0.", "fc1.", "meta_encoder.")
        return {
            k: v.detach().clone()
            for k, v in self.state_dict().items()
            if k.startswith(prefixes)
        }


def masked_probabilities(logits: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Rows of softmax over feasible entries, exact zeros elsewhere."""
    neg_inf = torch.finfo(logits.dtype).min
    gated = logits.masked_fill(~mask, neg_inf)
    probs = torch.softmax(gated, dim=-1)
    return probs * mask.to(probs.dtype)


def masked_log_probs(logits: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Log-probabilities over feasible entries (-inf where masked)."""
    neg_inf = torch.finfo(logits.dtype).min
    gated = logits.masked_fill(~mask, neg_inf)
    return torch.log_softmax(gated, dim=-1)


def init_params(model: nn.Module, seed: int) -> None:
    """Deterministic re-initialization: Glorot-uniform weights, zero biases,
    unit batch-norm scales; driven by a numpy generator for reproducibility."""
    rng = np.random.default_rng(seed)
    bn_weights = {
        f"{name}.weight"
        for name, mod in model.named_modules()
        if isinstance(mod, nn.BatchNorm2d)
    }
    for name, p in sorted(model.named_parameters(), key=lambda kv: kv[0]):
        if name.startswith("edge_weights."):
            continue
        with torch.no_grad():
            if name in bn_weights:
                p.fill_(1.0)
            elif p.ndim <= 1:
                p.zero_()
            else:
                if p.ndim == 4:  # transposed conv: (in, out, kH, kW)
                    fan_in = p.shape[0] * p.shape[2] * p.shape[3]
                    fan_out = p.shape[1] * p.shape[2] * p.shape[3]
                else:
                    fan_in, fan_out = p.shape[1], p.shape[0]
                bound = float(np.sqrt(6.0 / (fan_in + fan_out)))
                vals = rng.uniform(-bound, bound, size=tuple(p.shape))
                p.copy_(torch.as_tensor(vals, dtype=p.dtype))
    for mod in model.modules():
        if isinstance(mod, nn.BatchNorm2d):
            mod.reset_running_stats()


# ---------------------------------------------------------------------------
# Checkpoints: npz container of named float32 arrays + JSON metadata.


def save_checkpoint(model: PlacementNet, path) -> None:
    arrays = {}
    for k, v in model.state_dict().items():
        arr = v.detach().cpu().numpy()
        if np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float32)
        arrays[f"param/{k}"] = arr
    meta = {
        "version": CHECKPOINT_VERSION,
        "rounds": model.rounds,
        "feature_dim": model.feature_dim,
        "meta_dim": model.meta_dim,
        "train_steps": model.train_steps,
    }
    arrays["meta"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
    np.savez(path, **arrays)


def load_checkpoint(path, shared_only: bool = False) -> PlacementNet:
    """Restore a model; inference outputs are bit-identical to the saved one.

    With shared_only=True the per-netlist edge weights are dropped, which is
    the transfer path onto unseen netlists (fresh edges come from bind).
    """
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        if meta.get("version") != CHECKPOINT_VERSION:
            raise CheckpointMismatch(f"unsupported checkpoint version {meta.get('version')}")
        model = PlacementNet(
            rounds=meta["rounds"], feature_dim=meta["feature_dim"],
            meta_dim=meta["meta_dim"],
        )
        model.train_steps = meta["train_steps"]
        state = {}
        for full_key in data.files:
            if not full_key.startswith("param/"):
                continue
            key = full_key[len("param/") :]
            if key.startswith("edge_weights."):
                if shared_only:
                    continue
                model.edge_weights[key.split(".", 1)[1]] = nn.Parameter(
                    torch.zeros(data[full_key].shape[0])
                )
            arr = np.asarray(data[full_key])
            state[key] = torch.as_tensor(
                arr.astype(np.float32) if np.issubdtype(arr.dtype, np.floating) else arr
            )
        model_state = model.state_dict()
        for key, value in state.items():
            if key not in model_state:
                raise CheckpointMismatch(f"unexpected parameter {key}")
            if tuple(model_state[key].shape) != tuple(value.shape):
                raise CheckpointMismatch(
                    f"shape mismatch for {key}: checkpoint {tuple(value.shape)} "
                    f"vs model {tuple(model_state[key].shape)}"
                )
        model.load_state_dict(state, strict=False)
    return model


def load_encoder(model: PlacementNet, encoder_state: dict[str, torch.Tensor]) -> None:
    """Transplant pretrained encoder weights into a policy network."""
    own = model.state_dict()
    for key, value in encoder_state.items():
        if key not in own:
            raise CheckpointMismatch(f"unknown encoder parameter {key}")
        if tuple(own[key].shape) != tuple(value.shape):
            raise CheckpointMismatch(f"shape mismatch for encoder parameter {key}")
    model.load_state_dict(encoder_state, strict=False)


# ---------------------------------------------------------------------------
# Gradient verification


def finite_difference_check(
    model: nn.Module,
    loss_fn,
    n_coords: int = 32,
    h: float = 1e-5,
    seed: int = 0,
) -> dict[str, float]:
    """Max relative error between autograd and central differences, per
    parameter block. The model should be in float64 for meaningful results.
    """
    rng = np.random.default_rng(seed)
    model.zero_grad()
    loss = loss_fn()
    loss.backward()
    report: dict[str, float] = {}
    for name, p in model.named_parameters():
        grad = torch.zeros_like(p) if p.grad is None else p.grad.detach().clone()
        flat = p.data.view(-1)
        gflat = grad.view(-1)
        count = min(n_coords, flat.numel())
        coords = rng.choice(flat.numel(), size=count, replace=False)
        worst = 0.0
        for idx in coords:
            orig = flat[idx].item()
            flat[idx] = orig + h
            up = loss_fn().item()
            flat[idx] = orig - h
            down = loss_fn().item()
            flat[idx] = orig
            fd = (up - down) / (2.0 * h)
            an = gflat[idx].item()
            denom = max(abs(fd), abs(an), 1e-4)
            worst = max(worst, abs(fd - an) / denom)
        report[name] = worst
    model.zero_grad()
    return report


# ---------------------------------------------------------------------------
# Policy adapter for env.rollout


class TorchPolicy:
    """Wraps a model + netlist into the (obs) -> (probs over m*n, value) protocol.

    Inference runs in eval mode (batch-norm running statistics) and leaves
    the model there; training loops switch back to train mode themselves.
    """

    def __init__(self, model: PlacementNet, nl: Netlist):
        self.model = model
        self.key = model.bind_netlist(nl)

    def __call__(self, obs: Observation) -> tuple[np.ndarray, float]:
        model = self.model
        if model.training:
            model.eval()
        with torch.no_grad():
            emb = model.encode(obs, self.key)
            probs128, _ = model.policy_forward(emb, obs.mask128(), training=False)
            value = model.value_forward(emb.state().unsqueeze(0))[0]
        sub = probs128[: obs.rows, : obs.cols].reshape(-1)
        return sub.cpu().numpy().astype(np.float64), float(value)
