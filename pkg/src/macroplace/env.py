"""Sequential macro-placement MDP: masked actions on grid-cell centers,
force-directed cluster placement at episode end, terminal proxy reward."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Literal, Mapping

import numpy as np

from . import kernels
from .cost import (
    DEFAULT_LAMBDA,
    DEFAULT_MAX_DENSITY,
    CostBreakdown,
    evaluate,
    infeasible_reward,
)
from .errors import DeadEndError, InfeasibleAction, NoFeasibleStart, ValidationError
from .fdplace import FdParams, place_clusters
from .grid import (
    DensityGrid,
    GridSpec,
    Placement,
    feasibility_mask,
    macro_density_grid,
    select_grid,
)
from .netlist import Netlist, NodeKind, macro_order

MASK_SIDE = 128  # policy resolution; real grids embed in the top-left corner


@dataclass(frozen=True)
class EnvConfig:
    lam: float = DEFAULT_LAMBDA
    max_density: float = DEFAULT_MAX_DENSITY
    seed: int = 0
    fd_params: FdParams = field(default_factory=FdParams)
    q_table: Mapping[int, float] | None = None
    grid: GridSpec | None = None  # override the automatic row/column choice


@dataclass(frozen=True)
class Observation:
    """Per-step state features consumed by the policy/value networks."""

    node_features: np.ndarray   # (N, 8) type one-hot, w, h, x, y, placed
    edge_index: np.ndarray      # (E, 2) driver -> load
    edge_weights: np.ndarray    # (E,)
    current_node: int           # node id of the macro to place (-1 if none)
    metadata: np.ndarray        # (9,)
    mask: np.ndarray            # (rows, cols) uint8
    rows: int
    cols: int

    def mask128(self) -> np.ndarray:
        """Mask embedded in the top-left of a 128x128 grid, flattened."""
        full = np.zeros((MASK_SIDE, MASK_SIDE), dtype=np.float32)
        full[: self.rows, : self.cols] = self.mask
        return full.ravel()


@dataclass(frozen=True)
class EnvState:
    netlist: Netlist
    grid: GridSpec
    order: tuple[int, ...]
    placement: Placement
    density: DensityGrid
    mask: np.ndarray
    t: int
    config: EnvConfig

    @property
    def horizon(self) -> int:
        return len(self.order)

    @property
    def done(self) -> bool:
        return self.t >= self.horizon

    @property
    def current_macro(self) -> int:
        return self.order[self.t] if self.t < self.horizon else -1


@dataclass(frozen=True)
class StepOutcome:
    state: EnvState
    reward: float
    done: bool
    cost: CostBreakdown | None = None


@dataclass
class StepRecord:
    observation: Observation
    action: int
    mask: np.ndarray
    log_prob: float
    value: float


@dataclass
class Trajectory:
    steps: list[StepRecord]
    reward: float
    aborted: bool = False
    final_placement: Placement | None = None
    cost: CostBreakdown | None = None

    def __len__(self) -> int:
        return len(self.steps)


def _default_grid(nl: Netlist) -> GridSpec:
    cached = getattr(nl, "_default_grid", None)
    if cached is None:
        cached = select_grid(nl)
        object.__setattr__(nl, "_default_grid", cached)
    return cached


def _default_order(nl: Netlist) -> tuple[int, ...]:
    cached = getattr(nl, "_macro_order", None)
    if cached is None:
        cached = tuple(macro_order(nl))
        object.__setattr__(nl, "_macro_order", cached)
    return cached


def reset(nl: Netlist, config: EnvConfig | None = None) -> EnvState:
    """Empty canvas, ports pinned, mask ready for the first macro."""
    config = config or EnvConfig()
    if any(n.kind == NodeKind.STDCELL for n in nl.nodes):
        raise ValidationError("raw standard cells must be clustered before placement")
    grid = config.grid or _default_grid(nl)
    order = _default_order(nl)
    placement = Placement()
    for port in nl.ports:
        placement.positions[port.id] = (port.x, port.y)
    density = macro_density_grid(grid, placement, nl)
    if not order:
        raise ValidationError("netlist has no macros to place")
    mask = feasibility_mask(grid, density, nl.node(order[0]), config.max_density)
    if not mask.any():
        raise NoFeasibleStart("first macro has no feasible cell")
    return EnvState(
        netlist=nl, grid=grid, order=order, placement=placement,
        density=density, mask=mask, t=0, config=config,
    )


def step(state: EnvState, action: int) -> StepOutcome:
    """Place the current macro at the given cell index (row-major, rows*cols).

    Raises InfeasibleAction on a masked-out cell and DeadEndError when the
    next macro has no feasible cell (episode aborted with the penalty
    reward). The terminal step runs force-directed cluster placement and
    returns the full cost-based reward.
    """
    grid = state.grid
    if not 0 <= action < grid.num_cells:
        raise InfeasibleAction(f"action {action} outside [0, {grid.num_cells})")
    r, c = divmod(action, grid.cols)
    if not state.mask[r, c]:
        raise InfeasibleAction(f"cell ({r}, {c}) is masked out")

    macro = state.netlist.node(state.current_macro)
    placement = state.placement.copy()
    cx, cy = grid.cell_center(r, c)
    placement.positions[macro.id] = (cx, cy)
    placement.grid_cells[macro.id] = (r, c)
    t_next = state.t + 1

    rect = np.array(
        [[cx - macro.width / 2, cy - macro.height / 2,
          cx + macro.width / 2, cy + macro.height / 2]]
    )
    density = DensityGrid(
        values=state.density.values
        + kernels.density_add(rect, grid.rows, grid.cols,
                              grid.cell_width, grid.cell_height),
        blocked=state.density.blocked,
        solid_rects=np.concatenate([state.density.solid_rects, rect]),
    )

    if t_next < state.horizon:
        next_macro = state.netlist.node(state.order[t_next])
        mask = feasibility_mask(grid, density, next_macro, state.config.max_density)
        next_state = replace(
            state, placement=placement, density=density, mask=mask, t=t_next
        )
        if not mask.any():
            raise DeadEndError(t_next, trajectory=None)
        return StepOutcome(state=next_state, reward=0.0, done=False)

    final = place_clusters(
        state.netlist, placement, grid,
        state.config.fd_params, state.config.seed,
    )
    cost = evaluate(
        state.netlist, final, grid,
        lam=state.config.lam,
        max_density=state.config.max_density,
        q_table=state.config.q_table,
    )
    next_state = replace(
        state, placement=final, density=density,
        mask=np.zeros_like(state.mask), t=t_next,
    )
    return StepOutcome(state=next_state, reward=cost.reward, done=True, cost=cost)


_KIND_SLOT = {NodeKind.MACRO: 0, NodeKind.CLUSTER: 1, NodeKind.PORT: 2}


def observe(state: EnvState) -> Observation:
    return _build_observation(
        state.netlist, state.grid, state.placement, state.mask, state.current_macro
    )


def terminal_observation(
    nl: Netlist, placement: Placement, grid: GridSpec
) -> Observation:
    """Observation of a completely placed netlist (for reward prediction)."""
    mask = np.zeros((grid.rows, grid.cols), dtype=np.uint8)
    return _build_observation(nl, grid, placement, mask, -1)


def _static_obs_parts(nl: Netlist) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-netlist observation constants (type one-hots, sizes, port pins,
    star-edge arrays), cached on the netlist object."""
    cached = getattr(nl, "_obs_static", None)
    if cached is not None:
        return cached
    W, H = nl.canvas_width, nl.canvas_height
    feats = np.zeros((len(nl.nodes), 8), dtype=np.float32)
    for node in nl.nodes:
        feats[node.id, _KIND_SLOT[node.kind]] = 1.0
        feats[node.id, 3] = node.width / W
        feats[node.id, 4] = node.height / H
        if node.x is not None:
            feats[node.id, 5] = node.x / W
            feats[node.id, 6] = node.y / H
            feats[node.id, 7] = 1.0
    edges = nl.star_edges()
    edge_index = np.array([(a, b) for a, b, _ in edges], dtype=np.int64).reshape(-1, 2)
    edge_weights = np.array([w for _, _, w in edges], dtype=np.float32)
    cached = (feats, edge_index, edge_weights)
    object.__setattr__(nl, "_obs_static", cached)
    return cached


def _build_observation(
    nl: Netlist, grid: GridSpec, placement: Placement, mask: np.ndarray, current: int
) -> Observation:
    W, H = nl.canvas_width, nl.canvas_height
    static_feats, edge_index, edge_weights = _static_obs_parts(nl)
    feats = static_feats.copy()
    for node_id, (x, y) in placement.positions.items():
        feats[node_id, 5] = x / W
        feats[node_id, 6] = y / H
        feats[node_id, 7] = 1.0
    meta = nl.metadata_with_grid(grid.rows, grid.cols).as_vector()
    return Observation(
        node_features=feats, edge_index=edge_index, edge_weights=edge_weights,
        current_node=current, metadata=meta, mask=mask.copy(),
        rows=grid.rows, cols=grid.cols,
    )


PolicyFn = Callable[[Observation], tuple[np.ndarray, float]]
"""Maps an observation to (probabilities over rows*cols cells, value estimate)."""


def uniform_policy(obs: Observation) -> tuple[np.ndarray, float]:
    n = obs.rows * obs.cols
    return np.full(n, 1.0 / n), 0.0


def rollout(
    nl: Netlist,
    policy: PolicyFn,
    mode: Literal["sample", "greedy"] = "greedy",
    seed: int = 0,
    config: EnvConfig | None = None,
) -> Trajectory:
    """Run one full episode.

    Greedy mode takes argmax of mask * probabilities (lowest index wins
    ties); sample mode draws from the mask-renormalized distribution with a
    generator seeded by ``seed``. A mid-episode dead end raises DeadEndError
    carrying the aborted trajectory (penalty reward) for the caller.
    """
    config = config or EnvConfig()
    state = reset(nl, config)
    rng = np.random.default_rng(seed)
    steps: list[StepRecord] = []

    while not state.done:
        obs = observe(state)
        probs, value = policy(obs)
        probs = np.asarray(probs, dtype=np.float64).ravel()
        feasible = state.mask.ravel().astype(bool)
        gated = np.where(feasible, probs, 0.0)
        total = gated.sum()
        if total <= 0.0:
            gated = feasible.astype(np.float64)
            total = gated.sum()
        renorm = gated / total
        if mode == "greedy":
            action = int(np.argmax(renorm))
        else:
            action = int(rng.choice(len(renorm), p=renorm))
        log_prob = float(np.log(renorm[action]))
        steps.append(
            StepRecord(
                observation=obs, action=action, mask=state.mask.copy(),
                log_prob=log_prob, value=float(value),
            )
        )
        try:
            outcome = step(state, action)
        except DeadEndError as exc:
            traj = Trajectory(
                steps=steps, reward=infeasible_reward(config.lam), aborted=True
            )
            raise DeadEndError(exc.step, trajectory=traj) from exc
        state = outcome.state

    return Trajectory(
        steps=steps,
        reward=outcome.reward,
        final_placement=state.placement,
        cost=outcome.cost,
    )
