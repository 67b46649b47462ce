"""Simulated-annealing macro placer sharing the proxy cost kernel.

Moves are mask-filtered (every visited placement honors the density/overlap
constraints), acceptance is Metropolis, and the temperature decays
exponentially with a floor. Standard-cell clusters are re-placed by the
force-directed step before every cost evaluation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .cost import CostBreakdown, evaluate
from .env import EnvConfig
from .errors import NoFeasibleInitial
from .fdplace import place_clusters
from .grid import GridSpec, Placement, feasibility_mask, macro_density_grid, select_grid
from .netlist import Netlist, NodeKind, macro_order


@dataclass(frozen=True)
class SaConfig:
    t_initial: float = 0.02
    t_final: float = 1e-5
    alpha: float = 0.98
    max_steps: int = 200
    moves: tuple[str, ...] = ("shift", "swap")
    shift_radius: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.t_initial <= 0 or self.t_final <= 0 or self.t_final >= self.t_initial:
            raise ValueError("need 0 < t_final < t_initial")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")


@dataclass
class SaResult:
    best_placement: Placement          # macros (clusters re-derivable via FD)
    best_cost: CostBreakdown
    accepted: int
    rejected: int
    evaluations: int
    # current cost after each step, index 0 = initial placement; improvements
    # are always accepted, so min(trace) is the best visited cost
    trace: list[float] = field(default_factory=list)
    config: SaConfig | None = None


def metropolis_accept(delta: float, temperature: float, rng: np.random.Generator) -> bool:
    """Improvements always accepted; otherwise with probability exp(-delta/T)."""
    if delta <= 0.0:
        return True
    return bool(rng.random() < math.exp(-delta / temperature))


def _mask_without(
    nl: Netlist, grid: GridSpec, placement: Placement, exclude: set[int],
    macro_id: int, max_density: float,
):
    pruned = Placement(
        positions={
            i: p for i, p in placement.positions.items() if i not in exclude
        },
        grid_cells={
            i: c for i, c in placement.grid_cells.items() if i not in exclude
        },
    )
    density = macro_density_grid(grid, pruned, nl)
    return feasibility_mask(grid, density, nl.node(macro_id), max_density)


def random_feasible_placement(
    nl: Netlist, grid: GridSpec, rng: np.random.Generator,
    max_density: float, attempts: int = 50,
) -> Placement:
    """Greedy mask-based random start: macros in placement order, each at a
    uniformly drawn feasible cell."""
    order = macro_order(nl)
    for _ in range(attempts):
        placement = Placement()
        for port in nl.ports:
            placement.positions[port.id] = (port.x, port.y)
        ok = True
        for macro_id in order:
            density = macro_density_grid(grid, placement, nl)
            mask = feasibility_mask(grid, density, nl.node(macro_id), max_density)
            cells = np.argwhere(mask == 1)
            if len(cells) == 0:
                ok = False
                break
            r, c = cells[rng.integers(len(cells))]
            placement.positions[macro_id] = grid.cell_center(int(r), int(c))
            placement.grid_cells[macro_id] = (int(r), int(c))
        if ok:
            return placement
    raise NoFeasibleInitial("could not build a feasible initial macro placement")


def anneal(
    nl: Netlist,
    config: SaConfig | None = None,
    env_config: EnvConfig | None = None,
) -> SaResult:
    """One annealing chain; deterministic in config.seed.

    A step is one evaluated proposal (shift of a random macro to a random
    feasible cell within shift_radius, or a swap of two macros with the same
    quantized footprint when both re-fit); the FD step and full cost run
    before every Metropolis decision.
    """
    config = config or SaConfig()
    env_config = env_config or EnvConfig()
    grid = env_config.grid or select_grid(nl)
    rng = np.random.default_rng(config.seed)
    macros = [n.id for n in nl.macros]

    def full_cost(placement: Placement) -> tuple[float, CostBreakdown, Placement]:
        full = place_clusters(nl, placement, grid, env_config.fd_params, env_config.seed)
        breakdown = evaluate(
            nl, full, grid, lam=env_config.lam,
            max_density=env_config.max_density, q_table=env_config.q_table,
        )
        return -breakdown.reward, breakdown, full

    current = random_feasible_placement(nl, grid, rng, env_config.max_density)
    cur_cost, cur_break, _ = full_cost(current)
    evaluations = 1
    trace = [cur_cost]
    best_cost, best_break, best_placement = cur_cost, cur_break, current.copy()
    accepted = rejected = 0

    # swap classes: same quantized footprint on this grid
    classes: dict[tuple[int, int], list[int]] = {}
    for mid in macros:
        node = nl.node(mid)
        key = (
            int(math.ceil(node.width / grid.cell_width - 1e-9)),
            int(math.ceil(node.height / grid.cell_height - 1e-9)),
        )
        classes.setdefault(key, []).append(mid)
    swap_classes = [ids for ids in classes.values() if len(ids) >= 2]
    moves = [
        mv for mv in config.moves
        if mv == "shift" or (mv == "swap" and swap_classes)
    ]
    if not moves:
        moves = ["shift"]

    temperature = config.t_initial
    while evaluations < config.max_steps + 1:
        proposal = None
        for _retry in range(20):
            move = moves[rng.integers(len(moves))]
            if move == "shift":
                macro_id = macros[rng.integers(len(macros))]
                mask = _mask_without(
                    nl, grid, current, {macro_id}, macro_id, env_config.max_density
                )
                r0, c0 = current.grid_cells[macro_id]
                rows = np.arange(
                    max(0, r0 - config.shift_radius),
                    min(grid.rows, r0 + config.shift_radius + 1),
                )
                cols = np.arange(
                    max(0, c0 - config.shift_radius),
                    min(grid.cols, c0 + config.shift_radius + 1),
                )
                window = np.zeros_like(mask)
                window[np.ix_(rows, cols)] = 1
                window[r0, c0] = 0
                cells = np.argwhere((mask == 1) & (window == 1))
                if len(cells) == 0:
                    continue
                r, c = cells[rng.integers(len(cells))]
                cand = current.copy()
                cand.positions[macro_id] = grid.cell_center(int(r), int(c))
                cand.grid_cells[macro_id] = (int(r), int(c))
                proposal = cand
                break
            else:
                group = swap_classes[rng.integers(len(swap_classes))]
                a, b = rng.choice(len(group), size=2, replace=False)
                ma, mb = group[a], group[b]
                cell_a = current.grid_cells[ma]
                cell_b = current.grid_cells[mb]
                mask_a = _mask_without(
                    nl, grid, current, {ma, mb}, ma, env_config.max_density
                )
                mask_b = _mask_without(
                    nl, grid, current, {ma, mb}, mb, env_config.max_density
                )
                if not (mask_a[cell_b] and mask_b[cell_a]):
                    continue
                cand = current.copy()
                cand.positions[ma] = grid.cell_center(*cell_b)
                cand.grid_cells[ma] = cell_b
                cand.positions[mb] = grid.cell_center(*cell_a)
                cand.grid_cells[mb] = cell_a
                proposal = cand
                break
        if proposal is None:
            break  # no move available; give up rather than spin

        new_cost, new_break, _ = full_cost(proposal)
        evaluations += 1
        if metropolis_accept(new_cost - cur_cost, temperature, rng):
            current, cur_cost, cur_break = proposal, new_cost, new_break
            accepted += 1
            if new_cost < best_cost:
                best_cost, best_break, best_placement = (
                    new_cost, new_break, proposal.copy()
                )
        else:
            rejected += 1
        trace.append(cur_cost)
        temperature = max(config.t_final, temperature * config.alpha)

    return SaResult(
        best_placement=best_placement,
        best_cost=best_break,
        accepted=accepted,
        rejected=rejected,
        evaluations=evaluations,
        trace=trace,
        config=config,
    )


@dataclass
class SweepResult:
    best: SaResult
    rows: list[dict]
    total_evaluations: int


def sweep(
    nl: Netlist,
    configs: Sequence[SaConfig],
    env_config: EnvConfig | None = None,
) -> SweepResult:
    """Run every config, report the min-cost result plus the full table."""
    rows = []
    best: SaResult | None = None
    total = 0
    for cfg in configs:
        result = anneal(nl, cfg, env_config)
        total += result.evaluations
        rows.append(
            {
                "t_initial": cfg.t_initial,
                "t_final": cfg.t_final,
                "alpha": cfg.alpha,
                "max_steps": cfg.max_steps,
                "seed": cfg.seed,
                "wirelength": result.best_cost.wirelength,
                "congestion": result.best_cost.congestion,
                "reward": result.best_cost.reward,
                "evaluations": result.evaluations,
            }
        )
        if best is None or result.best_cost.reward > best.best_cost.reward:
            best = result
    return SweepResult(best=best, rows=rows, total_evaluations=total)


def budget_configs(
    n_configs: int,
    total_evaluations: int,
    t_initial_range: tuple[float, float] = (0.005, 0.1),
    t_final_range: tuple[float, float] = (1e-6, 1e-4),
    alpha: float = 0.97,
    shift_radius: int = 3,
    seed: int = 0,
) -> list[SaConfig]:
    """A sweep grid whose total evaluation budget matches an RL run exactly:
    steps are spread so that sum(max_steps_i + 1) == total_evaluations."""
    if total_evaluations < 2 * n_configs:
        raise ValueError("budget too small for the requested config count")
    rng = np.random.default_rng(seed)
    base = total_evaluations // n_configs - 1
    extras = total_evaluations - n_configs * (base + 1)
    configs = []
    for i in range(n_configs):
        steps = base + (1 if i < extras else 0)
        configs.append(
            SaConfig(
                t_initial=float(np.exp(rng.uniform(*np.log(t_initial_range)))),
                t_final=float(np.exp(rng.uniform(*np.log(t_final_range)))),
                alpha=alpha,
                max_steps=steps,
                shift_radius=shift_radius,
                seed=int(rng.integers(2**31)),
            )
        )
    return configs
