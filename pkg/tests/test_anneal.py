"""Simulated annealing: Metropolis rule, determinism, tiny-instance optimality,
sweep semantics."""

import itertools
import math

import numpy as np
import pytest

from macroplace.anneal import (
    SaConfig,
    anneal,
    budget_configs,
    metropolis_accept,
    random_feasible_placement,
    sweep,
)
from macroplace.cost import evaluate
from macroplace.env import EnvConfig
from macroplace.errors import NoFeasibleInitial
from macroplace.fdplace import FdParams
from macroplace.grid import Placement, Rect
from macroplace.netlist import Net, NodeKind

from conftest import make_netlist, make_node, square_grid


def _two_macro_netlist():
    nodes = [
        make_node(0, NodeKind.MACRO, 20.0, 20.0),
        make_node(1, NodeKind.MACRO, 20.0, 20.0),
        make_node(2, NodeKind.CLUSTER, 5.0, 5.0),
        make_node(3, NodeKind.PORT, x=0.0, y=0.0),
    ]
    nets = [
        Net(id=0, driver=0, loads=(3,)),
        Net(id=1, driver=0, loads=(1, 2)),
    ]
    return make_netlist(nodes, nets)


def _env_config(seed=0):
    return EnvConfig(seed=seed, grid=square_grid(4), fd_params=FdParams(iterations=25))


def test_metropolis_improvements_always_accepted(rng):
    for _ in range(100):
        assert metropolis_accept(-abs(rng.normal()), 0.5, rng)
    assert metropolis_accept(0.0, 1e-9, rng)


def test_metropolis_rate_at_delta_equals_temperature(rng):
    """Acceptance probability at delta == T must be e^-1 (within +-0.02)."""
    T = 0.05
    n = 10_000
    accepted = sum(metropolis_accept(T, T, rng) for _ in range(n))
    assert accepted / n == pytest.approx(math.exp(-1.0), abs=0.02)


def test_low_temperature_trace_non_increasing():
    nl = _two_macro_netlist()
    config = SaConfig(t_initial=1e-9, t_final=1e-10, alpha=0.9, max_steps=60, seed=1)
    result = anneal(nl, config, _env_config())
    # in the T -> 0 limit every cost-increasing move is rejected
    for prev, cur in zip(result.trace, result.trace[1:]):
        assert cur <= prev + 1e-12


def test_same_seed_identical_trace():
    nl = _two_macro_netlist()
    config = SaConfig(max_steps=40, seed=7)
    a = anneal(nl, config, _env_config())
    b = anneal(nl, config, _env_config())
    assert a.trace == b.trace
    assert a.accepted == b.accepted


def test_best_placement_reevaluates_to_best_cost():
    nl = _two_macro_netlist()
    env_config = _env_config()
    result = anneal(nl, SaConfig(max_steps=50, seed=3), env_config)
    again = evaluate(
        nl,
        _full_placement(nl, result.best_placement, env_config),
        env_config.grid,
        lam=env_config.lam,
    )
    assert again.reward == pytest.approx(result.best_cost.reward, abs=1e-12)
    assert min(result.trace) == pytest.approx(-result.best_cost.reward, abs=1e-12)


def _full_placement(nl, macro_placement, env_config):
    from macroplace.fdplace import place_clusters

    return place_clusters(nl, macro_placement, env_config.grid,
                          env_config.fd_params, env_config.seed)


def _enumerate_optimum(nl, env_config):
    """Exhaustive oracle: all distinct cell pairs, legality by raw geometry."""
    grid = env_config.grid
    macros = [n for n in nl.nodes if n.kind == NodeKind.MACRO]
    best = None
    cells = list(itertools.product(range(grid.rows), range(grid.cols)))
    for assignment in itertools.permutations(cells, len(macros)):
        placement = Placement()
        ok = True
        rects = []
        for node, (r, c) in zip(macros, assignment):
            cx, cy = grid.cell_center(r, c)
            x0, y0 = cx - node.width / 2, cy - node.height / 2
            x1, y1 = cx + node.width / 2, cy + node.height / 2
            if x0 < -1e-9 or y0 < -1e-9 or x1 > nl.canvas_width + 1e-9 \
                    or y1 > nl.canvas_height + 1e-9:
                ok = False
                break
            for ox0, oy0, ox1, oy1 in rects:
                if min(x1, ox1) - max(x0, ox0) > 1e-9 and min(y1, oy1) - max(y0, oy0) > 1e-9:
                    ok = False
                    break
            if not ok:
                break
            rects.append((x0, y0, x1, y1))
            placement.positions[node.id] = (cx, cy)
            placement.grid_cells[node.id] = (r, c)
        if not ok:
            continue
        full = _full_placement(nl, placement, env_config)
        cost = evaluate(nl, full, grid, lam=env_config.lam)
        if best is None or cost.reward > best:
            best = cost.reward
    return best


def test_generous_budget_reaches_enumerated_optimum():
    nl = _two_macro_netlist()
    env_config = _env_config()
    optimum = _enumerate_optimum(nl, env_config)
    config = SaConfig(t_initial=0.05, t_final=1e-6, alpha=0.97, max_steps=400,
                      shift_radius=4, seed=5)
    result = anneal(nl, config, env_config)
    assert result.best_cost.reward == pytest.approx(optimum, abs=1e-9)


def test_no_feasible_initial():
    blockages = (Rect(0.0, 0.0, 100.0, 100.0),)
    nodes = [make_node(0, NodeKind.MACRO, 10.0, 10.0),
             make_node(1, NodeKind.CLUSTER, 2.0, 2.0)]
    nets = [Net(id=0, driver=0, loads=(1,))]
    nl = make_netlist(nodes, nets, blockages=blockages)
    with pytest.raises(NoFeasibleInitial):
        random_feasible_placement(nl, square_grid(4), np.random.default_rng(0), 0.6,
                                  attempts=3)


def test_moves_respect_constraints():
    from macroplace.grid import hard_density_ok

    nl = _two_macro_netlist()
    env_config = _env_config()
    result = anneal(nl, SaConfig(max_steps=60, seed=11), env_config)
    assert hard_density_ok(env_config.grid, result.best_placement, nl, 0.6)


# -- sweep ------------------------------------------------------------------------


def test_sweep_single_config_equals_anneal():
    nl = _two_macro_netlist()
    env_config = _env_config()
    cfg = SaConfig(max_steps=30, seed=2)
    solo = anneal(nl, cfg, env_config)
    swept = sweep(nl, [cfg], env_config)
    assert swept.best.best_cost.reward == solo.best_cost.reward
    assert len(swept.rows) == 1
    assert swept.total_evaluations == solo.evaluations


def test_sweep_best_is_rowwise_minimum():
    nl = _two_macro_netlist()
    env_config = _env_config()
    configs = [SaConfig(max_steps=20, seed=s) for s in range(4)]
    swept = sweep(nl, configs, env_config)
    best_row = min(swept.rows, key=lambda row: -row["reward"])
    assert swept.best.best_cost.reward == pytest.approx(best_row["reward"])


def test_budget_configs_exact_total():
    configs = budget_configs(8, total_evaluations=101, seed=0)
    assert len(configs) == 8
    assert sum(c.max_steps + 1 for c in configs) == 101


def test_config_validation():
    with pytest.raises(ValueError):
        SaConfig(t_initial=0.1, t_final=0.2)
    with pytest.raises(ValueError):
        SaConfig(alpha=1.5)
