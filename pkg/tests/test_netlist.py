"""Netlist data model: parsing, validation, clustering, ordering, generation."""

import itertools
import json

import numpy as np
import pytest

from macroplace.errors import InfeasibleSpec, InvalidTarget, SchemaError, ValidationError
from macroplace.netlist import (
    GenSpec,
    Net,
    Netlist,
    Node,
    NodeKind,
    cluster_stdcells,
    generate_synthetic,
    macro_order,
    parse_netlist,
    serialize_netlist,
)

from conftest import make_netlist, make_node

MINIMAL_DOC = {
    "canvas": {"width": 100.0, "height": 80.0},
    "technology": {"h_capacity": 10.0, "v_capacity": 12.0},
    "blockages": [],
    "nodes": [
        {"id": 0, "kind": "macro", "w": 10.0, "h": 10.0, "fixed": False},
        {"id": 1, "kind": "macro", "w": 5.0, "h": 20.0, "fixed": False},
        {"id": 2, "kind": "cluster", "w": 4.0, "h": 4.0, "fixed": False},
    ],
    "nets": [{"id": 0, "driver": 0, "loads": [1, 2], "weight": 1.0}],
}


def test_parse_minimal_counts():
    nl = parse_netlist(json.dumps(MINIMAL_DOC))
    meta = nl.metadata
    assert meta.total_macros == 2
    assert meta.total_clusters == 1
    assert meta.total_nets == 1
    assert meta.horizontal_routing_capacity == 10.0


def test_parse_dangling_reference():
    doc = dict(MINIMAL_DOC)
    doc["nets"] = [{"id": 0, "driver": 0, "loads": [99]}]
    with pytest.raises(ValidationError):
        parse_netlist(json.dumps(doc))


def test_parse_rejects_unknown_keys():
    doc = dict(MINIMAL_DOC)
    doc["extra"] = 1
    with pytest.raises(SchemaError):
        parse_netlist(json.dumps(doc))
    doc = json.loads(json.dumps(MINIMAL_DOC))
    doc["nodes"][0]["orientation"] = "N"
    with pytest.raises(SchemaError):
        parse_netlist(json.dumps(doc))


def test_parse_rejects_duplicate_ids():
    doc = json.loads(json.dumps(MINIMAL_DOC))
    doc["nodes"][1]["id"] = 0
    with pytest.raises(ValidationError):
        parse_netlist(json.dumps(doc))


def test_parse_rejects_position_on_movable_node():
    doc = json.loads(json.dumps(MINIMAL_DOC))
    doc["nodes"][0]["x"] = 5.0
    with pytest.raises(SchemaError):
        parse_netlist(json.dumps(doc))


def test_parse_macro_larger_than_canvas():
    doc = json.loads(json.dumps(MINIMAL_DOC))
    doc["nodes"][0]["w"] = 500.0
    with pytest.raises(ValidationError):
        parse_netlist(json.dumps(doc))


def test_roundtrip_identity_on_random_netlists():
    # serialize(parse(d)), parsed again, must be the identical value
    for seed in range(100):
        nl = generate_synthetic(seed, GenSpec(macro_count=3, cluster_count=4,
                                              net_count=10, port_count=2))
        text = serialize_netlist(nl)
        again = parse_netlist(text)
        assert again == nl
        assert serialize_netlist(again) == text


# -- clustering -------------------------------------------------------------


def _two_cliques_netlist():
    # 8 stdcells: {0..3} and {4..7} are 2-pin cliques, plus one cross net
    nodes = [make_node(i, NodeKind.STDCELL, 2.0, 2.0) for i in range(8)]
    nets = []
    for group in (range(0, 4), range(4, 8)):
        for a, b in itertools.combinations(group, 2):
            nets.append(Net(id=len(nets), driver=a, loads=(b,)))
    nets.append(Net(id=len(nets), driver=0, loads=(4,)))
    return make_netlist(nodes, nets)


def _min_cut_oracle(nl, k=2):
    """Exhaustive minimum cut over all 2-partitions of the stdcells."""
    cells = [n.id for n in nl.nodes if n.kind == NodeKind.STDCELL]
    best = None
    for bits in range(1, 2 ** len(cells) - 1):
        side = {cells[i] for i in range(len(cells)) if bits & (1 << i)}
        cut = 0
        for net in nl.nets:
            pins = set(net.pins)
            if pins & side and pins - side:
                cut += 1
        best = cut if best is None else min(best, cut)
    return best


def test_cluster_two_cliques_matches_min_cut():
    nl = _two_cliques_netlist()
    clustered = cluster_stdcells(nl, 2)
    assert len(clustered.base.clusters) == 2
    # surviving nets are exactly the cut nets; the greedy result must achieve
    # the exhaustively enumerated minimum cut
    assert len(clustered.base.nets) == _min_cut_oracle(nl) == 1
    groups = {}
    for raw, cid in clustered.cluster_map.items():
        groups.setdefault(cid, set()).add(raw)
    assert sorted(groups.values(), key=min) == [set(range(4)), set(range(4, 8))]


def test_cluster_identity_when_target_equals_count():
    nl = _two_cliques_netlist()
    clustered = cluster_stdcells(nl, 8)
    assert len(clustered.base.clusters) == 8
    assert len(clustered.base.nets) == len(nl.nets)


def test_cluster_single_net_collapses():
    nodes = [make_node(i, NodeKind.STDCELL, 2.0, 2.0) for i in range(3)]
    nets = [Net(id=0, driver=0, loads=(1, 2))]
    clustered = cluster_stdcells(make_netlist(nodes, nets), 1)
    assert len(clustered.base.clusters) == 1
    assert clustered.base.nets == ()


def test_cluster_conserves_area():
    nl = _two_cliques_netlist()
    total = sum(n.area for n in nl.nodes if n.kind == NodeKind.STDCELL)
    clustered = cluster_stdcells(nl, 3)
    assert sum(n.area for n in clustered.base.clusters) == pytest.approx(total, rel=1e-12)


def test_cluster_invalid_target():
    nl = _two_cliques_netlist()
    with pytest.raises(InvalidTarget):
        cluster_stdcells(nl, 0)
    with pytest.raises(InvalidTarget):
        cluster_stdcells(nl, 9)


# -- macro ordering -----------------------------------------------------------


def test_macro_order_descending_area():
    nodes = [
        make_node(0, NodeKind.MACRO, 2.0, 2.0),
        make_node(1, NodeKind.MACRO, 3.0, 3.0),
        make_node(2, NodeKind.MACRO, 1.0, 1.0),
    ]
    nets = [Net(id=0, driver=0, loads=(1,))]
    assert macro_order(make_netlist(nodes, nets)) == [1, 0, 2]


def test_macro_order_topological_tiebreak():
    # equal areas; A(1) drives B(0): Kahn's order must put 1 before 0
    nodes = [
        make_node(0, NodeKind.MACRO, 2.0, 2.0),
        make_node(1, NodeKind.MACRO, 2.0, 2.0),
        make_node(2, NodeKind.CLUSTER, 1.0, 1.0),
    ]
    nets = [Net(id=0, driver=1, loads=(0, 2))]
    nl = make_netlist(nodes, nets)
    order = macro_order(nl)
    assert order == [1, 0]

    # independent Kahn oracle over the macro digraph
    def kahn(edges, ids):
        indeg = {i: 0 for i in ids}
        succ = {i: set() for i in ids}
        for a, b in edges:
            if b not in succ[a]:
                succ[a].add(b)
                indeg[b] += 1
        out = []
        ready = sorted(i for i in ids if indeg[i] == 0)
        while ready:
            n = ready.pop(0)
            out.append(n)
            for s in sorted(succ[n]):
                indeg[s] -= 1
                if indeg[s] == 0:
                    ready.append(s)
            ready.sort()
        return out

    assert kahn([(1, 0)], [0, 1]) == order


def test_macro_order_single_macro():
    nodes = [make_node(0, NodeKind.MACRO, 2.0, 2.0), make_node(1, NodeKind.CLUSTER, 1.0, 1.0)]
    nets = [Net(id=0, driver=0, loads=(1,))]
    assert macro_order(make_netlist(nodes, nets)) == [0]


def test_macro_order_permutation_invariant():
    rng = np.random.default_rng(0)
    nl = generate_synthetic(3, GenSpec(macro_count=5, cluster_count=3, net_count=12))
    base_order = macro_order(nl)
    # same ids, shuffled node list
    shuffled = list(nl.nodes)
    rng.shuffle(shuffled)
    nl2 = Netlist(
        nodes=tuple(shuffled), nets=nl.nets,
        canvas_width=nl.canvas_width, canvas_height=nl.canvas_height,
        h_capacity=nl.h_capacity, v_capacity=nl.v_capacity,
    )
    assert macro_order(nl2) == base_order


def test_macro_order_cycle_resolution():
    nodes = [make_node(i, NodeKind.MACRO, 2.0, 2.0) for i in range(2)]
    nets = [Net(id=0, driver=0, loads=(1,)), Net(id=1, driver=1, loads=(0,))]
    assert macro_order(make_netlist(nodes, nets)) == [0, 1]


# -- synthetic generation ------------------------------------------------------


def test_generate_deterministic_bytes():
    spec = GenSpec(macro_count=5, cluster_count=6, net_count=15)
    a = serialize_netlist(generate_synthetic(11, spec))
    b = serialize_netlist(generate_synthetic(11, spec))
    assert a == b


def test_generate_macro_count():
    nl = generate_synthetic(0, GenSpec(macro_count=10, cluster_count=2, net_count=8))
    assert len(nl.macros) == 10


def test_generate_random_specs_all_validate(rng):
    # validator is the oracle: 100/100 generated netlists parse and validate
    for i in range(100):
        spec = GenSpec(
            macro_count=int(rng.integers(1, 8)),
            cluster_count=int(rng.integers(0, 10)),
            net_count=int(rng.integers(1, 30)),
            port_count=int(rng.integers(0, 5)),
            canvas_width=float(rng.uniform(50, 200)),
            canvas_height=float(rng.uniform(50, 200)),
        )
        nl = generate_synthetic(i, spec)
        assert parse_netlist(serialize_netlist(nl)) == nl


def test_generate_infeasible_macro_budget():
    with pytest.raises(InfeasibleSpec):
        generate_synthetic(0, GenSpec(macro_count=60, cluster_count=0, net_count=5,
                                      macro_size_range=(0.3, 0.4)))
