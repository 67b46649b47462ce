"""Netlist data model: JSON parsing/serialization, validation, standard-cell
clustering, macro ordering, and synthetic netlist generation.

All values are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import InfeasibleSpec, InvalidTarget, SchemaError, ValidationError


class NodeKind(Enum):
    MACRO = "macro"
    STDCELL = "stdcell"
    CLUSTER = "cluster"
    PORT = "port"


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle, lower-left corner + extents, in length units."""

    x: float
    y: float
    w: float
    h: float

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    def overlap_area(self, other: "Rect") -> float:
        ox = min(self.x2, other.x2) - max(self.x, other.x)
        oy = min(self.y2, other.y2) - max(self.y, other.y)
        if ox <= 0.0 or oy <= 0.0:
            return 0.0
        return ox * oy


@dataclass(frozen=True)
class Node:
    id: int
    kind: NodeKind
    width: float
    height: float
    fixed: bool = False
    # Fixed nodes (ports) carry their pinned position; movable nodes get
    # positions from a Placement.
    x: float | None = None
    y: float | None = None

    @property
    def area(self) -> float:
        return self.width * self.height


@dataclass(frozen=True)
class Net:
    id: int
    driver: int
    loads: tuple[int, ...]
    weight: float = 1.0

    @property
    def pins(self) -> tuple[int, ...]:
        return (self.driver,) + self.loads

    @property
    def pin_count(self) -> int:
        return 1 + len(self.loads)


@dataclass(frozen=True)
class NetlistMetadata:
    horizontal_routing_capacity: float
    vertical_routing_capacity: float
    total_nets: int
    total_macros: int
    total_clusters: int
    canvas_width: float
    canvas_height: float
    grid_rows: int | None = None
    grid_cols: int | None = None

    def as_vector(self) -> np.ndarray:
        """Numeric feature vector consumed by the metadata encoder."""
        return np.array(
            [
                self.horizontal_routing_capacity,
                self.vertical_routing_capacity,
                float(self.total_nets),
                float(self.total_macros),
                float(self.total_clusters),
                self.canvas_width,
                self.canvas_height,
                float(self.grid_rows or 0),
                float(self.grid_cols or 0),
            ],
            dtype=np.float64,
        )


@dataclass(frozen=True)
class Netlist:
    nodes: tuple[Node, ...]
    nets: tuple[Net, ...]
    canvas_width: float
    canvas_height: float
    h_capacity: float
    v_capacity: float
    blockages: tuple[Rect, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "_node_by_id", {n.id: n for n in self.nodes})

    def node(self, node_id: int) -> Node:
        return self._node_by_id[node_id]

    def nodes_of_kind(self, kind: NodeKind) -> list[Node]:
        return [n for n in self.nodes if n.kind == kind]

    @property
    def macros(self) -> list[Node]:
        return self.nodes_of_kind(NodeKind.MACRO)

    @property
    def clusters(self) -> list[Node]:
        return self.nodes_of_kind(NodeKind.CLUSTER)

    @property
    def ports(self) -> list[Node]:
        return self.nodes_of_kind(NodeKind.PORT)

    @property
    def metadata(self) -> NetlistMetadata:
        return self.metadata_with_grid(None, None)

    def metadata_with_grid(self, rows: int | None, cols: int | None) -> NetlistMetadata:
        return NetlistMetadata(
            horizontal_routing_capacity=self.h_capacity,
            vertical_routing_capacity=self.v_capacity,
            total_nets=len(self.nets),
            total_macros=len(self.macros),
            total_clusters=len(self.clusters),
            canvas_width=self.canvas_width,
            canvas_height=self.canvas_height,
            grid_rows=rows,
            grid_cols=cols,
        )

    def star_edges(self) -> list[tuple[int, int, float]]:
        """Nets expanded to directed driver->load edges with net weights."""
        edges = []
        for net in self.nets:
            for load in net.loads:
                edges.append((net.driver, load, net.weight))
        return edges

    def fingerprint(self) -> str:
        """Stable content hash, used to key per-netlist learnable state."""
        return hashlib.sha256(serialize_netlist(self).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class ClusteredNetlist:
    """Netlist whose raw standard cells have been merged into cluster nodes."""

    base: Netlist
    cluster_map: Mapping[int, int] = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Validation


def validate_netlist(nl: Netlist) -> None:
    """Check every data-model invariant; raise ValidationError on the first failure."""
    if nl.canvas_width <= 0 or nl.canvas_height <= 0:
        raise ValidationError("canvas dimensions must be positive")
    if nl.h_capacity <= 0 or nl.v_capacity <= 0:
        raise ValidationError("routing capacities must be positive")

    ids = [n.id for n in nl.nodes]
    if sorted(ids) != list(range(len(ids))):
        raise ValidationError("node ids must be unique and contiguous from 0")

    for n in nl.nodes:
        if n.kind == NodeKind.PORT:
            if n.width != 0 or n.height != 0:
                raise ValidationError(f"port {n.id} must have zero size")
            if not n.fixed:
                raise ValidationError(f"port {n.id} must be fixed")
            if n.x is None or n.y is None:
                raise ValidationError(f"port {n.id} needs a pinned (x, y) position")
            if not (0 <= n.x <= nl.canvas_width and 0 <= n.y <= nl.canvas_height):
                raise ValidationError(f"port {n.id} lies off canvas")
        else:
            if n.width <= 0 or n.height <= 0:
                raise ValidationError(f"node {n.id} must have positive size")
            if n.kind == NodeKind.MACRO and (
                n.width > nl.canvas_width or n.height > nl.canvas_height
            ):
                raise ValidationError(f"macro {n.id} does not fit the canvas")

    net_ids = [e.id for e in nl.nets]
    if sorted(net_ids) != list(range(len(net_ids))):
        raise ValidationError("net ids must be unique and contiguous from 0")

    valid = set(ids)
    for net in nl.nets:
        if net.weight < 0:
            raise ValidationError(f"net {net.id} has negative weight")
        if not net.loads:
            raise ValidationError(f"net {net.id} has no loads")
        if net.driver in net.loads:
            raise ValidationError(f"net {net.id}: driver repeated among loads")
        for pin in net.pins:
            if pin not in valid:
                raise ValidationError(f"net {net.id} references unknown node {pin}")

    for b in nl.blockages:
        if b.w <= 0 or b.h <= 0:
            raise ValidationError("blockage extents must be positive")
        if b.x < 0 or b.y < 0 or b.x2 > nl.canvas_width or b.y2 > nl.canvas_height:
            raise ValidationError("blockage lies off canvas")


# ---------------------------------------------------------------------------
# JSON interchange

_KIND_FROM_STR = {k.value: k for k in NodeKind}

_TOP_KEYS = {"canvas", "technology", "blockages", "nodes", "nets"}
_CANVAS_KEYS = {"width", "height"}
_TECH_KEYS = {"h_capacity", "v_capacity"}
_BLOCKAGE_KEYS = {"x", "y", "w", "h"}
_NODE_KEYS = {"id", "kind", "w", "h", "fixed", "x", "y"}
_NET_KEYS = {"id", "driver", "loads", "weight"}


def _require(doc: Mapping, key: str, typ, where: str):
    if key not in doc:
        raise SchemaError(f"{where}: missing key '{key}'")
    val = doc[key]
    if typ is float:
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise SchemaError(f"{where}: '{key}' must be a number")
        return float(val)
    if typ is int:
        if isinstance(val, bool) or not isinstance(val, int):
            raise SchemaError(f"{where}: '{key}' must be an integer")
        return val
    if not isinstance(val, typ):
        raise SchemaError(f"{where}: '{key}' has wrong type")
    return val


def _reject_unknown(doc: Mapping, allowed: set, where: str):
    extra = set(doc) - allowed
    if extra:
        raise SchemaError(f"{where}: unknown keys {sorted(extra)}")


def parse_netlist(text: str) -> Netlist:
    """Parse a netlist JSON document; raises SchemaError / ValidationError."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise SchemaError(f"not valid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise SchemaError("top level must be an object")
    _reject_unknown(doc, _TOP_KEYS, "top level")

    canvas = _require(doc, "canvas", dict, "top level")
    _reject_unknown(canvas, _CANVAS_KEYS, "canvas")
    width = _require(canvas, "width", float, "canvas")
    height = _require(canvas, "height", float, "canvas")

    tech = _require(doc, "technology", dict, "top level")
    _reject_unknown(tech, _TECH_KEYS, "technology")
    h_cap = _require(tech, "h_capacity", float, "technology")
    v_cap = _require(tech, "v_capacity", float, "technology")

    blockages = []
    for i, b in enumerate(doc.get("blockages", [])):
        where = f"blockages[{i}]"
        if not isinstance(b, dict):
            raise SchemaError(f"{where}: must be an object")
        _reject_unknown(b, _BLOCKAGE_KEYS, where)
        blockages.append(
            Rect(
                _require(b, "x", float, where),
                _require(b, "y", float, where),
                _require(b, "w", float, where),
                _require(b, "h", float, where),
            )
        )

    nodes = []
    for i, nd in enumerate(_require(doc, "nodes", list, "top level")):
        where = f"nodes[{i}]"
        if not isinstance(nd, dict):
            raise SchemaError(f"{where}: must be an object")
        _reject_unknown(nd, _NODE_KEYS, where)
        kind_str = _require(nd, "kind", str, where)
        if kind_str not in _KIND_FROM_STR:
            raise SchemaError(f"{where}: unknown kind '{kind_str}'")
        kind = _KIND_FROM_STR[kind_str]
        if ("x" in nd or "y" in nd) and kind != NodeKind.PORT:
            raise SchemaError(f"{where}: only ports may carry a pinned position")
        nodes.append(
            Node(
                id=_require(nd, "id", int, where),
                kind=kind,
                width=_require(nd, "w", float, where),
                height=_require(nd, "h", float, where),
                fixed=_require(nd, "fixed", bool, where),
                x=_require(nd, "x", float, where) if "x" in nd else None,
                y=_require(nd, "y", float, where) if "y" in nd else None,
            )
        )

    nets = []
    for i, e in enumerate(_require(doc, "nets", list, "top level")):
        where = f"nets[{i}]"
        if not isinstance(e, dict):
            raise SchemaError(f"{where}: must be an object")
        _reject_unknown(e, _NET_KEYS, where)
        loads = _require(e, "loads", list, where)
        if not all(isinstance(x, int) and not isinstance(x, bool) for x in loads):
            raise SchemaError(f"{where}: loads must be integers")
        nets.append(
            Net(
                id=_require(e, "id", int, where),
                driver=_require(e, "driver", int, where),
                loads=tuple(loads),
                weight=float(e.get("weight", 1.0)),
            )
        )

    nl = Netlist(
        nodes=tuple(nodes),
        nets=tuple(nets),
        canvas_width=width,
        canvas_height=height,
        h_capacity=h_cap,
        v_capacity=v_cap,
        blockages=tuple(blockages),
    )
    validate_netlist(nl)
    return nl


def serialize_netlist(nl: Netlist) -> str:
    """Canonical JSON encoding; serialize->parse->serialize is byte-identical."""
    doc = {
        "canvas": {"width": nl.canvas_width, "height": nl.canvas_height},
        "technology": {"h_capacity": nl.h_capacity, "v_capacity": nl.v_capacity},
        "blockages": [{"x": b.x, "y": b.y, "w": b.w, "h": b.h} for b in nl.blockages],
        "nodes": [_node_doc(n) for n in sorted(nl.nodes, key=lambda n: n.id)],
        "nets": [
            {"id": e.id, "driver": e.driver, "loads": list(e.loads), "weight": e.weight}
            for e in sorted(nl.nets, key=lambda e: e.id)
        ],
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def _node_doc(n: Node) -> dict:
    doc = {"id": n.id, "kind": n.kind.value, "w": n.width, "h": n.height, "fixed": n.fixed}
    if n.x is not None:
        doc["x"] = n.x
    if n.y is not None:
        doc["y"] = n.y
    return doc


def load_netlist(path) -> Netlist:
    with open(path, "r", encoding="utf-8") as f:
        return parse_netlist(f.read())


def save_netlist(nl: Netlist, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(serialize_netlist(nl))


# ---------------------------------------------------------------------------
# Standard-cell clustering

def cluster_stdcells(nl: Netlist, target_clusters: int) -> ClusteredNetlist:
    """Merge raw standard cells into exactly ``target_clusters`` cluster nodes.

    Greedy agglomerative scheme: repeatedly merge the pair of clusters with
    the highest shared-net count per unit combined area, ties broken by the
    lowest (min-member-id, min-member-id) pair. Nets are rewired to cluster
    ids with duplicate pins merged; nets that collapse inside one cluster are
    dropped. Cluster dimensions are square with area equal to member area.
    """
    cells = [n for n in nl.nodes if n.kind == NodeKind.STDCELL]
    if not 1 <= target_clusters <= len(cells):
        raise InvalidTarget(
            f"target_clusters={target_clusters} not in [1, {len(cells)}]"
        )

    cell_ids = {n.id for n in cells}
    # group: representative (min member id) -> set of member ids
    groups: dict[int, set[int]] = {n.id: {n.id} for n in cells}
    areas: dict[int, float] = {n.id: n.area for n in cells}
    # nets touching each group (by net id), restricted to stdcell pins
    nets_of: dict[int, set[int]] = {n.id: set() for n in cells}
    for net in nl.nets:
        for pin in net.pins:
            if pin in cell_ids:
                nets_of[pin].add(net.id)

    while len(groups) > target_clusters:
        best = None  # (score, -rep_a, -rep_b) maximized; ties -> lowest pair
        reps = sorted(groups)
        for i, a in enumerate(reps):
            for b in reps[i + 1 :]:
                shared = len(nets_of[a] & nets_of[b])
                score = shared / (areas[a] + areas[b])
                key = (score, -a, -b)
                if best is None or key > best[0]:
                    best = (key, a, b)
        _, a, b = best
        groups[a] |= groups.pop(b)
        areas[a] += areas.pop(b)
        nets_of[a] |= nets_of.pop(b)

    # Rebuild node list: non-stdcell nodes keep their relative order, clusters
    # are appended; ids reassigned contiguously.
    keep = [n for n in nl.nodes if n.kind != NodeKind.STDCELL]
    id_map: dict[int, int] = {}
    new_nodes: list[Node] = []
    for new_id, n in enumerate(keep):
        id_map[n.id] = new_id
        new_nodes.append(replace(n, id=new_id))
    cluster_map: dict[int, int] = {}
    for rep in sorted(groups):
        new_id = len(new_nodes)
        side = math.sqrt(areas[rep])
        new_nodes.append(
            Node(id=new_id, kind=NodeKind.CLUSTER, width=side, height=side)
        )
        for member in groups[rep]:
            cluster_map[member] = new_id
        id_map[rep] = new_id

    def remap(pin: int) -> int:
        return cluster_map.get(pin, id_map.get(pin, -1))

    new_nets: list[Net] = []
    for net in nl.nets:
        driver = remap(net.driver)
        seen = {driver}
        loads = []
        for load in net.loads:
            m = remap(load)
            if m not in seen:
                seen.add(m)
                loads.append(m)
        if loads:
            new_nets.append(
                Net(id=len(new_nets), driver=driver, loads=tuple(loads), weight=net.weight)
            )

    base = Netlist(
        nodes=tuple(new_nodes),
        nets=tuple(new_nets),
        canvas_width=nl.canvas_width,
        canvas_height=nl.canvas_height,
        h_capacity=nl.h_capacity,
        v_capacity=nl.v_capacity,
        blockages=nl.blockages,
    )
    validate_netlist(base)
    return ClusteredNetlist(base=base, cluster_map=cluster_map)


# ---------------------------------------------------------------------------
# Macro ordering

def macro_order(nl: Netlist | ClusteredNetlist) -> list[int]:
    """Macro ids sorted by descending area; equal areas keep global topological order.

    The topological order is Kahn's algorithm over the driver->load digraph
    restricted to macros, always popping the lowest ready id; when a cycle
    blocks progress the remaining node with the lowest id is released first.
    """
    base = nl.base if isinstance(nl, ClusteredNetlist) else nl
    macros = sorted(base.macros, key=lambda n: n.id)
    macro_ids = [n.id for n in macros]
    macro_set = set(macro_ids)

    succ: dict[int, set[int]] = {i: set() for i in macro_ids}
    indeg: dict[int, int] = {i: 0 for i in macro_ids}
    for net in base.nets:
        if net.driver not in macro_set:
            continue
        for load in net.loads:
            if load in macro_set and load != net.driver and load not in succ[net.driver]:
                succ[net.driver].add(load)
                indeg[load] += 1

    import heapq

    ready = [i for i in macro_ids if indeg[i] == 0]
    heapq.heapify(ready)
    remaining = set(macro_ids)
    topo_index: dict[int, int] = {}
    while remaining:
        if not ready:
            # cycle: release the lowest remaining id
            forced = min(remaining)
            indeg[forced] = 0
            heapq.heappush(ready, forced)
        nid = heapq.heappop(ready)
        if nid not in remaining:
            continue
        remaining.discard(nid)
        topo_index[nid] = len(topo_index)
        for s in sorted(succ[nid]):
            if s in remaining:
                indeg[s] -= 1
                if indeg[s] == 0:
                    heapq.heappush(ready, s)

    return sorted(macro_ids, key=lambda i: (-base.node(i).area, topo_index[i]))


# ---------------------------------------------------------------------------
# Synthetic netlist generation

_DEFAULT_PIN_COUNTS = {2: 0.55, 3: 0.25, 4: 0.15, 5: 0.05}


@dataclass(frozen=True)
class GenSpec:
    """Parameters for the synthetic generator (stands in for proprietary blocks)."""

    macro_count: int
    cluster_count: int
    net_count: int
    canvas_width: float = 100.0
    canvas_height: float = 100.0
    pin_counts: Mapping[int, float] = field(
        default_factory=lambda: dict(_DEFAULT_PIN_COUNTS)
    )
    port_count: int = 4
    # macro side lengths as fractions of the smaller canvas dimension
    macro_size_range: tuple[float, float] = (0.06, 0.14)
    cluster_area_fraction: float = 0.20  # total cluster area / canvas area
    h_capacity: float = 10.0
    v_capacity: float = 10.0

    @staticmethod
    def from_dict(doc: Mapping) -> "GenSpec":
        allowed = {f for f in GenSpec.__dataclass_fields__}
        extra = set(doc) - allowed
        if extra:
            raise SchemaError(f"generator spec: unknown keys {sorted(extra)}")
        kwargs = dict(doc)
        if "pin_counts" in kwargs:
            kwargs["pin_counts"] = {int(k): float(v) for k, v in kwargs["pin_counts"].items()}
        if "macro_size_range" in kwargs:
            kwargs["macro_size_range"] = tuple(kwargs["macro_size_range"])
        return GenSpec(**kwargs)


def generate_synthetic(seed: int, spec: GenSpec) -> Netlist:
    """Deterministic synthetic netlist; output always passes validation.

    Raises InfeasibleSpec when the sampled macros would exceed 60% of the
    canvas area.
    """
    if spec.macro_count < 1 or spec.cluster_count < 0 or spec.net_count < 1:
        raise InfeasibleSpec("counts must be positive")
    rng = np.random.default_rng(seed)
    W, H = spec.canvas_width, spec.canvas_height
    base = min(W, H)

    nodes: list[Node] = []
    lo, hi = spec.macro_size_range
    for _ in range(spec.macro_count):
        w = float(rng.uniform(lo, hi) * base)
        h = float(rng.uniform(lo, hi) * base)
        nodes.append(Node(id=len(nodes), kind=NodeKind.MACRO, width=w, height=h))
    macro_area = sum(n.area for n in nodes)
    if macro_area > 0.6 * W * H:
        raise InfeasibleSpec(
            f"macro area {macro_area:.1f} exceeds 60% of canvas area {W * H:.1f}"
        )

    if spec.cluster_count:
        mean_area = spec.cluster_area_fraction * W * H / spec.cluster_count
        for _ in range(spec.cluster_count):
            side = float(math.sqrt(mean_area * rng.uniform(0.5, 1.5)))
            nodes.append(
                Node(id=len(nodes), kind=NodeKind.CLUSTER, width=side, height=side)
            )

    # ports spread along the canvas boundary
    for k in range(spec.port_count):
        t = (k + 0.5) / spec.port_count
        side = k % 4
        if side == 0:
            x, y = t * W, 0.0
        elif side == 1:
            x, y = W, t * H
        elif side == 2:
            x, y = (1 - t) * W, H
        else:
            x, y = 0.0, (1 - t) * H
        nodes.append(
            Node(id=len(nodes), kind=NodeKind.PORT, width=0.0, height=0.0,
                 fixed=True, x=float(x), y=float(y))
        )

    pin_values = sorted(spec.pin_counts)
    pin_probs = np.array([spec.pin_counts[p] for p in pin_values], dtype=float)
    pin_probs /= pin_probs.sum()
    n_nodes = len(nodes)

    nets: list[Net] = []
    for _ in range(spec.net_count):
        p = int(rng.choice(pin_values, p=pin_probs))
        p = min(p, n_nodes)
        picked = rng.choice(n_nodes, size=p, replace=False)
        nets.append(
            Net(
                id=len(nets),
                driver=int(picked[0]),
                loads=tuple(int(x) for x in picked[1:]),
                weight=1.0,
            )
        )

    nl = Netlist(
        nodes=tuple(nodes),
        nets=tuple(nets),
        canvas_width=W,
        canvas_height=H,
        h_capacity=spec.h_capacity,
        v_capacity=spec.v_capacity,
    )
    validate_netlist(nl)
    return nl
