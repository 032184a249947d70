"""Radial low-voltage grid model: buses, lines, transformer and feeder zones.

Topologies are trees rooted at a single slack bus (index 0). The transformer,
when present, is modelled as an ordinary series-impedance branch, so a valid
n-bus grid always carries exactly n - 1 branches. Impedances are per unit on
the shared system base (see gridmpv.units).
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field


class TopologyError(Exception):
    """Raised when a topology is unusable (non-radial, bad indices, ...)."""


@dataclass(frozen=True)
class Bus:
    index: int
    kind: str = "load"  # "slack" | "junction" | "load"
    v_nominal_v: float = 230.0
    name: str = ""


@dataclass(frozen=True)
class Line:
    from_bus: int
    to_bus: int
    r_pu: float
    x_pu: float
    i_max_a: float = math.inf
    name: str = ""

    @property
    def z_abs_pu(self) -> float:
        return math.hypot(self.r_pu, self.x_pu)


@dataclass(frozen=True)
class Transformer:
    hv_bus: int
    lv_bus: int
    r_pu: float
    x_pu: float
    s_rated_kva: float
    name: str = "trafo"

    # Branch-style aliases so lines and the transformer share one access path.
    @property
    def from_bus(self) -> int:
        return self.hv_bus

    @property
    def to_bus(self) -> int:
        return self.lv_bus

    @property
    def z_abs_pu(self) -> float:
        return math.hypot(self.r_pu, self.x_pu)


@dataclass
class ValidationReport:
    ok: bool
    violations: list = field(default_factory=list)


@dataclass
class GridTopology:
    """A radial grid. Treated as immutable after loading.

    zone_of maps each non-backbone bus to its feeder zone id; it is filled by
    load_topology (or an explicit partition_zones call) and left None for
    hand-built topologies that never need zones.
    """

    buses: list
    lines: list
    transformer: Transformer | None = None
    name: str = ""
    slack_bus: int = 0
    zone_of: dict | None = None

    @property
    def n_buses(self) -> int:
        return len(self.buses)

    def branches(self) -> list:
        out = []
        if self.transformer is not None:
            out.append(self.transformer)
        out.extend(self.lines)
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "GridTopology":
        buses = [
            Bus(
                index=int(b["index"]),
                kind=b.get("kind", "load"),
                v_nominal_v=float(b.get("v_nominal_v", 230.0)),
                name=b.get("name", ""),
            )
            for b in raw.get("buses", [])
        ]
        lines = [
            Line(
                from_bus=int(ln["from_bus"]),
                to_bus=int(ln["to_bus"]),
                r_pu=float(ln["r_pu"]),
                x_pu=float(ln["x_pu"]),
                i_max_a=float(ln.get("i_max_a", math.inf)),
                name=ln.get("name", ""),
            )
            for ln in raw.get("lines", [])
        ]
        trafo = None
        if raw.get("transformer") is not None:
            tr = raw["transformer"]
            trafo = Transformer(
                hv_bus=int(tr["hv_bus"]),
                lv_bus=int(tr["lv_bus"]),
                r_pu=float(tr["r_pu"]),
                x_pu=float(tr["x_pu"]),
                s_rated_kva=float(tr["s_rated_kva"]),
                name=tr.get("name", "trafo"),
            )
        return cls(buses=buses, lines=lines, transformer=trafo, name=raw.get("name", ""))


def adjacency(topology: GridTopology) -> dict:
    """Undirected adjacency: bus -> sorted list of (neighbor, branch)."""
    adj = {b.index: [] for b in topology.buses}
    for br in topology.branches():
        if br.from_bus in adj and br.to_bus in adj:
            adj[br.from_bus].append((br.to_bus, br))
            adj[br.to_bus].append((br.from_bus, br))
    for nbrs in adj.values():
        nbrs.sort(key=lambda item: item[0])
    return adj


def validate_radial(topology: GridTopology) -> ValidationReport:
    """Check that the topology is a tree rooted at a single slack bus."""
    v = []
    n = topology.n_buses
    ids = [b.index for b in topology.buses]
    if sorted(ids) != list(range(n)):
        v.append("buses: indices must be dense 0..%d without duplicates" % (n - 1))
        return ValidationReport(False, v)

    slacks = [b.index for b in topology.buses if b.kind == "slack"]
    if len(slacks) != 1:
        v.append("buses: expected exactly one slack bus, found %d" % len(slacks))
    elif slacks[0] != topology.slack_bus:
        v.append("buses: slack bus must be index %d, found %d" % (topology.slack_bus, slacks[0]))

    branches = topology.branches()
    seen_pairs = set()
    for br in branches:
        label = getattr(br, "name", "") or "%d-%d" % (br.from_bus, br.to_bus)
        if br.from_bus not in range(n) or br.to_bus not in range(n):
            v.append("branch %s: endpoint outside bus range" % label)
            continue
        if br.from_bus == br.to_bus:
            v.append("branch %s: self loop" % label)
            continue
        pair = (min(br.from_bus, br.to_bus), max(br.from_bus, br.to_bus))
        if pair in seen_pairs:
            v.append("branch %s: parallel branch between buses %d and %d" % (label, *pair))
        seen_pairs.add(pair)

    if v:
        return ValidationReport(False, v)

    if len(branches) != n - 1:
        v.append("branches: %d branches for %d buses, a radial grid needs %d" % (len(branches), n, n - 1))

    # Reachability from the slack; with n-1 branches this also rules out cycles.
    adj = adjacency(topology)
    seen = {topology.slack_bus}
    stack = [topology.slack_bus]
    while stack:
        node = stack.pop()
        for nbr, _ in adj[node]:
            if nbr not in seen:
                seen.add(nbr)
                stack.append(nbr)
    unreachable = sorted(set(range(n)) - seen)
    if unreachable:
        v.append("connectivity: buses %s not reachable from the slack" % unreachable)
    if len(branches) >= n and not unreachable:
        v.append("branches: cycle present")

    return ValidationReport(not v, v)


def parent_child_maps(topology: GridTopology):
    """BFS orientation from the slack: returns (parent, children) maps.

    parent[child] is defined for every non-slack bus; children[bus] lists the
    bus's tree children in ascending index order.
    """
    adj = adjacency(topology)
    root = topology.slack_bus
    parent = {}
    children = {b.index: [] for b in topology.buses}
    seen = {root}
    queue = [root]
    while queue:
        node = queue.pop(0)
        for nbr, _ in adj[node]:
            if nbr not in seen:
                seen.add(nbr)
                parent[nbr] = node
                children[node].append(nbr)
                queue.append(nbr)
    return parent, children


def _branch_by_child(topology: GridTopology, parent: dict) -> dict:
    out = {}
    for br in topology.branches():
        if parent.get(br.to_bus) == br.from_bus:
            out[br.to_bus] = br
        elif parent.get(br.from_bus) == br.to_bus:
            out[br.from_bus] = br
    return out


def _impedance_distances(topology: GridTopology) -> dict:
    """Dijkstra from the slack with |z| branch weights."""
    adj = adjacency(topology)
    dist = {topology.slack_bus: 0.0}
    heap = [(0.0, topology.slack_bus)]
    while heap:
        d, node = heapq.heappop(heap)
        if d > dist.get(node, math.inf):
            continue
        for nbr, br in adj[node]:
            nd = d + br.z_abs_pu
            if nd < dist.get(nbr, math.inf):
                dist[nbr] = nd
                heapq.heappush(heap, (nd, nbr))
    return dist


def backbone_buses(topology: GridTopology) -> list:
    """Main-path buses hosting the feeder attachment points.

    The trunk is the impedance-weighted shortest path from the slack to the
    electrically farthest bus. The backbone is the contiguous prefix of that
    path up to and including the deepest path bus that has at least one
    subtree hanging off the path; it degenerates to just the slack when the
    grid is a single unbranched run.
    """
    parent, children = parent_child_maps(topology)
    dist = _impedance_distances(topology)
    if topology.n_buses == 1:
        return [topology.slack_bus]

    farthest = max(dist, key=lambda b: (dist[b], -b))
    path = [farthest]
    while path[-1] != topology.slack_bus:
        path.append(parent[path[-1]])
    path.reverse()

    on_path = set(path)
    cut = 0  # index into path of the deepest bus with an off-path subtree
    for i, bus in enumerate(path):
        if any(ch not in on_path for ch in children[bus]):
            cut = i
    return path[: cut + 1]


def partition_zones(topology: GridTopology) -> dict:
    """Split the grid into feeder zones hanging off the backbone.

    Each subtree leaving a backbone bus (including the trunk continuation
    past the last branching bus) forms one zone. Returns a map from every
    non-backbone bus to its zone id; ids are assigned walking the backbone
    from the slack outward, feeder roots in ascending index order.
    """
    report = validate_radial(topology)
    if not report.ok:
        raise TopologyError("; ".join(report.violations))

    _, children = parent_child_maps(topology)
    backbone = backbone_buses(topology)
    in_backbone = set(backbone)

    zone_of = {}
    zone_id = 0
    for bus in backbone:
        for feeder_root in sorted(children[bus]):
            if feeder_root in in_backbone:
                continue
            stack = [feeder_root]
            while stack:
                node = stack.pop()
                zone_of[node] = zone_id
                stack.extend(children[node])
            zone_id += 1
    return zone_of


def load_topology(path: str) -> GridTopology:
    """Read a topology JSON file, validate it and attach the zone map."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    topo = GridTopology.from_dict(raw)
    report = validate_radial(topo)
    if not report.ok:
        raise TopologyError("%s: %s" % (path, "; ".join(report.violations)))
    topo.zone_of = partition_zones(topo)
    return topo
