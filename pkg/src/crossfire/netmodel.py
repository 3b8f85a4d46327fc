"""Topology, destination-based routing and demanded link loads.

Routing is hop-count shortest path. Every tie is broken by comparing the
link-ID sequences lexicographically, so the same topology always yields the
same routes.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .errors import (
    CapacityError,
    DanglingEndpointError,
    DisconnectError,
    DuplicateIdError,
    NoPathError,
    UnknownNodeError,
    UnreachableFlowError,
    ValidationError,
)

ROLES = ("bot", "benign", "decoy", "target_area")

_TOPOLOGY_KEYS = {"nodes", "links", "hosts"}
_LINK_KEYS = {"id", "src", "dst", "capacity", "directed"}
_HOST_KEYS = {"id", "attach", "role"}


@dataclass(frozen=True)
class Link:
    id: str
    src: str
    dst: str
    capacity: float


@dataclass(frozen=True)
class Host:
    id: str
    attach: str
    role: str


@dataclass(frozen=True)
class Topology:
    nodes: tuple[str, ...]
    links: Mapping[str, Link]
    hosts: Mapping[str, Host]
    out_links: Mapping[str, tuple[str, ...]] = field(repr=False)
    in_links: Mapping[str, tuple[str, ...]] = field(repr=False)

    def hosts_with_role(self, role: str) -> list[str]:
        return sorted(h.id for h in self.hosts.values() if h.role == role)

    def capacity(self, link_id: str) -> float:
        return self.links[link_id].capacity

    def attach(self, host_id: str) -> str:
        return self.hosts[host_id].attach


def make_topology(nodes: Iterable[str], links: Iterable[Link], hosts: Iterable[Host]) -> Topology:
    """Validate already-expanded directed links and hosts, build adjacency."""
    node_list = []
    seen = set()
    for n in nodes:
        if not isinstance(n, str) or not n:
            raise ValidationError(f"node IDs must be non-empty strings, got {n!r}", field="nodes")
        if n in seen:
            raise DuplicateIdError(f"duplicate node ID {n!r}", field=n)
        seen.add(n)
        node_list.append(n)

    link_map: dict[str, Link] = {}
    for link in links:
        if link.id in link_map:
            raise DuplicateIdError(f"duplicate link ID {link.id!r}", field=link.id)
        for end in (link.src, link.dst):
            if end not in seen:
                raise DanglingEndpointError(
                    f"link {link.id!r} endpoint {end!r} is not a declared node", field=link.id
                )
        if link.src == link.dst:
            raise ValidationError(f"link {link.id!r} is a self-loop", field=link.id)
        if not link.capacity > 0:
            raise CapacityError(
                f"link {link.id!r} capacity must be > 0, got {link.capacity!r}", field=link.id
            )
        link_map[link.id] = link

    host_map: dict[str, Host] = {}
    for host in hosts:
        if host.id in host_map:
            raise DuplicateIdError(f"duplicate host ID {host.id!r}", field=host.id)
        if host.attach not in seen:
            raise UnknownNodeError(
                f"host {host.id!r} attaches to unknown node {host.attach!r}", field=host.id
            )
        if host.role not in ROLES:
            raise ValidationError(f"host {host.id!r} has unknown role {host.role!r}", field=host.id)
        host_map[host.id] = host

    out: dict[str, list[str]] = {n: [] for n in node_list}
    inn: dict[str, list[str]] = {n: [] for n in node_list}
    for lid in sorted(link_map):
        link = link_map[lid]
        out[link.src].append(lid)
        inn[link.dst].append(lid)
    return Topology(
        nodes=tuple(sorted(node_list)),
        links=dict(sorted(link_map.items())),
        hosts=dict(sorted(host_map.items())),
        out_links={n: tuple(v) for n, v in out.items()},
        in_links={n: tuple(v) for n, v in inn.items()},
    )


def load_topology(spec: Mapping) -> Topology:
    """Build a validated :class:`Topology` from the file-format mapping.

    Undirected links (``directed: false``, the default) expand to two
    directed links suffixed ``_fwd`` and ``_rev``.
    """
    if not isinstance(spec, Mapping):
        raise ValidationError("topology must be a mapping", field="topology")
    unknown = set(spec) - _TOPOLOGY_KEYS
    if unknown:
        raise ValidationError(f"unknown topology keys: {sorted(unknown)}", field=sorted(unknown)[0])
    for key in ("nodes", "links", "hosts"):
        if key not in spec:
            raise ValidationError(f"topology missing key {key!r}", field=key)

    raw_ids = set()
    links = []
    for i, raw in enumerate(spec["links"]):
        if not isinstance(raw, Mapping):
            raise ValidationError(f"link #{i} must be a mapping", field=f"links[{i}]")
        unknown = set(raw) - _LINK_KEYS
        if unknown:
            raise ValidationError(f"link #{i} has unknown keys {sorted(unknown)}", field=f"links[{i}]")
        missing = {"id", "src", "dst", "capacity"} - set(raw)
        if missing:
            raise ValidationError(f"link #{i} missing keys {sorted(missing)}", field=f"links[{i}]")
        lid = raw["id"]
        if lid in raw_ids:
            raise DuplicateIdError(f"duplicate link ID {lid!r}", field=lid)
        raw_ids.add(lid)
        cap = raw["capacity"]
        if isinstance(cap, bool) or not isinstance(cap, (int, float)):
            raise CapacityError(f"link {lid!r} capacity must be a number", field=lid)
        cap = float(cap)
        if raw.get("directed", False):
            links.append(Link(lid, raw["src"], raw["dst"], cap))
        else:
            links.append(Link(f"{lid}_fwd", raw["src"], raw["dst"], cap))
            links.append(Link(f"{lid}_rev", raw["dst"], raw["src"], cap))

    hosts = []
    for i, raw in enumerate(spec["hosts"]):
        if not isinstance(raw, Mapping):
            raise ValidationError(f"host #{i} must be a mapping", field=f"hosts[{i}]")
        unknown = set(raw) - _HOST_KEYS
        if unknown:
            raise ValidationError(f"host #{i} has unknown keys {sorted(unknown)}", field=f"hosts[{i}]")
        missing = _HOST_KEYS - set(raw)
        if missing:
            raise ValidationError(f"host #{i} missing keys {sorted(missing)}", field=f"hosts[{i}]")
        hosts.append(Host(raw["id"], raw["attach"], raw["role"]))

    return make_topology(spec["nodes"], links, hosts)


def topology_to_spec(topo: Topology) -> dict:
    """Serialize as directed links (round-trips through :func:`load_topology`)."""
    return {
        "nodes": list(topo.nodes),
        "links": [
            {"id": l.id, "src": l.src, "dst": l.dst, "capacity": l.capacity, "directed": True}
            for l in topo.links.values()
        ],
        "hosts": [{"id": h.id, "attach": h.attach, "role": h.role} for h in topo.hosts.values()],
    }


# -- shortest paths -----------------------------------------------------------

def _distances_to(topo: Topology, target: str, cost) -> dict[str, int]:
    """Reverse Dijkstra from ``target``; ``cost(link_id)`` returns None to exclude."""
    dist = {target: 0}
    heap = [(0, target)]
    while heap:
        d, node = heapq.heappop(heap)
        if d > dist[node]:
            continue
        for lid in topo.in_links[node]:
            w = cost(lid)
            if w is None:
                continue
            u = topo.links[lid].src
            nd = d + w
            if nd < dist.get(u, nd + 1):
                dist[u] = nd
                heapq.heappush(heap, (nd, u))
    return dist


def _best_next_link(topo: Topology, node: str, dist: Mapping[str, int], cost) -> str | None:
    # out_links are sorted, so the first optimal link is the lexicographically smallest
    for lid in topo.out_links[node]:
        w = cost(lid)
        if w is None:
            continue
        v = topo.links[lid].dst
        if v in dist and dist[v] + w == dist[node]:
            return lid
    return None


def _hop_cost(avoid):
    avoid = frozenset(avoid)
    return lambda lid: None if lid in avoid else 1


def shortest_path(topo: Topology, src: str, dst: str, avoid: Iterable[str] = ()) -> list[str]:
    """Minimum-hop path from node ``src`` to node ``dst`` as link IDs."""
    for n in (src, dst):
        if n not in topo.out_links:
            raise UnknownNodeError(f"unknown node {n!r}", field=n)
    cost = _hop_cost(avoid)
    dist = _distances_to(topo, dst, cost)
    if src not in dist:
        raise NoPathError(f"no path from {src!r} to {dst!r}")
    path = []
    node = src
    while node != dst:
        lid = _best_next_link(topo, node, dist, cost)
        path.append(lid)
        node = topo.links[lid].dst
    return path


# -- routing state ------------------------------------------------------------

@dataclass(frozen=True)
class SinkTree:
    """Next-hop link per node toward ``root`` (the destination's attach node)."""

    root: str
    next_link: Mapping[str, str]


class RoutingState:
    """Per-destination sink trees plus a commit counter.

    Treated as immutable: every change produces a new instance.
    """

    def __init__(self, topo: Topology, trees: Mapping[str, SinkTree], version: int = 0):
        self.topo = topo
        self.trees = dict(trees)
        self.version = version
        self._paths: dict[tuple[str, str], tuple[str, ...] | None] = {}

    def next_hop(self, dst: str, node: str) -> str | None:
        lid = self.trees[dst].next_link.get(node)
        return None if lid is None else self.topo.links[lid].dst

    def node_path(self, node: str, dst: str) -> tuple[str, ...] | None:
        """Links followed from ``node`` to host ``dst``; None when uncovered."""
        key = (node, dst)
        if key not in self._paths:
            tree = self.trees[dst]
            path = []
            cur = node
            limit = len(self.topo.nodes)
            while cur != tree.root:
                lid = tree.next_link.get(cur)
                if lid is None or len(path) > limit:
                    path = None
                    break
                path.append(lid)
                cur = self.topo.links[lid].dst
            self._paths[key] = None if path is None else tuple(path)
        return self._paths[key]

    def path(self, src_host: str, dst: str) -> tuple[str, ...] | None:
        return self.node_path(self.topo.hosts[src_host].attach, dst)

    def same_trees(self, other: "RoutingState") -> bool:
        return self.trees == other.trees

    def __eq__(self, other):
        if not isinstance(other, RoutingState):
            return NotImplemented
        return self.version == other.version and self.trees == other.trees

    def __repr__(self):
        return f"RoutingState(version={self.version}, destinations={len(self.trees)})"


def _tree(topo: Topology, root: str, cost) -> SinkTree:
    dist = _distances_to(topo, root, cost)
    nxt = {}
    for node in topo.nodes:
        if node != root and node in dist:
            nxt[node] = _best_next_link(topo, node, dist, cost)
    return SinkTree(root, nxt)


def build_initial_routing(topo: Topology) -> RoutingState:
    cost = _hop_cost(())
    trees = {}
    roots: dict[str, SinkTree] = {}
    for hid, host in topo.hosts.items():
        if host.attach not in roots:
            roots[host.attach] = _tree(topo, host.attach, cost)
        trees[hid] = roots[host.attach]
    return RoutingState(topo, trees, version=0)


def _avoid_tree(topo: Topology, dst: str, avoid: frozenset, senders) -> SinkTree:
    root = topo.hosts[dst].attach
    # Avoided links cost more than any avoid-free simple path, so nodes that can
    # still avoid them do, and the rest keep a fallback route.
    penalty = len(topo.nodes) + 1
    cost = lambda lid: penalty if lid in avoid else 1  # noqa: E731
    dist = _distances_to(topo, root, cost)
    bad = sorted(n for n in senders if n != root and dist.get(n, penalty) >= penalty)
    if bad:
        raise DisconnectError(
            f"rerouting {dst!r} around {sorted(avoid)} disconnects nodes {bad}",
            destination=dst,
            nodes=bad,
        )
    nxt = {}
    for node in topo.nodes:
        if node != root and node in dist:
            nxt[node] = _best_next_link(topo, node, dist, cost)
    return SinkTree(root, nxt)


def commit_reroutes(
    routing: RoutingState,
    topo: Topology,
    actions: Iterable[tuple[str, Iterable[str]]],
    senders: Mapping[str, Iterable[str]] | None = None,
) -> RoutingState:
    """Apply several (destination, avoid) actions atomically: one version bump."""
    trees = dict(routing.trees)
    for dst, avoid in actions:
        if dst not in topo.hosts:
            raise ValidationError(f"unknown destination host {dst!r}", field=dst)
        avoid = frozenset(avoid)
        if not avoid:
            raise ValueError("avoid set must be non-empty")
        if senders is not None and dst in senders:
            nodes = set(senders[dst])
        else:
            nodes = set(routing.trees[dst].next_link)
        trees[dst] = _avoid_tree(topo, dst, avoid, nodes)
    return RoutingState(topo, trees, version=routing.version + 1)


def reroute_destination(
    routing: RoutingState,
    topo: Topology,
    dst: str,
    avoid: Iterable[str],
    senders: Iterable[str] | None = None,
) -> RoutingState:
    """Recompute the sink tree of ``dst`` on the topology minus ``avoid``.

    ``senders`` are the nodes that must keep reachability; by default every
    node the current tree covers.
    """
    return commit_reroutes(
        routing, topo, [(dst, avoid)], None if senders is None else {dst: senders}
    )


def link_loads(routing: RoutingState, flows) -> dict[str, float]:
    """Demanded load per link (links with no traffic are omitted)."""
    loads: dict[str, float] = {}
    bad = []
    for f in flows:
        if f.src not in routing.topo.hosts or f.dst not in routing.trees:
            bad.append(f)
            continue
        path = routing.path(f.src, f.dst)
        if path is None:
            bad.append(f)
            continue
        if f.rate == 0:
            continue
        for lid in path:
            loads[lid] = loads.get(lid, 0.0) + f.rate
    if bad:
        raise UnreachableFlowError(
            f"{len(bad)} flow(s) cannot be routed: "
            + ", ".join(f"{f.src}->{f.dst}" for f in bad[:5]),
            flows=bad,
        )
    return loads


def utilization(topo: Topology, loads: Mapping[str, float]) -> dict[str, float]:
    return {lid: load / topo.links[lid].capacity for lid, load in loads.items()}


def check_loop_free(routing: RoutingState) -> None:
    """Raise AssertionError if any committed tree has a loop or dead end."""
    limit = len(routing.topo.nodes)
    for dst, tree in routing.trees.items():
        for node in tree.next_link:
            cur, steps = node, 0
            while cur != tree.root:
                lid = tree.next_link.get(cur)
                assert lid is not None, f"tree {dst}: node {cur} has no next hop"
                cur = routing.topo.links[lid].dst
                steps += 1
                assert steps <= limit, f"tree {dst}: loop from {node}"
