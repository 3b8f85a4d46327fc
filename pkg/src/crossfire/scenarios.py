"""Built-in scenario files.

``figure1`` is the canonical attacker/defender interplay: a diamond where
bots at s1 reach the decoy cluster at s4 either over L_A (s1->s2, in front
of target-area host T1) or over L_B (s1->s3, in front of T2). Diverting a
decoy off one target link lands it behind the other, so every defender
reroute leaves the attacker a fresh target.
"""

from __future__ import annotations

import json
import random

from .errors import GenerationError, ValidationError

MAX_ATTEMPTS = 200


def _bots(n, node="s1"):
    return [{"id": f"b{i:02d}", "attach": node, "role": "bot"} for i in range(1, n + 1)]


def _diamond_topology(n_bots=12, extra_hosts=()):
    return {
        "nodes": ["s1", "s2", "s3", "s4"],
        "links": [
            {"id": "L_A", "src": "s1", "dst": "s2", "capacity": 10, "directed": False},
            {"id": "L_B", "src": "s1", "dst": "s3", "capacity": 10, "directed": False},
            {"id": "s2-s4", "src": "s2", "dst": "s4", "capacity": 100, "directed": False},
            {"id": "s3-s4", "src": "s3", "dst": "s4", "capacity": 100, "directed": False},
        ],
        "hosts": [
            {"id": "T1", "attach": "s2", "role": "target_area"},
            {"id": "T2", "attach": "s3", "role": "target_area"},
            {"id": "D1", "attach": "s4", "role": "decoy"},
            {"id": "D2", "attach": "s4", "role": "decoy"},
            {"id": "D3", "attach": "s4", "role": "decoy"},
            *extra_hosts,
            *_bots(n_bots),
        ],
    }


def figure1(total_ticks: int = 2000) -> dict:
    """Canonical scenario with matched reaction times (9 ticks each side)."""
    return {
        "topology": _diamond_topology(),
        "traffic": {"background": []},
        "attacker": {"k": 1, "bot_rate_cap": 1.0, "attack_margin": 1.0, "T_a": 5, "probe_duration": 4},
        "defender": {
            "theta_dos": 0.95,
            "d": 1,
            "T_d": 6,
            "batch_delay": 2,
            "control_delay": 1,
            "strategy": "homogeneous",
            "beta": 2.0,
            "s_threshold": None,
            "rho": 0.0,
        },
        "sim": {"total_ticks": total_ticks, "rng_seed": 1},
    }


def detection(total_ticks: int = 400) -> dict:
    """12 bots plus 8 flash-crowd clients of two popular servers behind L_A."""
    flash = [{"id": f"f{i}", "attach": "s1", "role": "benign"} for i in range(1, 9)]
    web = [
        {"id": "P1", "attach": "s4", "role": "benign"},
        {"id": "P2", "attach": "s4", "role": "benign"},
        {"id": "w1", "attach": "s1", "role": "benign"},
        {"id": "w2", "attach": "s1", "role": "benign"},
    ]
    spec = figure1(total_ticks)
    spec["topology"] = _diamond_topology(extra_hosts=flash + web)
    spec["traffic"] = {
        "background": [["w1", "P1", 0.5], ["w2", "P2", 0.5]],
        "flash_crowd": {
            "sources": [h["id"] for h in flash],
            "destinations": ["P1", "P2"],
            "per_source_rate": 0.25,
            "start_tick": 0,
            "end_tick": total_ticks,
        },
    }
    # 12 units on a capacity-10 link: the greedy plan enlists every bot
    spec["attacker"]["attack_margin"] = 1.2
    spec["defender"]["s_threshold"] = 3.0
    return spec


def batching(per_link: bool = False, batch_delay: int = 2, total_ticks: int = 50) -> dict:
    """Two parallel links flooded by static traffic, plus a third escape route.

    Sources x1/x2 send 10 units each to P2@s2 (via s1->s2) and P3@s3 (via
    s1->s3). Diverting P2 off s1->s2 alone puts it on s1->s3 and vice versa;
    only a joint plan avoiding both uses s1->s4.
    """
    link = lambda i, a, b, c: {"id": i, "src": a, "dst": b, "capacity": c, "directed": True}  # noqa: E731
    topo = {
        "nodes": ["s1", "s2", "s3", "s4"],
        "links": [
            link("s1-s2", "s1", "s2", 10),
            link("s1-s3", "s1", "s3", 10),
            link("s1-s4", "s1", "s4", 100),
            link("s2-s3", "s2", "s3", 100),
            link("s3-s2", "s3", "s2", 100),
            link("s4-s2", "s4", "s2", 100),
            link("s4-s3", "s4", "s3", 100),
        ],
        "hosts": [
            {"id": "x1", "attach": "s1", "role": "benign"},
            {"id": "x2", "attach": "s1", "role": "benign"},
            {"id": "P2", "attach": "s2", "role": "benign"},
            {"id": "P3", "attach": "s3", "role": "benign"},
        ],
    }
    return {
        "topology": topo,
        "traffic": {"background": [["x1", "P2", 10.0], ["x2", "P3", 10.0]]},
        "attacker": {},
        "defender": {
            "T_d": 4,
            "batch_delay": batch_delay,
            "control_delay": 1,
            "s_threshold": None,
            "per_link_handling": per_link,
        },
        "sim": {"total_ticks": total_ticks, "rng_seed": 0},
    }


def _connected(nodes, edges) -> bool:
    adj = {n: set() for n in nodes}
    for a, b in edges:
        adj[a].add(b)
        adj[b].add(a)
    seen = {nodes[0]}
    stack = [nodes[0]]
    while stack:
        for m in adj[stack.pop()]:
            if m not in seen:
                seen.add(m)
                stack.append(m)
    return len(seen) == len(nodes)


def random_scenario(
    nodes: int = 8,
    bots: int = 12,
    seed: int = 0,
    edge_prob: float | None = None,
    total_ticks: int = 300,
) -> dict:
    """Random connected topology; roles assigned deterministically from ``seed``."""
    if nodes < 4:
        raise ValidationError("random scenarios need at least 4 nodes", field="nodes")
    if bots < 1:
        raise ValidationError("random scenarios need at least 1 bot", field="bots")
    rng = random.Random(seed)
    p = min(1.0, 2.5 / nodes + 0.1) if edge_prob is None else edge_prob
    names = [f"n{i:02d}" for i in range(nodes)]
    pairs = [(a, b) for i, a in enumerate(names) for b in names[i + 1 :]]
    for _ in range(MAX_ATTEMPTS):
        edges = [e for e in pairs if rng.random() < p]
        if edges and _connected(names, edges):
            break
    else:
        raise GenerationError(
            f"no connected graph after {MAX_ATTEMPTS} attempts (nodes={nodes}, edge_prob={p})"
        )

    links = [
        {"id": f"{a}-{b}", "src": a, "dst": b, "capacity": rng.choice([5, 10, 10, 20, 40]), "directed": False}
        for a, b in edges
    ]
    spots = rng.sample(names, 4)
    bot_node, tgt_node, decoy_node, benign_node = spots
    hosts = [{"id": f"b{i:02d}", "attach": bot_node, "role": "bot"} for i in range(1, bots + 1)]
    hosts.append({"id": "T1", "attach": tgt_node, "role": "target_area"})
    for i in range(1, rng.randint(2, 3) + 1):
        where = decoy_node if i == 1 else rng.choice(names)
        hosts.append({"id": f"D{i}", "attach": where, "role": "decoy"})
    hosts.append({"id": "h1", "attach": benign_node, "role": "benign"})
    hosts.append({"id": "h2", "attach": rng.choice(names), "role": "benign"})
    flash_hosts = [{"id": f"f{i}", "attach": rng.choice(names), "role": "benign"} for i in range(1, 4)]
    hosts.extend(flash_hosts)

    return {
        "topology": {"nodes": names, "links": links, "hosts": hosts},
        "traffic": {
            "background": [["h1", "D1", round(rng.uniform(0.5, 2.0), 2)], ["h2", "T1", 1.0]],
            "flash_crowd": {
                "sources": [h["id"] for h in flash_hosts],
                "destinations": ["h1"],
                "per_source_rate": 0.5,
                "start_tick": total_ticks // 4,
                "end_tick": total_ticks // 2,
            },
        },
        "attacker": {"k": rng.choice([1, 1, 2]), "T_a": 5, "probe_duration": 4},
        "defender": {"strategy": rng.choice(["homogeneous", "random"])},
        "sim": {"total_ticks": total_ticks, "rng_seed": seed},
    }


def dumps(spec: dict) -> str:
    return json.dumps(spec, indent=2, sort_keys=True) + "\n"
