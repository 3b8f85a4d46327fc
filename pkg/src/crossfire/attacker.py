"""Crossfire attacker: link-map probing, target selection, bot assignment.

The attacker notices route changes (and rate-limited bots) only after its
route-measurement latency ``T_a``; it then re-probes for ``probe_duration``
ticks before launching a fresh plan. Bots send zero-rate probe flows while
probing and nothing while dormant.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .errors import EmptyCandidatesError, InsufficientCapacityError, ValidationError
from .netmodel import RoutingState, Topology
from .traffic import Flow

# relative slack when comparing planned load against margin * capacity
_REL_EPS = 1e-9


@dataclass(frozen=True)
class AttackerParams:
    k: int = 1
    bot_rate_cap: float = 1.0
    attack_margin: float = 1.0
    T_a: int = 5
    probe_duration: int = 4

    def __post_init__(self):
        if self.k < 1:
            raise ValidationError("attacker.k must be >= 1", field="attacker.k")
        if not self.bot_rate_cap > 0:
            raise ValidationError("attacker.bot_rate_cap must be > 0", field="attacker.bot_rate_cap")
        if not self.attack_margin > 0:
            raise ValidationError("attacker.attack_margin must be > 0", field="attacker.attack_margin")
        if self.T_a < 1:
            raise ValidationError("attacker.T_a must be >= 1", field="attacker.T_a")
        if self.probe_duration < 1:
            raise ValidationError(
                "attacker.probe_duration must be >= 1", field="attacker.probe_duration"
            )

    @property
    def reaction_time(self) -> int:
        return self.T_a + self.probe_duration


@dataclass(frozen=True)
class LinkMapView:
    observed_paths: Mapping[tuple[str, str], tuple[str, ...]]
    probed_at: int
    routing_version_seen: int
    diagnostics: tuple[str, ...] = ()


@dataclass(frozen=True)
class AttackPlan:
    target_links: tuple[str, ...]
    assignments: Mapping[str, tuple[tuple[str, float], ...]]
    planned_at: int
    planned_loads: Mapping[str, float] = field(default_factory=dict)

    def flows(self) -> list[Flow]:
        return [
            Flow(bot, decoy, rate, "attack")
            for bot, pairs in self.assignments.items()
            for decoy, rate in pairs
        ]

    @property
    def bots(self) -> frozenset:
        return frozenset(self.assignments)


def probe_linkmap(
    routing: RoutingState,
    topo: Topology,
    bots: Iterable[str],
    destinations: Iterable[str],
    tick: int,
) -> LinkMapView:
    """Traceroute every (bot, destination) pair; modelled as exact observation."""
    paths = {}
    diag = []
    dests = sorted(destinations)
    for d in dests:
        if topo.hosts[d].role not in ("decoy", "target_area"):
            raise ValidationError(f"probe destination {d!r} is not a decoy or target-area host", field=d)
    for bot in sorted(bots):
        for d in dests:
            path = routing.path(bot, d)
            if path is None:
                diag.append(f"{bot}->{d}: unreachable")
            else:
                paths[(bot, d)] = path
    return LinkMapView(paths, tick, routing.version, tuple(diag))


def flow_density(linkmap: LinkMapView) -> dict[str, int]:
    counts: Counter = Counter()
    for path in linkmap.observed_paths.values():
        counts.update(set(path))
    return dict(sorted(counts.items()))


def _links_toward(linkmap: LinkMapView, topo: Topology, role: str) -> set[str]:
    out = set()
    for (_, dst), path in linkmap.observed_paths.items():
        if topo.hosts[dst].role == role:
            out.update(path)
    return out


def select_target_links(
    density: Mapping[str, int], topo: Topology, linkmap: LinkMapView, k: int
) -> list[str]:
    """Densest ``k`` links that lie on a bot->target-area path and a bot->decoy path."""
    if k < 1:
        raise ValueError("k must be >= 1")
    candidates = _links_toward(linkmap, topo, "target_area") & _links_toward(linkmap, topo, "decoy")
    if not candidates:
        raise EmptyCandidatesError("no link is shared by bot->target-area and bot->decoy paths")
    ranked = sorted(candidates, key=lambda lid: (-density.get(lid, 0), lid))
    return ranked[:k]


def assign_bot_flows(
    targets: Iterable[str],
    linkmap: LinkMapView,
    topo: Topology,
    bot_rate_cap: float,
    attack_margin: float = 1.0,
    *,
    tick: int = 0,
    exclude: Iterable[str] = (),
) -> AttackPlan:
    """Greedy lexicographic bot filling.

    Each eligible bot splits ``bot_rate_cap`` evenly over the decoys whose
    path from that bot crosses some target. Bots are added in ID order until
    every target carries at least ``attack_margin * capacity``.
    """
    targets = tuple(targets)
    tset = set(targets)
    excluded = set(exclude)
    bot_decoys: dict[str, list[str]] = {}
    for (bot, dst), path in sorted(linkmap.observed_paths.items()):
        if bot in excluded or topo.hosts[dst].role != "decoy":
            continue
        if tset.intersection(path):
            bot_decoys.setdefault(bot, []).append(dst)

    need = {t: attack_margin * topo.capacity(t) for t in targets}
    loads = {t: 0.0 for t in targets}

    def satisfied(t):
        return loads[t] >= need[t] * (1 - _REL_EPS)

    assignments = {}
    for bot in sorted(bot_decoys):
        if all(satisfied(t) for t in targets):
            break
        decoys = bot_decoys[bot]
        rate = bot_rate_cap / len(decoys)
        contrib = {t: 0.0 for t in targets}
        for d in decoys:
            for t in tset.intersection(linkmap.observed_paths[(bot, d)]):
                contrib[t] += rate
        if not any(contrib[t] > 0 and not satisfied(t) for t in targets):
            continue
        assignments[bot] = tuple((d, rate) for d in decoys)
        for t in targets:
            loads[t] += contrib[t]

    if not all(satisfied(t) for t in targets):
        raise InsufficientCapacityError(
            "eligible bots cannot reach the attack margin: "
            + ", ".join(f"{t} {loads[t]:g}/{need[t]:g}" for t in targets),
            achievable=loads,
        )
    return AttackPlan(targets, assignments, tick, loads)


@dataclass
class AttackerState:
    phase: str = "probing"  # probing | flooding | dormant
    probe_done: int = 0  # tick at whose end the running probe completes
    retry_at: int = 0  # dormant: tick at whose end probing restarts
    linkmap: LinkMapView | None = None
    plan: AttackPlan | None = None
    plan_version: int = -1
    known_limited: frozenset = frozenset()
    last_error: str | None = None
    plans: list = field(default_factory=list)  # activation tick of each plan


def initial_state(cfg: AttackerParams) -> AttackerState:
    # probing spans ticks 0 .. probe_duration-1
    return AttackerState(phase="probing", probe_done=cfg.probe_duration - 1)


def _probe_flows(bots, destinations) -> list[Flow]:
    return [Flow(b, d, 0.0, "probe") for b in bots for d in destinations]


def attacker_step(
    state: AttackerState,
    routing: RoutingState,
    topo: Topology,
    tick: int,
    cfg: AttackerParams,
    *,
    seen_version: int,
    seen_limited: frozenset = frozenset(),
    limited: frozenset = frozenset(),
) -> tuple[AttackerState, list[Flow]]:
    """Advance the attacker at the end of ``tick``; returns flows for the next tick.

    ``seen_version``/``seen_limited`` are the network state as the attacker
    can currently observe it (``T_a`` ticks stale); ``limited`` is the
    current rate-limit set, which a fresh probe reveals.
    """
    bots = [b for b in topo.hosts_with_role("bot")]
    dests = sorted(topo.hosts_with_role("decoy") + topo.hosts_with_role("target_area"))

    if state.phase == "flooding":
        changed = seen_version != state.plan_version
        newly_limited = (seen_limited - state.known_limited) & state.plan.bots
        if changed or newly_limited:
            state.phase = "probing"
            state.probe_done = tick + cfg.probe_duration
            return state, _probe_flows([b for b in bots if b not in limited], dests)
        return state, state.plan.flows()

    if state.phase == "dormant":
        if tick >= state.retry_at:
            state.phase = "probing"
            state.probe_done = tick + cfg.probe_duration
            return state, _probe_flows([b for b in bots if b not in limited], dests)
        return state, []

    # probing
    free_bots = [b for b in bots if b not in limited]
    if tick < state.probe_done:
        return state, _probe_flows(free_bots, dests)
    linkmap = probe_linkmap(routing, topo, free_bots, dests, tick)
    state.linkmap = linkmap
    try:
        if not linkmap.observed_paths:
            raise EmptyCandidatesError("link-map is empty")
        density = flow_density(linkmap)
        targets = select_target_links(density, topo, linkmap, cfg.k)
        plan = assign_bot_flows(
            targets, linkmap, topo, cfg.bot_rate_cap, cfg.attack_margin, tick=tick + 1
        )
    except (EmptyCandidatesError, InsufficientCapacityError) as exc:
        state.phase = "dormant"
        state.retry_at = tick + cfg.T_a
        state.last_error = str(exc)
        return state, []
    state.phase = "flooding"
    state.plan = plan
    state.plan_version = routing.version
    state.known_limited = frozenset(limited)
    state.last_error = None
    state.plans.append(plan.planned_at)
    return state, plan.flows()
