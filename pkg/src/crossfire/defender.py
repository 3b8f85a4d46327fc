"""SDN-style defender: congestion detection, batched rerouting, suspicion scoring.

Flow statistics of tick ``t`` reach the controller at the end of tick
``t + T_d - 1``. Once a link shows up as DoS'ed the defender keeps
collecting for ``batch_delay`` ticks, decides one joint reroute plan, and
commits it ``control_delay`` ticks later (effective the following tick).
"""

from __future__ import annotations

import logging
import math
import random
import statistics
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple

from .errors import DisconnectError, NoCandidatesError, ValidationError
from .netmodel import RoutingState, Topology, commit_reroutes, link_loads

log = logging.getLogger(__name__)

STRATEGIES = ("random", "homogeneous")


class ObservedFlow(NamedTuple):
    """What the controller sees of a flow: no class label."""

    src: str
    dst: str
    rate: float


@dataclass(frozen=True)
class DefenderParams:
    theta_dos: float = 0.95
    d: int = 1
    T_d: int = 6
    batch_delay: int = 2
    control_delay: int = 1
    strategy: str = "homogeneous"
    beta: float = 2.0
    s_threshold: float = 3.0
    rho: float = 0.0
    # test hook: handle each DoS'ed link on its own instead of one joint plan
    per_link_handling: bool = False

    def __post_init__(self):
        if not 0 < self.theta_dos:
            raise ValidationError("defender.theta_dos must be > 0", field="defender.theta_dos")
        for name in ("d", "T_d"):
            if getattr(self, name) < 1:
                raise ValidationError(f"defender.{name} must be >= 1", field=f"defender.{name}")
        for name in ("batch_delay", "control_delay"):
            if getattr(self, name) < 0:
                raise ValidationError(f"defender.{name} must be >= 0", field=f"defender.{name}")
        if self.strategy not in STRATEGIES:
            raise ValidationError(
                f"defender.strategy must be one of {STRATEGIES}", field="defender.strategy"
            )
        if self.beta < 0:
            raise ValidationError("defender.beta must be >= 0", field="defender.beta")
        if not 0.0 <= self.rho <= 1.0:
            raise ValidationError("defender.rho must lie in [0, 1]", field="defender.rho")

    @property
    def reaction_time(self) -> int:
        return self.T_d + self.batch_delay + self.control_delay


@dataclass(frozen=True)
class CongestionReport:
    tick: int
    dosed_links: tuple[tuple[str, float], ...]
    window: tuple[int, int]

    @property
    def links(self) -> tuple[str, ...]:
        return tuple(l for l, _ in self.dosed_links)

    def __bool__(self):
        return bool(self.dosed_links)


@dataclass
class SourceRecord:
    score: float = 0.0
    observations: list = field(default_factory=list)  # (tick, link)
    diverted: dict = field(default_factory=dict)  # (dst, link) -> tick recorded
    limited: bool = False


class SuspicionLedger(dict):
    """source host ID -> :class:`SourceRecord`."""

    def record(self, src: str) -> SourceRecord:
        if src not in self:
            self[src] = SourceRecord()
        return self[src]

    def scores(self) -> dict[str, float]:
        return {s: r.score for s, r in sorted(self.items())}


@dataclass(frozen=True)
class ReroutePlan:
    batch_tick: int
    actions: tuple[tuple[str, frozenset], ...]
    predicted_loads: Mapping[str, float]
    best_effort: bool = False
    senders: Mapping[str, frozenset] = field(default_factory=dict, repr=False)

    @property
    def destinations(self) -> tuple[str, ...]:
        return tuple(d for d, _ in self.actions)


def monitor(load_samples, topo: Topology, theta_dos: float, d: int) -> CongestionReport:
    """Links at utilization >= ``theta_dos`` over the last ``d`` samples.

    ``load_samples`` is an ordered sequence of ``(tick, {link: load})``.
    """
    samples = list(load_samples)
    if len(samples) < d:
        raise ValueError(f"need at least d={d} samples, got {len(samples)}")
    tail = samples[-d:]
    last_tick, last = tail[-1]
    dosed = []
    for lid in sorted(last):
        cap = topo.capacity(lid)
        if all(loads.get(lid, 0.0) / cap >= theta_dos for _, loads in tail):
            dosed.append((lid, last[lid] / cap))
    return CongestionReport(last_tick, tuple(dosed), (samples[0][0], last_tick))


def _crossing(flows, routing: RoutingState, links) -> list[tuple[ObservedFlow, set]]:
    links = set(links)
    out = []
    for f in flows:
        if f.rate <= 0:
            continue
        path = routing.path(f.src, f.dst)
        if path is None:
            continue
        hit = links.intersection(path)
        if hit:
            out.append((f, hit))
    return out


def record_sources(
    report: CongestionReport,
    flows: Iterable[ObservedFlow],
    routing: RoutingState,
    ledger: SuspicionLedger,
    beta: float,
) -> SuspicionLedger:
    """+1 for every source seen on a DoS'ed link; +beta more if it is returning.

    A source returns when it carries a diversion record ``(dst0, link0)`` made
    before this report and now shows up on a different DoS'ed link, or on
    ``link0`` through a destination other than ``dst0``.
    """
    seen: dict[str, set] = {}
    for f, hit in _crossing(flows, routing, report.links):
        seen.setdefault(f.src, set()).update((f.dst, l) for l in hit)
    for src in sorted(seen):
        rec = ledger.record(src)
        pairs = seen[src]
        rec.score += 1
        returning = any(
            tick < report.tick and (l != l0 or d != d0)
            for (d0, l0), tick in rec.diverted.items()
            for d, l in pairs
        )
        if returning:
            rec.score += beta
        rec.observations.extend((report.tick, l) for l in sorted({l for _, l in pairs}))
    return ledger


def _source_rates(crossing, dst) -> list[float]:
    per_src: dict[str, float] = {}
    for f, _ in crossing:
        if f.dst == dst:
            per_src[f.src] = per_src.get(f.src, 0.0) + f.rate
    return [per_src[s] for s in sorted(per_src)]


def _spread(rates: list[float]) -> float:
    # a lone source says nothing about homogeneity, so it sorts last
    return statistics.variance(rates) if len(rates) > 1 else math.inf


def choose_reroutes(
    report: CongestionReport,
    routing: RoutingState,
    topo: Topology,
    flows,
    strategy: str,
    rng: random.Random,
    theta_dos: float,
    *,
    avoid: Iterable[str] | None = None,
) -> ReroutePlan:
    """One joint plan diverting destinations off all reported links.

    Destinations are added until every reported link is predicted below
    ``theta_dos``; if divertible destinations run out first the plan is
    flagged best-effort.
    """
    if not report:
        raise ValueError("empty congestion report")
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    flows = [f for f in flows if f.rate > 0]
    congested = set(report.links)
    avoid = frozenset(congested if avoid is None else avoid)
    senders: dict[str, set] = {}
    for f in flows:
        senders.setdefault(f.dst, set()).add(topo.hosts[f.src].attach)

    working = routing
    actions: list[tuple[str, frozenset]] = []
    tried: set[str] = set()

    def over(loads):
        return sorted(l for l in congested if loads.get(l, 0.0) / topo.capacity(l) >= theta_dos)

    loads = link_loads(working, flows)
    hot = over(loads)
    while hot:
        crossing = _crossing(flows, working, hot)
        cands = sorted({f.dst for f, _ in crossing} - tried)
        if not cands:
            break
        if strategy == "random":
            pick = rng.choice(cands)
        else:
            pick = min(cands, key=lambda d: (_spread(_source_rates(crossing, d)), d))
        tried.add(pick)
        try:
            trial = commit_reroutes(working, topo, [(pick, avoid)], {pick: senders.get(pick, ())})
        except DisconnectError:
            log.debug("destination %s is not divertible around %s", pick, sorted(avoid))
            continue
        working = trial
        actions.append((pick, avoid))
        loads = link_loads(working, flows)
        hot = over(loads)

    if not actions:
        raise NoCandidatesError(f"no destination on {sorted(congested)} can be diverted")
    return ReroutePlan(
        report.tick,
        tuple(actions),
        dict(sorted(loads.items())),
        best_effort=bool(hot),
        senders={d: frozenset(senders.get(d, ())) for d, _ in actions},
    )


def mark_diverted(
    plan: ReroutePlan,
    flows,
    routing_before: RoutingState,
    ledger: SuspicionLedger,
    tick: int | None = None,
) -> SuspicionLedger:
    tick = plan.batch_tick if tick is None else tick
    for dst, avoid in plan.actions:
        for f in flows:
            if f.dst != dst or f.rate <= 0:
                continue
            path = routing_before.path(f.src, f.dst) or ()
            for l in sorted(avoid.intersection(path)):
                ledger.record(f.src).diverted.setdefault((dst, l), tick)
    return ledger


def select_rate_limits(ledger: SuspicionLedger, s_threshold: float) -> set[str]:
    out = set()
    for src, rec in sorted(ledger.items()):
        if not rec.limited and rec.score >= s_threshold:
            rec.limited = True
            out.add(src)
    return out


@dataclass
class DefenderState:
    ledger: SuspicionLedger = field(default_factory=SuspicionLedger)
    samples: deque = field(default_factory=deque)  # (tick, loads, flows)
    phase: str = "monitoring"  # monitoring | batching | actuating
    holdoff: int = 0  # samples older than this predate the last commit
    batch_close: int = 0
    commit_tick: int = 0
    collected: dict = field(default_factory=dict)  # link -> utilization
    pending: list = field(default_factory=list)  # ReroutePlans awaiting commit
    pending_limits: set = field(default_factory=set)
    limited: set = field(default_factory=set)
    plans: list = field(default_factory=list)
    reports: list = field(default_factory=list)
    best_effort: int = 0
    no_candidates: int = 0
    rng: random.Random = field(default_factory=random.Random)


@dataclass
class DefenderOutcome:
    routing: RoutingState | None = None
    reroutes: list = field(default_factory=list)  # (dst, avoid) committed this tick
    new_limits: set = field(default_factory=set)


def _visible(state: DefenderState, tick: int, cfg: DefenderParams):
    upto = tick - (cfg.T_d - 1)
    return [(t, loads) for t, loads, _ in state.samples if state.holdoff <= t <= upto]


def _visible_flows(state: DefenderState, tick: int, cfg: DefenderParams):
    upto = tick - (cfg.T_d - 1)
    for t, _, flows in reversed(state.samples):
        if t <= upto:
            return flows
    return []


def defender_step(
    state: DefenderState,
    loads: Mapping[str, float],
    flows: Iterable[ObservedFlow],
    routing: RoutingState,
    topo: Topology,
    tick: int,
    cfg: DefenderParams,
) -> tuple[DefenderState, DefenderOutcome]:
    """One tick of the monitor -> decide -> control loop."""
    state.samples.append((tick, dict(loads), tuple(flows)))
    keep = cfg.T_d + cfg.d + 1
    while len(state.samples) > keep:
        state.samples.popleft()
    outcome = DefenderOutcome()

    if state.phase in ("monitoring", "batching"):
        window = _visible(state, tick, cfg)
        if len(window) >= cfg.d:
            report = monitor(window, topo, cfg.theta_dos, cfg.d)
            if report:
                if state.phase == "monitoring":
                    state.phase = "batching"
                    state.batch_close = tick + cfg.batch_delay
                    state.collected = {}
                    state.reports.append(report)
                for lid, util in report.dosed_links:
                    state.collected[lid] = util
        if state.phase == "batching" and tick >= state.batch_close:
            _decide(state, routing, topo, tick, cfg)
            state.phase = "actuating"
            state.commit_tick = tick + cfg.control_delay

    if state.phase == "actuating" and tick >= state.commit_tick:
        new = routing
        for plan in state.pending:
            new = commit_reroutes(new, topo, plan.actions, plan.senders)
            outcome.reroutes.extend(plan.actions)
        if state.pending:
            outcome.routing = new
        outcome.new_limits = set(state.pending_limits)
        state.limited |= state.pending_limits
        state.pending = []
        state.pending_limits = set()
        state.phase = "monitoring"
        state.holdoff = tick + 1
    return state, outcome


def _decide(state: DefenderState, routing: RoutingState, topo: Topology, tick: int, cfg):
    window_end = max(t for t, _, _ in state.samples if t <= tick - (cfg.T_d - 1))
    report = CongestionReport(
        tick, tuple(sorted(state.collected.items())), (state.holdoff, window_end)
    )
    flows = [f for f in _visible_flows(state, tick, cfg) if f.rate > 0]
    record_sources(report, flows, routing, state.ledger, cfg.beta)

    plans = []
    if cfg.per_link_handling:
        for lid, util in report.dosed_links:
            sub = CongestionReport(tick, ((lid, util),), report.window)
            try:
                plans.append(
                    choose_reroutes(sub, routing, topo, flows, cfg.strategy, state.rng, cfg.theta_dos)
                )
            except NoCandidatesError as exc:
                state.no_candidates += 1
                log.info("tick %d: %s", tick, exc)
    else:
        try:
            plans.append(
                choose_reroutes(report, routing, topo, flows, cfg.strategy, state.rng, cfg.theta_dos)
            )
        except NoCandidatesError as exc:
            state.no_candidates += 1
            log.info("tick %d: %s", tick, exc)

    for plan in plans:
        if plan.best_effort:
            state.best_effort += 1
        mark_diverted(plan, flows, routing, state.ledger, tick)
    state.pending = plans
    state.plans.extend(plans)
    threshold = math.inf if cfg.s_threshold is None else cfg.s_threshold
    state.pending_limits = select_rate_limits(state.ledger, threshold)
