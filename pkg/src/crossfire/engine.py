"""Discrete-time co-simulation of the attacker and defender control loops."""

from __future__ import annotations

import csv
import io
import json
import math
import random
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Mapping

from . import attacker as atk
from . import defender as dfn
from .errors import CrossfireError, SimulationError, ValidationError
from .netmodel import (
    RoutingState,
    Topology,
    build_initial_routing,
    link_loads,
    load_topology,
    topology_to_spec,
)
from .traffic import TrafficProfile, apply_rate_limits, flows_at, load_profile, profile_to_spec

SECTIONS = ("topology", "traffic", "attacker", "defender", "sim")
CSV_COLUMNS = (
    "tick",
    "dosed_links",
    "routing_version",
    "reroutes",
    "limited_count",
    "attack_active",
    "max_utilization",
)


@dataclass(frozen=True)
class SimConfig:
    topology: Topology
    traffic: TrafficProfile = field(default_factory=TrafficProfile)
    attacker: atk.AttackerParams = field(default_factory=atk.AttackerParams)
    defender: dfn.DefenderParams = field(default_factory=dfn.DefenderParams)
    total_ticks: int = 1000
    rng_seed: int = 0

    def __post_init__(self):
        if isinstance(self.total_ticks, bool) or not isinstance(self.total_ticks, int):
            raise ValidationError("sim.total_ticks must be an integer", field="sim.total_ticks")
        if self.total_ticks < 1:
            raise ValidationError("sim.total_ticks must be >= 1", field="sim.total_ticks")


def _params(cls, raw, section):
    raw = dict(raw or {})
    names = {f.name for f in fields(cls)}
    unknown = set(raw) - names
    if unknown:
        key = sorted(unknown)[0]
        raise ValidationError(f"unknown {section} parameter {key!r}", field=f"{section}.{key}")
    if section == "defender" and "s_threshold" in raw:
        v = raw["s_threshold"]
        raw["s_threshold"] = math.inf if v is None or v in ("inf", "Infinity") else float(v)
    try:
        return cls(**raw)
    except TypeError as exc:
        raise ValidationError(f"bad {section} parameters: {exc}", field=section) from None


def load_scenario(spec: Mapping) -> SimConfig:
    """Validate a scenario mapping and build the :class:`SimConfig`."""
    if not isinstance(spec, Mapping):
        raise ValidationError("scenario must be a mapping", field="scenario")
    unknown = set(spec) - set(SECTIONS)
    if unknown:
        key = sorted(unknown)[0]
        raise ValidationError(f"unknown scenario section {key!r}", field=key)
    if "topology" not in spec:
        raise ValidationError("missing section 'topology'", field="topology")
    topo = load_topology(spec["topology"])
    profile = load_profile(spec.get("traffic"), topo)
    attacker = _params(atk.AttackerParams, spec.get("attacker"), "attacker")
    defender = _params(dfn.DefenderParams, spec.get("defender"), "defender")
    sim = dict(spec.get("sim") or {})
    unknown = set(sim) - {"total_ticks", "rng_seed"}
    if unknown:
        key = sorted(unknown)[0]
        raise ValidationError(f"unknown sim parameter {key!r}", field=f"sim.{key}")
    cfg = SimConfig(
        topo,
        profile,
        attacker,
        defender,
        total_ticks=sim.get("total_ticks", 1000),
        rng_seed=int(sim.get("rng_seed", 0)),
    )
    _check_reachability(cfg)
    return cfg


def read_scenario(path) -> SimConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read scenario {path}: {exc}", field="scenario") from None
    try:
        spec = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"scenario is not valid JSON: {exc}", field="scenario") from None
    return load_scenario(spec)


def scenario_to_spec(cfg: SimConfig) -> dict:
    def section(obj):
        out = {}
        for f in fields(obj):
            v = getattr(obj, f.name)
            out[f.name] = None if isinstance(v, float) and math.isinf(v) else v
        return out

    return {
        "topology": topology_to_spec(cfg.topology),
        "traffic": profile_to_spec(cfg.traffic),
        "attacker": section(cfg.attacker),
        "defender": section(cfg.defender),
        "sim": {"total_ticks": cfg.total_ticks, "rng_seed": cfg.rng_seed},
    }


def _check_reachability(cfg: SimConfig):
    routing = build_initial_routing(cfg.topology)
    fc = cfg.traffic.flash_crowd
    flows = flows_at(cfg.traffic, fc.start_tick if fc else 0)
    for f in flows:
        if routing.path(f.src, f.dst) is None:
            raise ValidationError(f"traffic flow {f.src}->{f.dst} is unroutable", field="traffic")


# -- trace --------------------------------------------------------------------

@dataclass(frozen=True)
class TickRecord:
    tick: int
    loads: Mapping[str, float]
    dosed_links: tuple[str, ...]
    routing_version: int
    reroutes: int
    rerouted: tuple[str, ...]
    limited_count: int
    attack_active: bool
    max_utilization: float
    attacker_phase: str
    plan_started: bool


@dataclass
class MetricsTrace:
    records: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.records:
            w.writerow(
                [
                    r.tick,
                    ";".join(r.dosed_links),
                    r.routing_version,
                    r.reroutes,
                    r.limited_count,
                    int(r.attack_active),
                    f"{r.max_utilization:.6f}",
                ]
            )
        return buf.getvalue()

    def summary_json(self) -> str:
        return json.dumps(self.summary, indent=2, sort_keys=True) + "\n"

    def write(self, out_dir) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        trace_path = out / "trace.csv"
        summary_path = out / "summary.json"
        trace_path.write_text(self.to_csv())
        summary_path.write_text(self.summary_json())
        return trace_path, summary_path


# -- simulation ---------------------------------------------------------------

@dataclass
class SimState:
    tick: int
    topology: Topology
    routing: RoutingState
    attacker: atk.AttackerState
    defender: dfn.DefenderState
    attack_flows: list
    limited: frozenset
    version_log: list = field(default_factory=list)  # routing version at end of each tick
    limited_log: list = field(default_factory=list)
    records: list = field(default_factory=list)
    attacker_rng: random.Random = field(default_factory=random.Random)

    @property
    def ledger(self) -> dfn.SuspicionLedger:
        return self.defender.ledger


def initial_state(cfg: SimConfig) -> SimState:
    seed = cfg.rng_seed
    return SimState(
        tick=0,
        topology=cfg.topology,
        routing=build_initial_routing(cfg.topology),
        attacker=atk.initial_state(cfg.attacker),
        defender=dfn.DefenderState(rng=random.Random(f"{seed}:defender")),
        attack_flows=[],
        limited=frozenset(),
        attacker_rng=random.Random(f"{seed}:attacker"),
    )


def step(state: SimState, cfg: SimConfig) -> SimState:
    """Advance one tick.

    Order: traffic + attack flows, rate limits, loads, defender (commits take
    effect next tick), attacker (sees routing as of the end of this tick),
    metrics.
    """
    t = state.tick
    if t >= cfg.total_ticks:
        raise SimulationError(f"tick {t} beyond total_ticks={cfg.total_ticks}")
    topo = state.topology

    flows = flows_at(cfg.traffic, t) + list(state.attack_flows)
    flows = apply_rate_limits(flows, state.limited, cfg.defender.rho)
    try:
        loads = link_loads(state.routing, flows)
    except CrossfireError as exc:
        raise SimulationError(f"tick {t}: {exc}") from exc

    # the controller never sees class labels
    observed = [dfn.ObservedFlow(f.src, f.dst, f.rate) for f in flows if f.rate > 0]
    version_before = state.routing.version
    try:
        _, outcome = dfn.defender_step(
            state.defender, loads, observed, state.routing, topo, t, cfg.defender
        )
    except CrossfireError as exc:
        raise SimulationError(f"tick {t}: defender failed: {exc}") from exc
    if outcome.routing is not None:
        state.routing = outcome.routing
    if outcome.new_limits:
        state.limited = state.limited | frozenset(outcome.new_limits)
    state.version_log.append(state.routing.version)
    state.limited_log.append(state.limited)

    lag = t - cfg.attacker.T_a
    seen_version = state.version_log[lag] if lag >= 0 else 0
    seen_limited = state.limited_log[lag] if lag >= 0 else frozenset()
    n_plans = len(state.attacker.plans)
    phase_before = state.attacker.phase
    try:
        _, next_flows = atk.attacker_step(
            state.attacker,
            state.routing,
            topo,
            t,
            cfg.attacker,
            seen_version=seen_version,
            seen_limited=seen_limited,
            limited=state.limited,
        )
    except CrossfireError as exc:
        raise SimulationError(f"tick {t}: attacker failed: {exc}") from exc
    state.attack_flows = next_flows

    theta = cfg.defender.theta_dos
    util = {lid: load / topo.capacity(lid) for lid, load in loads.items()}
    dosed = tuple(sorted(l for l, u in util.items() if u >= theta))
    plan = state.attacker.plan
    active = (
        phase_before == "flooding"
        and plan is not None
        and any(util.get(l, 0.0) >= theta for l in plan.target_links)
    )
    # plan_started marks the tick whose end produced a new plan (flows start next tick)
    state.records.append(
        TickRecord(
            tick=t,
            loads=dict(sorted(loads.items())),
            dosed_links=dosed,
            routing_version=version_before,
            reroutes=len(outcome.reroutes),
            rerouted=tuple(d for d, _ in outcome.reroutes),
            limited_count=len(state.limited),
            attack_active=active,
            max_utilization=max(util.values(), default=0.0),
            attacker_phase=phase_before,
            plan_started=len(state.attacker.plans) > n_plans,
        )
    )
    if len(state.routing.trees) != len(topo.hosts):
        raise SimulationError("routing lost a destination tree")
    state.tick = t + 1
    return state


def summarize(state: SimState, cfg: SimConfig) -> dict:
    topo = state.topology
    records = state.records
    bots = set(topo.hosts_with_role("bot"))
    limited = set(state.limited)
    true_pos = len(limited & bots)
    flash = cfg.traffic.flash_sources
    hist: dict[str, int] = {}
    for r in records:
        for d in r.rerouted:
            hist[d] = hist.get(d, 0) + 1
    all_bots_tick = None
    if bots:
        for r_tick, lim in enumerate(state.limited_log):
            if bots <= lim:
                all_bots_tick = r_tick
                break
    return {
        "total_ticks": cfg.total_ticks,
        "attack_effective_fraction": sum(r.attack_active for r in records) / cfg.total_ticks,
        "bot_recall": true_pos / len(bots) if bots else None,
        "bot_precision": true_pos / len(limited) if limited else None,
        "benign_false_positives": len(limited - bots),
        "flash_crowd_limited": len(limited & flash),
        "reroute_total": sum(r.reroutes for r in records),
        "reroute_histogram": dict(sorted(hist.items())),
        "routing_version": state.routing.version,
        "attack_plans": len(state.attacker.plans),
        "dormant_ticks": sum(r.attacker_phase == "dormant" for r in records),
        "best_effort_plans": state.defender.best_effort,
        "limited": sorted(limited),
        "all_bots_limited_tick": all_bots_tick,
        "rng_seed": cfg.rng_seed,
    }


def run(cfg: SimConfig, *, return_state: bool = False):
    """Run ``cfg.total_ticks`` steps and return the :class:`MetricsTrace`."""
    state = initial_state(cfg)
    while state.tick < cfg.total_ticks:
        step(state, cfg)
    trace = MetricsTrace(records=state.records, summary=summarize(state, cfg))
    if return_state:
        return trace, state
    return trace


def with_overrides(cfg: SimConfig, **changes) -> SimConfig:
    """Copy ``cfg`` with dotted or bare field overrides, e.g. ``defender.beta=1``."""
    sections = {"attacker": cfg.attacker, "defender": cfg.defender}
    top = {}
    for key, value in changes.items():
        section, name = resolve_field(key)
        if section is None:
            top[name] = value
        else:
            sections[section] = replace(sections[section], **{name: value})
    return replace(cfg, attacker=sections["attacker"], defender=sections["defender"], **top)


def resolve_field(key: str) -> tuple[str | None, str]:
    """Map ``"beta"``/``"defender.beta"``/``"sim.rng_seed"`` to (section, field)."""
    by_section = {
        "attacker": {f.name for f in fields(atk.AttackerParams)},
        "defender": {f.name for f in fields(dfn.DefenderParams)},
        "sim": {"total_ticks", "rng_seed"},
    }
    if "." in key:
        section, name = key.split(".", 1)
        if section not in by_section or name not in by_section[section]:
            raise ValidationError(f"{key!r} is not a SimConfig field", field=key)
    else:
        hits = [s for s, names in by_section.items() if key in names]
        if len(hits) != 1:
            raise ValidationError(f"{key!r} is not a SimConfig field", field=key)
        section, name = hits[0], key
    return (None if section == "sim" else section), name
