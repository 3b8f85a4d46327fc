import random

import pytest

from crossfire import engine, scenarios
from crossfire.attacker import assign_bot_flows, probe_linkmap
from crossfire.defender import (
    CongestionReport,
    DefenderParams,
    DefenderState,
    ObservedFlow,
    ReroutePlan,
    SuspicionLedger,
    choose_reroutes,
    defender_step,
    mark_diverted,
    monitor,
    record_sources,
    select_rate_limits,
)
from crossfire.errors import NoCandidatesError, ValidationError
from crossfire.netmodel import build_initial_routing, link_loads, load_topology, reroute_destination

BOTS = [f"b{i:02d}" for i in range(1, 13)]
L_A = "L_A_fwd"


def report_on(*links, tick=10):
    return CongestionReport(tick, tuple((l, 1.0) for l in links), (0, tick))


def bot_flows(dst, bots=BOTS, rate=1.0):
    return [ObservedFlow(b, dst, rate) for b in bots]


class TestMonitor:
    def test_threshold(self, fig1_topo):
        rep = monitor([(0, {L_A: 9.6})], fig1_topo, 0.95, 1)
        assert rep.links == (L_A,)
        assert rep.dosed_links[0][1] == pytest.approx(0.96)

    def test_needs_consecutive_tail(self, fig1_topo):
        samples = [(0, {L_A: 9.6}), (1, {L_A: 2.0}), (2, {L_A: 9.6})]
        assert not monitor(samples, fig1_topo, 0.95, 2)
        assert monitor(samples, fig1_topo, 0.95, 1)

    def test_below_threshold(self, fig1_topo):
        assert not monitor([(0, {L_A: 9.4})], fig1_topo, 0.95, 1)

    def test_too_few_samples(self, fig1_topo):
        with pytest.raises(ValueError):
            monitor([(0, {})], fig1_topo, 0.95, 2)

    def test_fig1_full_plan(self, fig1_topo, fig1_routing):
        lm = probe_linkmap(fig1_routing, fig1_topo, BOTS, ["D1", "D2", "D3", "T1", "T2"], 0)
        plan = assign_bot_flows([L_A], lm, fig1_topo, 1.0)
        loads = link_loads(fig1_routing, plan.flows())
        assert monitor([(0, loads)], fig1_topo, 0.95, 1).links == (L_A,)


class TestRecordSources:
    def test_first_observation(self, fig1_routing):
        ledger = record_sources(report_on(L_A), bot_flows("D1", ["b01"]), fig1_routing, SuspicionLedger(), 2.0)
        assert ledger.scores() == {"b01": 1}

    def test_returning_source(self, fig1_routing):
        ledger = SuspicionLedger()
        record_sources(report_on(L_A, tick=5), bot_flows("D2", ["b01"]), fig1_routing, ledger, 2.0)
        ledger["b01"].diverted[("D2", L_A)] = 5
        record_sources(report_on(L_A, tick=20), bot_flows("D1", ["b01"]), fig1_routing, ledger, 2.0)
        assert ledger["b01"].score == 4

    def test_returning_on_other_link(self, fig1_topo, fig1_routing):
        ledger = SuspicionLedger()
        ledger.record("b01").diverted[("D2", L_A)] = 5
        moved = reroute_destination(fig1_routing, fig1_topo, "D2", {L_A})
        record_sources(report_on("L_B_fwd", tick=20), bot_flows("D2", ["b01"]), moved, ledger, 2.0)
        assert ledger["b01"].score == 3

    def test_same_pair_is_not_returning(self, fig1_routing):
        ledger = SuspicionLedger()
        ledger.record("b01").diverted[("D2", L_A)] = 5
        record_sources(report_on(L_A, tick=20), bot_flows("D2", ["b01"]), fig1_routing, ledger, 2.0)
        assert ledger["b01"].score == 1

    def test_source_off_dosed_links(self, fig1_routing):
        ledger = record_sources(report_on(L_A), bot_flows("T2", ["b01"]), fig1_routing, SuspicionLedger(), 2.0)
        assert ledger.scores() == {}


class TestChooseReroutes:
    def test_divert_d2(self, fig1_topo, fig1_routing):
        flows = bot_flows("D2", BOTS[:10])
        plan = choose_reroutes(report_on(L_A), fig1_routing, fig1_topo, flows, "homogeneous", random.Random(0), 0.95)
        assert plan.actions == (("D2", frozenset({L_A})),)
        assert plan.predicted_loads.get(L_A, 0.0) / 10 < 0.95
        assert not plan.best_effort

    def test_homogeneous_prefers_even_sources(self, fig1_topo, fig1_routing):
        # D3 fed evenly by 10 bots, D1 by a single heavy source
        flows = bot_flows("D3", BOTS[:10]) + [ObservedFlow("b11", "D1", 10.0)]
        plan = choose_reroutes(report_on(L_A), fig1_routing, fig1_topo, flows, "homogeneous", random.Random(0), 0.95)
        assert plan.destinations[0] == "D3"

    def test_homogeneous_variance_order(self, fig1_topo, fig1_routing):
        flows = (
            [ObservedFlow("b01", "D1", 0.2), ObservedFlow("b02", "D1", 1.8)]
            + [ObservedFlow(b, "D2", 1.0) for b in ("b03", "b04")]
            + bot_flows("D3", BOTS[4:12])
        )
        plan = choose_reroutes(report_on(L_A), fig1_routing, fig1_topo, flows, "homogeneous", random.Random(0), 0.95)
        assert plan.destinations[:2] == ("D2", "D3")

    def test_random_is_seeded(self, fig1_topo, fig1_routing):
        flows = [ObservedFlow(b, d, 1.0) for b in BOTS for d in ("D1", "D2", "D3")]
        picks = [
            choose_reroutes(report_on(L_A), fig1_routing, fig1_topo, flows, "random", random.Random(7), 0.95).actions
            for _ in range(2)
        ]
        assert picks[0] == picks[1]

    @staticmethod
    def funnel():
        # hub sits behind the only link into b; D can also be reached via c
        link = lambda i, x, y: {"id": i, "src": x, "dst": y, "capacity": 10, "directed": True}  # noqa: E731
        return load_topology({
            "nodes": ["a", "b", "c", "d"],
            "links": [link("ab", "a", "b"), link("ac", "a", "c"), link("bd", "b", "d"), link("cd", "c", "d")],
            "hosts": [{"id": "x", "attach": "a", "role": "bot"},
                      {"id": "hub", "attach": "b", "role": "benign"},
                      {"id": "D", "attach": "d", "role": "decoy"}],
        })

    def test_best_effort(self):
        topo = self.funnel()
        routing = build_initial_routing(topo)
        flows = [ObservedFlow("x", "hub", 12.0), ObservedFlow("x", "D", 1.0)]
        plan = choose_reroutes(report_on("ab"), routing, topo, flows, "homogeneous", random.Random(0), 0.95)
        assert plan.actions == (("D", frozenset({"ab"})),)
        assert plan.best_effort
        assert plan.predicted_loads["ab"] == 12.0

    def test_no_candidates(self):
        topo = self.funnel()
        flows = [ObservedFlow("x", "hub", 12.0)]
        with pytest.raises(NoCandidatesError):
            choose_reroutes(report_on("ab"), build_initial_routing(topo), topo, flows, "random", random.Random(0), 0.95)

    def test_empty_report(self, fig1_topo, fig1_routing):
        with pytest.raises(ValueError):
            choose_reroutes(report_on(), fig1_routing, fig1_topo, [], "random", random.Random(0), 0.95)


class TestMarkDiverted:
    plan = ReroutePlan(10, (("D2", frozenset({L_A})),), {})

    def test_records_diversion(self, fig1_routing):
        ledger = mark_diverted(self.plan, bot_flows("D2", ["b01"]), fig1_routing, SuspicionLedger())
        assert ledger["b01"].diverted == {("D2", L_A): 10}
        assert ledger["b01"].score == 0

    def test_path_not_via_link(self, fig1_topo, fig1_routing):
        moved = reroute_destination(fig1_routing, fig1_topo, "D2", {L_A})
        ledger = mark_diverted(self.plan, bot_flows("D2", ["b01"]), moved, SuspicionLedger())
        assert "b01" not in ledger

    def test_benign_diverted_is_not_suspicious(self):
        topo = load_topology(scenarios.detection()["topology"])
        plan = ReroutePlan(10, (("P1", frozenset({L_A})),), {})
        flows = [ObservedFlow("f1", "P1", 0.25)]
        ledger = mark_diverted(plan, flows, build_initial_routing(topo), SuspicionLedger())
        assert ledger["f1"].diverted and ledger["f1"].score == 0


class TestSelectRateLimits:
    def test_threshold(self):
        ledger = SuspicionLedger()
        for src, score in {"b1": 4, "b2": 2, "h9": 0}.items():
            ledger.record(src).score = score
        assert select_rate_limits(ledger, 3) == {"b1"}

    def test_empty(self):
        assert select_rate_limits(SuspicionLedger(), 3) == set()

    def test_not_reemitted(self):
        ledger = SuspicionLedger()
        ledger.record("b1").score = 4
        assert select_rate_limits(ledger, 3) == {"b1"}
        ledger["b1"].score = 10
        assert select_rate_limits(ledger, 3) == set()


def test_params_validation():
    with pytest.raises(ValidationError):
        DefenderParams(strategy="greedy")
    with pytest.raises(ValidationError):
        DefenderParams(T_d=0)
    assert DefenderParams().reaction_time == 9


def drive(topo, routing, cfg, flows_by_tick, ticks):
    """Feed ``defender_step`` directly; returns list of (tick, outcome)."""
    state = DefenderState(rng=random.Random(0))
    out = []
    for t in range(ticks):
        flows = flows_by_tick(t, routing)
        loads = link_loads(routing, flows)
        _, outcome = defender_step(state, loads, flows, routing, topo, t, cfg)
        if outcome.routing is not None:
            routing = outcome.routing
        out.append((t, outcome))
    return state, out


class TestDefenderStep:
    def test_quiet(self, fig1_topo, fig1_routing):
        cfg = DefenderParams()
        state, out = drive(fig1_topo, fig1_routing, cfg, lambda t, r: [ObservedFlow("b01", "D1", 1.0)], 30)
        assert all(not o.reroutes and o.routing is None for _, o in out)
        assert state.phase == "monitoring" and not state.ledger

    @pytest.mark.parametrize("start", [0, 3])
    def test_latency(self, fig1_topo, fig1_routing, start):
        cfg = DefenderParams(T_d=4, batch_delay=2, control_delay=1, s_threshold=None)
        flood = bot_flows("D2", BOTS[:10])
        _, out = drive(fig1_topo, fig1_routing, cfg, lambda t, r: flood if t >= start else [], 20)
        commits = [t for t, o in out if o.reroutes]
        # committed at the end of start+6, so the new tree carries traffic from start+7
        assert commits[0] + 1 - start == 7

    def test_two_links_one_batch(self):
        spec = scenarios.batching(total_ticks=12)
        spec["traffic"] = {
            "background": [["x1", "P2", 10.0]],
            "flash_crowd": {"sources": ["x2"], "destinations": ["P3"], "per_source_rate": 10.0,
                            "start_tick": 1, "end_tick": 12},
        }
        trace = engine.run(engine.load_scenario(spec))
        dosed = {r.tick: r.dosed_links for r in trace.records if r.dosed_links}
        assert dosed[0] == ("s1-s2",) and dosed[1] == ("s1-s2", "s1-s3")
        commits = [r for r in trace.records if r.reroutes]
        assert len(commits) == 1
        assert set(commits[0].rerouted) == {"P2", "P3"}

    def test_plan_relieves_link(self, fig1_cfg):
        trace = engine.run(engine.with_overrides(fig1_cfg, total_ticks=40))
        first = next(r for r in trace.records if r.reroutes)
        after = trace.records[first.tick + 1]
        assert after.loads.get(L_A, 0.0) / 10 < 0.95
