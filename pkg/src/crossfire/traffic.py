"""Flow model: background, flash-crowd, attack and probe flows."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

from .errors import ValidationError

FLOW_KINDS = ("attack", "benign", "flash_crowd", "probe")


@dataclass(frozen=True)
class Flow:
    src: str
    dst: str
    rate: float
    kind: str
    active: bool = True
    throttled: bool = False  # already passed through a rate limiter

    def __post_init__(self):
        if self.rate < 0:
            raise ValueError(f"flow rate must be >= 0, got {self.rate}")
        if self.kind not in FLOW_KINDS:
            raise ValueError(f"unknown flow kind {self.kind!r}")


@dataclass(frozen=True)
class FlashCrowd:
    sources: tuple[str, ...]
    destinations: tuple[str, ...]
    per_source_rate: float
    start_tick: int
    end_tick: int


@dataclass(frozen=True)
class TrafficProfile:
    background: tuple[tuple[str, str, float], ...] = ()
    flash_crowd: FlashCrowd | None = None
    _flash_flows: tuple[Flow, ...] = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        fc = self.flash_crowd
        if fc is None or not fc.destinations:
            return
        # destinations are fixed: source i always talks to destination i mod m
        flows = tuple(
            Flow(src, fc.destinations[i % len(fc.destinations)], fc.per_source_rate, "flash_crowd")
            for i, src in enumerate(fc.sources)
        )
        object.__setattr__(self, "_flash_flows", flows)

    @property
    def flash_sources(self) -> frozenset:
        return frozenset(self.flash_crowd.sources) if self.flash_crowd else frozenset()


def flows_at(profile: TrafficProfile, tick: int) -> list[Flow]:
    if tick < 0:
        raise ValueError("tick must be >= 0")
    flows = [Flow(s, d, r, "benign") for s, d, r in profile.background]
    fc = profile.flash_crowd
    if fc is not None and fc.start_tick <= tick < fc.end_tick:
        flows.extend(profile._flash_flows)
    return flows


def apply_rate_limits(flows: Iterable[Flow], limited, rho: float = 0.0) -> list[Flow]:
    """Block (``rho == 0``) or scale by ``rho`` every flow from a limited source."""
    if not 0.0 <= rho <= 1.0:
        raise ValueError("rho must lie in [0, 1]")
    out = []
    for f in flows:
        if f.src in limited and not f.throttled:
            if rho > 0:
                f = replace(f, rate=f.rate * rho, throttled=True)
            else:
                f = replace(f, rate=0.0, active=False, throttled=True)
        out.append(f)
    return out


def load_profile(spec: Mapping | None, topo) -> TrafficProfile:
    """Parse the scenario "traffic" section and check hosts against ``topo``."""
    spec = spec or {}
    unknown = set(spec) - {"background", "flash_crowd"}
    if unknown:
        raise ValidationError(f"unknown traffic keys: {sorted(unknown)}", field=sorted(unknown)[0])

    def check_host(h, where):
        if h not in topo.hosts:
            raise ValidationError(f"{where}: unknown host {h!r}", field=where)

    background = []
    for i, item in enumerate(spec.get("background", [])):
        where = f"traffic.background[{i}]"
        if isinstance(item, Mapping):
            extra = set(item) - {"src", "dst", "rate"}
            if extra:
                raise ValidationError(f"{where}: unknown keys {sorted(extra)}", field=where)
            try:
                src, dst, rate = item["src"], item["dst"], item["rate"]
            except KeyError as exc:
                raise ValidationError(f"{where}: missing {exc.args[0]!r}", field=where) from None
        else:
            try:
                src, dst, rate = item
            except (TypeError, ValueError):
                raise ValidationError(f"{where}: expected [src, dst, rate]", field=where) from None
        check_host(src, where)
        check_host(dst, where)
        if topo.hosts[src].role == "bot":
            raise ValidationError(f"{where}: background traffic cannot come from a bot", field=where)
        if not isinstance(rate, (int, float)) or rate < 0:
            raise ValidationError(f"{where}: rate must be a number >= 0", field=where)
        background.append((src, dst, float(rate)))

    fc = None
    raw = spec.get("flash_crowd")
    if raw:
        where = "traffic.flash_crowd"
        keys = {"sources", "destinations", "per_source_rate", "start_tick", "end_tick"}
        extra = set(raw) - keys
        if extra:
            raise ValidationError(f"{where}: unknown keys {sorted(extra)}", field=where)
        missing = keys - set(raw)
        if missing:
            raise ValidationError(f"{where}: missing keys {sorted(missing)}", field=where)
        for h in list(raw["sources"]) + list(raw["destinations"]):
            check_host(h, where)
        if any(topo.hosts[h].role == "bot" for h in raw["sources"]):
            raise ValidationError(f"{where}: flash-crowd sources must not be bots", field=where)
        if raw["sources"] and not raw["destinations"]:
            raise ValidationError(f"{where}: needs at least one destination", field=where)
        fc = FlashCrowd(
            tuple(raw["sources"]),
            tuple(raw["destinations"]),
            float(raw["per_source_rate"]),
            int(raw["start_tick"]),
            int(raw["end_tick"]),
        )
    return TrafficProfile(tuple(background), fc)


def profile_to_spec(profile: TrafficProfile) -> dict:
    out: dict = {"background": [list(b) for b in profile.background]}
    fc = profile.flash_crowd
    if fc is not None:
        out["flash_crowd"] = {
            "sources": list(fc.sources),
            "destinations": list(fc.destinations),
            "per_source_rate": fc.per_source_rate,
            "start_tick": fc.start_tick,
            "end_tick": fc.end_tick,
        }
    return out
