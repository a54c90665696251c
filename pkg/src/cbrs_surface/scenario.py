"""Scenario description and YAML loading.

A scenario is an immutable key-value tree::

    seed: 7
    noise_floor_dbm: -94
    blockage_penalty_db: 15
    tdd: {config_id: 0}
    enb:
      - {id: enb1, channel_mhz: 3580, bandwidth_mhz: 20, position: [0, 0, 1.5], tx_power_dbm: -10}
    ue:
      - {id: ue1, position: [5, 2, 1], serving_enb: enb1, demand_mbps: 30}
    surface: {rows: 2, cols: 4, origin: [5, 0, 1.5]}
    events:
      - {time_ms: 2000, kind: blockage_on, ue: ue1}
    controller: {n_sf: 20, n_nf: 8}
    filter: {insertion_loss_db: -6.1}

Parse problems raise :class:`ScenarioError` naming the key path and line.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Optional

import yaml

from .core import CbrsChannel, ElementGainChain, Position
from .tdd import FrameConfig

EVENT_KINDS = ("blockage_on", "blockage_off", "enb_retune", "ue_demand", "enb_active")


class ScenarioError(ValueError):
    def __init__(self, message: str, key: str = "", line: Optional[int] = None):
        self.key = key
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key:
            where.append(f"key '{key}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


@dataclass(frozen=True)
class EnbSpec:
    id: str
    channel: CbrsChannel
    position: Position
    tx_power_dbm: float = -10.0
    tdd_config_id: int = 0
    active: bool = True

    @property
    def frame_config(self) -> FrameConfig:
        return FrameConfig.standard(self.tdd_config_id)


@dataclass(frozen=True)
class UeSpec:
    id: str
    position: Position
    serving_enb: str
    demand_mbps: float = 30.0
    velocity: tuple[float, float, float] = (0.0, 0.0, 0.0)


@dataclass(frozen=True)
class SurfaceSpec:
    """Planar grid of two-path elements; ``positions`` overrides the grid."""

    rows: int = 2
    cols: int = 4
    spacing_m: float = 0.15
    origin: Position = Position(5.0, 0.0, 1.5)
    positions: tuple[Position, ...] = ()
    chain: ElementGainChain = ElementGainChain()
    paths_per_element: int = 2

    def element_positions(self) -> list[Position]:
        if self.positions:
            return list(self.positions)
        out = []
        for r in range(self.rows):
            for c in range(self.cols):
                dy = (c - (self.cols - 1) / 2) * self.spacing_m
                dz = (r - (self.rows - 1) / 2) * self.spacing_m
                out.append(self.origin.moved(0.0, dy, dz))
        return out

    @property
    def element_count(self) -> int:
        return len(self.positions) if self.positions else self.rows * self.cols


@dataclass(frozen=True)
class ControllerParams:
    n_sf: int = 20
    n_nf: int = 8
    epsilon: float = 0.18  # ~ half a rate-table step
    perturb_prob: float = 0.25
    plateau: int = 50
    swap_frac: float = 0.05
    sync_threshold_db: float = 1.0
    clock_offset_ms: float = 0.0
    per_ue_schedule: bool = True
    optimize_uplink: bool = False
    sync_rounds: int = 3
    selection_rounds: int = 10


@dataclass(frozen=True)
class FilterParams:
    c0: float = 1.0e-12
    phi: float = 0.7
    gamma: float = 0.5
    l1: float = 0.5e-9
    insertion_loss_db: float = -6.1
    rolloff_db_per_20mhz: float = 3.23


@dataclass(frozen=True)
class EventSpec:
    time_ms: float
    kind: str
    target: Optional[str] = None
    value: Any = None


@dataclass(frozen=True)
class Scenario:
    enbs: tuple[EnbSpec, ...]
    ues: tuple[UeSpec, ...]
    surface: SurfaceSpec = SurfaceSpec()
    events: tuple[EventSpec, ...] = ()
    seed: int = 0
    noise_floor_dbm: float = -94.0
    blockage_penalty_db: float = 15.0
    env_extra_loss_db: float = 0.0
    snr_jitter_db: float = 1.0
    rsrp_noise_db: float = 0.0
    sniffer: Position = Position(5.0, 0.5, 1.0)
    controller: ControllerParams = ControllerParams()
    filter: FilterParams = FilterParams()
    full_load_mbps: float = 40.0

    def __post_init__(self):
        ids = [e.id for e in self.enbs]
        if len(set(ids)) != len(ids):
            raise ScenarioError("duplicate eNB id", "enb")
        active = [e for e in self.enbs if e.active]
        for i, a in enumerate(active):
            for b in active[i + 1 :]:
                if a.channel.overlaps(b.channel):
                    raise ScenarioError(f"eNBs {a.id} and {b.id} occupy overlapping channels", "enb")
        for u in self.ues:
            if u.serving_enb not in ids:
                raise ScenarioError(f"UE {u.id} serves unknown eNB {u.serving_enb}", "ue")
        times = [e.time_ms for e in self.events]
        if any(t < 0 for t in times) or times != sorted(times):
            raise ScenarioError("event times must be non-negative and sorted", "events")

    def enb(self, enb_id: str) -> EnbSpec:
        for e in self.enbs:
            if e.id == enb_id:
                return e
        raise KeyError(enb_id)

    def ue(self, ue_id: str) -> UeSpec:
        for u in self.ues:
            if u.id == ue_id:
                return u
        raise KeyError(ue_id)


# -- loading ---------------------------------------------------------------


class _Node:
    """A parsed YAML value with the line it came from."""

    def __init__(self, value, line: int, path: str):
        self.value = value
        self.line = line
        self.path = path

    def fail(self, message: str):
        raise ScenarioError(message, self.path, self.line)


def _wrap(node: yaml.Node, path: str) -> _Node:
    line = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        out = {}
        for k, v in node.value:
            key = str(yaml.safe_load(yaml.serialize(k)))
            if key in out:
                raise ScenarioError("duplicate key", f"{path}.{key}".lstrip("."), k.start_mark.line + 1)
            out[key] = _wrap(v, f"{path}.{key}".lstrip("."))
        return _Node(out, line, path)
    if isinstance(node, yaml.SequenceNode):
        return _Node([_wrap(v, f"{path}[{i}]") for i, v in enumerate(node.value)], line, path)
    return _Node(yaml.safe_load(yaml.serialize(node)), line, path)


class _Reader:
    def __init__(self, node: _Node):
        if not isinstance(node.value, dict):
            node.fail("expected a mapping")
        self.node = node
        self.used: set[str] = set()

    def has(self, key):
        return key in self.node.value

    def raw(self, key) -> _Node:
        self.used.add(key)
        return self.node.value[key]

    def get(self, key, kind, default=None, required=False):
        if key not in self.node.value:
            if required:
                self.node.fail(f"missing required key '{key}'")
            return default
        n = self.raw(key)
        return _coerce(n, kind)

    def done(self, allowed_extra=()):
        extra = set(self.node.value) - self.used - set(allowed_extra)
        if extra:
            k = sorted(extra)[0]
            self.node.value[k].fail(f"unknown key '{k}'")


def _coerce(n: _Node, kind):
    v = n.value
    if kind is float:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            n.fail(f"expected a number, got {v!r}")
        if not math.isfinite(float(v)):
            n.fail("expected a finite number")
        return float(v)
    if kind is int:
        if isinstance(v, bool) or not isinstance(v, int):
            n.fail(f"expected an integer, got {v!r}")
        return v
    if kind is bool:
        if not isinstance(v, bool):
            n.fail(f"expected true/false, got {v!r}")
        return v
    if kind is str:
        if not isinstance(v, (str, int)):
            n.fail(f"expected a string, got {v!r}")
        return str(v)
    if kind is Position:
        if not isinstance(v, list) or len(v) not in (2, 3):
            n.fail("expected a position [x, y] or [x, y, z]")
        return Position.of([_coerce(c, float) for c in v])
    if kind == "vec3":
        if not isinstance(v, list) or len(v) != 3:
            n.fail("expected a 3-vector")
        return tuple(_coerce(c, float) for c in v)
    raise TypeError(kind)


def _dataclass_block(node: Optional[_Node], cls, renames=None):
    if node is None:
        return cls()
    r = _Reader(node)
    kwargs = {}
    renames = renames or {}
    for f in fields(cls):
        key = renames.get(f.name, f.name)
        if r.has(key):
            default = f.default
            kind = type(default) if default is not None else float
            if kind is int and isinstance(r.node.value[key].value, float):
                kind = float
            kwargs[f.name] = r.get(key, kind)
    r.done()
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        node.fail(str(exc))


def _channel(r: _Reader) -> CbrsChannel:
    center = r.get("channel_mhz", float, required=True)
    bw = r.get("bandwidth_mhz", float, 20.0)
    try:
        return CbrsChannel.mhz(center, bw)
    except ValueError as exc:
        r.raw("channel_mhz").fail(str(exc))


def _enb(node: _Node, default_tdd: int) -> EnbSpec:
    r = _Reader(node)
    spec = EnbSpec(
        id=r.get("id", str, required=True),
        channel=_channel(r),
        position=r.get("position", Position, required=True),
        tx_power_dbm=r.get("tx_power_dbm", float, -10.0),
        tdd_config_id=r.get("tdd_config_id", int, default_tdd),
        active=r.get("active", bool, True),
    )
    if not 0 <= spec.tdd_config_id <= 6:
        node.fail("tdd_config_id must be 0-6")
    r.done()
    return spec


def _ue(node: _Node) -> UeSpec:
    r = _Reader(node)
    spec = UeSpec(
        id=r.get("id", str, required=True),
        position=r.get("position", Position, required=True),
        serving_enb=r.get("serving_enb", str, required=True),
        demand_mbps=r.get("demand_mbps", float, 30.0),
        velocity=r.get("velocity", "vec3", (0.0, 0.0, 0.0)),
    )
    if spec.demand_mbps < 0:
        node.fail("demand_mbps must be >= 0")
    r.done()
    return spec


def _surface(node: Optional[_Node]) -> SurfaceSpec:
    if node is None:
        return SurfaceSpec()
    r = _Reader(node)
    kwargs: dict[str, Any] = {}
    for key in ("rows", "cols", "paths_per_element"):
        if r.has(key):
            kwargs[key] = r.get(key, int)
    if r.has("spacing_m"):
        kwargs["spacing_m"] = r.get("spacing_m", float)
    if r.has("origin"):
        kwargs["origin"] = r.get("origin", Position)
    if r.has("positions"):
        pn = r.raw("positions")
        if not isinstance(pn.value, list) or not pn.value:
            pn.fail("expected a non-empty list of positions")
        kwargs["positions"] = tuple(_coerce(p, Position) for p in pn.value)
    if r.has("chain"):
        kwargs["chain"] = _dataclass_block(r.raw("chain"), ElementGainChain)
    r.done()
    spec = SurfaceSpec(**kwargs)
    if spec.element_count < 1:
        node.fail("surface needs at least one element")
    if spec.paths_per_element not in (1, 2):
        node.fail("paths_per_element must be 1 or 2")
    return spec


def _event(node: _Node) -> EventSpec:
    r = _Reader(node)
    t = r.get("time_ms", float, required=True)
    kind = r.get("kind", str, required=True)
    if kind not in EVENT_KINDS:
        r.raw("kind").fail(f"unknown event kind '{kind}' (expected one of {', '.join(EVENT_KINDS)})")
    target, value = None, None
    if kind in ("blockage_on", "blockage_off"):
        target = r.get("ue", str)
        value = r.get("penalty_db", float)
    elif kind == "enb_retune":
        target = r.get("enb", str, required=True)
        value = _channel(r)
    elif kind == "ue_demand":
        target = r.get("ue", str, required=True)
        value = r.get("demand_mbps", float, required=True)
    elif kind == "enb_active":
        target = r.get("enb", str, required=True)
        value = r.get("active", bool, required=True)
    r.done()
    return EventSpec(t, kind, target, value)


def parse_scenario(text: str, source: str = "<scenario>") -> Scenario:
    try:
        root_node = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ScenarioError(f"malformed YAML in {source}: {getattr(exc, 'problem', exc)}",
                            line=mark.line + 1 if mark else None) from None
    if root_node is None:
        raise ScenarioError(f"empty scenario {source}")
    root = _wrap(root_node, "")
    r = _Reader(root)
    tdd_default = 0
    if r.has("tdd"):
        tr = _Reader(r.raw("tdd"))
        tdd_default = tr.get("config_id", int, 0)
        if not 0 <= tdd_default <= 6:
            tr.raw("config_id").fail("tdd.config_id must be 0-6")
        tr.done()

    enb_node = r.raw("enb") if r.has("enb") else root.fail("missing required key 'enb'")
    if not isinstance(enb_node.value, list) or not enb_node.value:
        enb_node.fail("expected a non-empty list of eNBs")
    ue_node = r.raw("ue") if r.has("ue") else None
    if ue_node is not None and not isinstance(ue_node.value, list):
        ue_node.fail("expected a list of UEs")
    ev_node = r.raw("events") if r.has("events") else None
    if ev_node is not None and not isinstance(ev_node.value, list):
        ev_node.fail("expected a list of events")

    kwargs: dict[str, Any] = dict(
        enbs=tuple(_enb(n, tdd_default) for n in enb_node.value),
        ues=tuple(_ue(n) for n in (ue_node.value if ue_node else [])),
        surface=_surface(r.raw("surface") if r.has("surface") else None),
        events=tuple(_event(n) for n in (ev_node.value if ev_node else [])),
        controller=_dataclass_block(r.raw("controller") if r.has("controller") else None, ControllerParams),
        filter=_dataclass_block(r.raw("filter") if r.has("filter") else None, FilterParams),
    )
    for key in ("noise_floor_dbm", "blockage_penalty_db", "env_extra_loss_db", "snr_jitter_db",
                "rsrp_noise_db", "full_load_mbps"):
        if r.has(key):
            kwargs[key] = r.get(key, float)
    if r.has("seed"):
        kwargs["seed"] = r.get("seed", int)
    if r.has("sniffer"):
        sr = _Reader(r.raw("sniffer"))
        kwargs["sniffer"] = sr.get("position", Position, required=True)
        sr.done()
    r.done()
    try:
        return Scenario(**kwargs)
    except ScenarioError as exc:
        node = root.value.get(exc.key.split(".")[0]) if exc.key else None
        raise ScenarioError(str(exc).split(": ", 1)[-1], exc.key, node.line if node else None) from None


def load_scenario(path) -> Scenario:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {p}: {exc.strerror}") from None
    return parse_scenario(text, str(p))


def dump_scenario(s: Scenario) -> str:
    """Serialize back to the YAML form accepted by :func:`parse_scenario`."""

    def pos(p: Position):
        return [p.x, p.y, p.z]

    doc: dict[str, Any] = {
        "seed": s.seed,
        "noise_floor_dbm": s.noise_floor_dbm,
        "blockage_penalty_db": s.blockage_penalty_db,
        "env_extra_loss_db": s.env_extra_loss_db,
        "snr_jitter_db": s.snr_jitter_db,
        "rsrp_noise_db": s.rsrp_noise_db,
        "full_load_mbps": s.full_load_mbps,
        "sniffer": {"position": pos(s.sniffer)},
        "enb": [
            {"id": e.id, "channel_mhz": e.channel.center_mhz, "bandwidth_mhz": e.channel.bandwidth / 1e6,
             "position": pos(e.position), "tx_power_dbm": e.tx_power_dbm,
             "tdd_config_id": e.tdd_config_id, "active": e.active}
            for e in s.enbs
        ],
        "ue": [
            {"id": u.id, "position": pos(u.position), "serving_enb": u.serving_enb,
             "demand_mbps": u.demand_mbps, "velocity": list(u.velocity)}
            for u in s.ues
        ],
        "surface": {
            "rows": s.surface.rows, "cols": s.surface.cols, "spacing_m": s.surface.spacing_m,
            "origin": pos(s.surface.origin), "paths_per_element": s.surface.paths_per_element,
            "chain": {f.name: getattr(s.surface.chain, f.name) for f in fields(ElementGainChain)},
            **({"positions": [pos(p) for p in s.surface.positions]} if s.surface.positions else {}),
        },
        "controller": {f.name: getattr(s.controller, f.name) for f in fields(ControllerParams)},
        "filter": {f.name: getattr(s.filter, f.name) for f in fields(FilterParams)},
        "events": [_dump_event(e) for e in s.events],
    }
    return yaml.safe_dump(doc, sort_keys=False)


def _dump_event(e: EventSpec) -> dict:
    d: dict[str, Any] = {"time_ms": e.time_ms, "kind": e.kind}
    if e.kind in ("blockage_on", "blockage_off"):
        if e.target is not None:
            d["ue"] = e.target
        if e.value is not None:
            d["penalty_db"] = e.value
    elif e.kind == "enb_retune":
        d["enb"] = e.target
        d["channel_mhz"] = e.value.center_mhz
        d["bandwidth_mhz"] = e.value.bandwidth / 1e6
    elif e.kind == "ue_demand":
        d["ue"] = e.target
        d["demand_mbps"] = e.value
    elif e.kind == "enb_active":
        d["enb"] = e.target
        d["active"] = e.value
    return d
