"""Deterministic discrete-event simulation of the swarm heartbeat and capture protocol.

Time is integer nanoseconds. Events are ordered by (time, source node, sequence
number), so a scenario always produces the same log. Message loss and delay
come only from the scenario script.

Scenario file format, one directive per line (``#`` starts a comment; times
accept ``s``, ``ms``, ``us`` and ``ns`` suffixes, bare numbers are seconds;
``*`` matches any node or message kind)::

    latency 1ms                           # default one-way delivery latency
    drop <kind> <src> <dst> [from] [until]  # lose matching messages sent in [from, until)
    delay <kind> <src> <dst> <extra>      # add latency to matching messages
    loss <kind> <probability>             # random loss, drawn from the scenario seed
    seed <int>
    capture <time>                        # anchor starts a capture round
    reposition <time> <node> <x> <y> <z>  # anchor sends a waypoint to a probe
"""

from __future__ import annotations

import copy
import heapq
import json
import os
import re
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from ..errors import ScenarioError, TopologyError

ROLES = ("Anchor", "Probe", "Accum")
KINDS = ("Heartbeat", "CaptureSync", "TraceReady", "Reposition", "TimerTick")
NS = 1_000_000_000


@dataclass
class NodeState:
    node_id: str
    role: str
    pose: tuple[float, float, float] = (0.0, 0.0, 0.0)
    status: str = "Normal"
    heartbeat_table: dict[str, int] = field(default_factory=dict)
    buf_ptr: str | None = None
    snr_estimate: float = 0.0
    peer_view: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.role not in ROLES:
            raise TopologyError(f"unknown role {self.role!r}")
        self.pose = tuple(float(v) for v in self.pose)

    def to_dict(self) -> dict:
        return {
            "node_id": self.node_id,
            "role": self.role,
            "pose": list(self.pose),
            "status": self.status,
            "heartbeat_table": dict(sorted(self.heartbeat_table.items())),
            "buf_ptr": self.buf_ptr,
            "snr_estimate": self.snr_estimate,
            "peer_view": dict(sorted(self.peer_view.items())),
        }


@dataclass(frozen=True)
class SimEvent:
    time_ns: int
    kind: str
    src: str
    dst: str
    seq: int
    payload: dict = field(default_factory=dict)

    def sort_key(self):
        return (self.time_ns, self.src, self.seq)


@dataclass(frozen=True)
class Rule:
    kind: str
    src: str
    dst: str
    t_from: int = 0
    t_until: int | None = None
    extra_ns: int = 0

    def matches(self, kind: str, src: str, dst: str, t: int) -> bool:
        if self.kind not in ("*", kind) or self.src not in ("*", src) or self.dst not in ("*", dst):
            return False
        return t >= self.t_from and (self.t_until is None or t < self.t_until)


@dataclass
class Scenario:
    latency_ns: int = 1_000_000
    drops: list[Rule] = field(default_factory=list)
    delays: list[Rule] = field(default_factory=list)
    losses: dict[str, float] = field(default_factory=dict)
    captures: list[int] = field(default_factory=list)
    repositions: list[tuple[int, str, tuple[float, float, float]]] = field(default_factory=list)
    seed: int = 0


_UNITS = {"s": NS, "ms": 1_000_000, "us": 1_000, "ns": 1}


def parse_time(text: str) -> int:
    """Duration string to integer nanoseconds."""
    m = re.fullmatch(r"([-+]?[0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)(s|ms|us|ns)?", text.strip())
    if not m:
        raise ScenarioError(f"bad time value {text!r}")
    return int(round(float(m.group(1)) * _UNITS[m.group(2) or "s"]))


def parse_scenario(text: str) -> Scenario:
    sc = Scenario()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        op, args = tok[0].lower(), tok[1:]
        try:
            if op == "latency":
                sc.latency_ns = parse_time(args[0])
            elif op == "seed":
                sc.seed = int(args[0])
            elif op == "drop":
                kind, src, dst = args[:3]
                t_from = parse_time(args[3]) if len(args) > 3 else 0
                t_until = parse_time(args[4]) if len(args) > 4 else None
                sc.drops.append(Rule(kind, src, dst, t_from, t_until))
            elif op == "delay":
                kind, src, dst, extra = args[:4]
                sc.delays.append(Rule(kind, src, dst, extra_ns=parse_time(extra)))
            elif op == "loss":
                p = float(args[1])
                if not 0 <= p <= 1:
                    raise ScenarioError("loss probability must be in [0, 1]")
                sc.losses[args[0]] = p
            elif op == "capture":
                sc.captures.append(parse_time(args[0]))
            elif op == "reposition":
                sc.repositions.append((parse_time(args[0]), args[1], tuple(float(v) for v in args[2:5])))
                if len(args) != 5:
                    raise IndexError
            else:
                raise ScenarioError(f"line {lineno}: unknown directive {op!r}")
        except (IndexError, ValueError) as exc:
            if isinstance(exc, ScenarioError):
                raise
            raise ScenarioError(f"line {lineno}: malformed {op!r} directive") from exc
        for rule in sc.drops + sc.delays:
            if rule.kind != "*" and rule.kind not in KINDS:
                raise ScenarioError(f"line {lineno}: unknown message kind {rule.kind!r}")
    return sc


def load_scenario(path: str | os.PathLike) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read())


@dataclass
class ProtocolResult:
    log: list[dict]
    nodes: dict[str, NodeState]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.log)

    def write(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_jsonl())

    def records(self, event: str | None = None, **match) -> list[dict]:
        out = []
        for r in self.log:
            if event is not None and r["event"] != event:
                continue
            if all(r.get(k) == v for k, v in match.items()):
                out.append(r)
        return out


def default_nodes() -> list[NodeState]:
    return [
        NodeState("A", "Anchor", (0.0, 0.0, 0.5)),
        NodeState("B", "Probe", (0.3, 0.0, 0.5)),
        NodeState("C", "Probe", (-0.3, 0.0, 0.5)),
        NodeState("D", "Accum", (0.0, 0.5, 1.0)),
    ]


def _check_topology(nodes: Iterable[NodeState]) -> dict[str, NodeState]:
    nodes = list(nodes)
    ids = [n.node_id for n in nodes]
    if len(set(ids)) != len(ids):
        raise TopologyError("node ids must be unique")
    roles = [n.role for n in nodes]
    if roles.count("Anchor") != 1 or roles.count("Accum") != 1 or roles.count("Probe") < 1:
        raise TopologyError("need exactly one Anchor, one Accum and at least one Probe")
    return {n.node_id: n for n in sorted(nodes, key=lambda n: n.node_id)}


class _Sim:
    def __init__(self, nodes, scenario: Scenario, duration_ns: int, t_hb_ns: int):
        self.nodes = nodes
        self.sc = scenario
        self.end = duration_ns
        self.t_hb = t_hb_ns
        self.queue: list = []
        self.seq = 0
        self.log: list[dict] = []
        self.rng = np.random.default_rng(scenario.seed)
        self.anchor = next(n for n in nodes.values() if n.role == "Anchor").node_id
        self.accum = next(n for n in nodes.values() if n.role == "Accum").node_id
        self.probes = [n.node_id for n in nodes.values() if n.role == "Probe"]
        self.rounds: dict[int, dict] = {}

    def push(self, t, kind, src, dst, payload=None, action="deliver"):
        self.seq += 1
        ev = SimEvent(t, kind, src, dst, self.seq, dict(payload or {}, _action=action))
        heapq.heappush(self.queue, (ev.sort_key(), ev))

    def record(self, t, event, **fields):
        self.log.append({"t_ns": t, "event": event, **fields})

    def send(self, t, kind, src, dst, payload):
        """Log a send and schedule delivery unless the scenario loses it."""
        self.record(t, "send", kind=kind, src=src, dst=dst, payload=payload)
        for rule in self.sc.drops:
            if rule.matches(kind, src, dst, t):
                self.record(t, "drop", kind=kind, src=src, dst=dst, reason="scripted")
                return
        p = self.sc.losses.get(kind, self.sc.losses.get("*", 0.0))
        if p > 0 and self.rng.random() < p:
            self.record(t, "drop", kind=kind, src=src, dst=dst, reason="random")
            return
        lat = self.sc.latency_ns + sum(r.extra_ns for r in self.sc.delays if r.matches(kind, src, dst, t))
        self.push(t + lat, kind, src, dst, payload)

    def evaluate(self, t, node: NodeState):
        stale = []
        for peer, last in sorted(node.heartbeat_table.items()):
            is_stale = t - last > 3 * self.t_hb
            view = "Solo" if is_stale else "Normal"
            if node.peer_view.get(peer) != view:
                self.record(t, "peer_status", node=node.node_id, peer=peer, status=view, staleness_ns=t - last)
                node.peer_view[peer] = view
            if is_stale:
                stale.append(peer)
        status = "Solo" if stale else "Normal"
        if status != node.status:
            self.record(t, "status", node=node.node_id, status=status, stale_peers=stale)
            node.status = status

    def run(self):
        for nid, node in self.nodes.items():
            for peer in self.nodes:
                if peer != nid:
                    node.heartbeat_table.setdefault(peer, 0)
                    node.peer_view.setdefault(peer, "Normal")
            self.push(0, "TimerTick", nid, nid, {"k": 0}, action="tick")
        for i, t in enumerate(sorted(self.sc.captures)):
            self.push(t, "CaptureSync", self.anchor, self.anchor, {"round": i}, action="start_capture")
        for t, target, wp in self.sc.repositions:
            if target not in self.nodes:
                raise ScenarioError(f"reposition target {target!r} is not a node")
            self.push(t, "Reposition", self.anchor, self.anchor, {"node": target, "waypoint": list(wp)}, action="start_reposition")

        while self.queue:
            (t, _, _), ev = heapq.heappop(self.queue)
            if t >= self.end:
                break
            action = ev.payload.get("_action")
            payload = {k: v for k, v in ev.payload.items() if k != "_action"}
            if action == "tick":
                self.on_tick(t, ev.src, payload["k"])
            elif action == "start_capture":
                self.on_start_capture(t, payload["round"])
            elif action == "start_reposition":
                self.send(t, "Reposition", self.anchor, payload["node"], {"waypoint": payload["waypoint"]})
            else:
                self.on_deliver(t, ev, payload)
        return ProtocolResult(self.log, self.nodes)

    def on_tick(self, t, nid, k):
        node = self.nodes[nid]
        self.evaluate(t, node)
        payload = {"pose": list(node.pose), "snr": node.snr_estimate, "buf_ptr": node.buf_ptr, "k": k}
        self.record(t, "heartbeat", node=nid, k=k)
        for peer in self.nodes:
            if peer != nid:
                self.send(t, "Heartbeat", nid, peer, payload)
        self.push((k + 1) * self.t_hb, "TimerTick", nid, nid, {"k": k + 1}, action="tick")

    def on_start_capture(self, t, rnd):
        anchor = self.nodes[self.anchor]
        anchor.buf_ptr = f"{self.anchor}:cap{rnd}"
        self.rounds[rnd] = {"acked": {}, "forwarded": False}
        self.record(t, "capture_start", round=rnd, node=self.anchor, buf_ptr=anchor.buf_ptr)
        for p in self.probes:
            self.send(t, "CaptureSync", self.anchor, p, {"round": rnd, "t_capture": t})

    def on_deliver(self, t, ev: SimEvent, payload):
        node = self.nodes[ev.dst]
        self.record(t, "recv", kind=ev.kind, src=ev.src, dst=ev.dst)
        if ev.kind == "Heartbeat":
            node.heartbeat_table[ev.src] = t
        elif ev.kind == "CaptureSync":
            node.buf_ptr = f"{node.node_id}:cap{payload['round']}"
            self.record(t, "latch", node=node.node_id, round=payload["round"], buf_ptr=node.buf_ptr)
            self.send(t, "TraceReady", node.node_id, ev.src, {"round": payload["round"], "buf_ptr": node.buf_ptr})
        elif ev.kind == "TraceReady" and node.role == "Anchor":
            rnd = self.rounds.setdefault(payload["round"], {"acked": {}, "forwarded": False})
            rnd["acked"][ev.src] = payload["buf_ptr"]
            if not rnd["forwarded"] and set(rnd["acked"]) >= set(self.probes):
                rnd["forwarded"] = True
                ptrs = {self.anchor: node.buf_ptr, **dict(sorted(rnd["acked"].items()))}
                self.send(t, "TraceReady", self.anchor, self.accum, {"round": payload["round"], "buf_ptrs": ptrs})
        elif ev.kind == "TraceReady" and node.role == "Accum":
            self.record(t, "capture_complete", round=payload["round"], buf_ptrs=payload["buf_ptrs"])
        elif ev.kind == "Reposition":
            node.pose = tuple(float(v) for v in payload["waypoint"])
            self.record(t, "moved", node=node.node_id, pose=list(node.pose))


def run_protocol(
    nodes: Iterable[NodeState] | None = None,
    scenario: Scenario | str | None = None,
    duration: float = 1.0,
    t_hb: float = 0.020,
) -> ProtocolResult:
    """Simulate ``duration`` seconds of the protocol.

    Every node broadcasts a heartbeat at each multiple of ``t_hb`` and, just
    before sending, re-evaluates peer staleness: a peer silent for more than
    ``3 * t_hb`` is viewed as Solo, and the node itself is Solo while any peer
    is stale. ``scenario`` may be a :class:`Scenario` or scenario-file text.
    """
    nodes = _check_topology(copy.deepcopy(list(nodes or default_nodes())))
    if isinstance(scenario, str):
        scenario = parse_scenario(scenario)
    scenario = scenario or Scenario()
    if t_hb <= 0 or duration <= 0:
        raise ValueError("duration and t_hb must be positive")
    return _Sim(nodes, scenario, int(round(duration * NS)), int(round(t_hb * NS))).run()
