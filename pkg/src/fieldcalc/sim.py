"""Deterministic network simulator.

Devices sit in the plane and are neighbours when within ``radius`` metres of
each other.  The :class:`Simulator` fires device rounds according to a
:class:`Schedule`, hands each round the latest exports received from current
neighbours, applies :class:`Perturbation` objects between rounds and records
everything in a :class:`Trace`.
"""
from __future__ import annotations

import hashlib
import heapq
import io
import math
import random
from bisect import bisect_right
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

import networkx as nx

from .engine import ExportTree, FieldRuntimeError, RoundContext, eval_round, format_path
from .lang import Program
from .values import format_value, to_json, values_close


class Environment:
    """Device positions, communication radius and sensor values."""

    def __init__(self, positions: dict, radius: float, sensors: Optional[dict] = None):
        if not positions:
            raise ValueError("an environment needs at least one device")
        if not radius > 0:
            raise ValueError("communication radius must be positive")
        self.radius = float(radius)
        self.positions: dict[int, tuple[float, float]] = {}
        self.sensors: dict[int, dict] = {}
        self._adj: dict[int, dict[int, float]] = {}
        self.next_id = 0
        for d in sorted(positions):
            self._insert(d, positions[d], (sensors or {}).get(d, {}))

    def _insert(self, d, pos, sensors):
        x, y = (float(v) for v in pos)
        if not (math.isfinite(x) and math.isfinite(y)):
            raise ValueError(f"device {d} has a non-finite position")
        self.positions[d] = (x, y)
        self.sensors[d] = dict(sensors)
        self._adj[d] = {}
        for other, p in self.positions.items():
            if other != d:
                r = math.dist((x, y), p)
                if r <= self.radius:
                    self._adj[d][other] = r
                    self._adj[other][d] = r
        self.next_id = max(self.next_id, d + 1)

    def _detach(self, d):
        for other in self._adj.pop(d):
            del self._adj[other][d]

    @property
    def devices(self) -> list[int]:
        return sorted(self.positions)

    def __contains__(self, d):
        return d in self.positions

    def __len__(self):
        return len(self.positions)

    def neighbours(self, d) -> set[int]:
        return set(self._adj[d])

    def ranges(self, d) -> dict[int, float]:
        return self._adj[d]

    def add_device(self, position, sensors=None, device: Optional[int] = None) -> int:
        d = self.next_id if device is None else device
        if d < self.next_id:
            raise ValueError(f"device id {d} was already used")
        self._insert(d, position, sensors or {})
        return d

    def remove_device(self, d):
        self._detach(d)
        del self.positions[d]
        del self.sensors[d]

    def move_device(self, d, position):
        sensors = self.sensors[d]
        self._detach(d)
        del self.positions[d]
        next_id = self.next_id
        self._insert(d, position, sensors)
        self.next_id = next_id

    def set_sensor(self, d, name, value):
        self.sensors[d][name] = value

    def copy(self) -> "Environment":
        env = Environment.__new__(Environment)
        env.radius = self.radius
        env.positions = dict(self.positions)
        env.sensors = {d: dict(s) for d, s in self.sensors.items()}
        env._adj = {d: dict(n) for d, n in self._adj.items()}
        env.next_id = self.next_id
        return env

    def edges(self) -> list[tuple[int, int, float]]:
        return [(a, b, r) for a in self.devices for b, r in sorted(self._adj[a].items()) if a < b]

    def graph(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(self.devices)
        g.add_weighted_edges_from(self.edges())
        return g

    def is_connected(self) -> bool:
        return nx.is_connected(self.graph())

    def hop_diameter(self) -> int:
        """Largest hop eccentricity over connected components."""
        g = self.graph()
        return max(nx.diameter(g.subgraph(c)) for c in nx.connected_components(g))

    def nearest(self, point) -> int:
        return min(self.devices, key=lambda d: (math.dist(self.positions[d], point), d))


def build_topology(kind: str, *, n: int = 0, spacing: float = 1.0, radius: float = 1.0,
                   rows: int = 0, cols: int = 0, width: float = 0.0, height: float = 0.0,
                   seed: int = 0, connected: bool = False, max_attempts: int = 1000) -> Environment:
    """Build a line, grid or uniformly random deployment.

    With ``connected=True`` random deployments are redrawn (from the same seeded
    generator) until the proximity graph is connected.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    if kind == "line":
        if n <= 0:
            raise ValueError("a line needs at least one device")
        return Environment({i: (i * spacing, 0.0) for i in range(n)}, radius)
    if kind == "grid":
        if rows <= 0 or cols <= 0:
            raise ValueError("a grid needs at least one device")
        return Environment(
            {r * cols + c: (c * spacing, r * spacing) for r in range(rows) for c in range(cols)},
            radius)
    if kind == "uniformRandom":
        if n <= 0:
            raise ValueError("uniformRandom needs at least one device")
        if width <= 0 or height <= 0:
            raise ValueError("area must be positive")
        rng = random.Random(seed)
        for _ in range(max_attempts):
            env = Environment(
                {i: (rng.uniform(0, width), rng.uniform(0, height)) for i in range(n)}, radius)
            if not connected or env.is_connected():
                return env
        raise ValueError(f"no connected deployment found in {max_attempts} attempts")
    raise ValueError(f"unknown topology kind {kind!r}")


def removal_keeping_connectivity(env: Environment, fraction: float, rng: random.Random,
                                 protect: Iterable[int] = ()) -> list[int]:
    """Pick ``ceil(fraction * n)`` devices whose joint removal leaves the rest
    connected; devices in ``protect`` are never picked."""
    want = math.ceil(fraction * len(env))
    g = env.graph()
    keep = set(protect)
    chosen: list[int] = []
    candidates = [d for d in env.devices if d not in keep]
    rng.shuffle(candidates)
    for d in candidates:
        if len(chosen) == want:
            break
        h = g.copy()
        h.remove_node(d)
        if h.number_of_nodes() and nx.is_connected(h):
            g = h
            chosen.append(d)
    if len(chosen) < want:
        raise ValueError(f"cannot remove {want} devices without disconnecting the network")
    return sorted(chosen)


@dataclass(frozen=True)
class Event:
    device: int
    time: float
    seq: int


@dataclass(frozen=True)
class Schedule:
    mode: str = "synchronous"  # synchronous | fair-async
    period: float = 1.0
    jitter: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("synchronous", "fair-async"):
            raise ValueError(f"unknown schedule mode {self.mode!r}")
        if not self.period > 0:
            raise ValueError("period must be positive")
        if not 0 <= self.jitter < 1:
            raise ValueError("jitter must lie in [0, 1)")


PERTURBATION_KINDS = ("addDevice", "removeDevice", "moveDevice", "setSensor")


@dataclass(frozen=True)
class Perturbation:
    at: float
    kind: str
    device: Optional[int] = None
    position: Optional[tuple] = None
    name: Optional[str] = None
    value: object = None
    sensors: Optional[dict] = None

    def __post_init__(self):
        if self.kind not in PERTURBATION_KINDS:
            raise ValueError(f"unknown perturbation kind {self.kind!r}")
        if self.kind != "addDevice" and self.device is None:
            raise ValueError(f"{self.kind} needs a device")
        if self.kind in ("addDevice", "moveDevice") and self.position is None:
            raise ValueError(f"{self.kind} needs a position")
        if self.kind == "setSensor" and self.name is None:
            raise ValueError("setSensor needs a sensor name")

    def apply(self, env: Environment) -> Optional[int]:
        if self.kind == "addDevice":
            return env.add_device(self.position, self.sensors, self.device)
        if self.device not in env:
            raise ValueError(f"{self.kind}: no live device {self.device}")
        if self.kind == "removeDevice":
            env.remove_device(self.device)
        elif self.kind == "moveDevice":
            env.move_device(self.device, self.position)
        else:
            env.set_sensor(self.device, self.name, self.value)
        return self.device


@dataclass(frozen=True)
class TraceRecord:
    time: float
    device: int
    seq: int
    value: object
    digest: str


@dataclass(frozen=True)
class Snapshot:
    time: float
    values: dict

    def __getitem__(self, d):
        return self.values[d]


def export_digest(export: ExportTree) -> str:
    items = sorted((format_path(p), repr(v)) for p, v in export.values.items())
    return hashlib.blake2b(repr(items).encode(), digest_size=8).hexdigest()


class Trace:
    """Space-time record of a run: one record per round plus environment epochs."""

    def __init__(self, env: Environment, period: float):
        self.period = period
        self.records: list[TraceRecord] = []
        self.changes: list[tuple[float, str, Optional[int]]] = []
        self.epochs: list[tuple[float, Environment]] = [(-math.inf, env.copy())]
        self.exports: list[tuple[float, int, ExportTree]] = []

    def environment_at(self, time: float) -> Environment:
        i = bisect_right([t for t, _ in self.epochs], time) - 1
        return self.epochs[max(i, 0)][1]

    @property
    def last_change(self) -> float:
        return self.changes[-1][0] if self.changes else -math.inf

    @property
    def end_time(self) -> float:
        return self.records[-1].time if self.records else 0.0

    def by_device(self) -> dict[int, list[TraceRecord]]:
        out: dict[int, list[TraceRecord]] = {}
        for r in self.records:
            out.setdefault(r.device, []).append(r)
        return out

    def snapshot(self, time: Optional[float] = None) -> Snapshot:
        """Last value of every live device at ``time`` (default: end of trace)."""
        if time is None:
            time = self.end_time
        live = self.environment_at(time)
        values = {}
        for r in self.records:
            if r.time > time:
                break
            if r.device in live:
                values[r.device] = r.value
        return Snapshot(time, values)

    def snapshots(self) -> Iterable[Snapshot]:
        """Snapshot after each distinct event time, in order."""
        values: dict = {}
        epoch_times = [t for t, _ in self.epochs]
        i = 0
        recs = self.records
        while i < len(recs):
            t = recs[i].time
            while i < len(recs) and recs[i].time == t:
                values[recs[i].device] = recs[i].value
                i += 1
            live = self.epochs[bisect_right(epoch_times, t) - 1][1]
            yield Snapshot(t, {d: v for d, v in values.items() if d in live})

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("time,device,value\n")
        for r in self.records:
            buf.write(f"{r.time!r},{r.device},{format_value(r.value)}\n")
        return buf.getvalue()

    def exports_json(self) -> list:
        return [
            {"time": t, "device": d,
             "exports": {format_path(p): to_json(v) for p, v in sorted(
                 e.values.items(), key=lambda kv: format_path(kv[0]))}}
            for t, d, e in self.exports
        ]


WarmStart = Callable[[int, ExportTree], ExportTree]


def random_rep_state(rng: random.Random, low: float = 0.0, high: float = 10.0) -> WarmStart:
    """Warm start that replaces every rep state leaf with a random value."""

    def scramble(v):
        if isinstance(v, bool):
            return rng.random() < 0.5
        if isinstance(v, float):
            return rng.uniform(low, high)
        if isinstance(v, tuple):
            return tuple(scramble(x) for x in v)
        return v

    def warm(device, export):
        values = {p: (scramble(v) if p in export.rep_paths else v)
                  for p, v in sorted(export.values.items(), key=lambda kv: format_path(kv[0]))}
        return ExportTree(values, export.rep_paths)

    return warm


class SimulationError(RuntimeError):
    def __init__(self, event: Event, cause: FieldRuntimeError):
        self.event = event
        self.cause = cause
        super().__init__(f"device {event.device} round {event.seq} at t={event.time!r}: {cause}")


class Simulator:
    def __init__(self, program: Program, env: Environment, schedule: Optional[Schedule] = None,
                 perturbations: Iterable[Perturbation] = (), *,
                 warm_start: Optional[WarmStart] = None, keep_exports: bool = False,
                 digests: bool = True):
        self.program = program
        self.env = env.copy()
        self.schedule = schedule or Schedule()
        self.rng = random.Random(self.schedule.seed)
        self.sync = self.schedule.mode == "synchronous"
        self.perturbations = deque(sorted(perturbations, key=lambda p: p.at))
        self.warm_start = warm_start
        self.keep_exports = keep_exports
        self.digests = digests
        self.trace = Trace(self.env, self.schedule.period)
        self.time = 0.0
        self.own: dict[int, ExportTree] = {}
        self.inbox: dict[int, dict[int, ExportTree]] = {d: {} for d in self.env.devices}
        self.seq: dict[int, int] = {}
        self.values: dict = {}
        self.quiet: dict[int, int] = {}
        self.queue: list[tuple[float, int]] = []
        self.pending: list[tuple[int, ExportTree]] = []
        self.round_time = -math.inf
        for d in self.env.devices:
            self._schedule_first(d, 0.0)

    # -- scheduling ------------------------------------------------------

    def _schedule_first(self, d, now):
        if self.sync:
            t = now
        else:
            t = now + self.rng.random() * self.schedule.period
        self.seq[d] = 0
        heapq.heappush(self.queue, (t, d))

    def _next_time(self, t):
        s = self.schedule
        if self.sync:
            return (round(t / s.period) + 1) * s.period
        return t + s.period * (1.0 + s.jitter * (2.0 * self.rng.random() - 1.0))

    # -- perturbations and delivery ---------------------------------------

    def _apply_due(self, t):
        changed = False
        while self.perturbations and self.perturbations[0].at <= t:
            p = self.perturbations.popleft()
            d = p.apply(self.env)
            self.trace.changes.append((t, p.kind, d))
            if p.kind == "addDevice":
                self.inbox[d] = {}
                self._schedule_first(d, t)
            elif p.kind == "removeDevice":
                self.inbox.pop(d, None)
                self.own.pop(d, None)
                self.values.pop(d, None)
                self.quiet.pop(d, None)
            changed = True
        if changed:
            for x, box in self.inbox.items():
                nb = self.env.ranges(x)
                for s in [s for s in box if s not in nb]:
                    del box[s]
            self.quiet = {d: 0 for d in self.quiet}
            self.trace.epochs.append((t, self.env.copy()))

    def _deliver(self, sender, export):
        if sender not in self.env:
            return
        for n in self.env.ranges(sender):
            self.inbox[n][sender] = export

    def _flush(self):
        for sender, export in self.pending:
            self._deliver(sender, export)
        self.pending.clear()

    # -- rounds ------------------------------------------------------------

    def context(self, d) -> RoundContext:
        box = self.inbox[d]
        ranges = self.env.ranges(d)
        exports = {n: box[n] for n in sorted(box) if n in ranges}
        return RoundContext(
            self_id=d,
            sensors=self.env.sensors[d],
            prev_export=self.own.get(d),
            nbr_exports=exports,
            nbr_ranges={n: ranges[n] for n in exports},
        )

    def step(self) -> Optional[Event]:
        """Fire the next scheduled round; ``None`` when nothing is scheduled."""
        while self.queue:
            t, d = self.queue[0]
            if self.pending and t > self.round_time:
                self._flush()
            self._apply_due(t)
            heapq.heappop(self.queue)
            if d not in self.env:
                continue
            return self._fire(d, t)
        self._flush()
        return None

    def _fire(self, d, t) -> Event:
        self.time = t
        self.round_time = t
        event = Event(d, t, self.seq[d])
        ctx = self.context(d)
        try:
            if ctx.prev_export is None and self.warm_start is not None:
                _, probe = eval_round(self.program, ctx)
                ctx.prev_export = self.warm_start(d, probe)
            value, export = eval_round(self.program, ctx)
        except FieldRuntimeError as exc:
            raise SimulationError(event, exc) from exc
        self.own[d] = export
        if self.sync:
            self.pending.append((d, export))
        else:
            self._deliver(d, export)
        prev = self.values.get(d, _MISSING)
        self.values[d] = value
        self._note_quiet(d, prev, value)
        self.trace.records.append(
            TraceRecord(t, d, event.seq, value, export_digest(export) if self.digests else ""))
        if self.keep_exports:
            self.trace.exports.append((t, d, export))
        self.seq[d] += 1
        heapq.heappush(self.queue, (self._next_time(t), d))
        if self.sync and self.queue[0][0] > t:
            self._flush()
        return event

    def _note_quiet(self, d, prev, value):
        if prev is not _MISSING and values_close(prev, value, self._eps):
            self.quiet[d] = self.quiet.get(d, 0) + 1
        else:
            self.quiet[d] = 0

    _eps = 0.0

    def stable(self, quiet_rounds: int) -> bool:
        """Every live device has repeated its value for ``quiet_rounds`` rounds
        and no perturbation is pending."""
        if self.perturbations or (self.sync and self.pending):
            return False
        return all(self.quiet.get(d, 0) >= quiet_rounds for d in self.env.devices)

    def run(self, rounds: Optional[float] = None, *, max_events: Optional[int] = None,
            stop_when_stable: Optional[int] = None, epsilon: float = 0.0) -> Trace:
        """Run until ``rounds`` periods of simulated time have elapsed, the event
        budget is spent, or (if requested) the network has been quiet for
        ``stop_when_stable`` rounds."""
        self._eps = epsilon
        horizon = math.inf if rounds is None else rounds * self.schedule.period
        fired = 0
        while self.queue and self.queue[0][0] < horizon:
            if max_events is not None and fired >= max_events:
                break
            if stop_when_stable is not None and self.stable(stop_when_stable):
                break
            if self.step() is not None:
                fired += 1
        self._flush()
        return self.trace

    def snapshot(self) -> Snapshot:
        return Snapshot(self.time, {d: self.values[d] for d in self.env.devices if d in self.values})


_MISSING = object()
