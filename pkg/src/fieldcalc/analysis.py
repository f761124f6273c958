"""Empirical checks of resilience properties on simulation traces.

Verdicts here are evidence from finite runs: a passing density sweep is
*consistent with* eventual consistency, it does not prove it.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .lang import Program
from .sim import Environment, Schedule, Simulator, Snapshot, Trace, build_topology, random_rep_state
from .values import value_distance, values_close


class NotStabilized(RuntimeError):
    pass


@dataclass
class StabilizationReport:
    stabilized: bool
    epsilon: float
    quiet_rounds: int
    stabilization_time: Optional[float] = None
    snapshot: Optional[Snapshot] = None
    diagnostics: str = ""

    def to_json(self):
        return {
            "stabilized": self.stabilized,
            "epsilon": self.epsilon,
            "quiet_rounds": self.quiet_rounds,
            "stabilization_time": self.stabilization_time,
            "diagnostics": self.diagnostics,
        }


def detect_stabilization(trace: Trace, freeze_time: Optional[float] = None,
                         quiet_rounds: Optional[int] = None,
                         epsilon: float = 0.0) -> StabilizationReport:
    """Stabilised iff, after ``freeze_time``, every live device ends with at
    least ``quiet_rounds`` consecutive own rounds whose results are all within
    ``epsilon`` of its final value (exact equality for non-numbers).

    ``quiet_rounds`` defaults to twice the hop diameter of the final network.
    """
    if freeze_time is None:
        freeze_time = trace.last_change
    env = trace.environment_at(trace.end_time)
    if quiet_rounds is None:
        quiet_rounds = max(2, 2 * env.hop_diameter())
    per_device = trace.by_device()
    settle = -math.inf
    short = []
    for d in env.devices:
        recs = [r for r in per_device.get(d, []) if r.time >= freeze_time]
        if not recs:
            short.append(d)
            continue
        final = recs[-1].value
        i = len(recs) - 1
        while i > 0 and values_close(recs[i - 1].value, final, epsilon):
            i -= 1
        if len(recs) - i < quiet_rounds:
            short.append(d)
            continue
        settle = max(settle, recs[i].time)
    if short:
        return StabilizationReport(
            False, epsilon, quiet_rounds,
            diagnostics=f"{len(short)} device(s) without {quiet_rounds} quiet rounds "
                        f"after t={freeze_time!r}, e.g. {short[:5]}")
    return StabilizationReport(True, epsilon, quiet_rounds, settle, trace.snapshot())


def snapshots_agree(a: Snapshot, b: Snapshot, epsilon: float = 0.0) -> bool:
    return a.values.keys() == b.values.keys() and all(
        values_close(a.values[d], b.values[d], epsilon) for d in a.values)


def snapshot_error(snapshot: Snapshot, reference: dict) -> float:
    """Largest per-device distance between a snapshot and a reference field."""
    return max((value_distance(v, reference[d]) for d, v in snapshot.values.items()
                if d in reference), default=0.0)


@dataclass
class UniquenessReport:
    unique: bool
    snapshots: list
    max_divergence: float
    divergent_devices: list = field(default_factory=list)
    unstable_runs: list = field(default_factory=list)  # warm-start indices that never settled

    def to_json(self):
        return {"unique": self.unique, "runs": len(self.snapshots),
                "max_divergence": self.max_divergence,
                "divergent_devices": self.divergent_devices[:20],
                "unstable_runs": self.unstable_runs}


def check_uniqueness(scenario, warm_starts: int = 5, seed: int = 0, *,
                     low: float = 0.0, high: float = 10.0,
                     epsilon: Optional[float] = None,
                     max_rounds: Optional[int] = None,
                     strict: bool = False) -> UniquenessReport:
    """Re-run ``scenario`` from random rep states and random schedules and
    compare the stabilised snapshots.

    The environment (topology, sensors, perturbations) is the same in every
    run; only the initial state and the firing order vary.  A run that never
    stabilises has no stabilised state to share, so it makes the result
    false; with ``strict`` it raises :class:`NotStabilized` instead.
    """
    eps = scenario.epsilon if epsilon is None else epsilon
    rng = random.Random(seed)
    snaps = []
    unstable = []
    for i in range(warm_starts):
        sim = scenario.simulator(
            scenario.seed, schedule_seed=rng.getrandbits(63),
            warm_start=random_rep_state(random.Random(rng.getrandbits(63)), low, high))
        k = scenario.quiet_rounds(sim.env, sim.perturbations)
        trace = sim.run(max_rounds or scenario.rounds, stop_when_stable=k, epsilon=eps)
        report = detect_stabilization(trace, scenario.freeze_time, k, eps)
        if not report.stabilized:
            if strict:
                raise NotStabilized(f"warm start {i}: {report.diagnostics}")
            unstable.append(i)
        snaps.append(trace.snapshot())
    divergence = 0.0
    bad = set()
    for s in snaps[1:]:
        for d, v in s.values.items():
            gap = value_distance(v, snaps[0].values.get(d))
            if not values_close(v, snaps[0].values.get(d), eps):
                bad.add(d)
            divergence = max(divergence, gap)
    unique = (not bad and not unstable
              and all(s.values.keys() == snaps[0].values.keys() for s in snaps))
    return UniquenessReport(unique, snaps, divergence, sorted(bad), unstable)


# --------------------------------------------------------------------------
# Density sweeps

@dataclass(frozen=True)
class RadiusPolicy:
    """``fixed``: the same radius at every density.  ``neighbours``: radius
    chosen so a device expects ``value`` neighbours (r = sqrt(k A / (pi n)))."""

    kind: str
    value: float

    def radius(self, n: int, area: float) -> float:
        if self.kind == "fixed":
            return self.value
        if self.kind == "neighbours":
            return math.sqrt(self.value * area / (math.pi * n))
        raise ValueError(f"unknown radius policy {self.kind!r}")


@dataclass
class ConsistencyReport:
    densities: list
    radii: list
    discrepancy: list          # mean |f_n - f_reference| on the probe grid
    successive: list           # mean |f_n(i) - f_n(i+1)| on the probe grid
    mean_value: list           # mean sampled value per density
    connected: list
    stabilized: list
    reference: int
    verdict: bool
    label: str

    def to_json(self):
        return {k: getattr(self, k) for k in (
            "densities", "radii", "discrepancy", "successive", "mean_value",
            "connected", "stabilized", "reference", "verdict", "label")}


def _decreasing(seq: Sequence[float], strict: bool = True, allowed_inversions: int = 0) -> bool:
    bad = sum(1 for a, b in zip(seq, seq[1:]) if (b >= a if strict else b > a))
    return bad <= allowed_inversions


def sample_field(env: Environment, snapshot: Snapshot, probes: np.ndarray) -> np.ndarray:
    """Value of the nearest device at every probe point (ties: lowest id)."""
    ids = sorted(snapshot.values)
    pos = np.array([env.positions[d] for d in ids])
    vals = np.array([float(snapshot.values[d]) for d in ids])
    d2 = ((probes[:, None, :] - pos[None, :, :]) ** 2).sum(axis=2)
    return vals[np.argmin(d2, axis=1)]


def _mean_abs_diff(a: np.ndarray, b: np.ndarray) -> float:
    both_inf = np.isinf(a) & np.isinf(b) & (np.sign(a) == np.sign(b))
    diff = np.where(both_inf, 0.0, np.abs(a - b))
    return float(np.mean(diff))


def probe_grid(width: float, height: float, pitch: float) -> np.ndarray:
    xs = np.arange(pitch / 2, width, pitch)
    ys = np.arange(pitch / 2, height, pitch)
    return np.array([(x, y) for y in ys for x in xs])


def density_sweep(program: Program, *, width: float, height: float, densities: Sequence[int],
                  radius_policy: RadiusPolicy, seed: int,
                  sensors: Callable[[Environment], None],
                  pitch: Optional[float] = None, reference_n: Optional[int] = None,
                  replications: int = 1, max_rounds: int = 1000) -> ConsistencyReport:
    """Run ``program`` on uniformly random deployments of increasing density
    over a fixed region and compare the stabilised fields on a probe grid.

    The reference is the highest density unless ``reference_n`` names a
    separate (denser) run.  Successive discrepancies compare neighbouring
    densities directly.  The verdict requires both sequences to decrease.
    """
    densities = sorted(densities)
    ref_n = reference_n or densities[-1]
    all_n = sorted(set(densities) | {ref_n})
    area = width * height
    radii = {n: radius_policy.radius(n, area) for n in all_n}
    if pitch is None:
        pitch = radii[ref_n] / 4
    probes = probe_grid(width, height, pitch)

    sampled = {n: [] for n in all_n}
    connected = {n: True for n in all_n}
    stabilized = {n: True for n in all_n}
    for rep in range(replications):
        for n in all_n:
            env = build_topology("uniformRandom", n=n, width=width, height=height,
                                 radius=radii[n], seed=seed * 1000 + rep * 7919 + n,
                                 connected=True)
            connected[n] &= env.is_connected()
            sensors(env)
            sim = Simulator(program, env, Schedule(), digests=False)
            k = max(2, 2 * env.hop_diameter())
            trace = sim.run(max_rounds, stop_when_stable=k)
            stabilized[n] &= detect_stabilization(trace, 0.0, k).stabilized
            sampled[n].append(sample_field(env, sim.snapshot(), probes))

    # Average each density's sampled field over replications before comparing:
    # per-probe sampling noise cancels, systematic differences remain.
    field = {n: np.mean(sampled[n], axis=0) for n in all_n}
    discrepancy = [_mean_abs_diff(field[n], field[ref_n]) for n in densities]
    successive = [_mean_abs_diff(field[a], field[b]) for a, b in zip(densities, densities[1:])]
    means = [float(np.mean(field[n][np.isfinite(field[n])])) for n in densities]
    inversions = 1 if len(densities) >= 5 else 0
    ref_seq = discrepancy if ref_n not in densities else discrepancy[:-1]
    verdict = (_decreasing(ref_seq, True, inversions) and _decreasing(successive, True, inversions)
               and all(connected.values()) and all(stabilized.values()))
    label = ("consistent-with eventual consistency" if verdict
             else "not consistent-with eventual consistency")
    return ConsistencyReport(
        densities=list(densities), radii=[radii[n] for n in densities],
        discrepancy=discrepancy, successive=successive, mean_value=means,
        connected=[connected[n] for n in densities], stabilized=[stabilized[n] for n in densities],
        reference=ref_n, verdict=verdict, label=label)


# --------------------------------------------------------------------------
# Dynamics

@dataclass
class DynamicsMetrics:
    convergence_time: float    # seconds after ``start``; inf if never within epsilon for good
    convergence_rounds: float
    peak_error: float
    cumulative_error: float    # integral of the error over time
    samples: int

    def to_json(self):
        return {k: (v if math.isfinite(v) else repr(v)) if isinstance(v, float) else v
                for k, v in self.__dict__.items()}


def dynamics_metrics(trace: Trace, oracle: Callable[[Environment], dict],
                     epsilon: float = 0.0, start: Optional[float] = None) -> DynamicsMetrics:
    """Error of the running field against a per-environment reference.

    The error at each event time is the largest per-device distance to the
    oracle field of the environment in force at that time.
    """
    if start is None:
        start = trace.last_change if trace.changes else 0.0
    cache: dict[int, dict] = {}
    times, errors = [], []
    for snap in trace.snapshots():
        if snap.time < start:
            continue
        env = trace.environment_at(snap.time)
        ref = cache.get(id(env))
        if ref is None:
            ref = cache[id(env)] = oracle(env)
        times.append(snap.time)
        errors.append(snapshot_error(snap, ref))
    if not times:
        return DynamicsMetrics(math.inf, math.inf, math.inf, math.inf, 0)
    converged_at = None
    for t, e in zip(reversed(times), reversed(errors)):
        if e > epsilon:
            break
        converged_at = t
    conv = math.inf if converged_at is None else max(0.0, converged_at - start)
    if converged_at is not None and converged_at == times[0]:
        conv = 0.0
    cumulative = 0.0
    for (t0, e), t1 in zip(zip(times, errors), times[1:]):
        if e > 0:
            cumulative += e * (t1 - t0)
    return DynamicsMetrics(conv, conv / trace.period, max(errors), cumulative, len(times))


# --------------------------------------------------------------------------
# Scheduling fairness

@dataclass
class FairnessReport:
    fair: bool
    window: float
    worst_gap: float
    violations: list = field(default_factory=list)  # (device, gap start, gap end)

    def to_json(self):
        return {"fair": self.fair, "window": self.window, "worst_gap": self.worst_gap,
                "violations": [list(v) for v in self.violations[:20]]}


def check_fairness(trace: Trace, window: Optional[float] = None) -> FairnessReport:
    """Every device fires at least once in every ``window`` (default two
    periods) of simulated time while it is alive."""
    window = 2 * trace.period if window is None else window
    end = trace.end_time
    born = {d: 0.0 for d in trace.epochs[0][1].devices}
    died: dict[int, float] = {}
    for t, kind, d in trace.changes:
        if kind == "addDevice":
            born[d] = t
        elif kind == "removeDevice":
            died[d] = t
    fired = trace.by_device()
    worst = 0.0
    bad = []
    for d, start in born.items():
        stop = min(died.get(d, end), end)
        if stop <= start:
            continue
        points = [start] + [r.time for r in fired.get(d, []) if start <= r.time <= stop] + [stop]
        for a, b in zip(points, points[1:]):
            worst = max(worst, b - a)
            if b - a > window:
                bad.append((d, a, b))
    return FairnessReport(not bad, window, worst, bad)
