"""Scenario files: a versioned JSON description of one simulation.

Example::

    {
      "version": 1,
      "program": "distance.fc",
      "topology": {"kind": "line", "n": 5, "spacing": 1.0, "radius": 1.5},
      "schedule": {"mode": "synchronous"},
      "sensors": {"default": {"source": false}, "devices": {"0": {"source": true}}},
      "rounds": 40
    }

Unknown keys are rejected at every level.
"""
from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Optional

from . import blocks
from .lang import Program
from .oracles import make_oracle
from .sim import (Environment, Perturbation, Schedule, Simulator, Trace, build_topology,
                  PERTURBATION_KINDS, removal_keeping_connectivity)
from .values import from_json


class ScenarioError(ValueError):
    pass


_TOP_KEYS = {"version", "name", "description", "program", "main", "topology", "schedule",
             "sensors", "perturbations", "rounds", "stabilization", "oracle", "outputs",
             "seed", "sweep"}
_TOPOLOGY_KEYS = {"kind", "n", "spacing", "radius", "rows", "cols", "width", "height",
                  "connected"}
_SCHEDULE_KEYS = {"mode", "period", "jitter"}
_SENSOR_KEYS = {"default", "devices", "nearest", "random", "region"}
_PERTURBATION_KEYS = {"at", "kind", "device", "nearest", "position", "name", "value", "sensors"}
_STABILIZATION_KEYS = {"quiet_rounds", "epsilon", "stop", "require"}
_ORACLE_KEYS = {"kind", "sensor", "value"}
_OUTPUT_KEYS = {"csv", "exports", "report"}
_SWEEP_KEYS = {"width", "height", "densities", "radius_policy", "reference_n", "replications",
               "pitch", "rounds"}


def _check_keys(obj, allowed, where):
    if not isinstance(obj, dict):
        raise ScenarioError(f"{where}: expected an object")
    unknown = set(obj) - allowed
    if unknown:
        raise ScenarioError(f"{where}: unknown key(s) {sorted(unknown)}")


def sub_seed(seed: int, stream: str) -> int:
    """Independent, reproducible seed for one consumer of randomness."""
    return random.Random(f"{seed}:{stream}").getrandbits(63)


@dataclass
class Scenario:
    program: Program
    topology: dict
    schedule: dict = field(default_factory=dict)
    sensors: dict = field(default_factory=dict)
    perturbations: list = field(default_factory=list)
    rounds: int = 100
    stabilization: dict = field(default_factory=dict)
    oracle: Optional[dict] = None
    outputs: dict = field(default_factory=dict)
    seed: int = 0
    sweep: Optional[dict] = None
    name: str = ""
    source_text: str = ""

    # -- construction ------------------------------------------------------

    def environment(self, seed: Optional[int] = None) -> Environment:
        seed = self.seed if seed is None else seed
        topo = dict(self.topology)
        kind = topo.pop("kind")
        env = build_topology(kind, seed=sub_seed(seed, "topology"), **topo)
        self.apply_sensors(env, seed)
        return env

    def apply_sensors(self, env: Environment, seed: int):
        spec = self.sensors
        for d in env.devices:
            for name, v in spec.get("default", {}).items():
                env.set_sensor(d, name, from_json(v))
        rng = random.Random(sub_seed(seed, "sensors"))
        for r in spec.get("random", []):
            _check_keys(r, {"name", "low", "high", "integer"}, "sensors.random")
            for d in env.devices:
                if r.get("integer"):
                    v = float(rng.randint(int(r["low"]), int(r["high"])))
                else:
                    v = rng.uniform(r["low"], r["high"])
                env.set_sensor(d, r["name"], v)
        for key, values in spec.get("devices", {}).items():
            d = int(key)
            if d not in env:
                raise ScenarioError(f"sensors.devices: no device {d}")
            for name, v in values.items():
                env.set_sensor(d, name, from_json(v))
        for item in spec.get("region", []):
            _check_keys(item, {"box", "values"}, "sensors.region")
            x0, y0, x1, y1 = item["box"]
            for d in env.devices:
                x, y = env.positions[d]
                if x0 <= x < x1 and y0 <= y < y1:
                    for name, v in item["values"].items():
                        env.set_sensor(d, name, from_json(v))
        for item in spec.get("nearest", []):
            _check_keys(item, {"point", "values"}, "sensors.nearest")
            d = env.nearest(item["point"])
            for name, v in item["values"].items():
                env.set_sensor(d, name, from_json(v))

    def schedule_for(self, seed: int) -> Schedule:
        return Schedule(seed=sub_seed(seed, "schedule"), **self.schedule)

    def perturbation_list(self, env: Environment, seed: Optional[int] = None) -> list[Perturbation]:
        """Concrete perturbations for ``env``.  ``removeFraction`` expands to
        removals of a random share of devices that keeps the network
        connected; devices with a true sensor are never removed."""
        seed = self.seed if seed is None else seed
        out = []
        for i, p in enumerate(self.perturbations):
            p = dict(p)
            if p["kind"] == "removeFraction":
                protect = [d for d in env.devices
                           if any(v is True for v in env.sensors[d].values())]
                rng = random.Random(sub_seed(seed, f"removal:{i}"))
                for d in removal_keeping_connectivity(env, float(p["value"]), rng, protect):
                    out.append(Perturbation(at=p["at"], kind="removeDevice", device=d))
                continue
            if "nearest" in p:
                p["device"] = env.nearest(p.pop("nearest"))
            if "value" in p:
                p["value"] = from_json(p["value"])
            if "position" in p:
                p["position"] = tuple(p["position"])
            if "sensors" in p:
                p["sensors"] = {k: from_json(v) for k, v in p["sensors"].items()}
            out.append(Perturbation(**p))
        return out

    def quiet_rounds(self, env: Environment, perturbations=()) -> int:
        """Configured quiet rounds, or twice the largest hop diameter the
        network has before or after ``perturbations``."""
        k = self.stabilization.get("quiet_rounds")
        if k:
            return int(k)
        diameter = env.hop_diameter()
        if perturbations:
            final = env.copy()
            for p in sorted(perturbations, key=lambda p: p.at):
                p.apply(final)
            diameter = max(diameter, final.hop_diameter())
        return max(2, 2 * diameter)

    @property
    def epsilon(self) -> float:
        return float(self.stabilization.get("epsilon", 0.0))

    @property
    def freeze_time(self) -> float:
        times = [p["at"] for p in self.perturbations]
        return max(times) if times else 0.0

    def simulator(self, seed: Optional[int] = None, *, schedule_seed: Optional[int] = None,
                  warm_start=None, keep_exports: bool = False) -> Simulator:
        seed = self.seed if seed is None else seed
        env = self.environment(seed)
        schedule = self.schedule_for(seed if schedule_seed is None else schedule_seed)
        return Simulator(self.program, env, schedule, self.perturbation_list(env, seed),
                         warm_start=warm_start, keep_exports=keep_exports)

    def run(self, seed: Optional[int] = None, *, schedule_seed: Optional[int] = None,
            warm_start=None, keep_exports: bool = False) -> Trace:
        sim = self.simulator(seed, schedule_seed=schedule_seed, warm_start=warm_start,
                             keep_exports=keep_exports)
        stop = None
        if self.stabilization.get("stop"):
            stop = self.quiet_rounds(sim.env, sim.perturbations)
        return sim.run(self.rounds, stop_when_stable=stop, epsilon=self.epsilon)

    def oracle_fn(self):
        if self.oracle is None:
            return None
        spec = dict(self.oracle)
        if "value" in spec:
            spec["value"] = from_json(spec["value"])
        return make_oracle(spec)

    def density_sweep(self, seed: Optional[int] = None, densities=None,
                      replications: Optional[int] = None):
        """Run the scenario's ``sweep`` block (see :func:`analysis.density_sweep`)."""
        from .analysis import RadiusPolicy, density_sweep

        if self.sweep is None:
            raise ScenarioError("scenario has no 'sweep' block")
        sw = self.sweep
        seed = self.seed if seed is None else seed
        policy = sw.get("radius_policy", {"kind": "neighbours", "value": 15})
        _check_keys(policy, {"kind", "value"}, "sweep.radius_policy")
        return density_sweep(
            self.program,
            width=float(sw.get("width", self.topology.get("width", 10.0))),
            height=float(sw.get("height", self.topology.get("height", 10.0))),
            densities=densities or sw.get("densities", [100, 200, 400]),
            radius_policy=RadiusPolicy(policy["kind"], float(policy["value"])),
            seed=sub_seed(seed, "sweep"),
            sensors=lambda env: self.apply_sensors(env, seed),
            pitch=sw.get("pitch"),
            reference_n=sw.get("reference_n"),
            replications=replications or int(sw.get("replications", 1)),
            max_rounds=int(sw.get("rounds", self.rounds)),
        )

    def with_changes(self, **changes) -> "Scenario":
        return replace(self, **changes)


def from_dict(data: dict, base_dir: Path = Path("."), name: str = "") -> Scenario:
    _check_keys(data, _TOP_KEYS, "scenario")
    if data.get("version") != 1:
        raise ScenarioError("scenario: unsupported or missing version (expected 1)")
    if ("program" in data) == ("main" in data):
        raise ScenarioError("scenario: give exactly one of 'program' or 'main'")
    if "program" in data:
        path = base_dir / data["program"]
        text = _read_program(path)
        program = blocks.load_program(text, str(data["program"]))
    else:
        text = data["main"]
        program = blocks.load_program(text, "<main>")
    if "topology" not in data:
        raise ScenarioError("scenario: missing topology")
    _check_keys(data["topology"], _TOPOLOGY_KEYS, "topology")
    _check_keys(data.get("schedule", {}), _SCHEDULE_KEYS, "schedule")
    _check_keys(data.get("sensors", {}), _SENSOR_KEYS, "sensors")
    for p in data.get("perturbations", []):
        _check_keys(p, _PERTURBATION_KEYS, "perturbation")
        if p.get("kind") not in PERTURBATION_KINDS + ("removeFraction",):
            raise ScenarioError(f"perturbation: unknown kind {p.get('kind')!r}")
        if "at" not in p:
            raise ScenarioError("perturbation: missing 'at'")
    _check_keys(data.get("stabilization", {}), _STABILIZATION_KEYS, "stabilization")
    if data.get("oracle") is not None:
        _check_keys(data["oracle"], _ORACLE_KEYS, "oracle")
    _check_keys(data.get("outputs", {}), _OUTPUT_KEYS, "outputs")
    if data.get("sweep") is not None:
        _check_keys(data["sweep"], _SWEEP_KEYS, "sweep")
    try:
        Schedule(**data.get("schedule", {}))
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"schedule: {exc}") from None
    return Scenario(
        program=program,
        topology=data["topology"],
        schedule=data.get("schedule", {}),
        sensors=data.get("sensors", {}),
        perturbations=data.get("perturbations", []),
        rounds=int(data.get("rounds", 100)),
        stabilization=data.get("stabilization", {}),
        oracle=data.get("oracle"),
        outputs=data.get("outputs", {}),
        seed=int(data.get("seed", 0)),
        sweep=data.get("sweep"),
        name=data.get("name", name),
        source_text=text,
    )


def _read_program(path: Path) -> str:
    if path.exists():
        return path.read_text(encoding="utf-8")
    bundled = resources.files(__package__).joinpath("scenarios", path.name)
    if bundled.is_file():
        return bundled.read_text(encoding="utf-8")
    raise ScenarioError(f"program file not found: {path}")


def load(path) -> Scenario:
    """Load a scenario file; falls back to the bundled fixture of the same name."""
    path = Path(path)
    if path.exists():
        text = path.read_text(encoding="utf-8")
    else:
        bundled = resources.files(__package__).joinpath("scenarios", path.name)
        if not bundled.is_file():
            raise ScenarioError(f"scenario file not found: {path}")
        text = bundled.read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: invalid JSON: {exc}") from None
    return from_dict(data, path.parent, path.stem)


def bundled_scenarios() -> list[str]:
    root = resources.files(__package__).joinpath("scenarios")
    return sorted(p.name for p in root.iterdir() if p.name.endswith(".json"))
