"""Reference fields computed directly on the proximity graph.

These never go through the DSL, so they serve as independent checks of what
the building blocks should stabilise to.
"""
from __future__ import annotations

import math

import networkx as nx

from .sim import Environment


def sources(env: Environment, sensor: str = "source") -> list[int]:
    return [d for d in env.devices if env.sensors[d].get(sensor) is True]


def dijkstra_distance(env: Environment, sensor: str = "source") -> dict[int, float]:
    """Shortest-path distance (edge weight = Euclidean range) to the nearest source."""
    srcs = sources(env, sensor)
    dist = nx.multi_source_dijkstra_path_length(env.graph(), srcs) if srcs else {}
    return {d: float(dist.get(d, math.inf)) for d in env.devices}


def bfs_hops(env: Environment, sensor: str = "source") -> dict[int, float]:
    """Hop count to the nearest source."""
    g = env.graph()
    srcs = sources(env, sensor)
    hops: dict[int, float] = {}
    if srcs:
        g.add_node("_root")
        g.add_edges_from(("_root", s) for s in srcs)
        hops = {d: float(h - 1) for d, h in nx.single_source_shortest_path_length(g, "_root").items()
                if d != "_root"}
    return {d: hops.get(d, math.inf) for d in env.devices}


def component_min(env: Environment, sensor: str = "field") -> dict[int, float]:
    """Minimum of a numeric sensor over each device's connected component."""
    out = {}
    for comp in nx.connected_components(env.graph()):
        m = min(float(env.sensors[d][sensor]) for d in comp)
        out.update({d: m for d in comp})
    return out


def component_sum(env: Environment, sensor: str) -> dict[int, float]:
    out = {}
    for comp in nx.connected_components(env.graph()):
        s = math.fsum(float(env.sensors[d][sensor]) for d in comp)
        out.update({d: s for d in comp})
    return out


def constant(value):
    return lambda env: {d: value for d in env.devices}


ORACLES = {
    "dijkstra": dijkstra_distance,
    "bfs": bfs_hops,
    "component-min": component_min,
}


def make_oracle(spec: dict):
    """Build ``env -> {device: value}`` from a scenario oracle spec."""
    kind = spec["kind"]
    if kind == "constant":
        return constant(spec["value"])
    if kind not in ORACLES:
        raise ValueError(f"unknown oracle {kind!r}")
    fn = ORACLES[kind]
    sensor = spec.get("sensor")
    return (lambda env: fn(env, sensor)) if sensor else fn
