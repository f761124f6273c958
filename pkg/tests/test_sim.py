import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from fieldcalc import blocks
from fieldcalc.analysis import check_fairness
from fieldcalc.engine import RoundContext
from fieldcalc.sim import (Environment, Perturbation, Schedule, Simulator, SimulationError,
                           build_topology, random_rep_state, removal_keeping_connectivity)

from conftest import sync_run, with_source


def test_line_topology_edges():
    env = build_topology("line", n=5, spacing=1.0, radius=1.5)
    assert len(env.edges()) == 4
    assert env.hop_diameter() == 4


def test_grid_is_four_neighbour_lattice():
    env = build_topology("grid", rows=3, cols=3, spacing=1.0, radius=1.0)
    pairs = sum(1 for a in env.devices for b in env.devices
                if a < b and math.dist(env.positions[a], env.positions[b]) <= 1.0)
    assert len(env.edges()) == pairs == 12


def test_uniform_random_is_deterministic():
    a = build_topology("uniformRandom", n=100, width=10, height=10, radius=1.5, seed=1)
    b = build_topology("uniformRandom", n=100, width=10, height=10, radius=1.5, seed=1)
    assert a.positions == b.positions and a.edges() == b.edges()
    c = build_topology("uniformRandom", n=100, width=10, height=10, radius=1.5, seed=2)
    assert c.positions != a.positions


@pytest.mark.parametrize("kwargs", [dict(kind="line", n=0), dict(kind="line", n=3, radius=0.0),
                                    dict(kind="torus", n=3)])
def test_bad_topologies(kwargs):
    with pytest.raises(ValueError):
        build_topology(**kwargs)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 5), st.floats(0, 5)), min_size=1, max_size=15),
       st.floats(0.5, 3.0))
def test_neighbourhood_is_symmetric_and_irreflexive(points, radius):
    env = Environment(dict(enumerate(points)), radius)
    for d in env.devices:
        assert d not in env.neighbours(d)
        for n in env.neighbours(d):
            assert d in env.neighbours(n)
            assert math.dist(points[d], points[n]) <= radius


def test_ids_are_never_reused():
    env = build_topology("line", n=3, radius=1.5)
    env.remove_device(2)
    assert env.add_device((2.0, 0.0)) == 3
    with pytest.raises(ValueError):
        env.add_device((0.0, 1.0), device=1)


def test_first_round_of_counter_is_zero(line5):
    sim = sync_run("rep(0){(x)=>x+1}", line5, 1)
    assert set(sim.values.values()) == {0.0}


def test_counter_after_k_synchronous_rounds(line5):
    sim = sync_run("rep(0){(x)=>x+1}", line5, 7)
    assert set(sim.values.values()) == {6.0}


def test_isolated_device_counts_no_neighbours():
    env = Environment({0: (0.0, 0.0), 1: (10.0, 0.0)}, radius=1.0)
    assert sync_run("sumHood(nbr{1})", env, 3).values == {0: 0.0, 1: 0.0}


@pytest.mark.parametrize("mode", ["synchronous", "fair-async"])
def test_distance_on_line(line5, mode):
    with_source(line5, 0)
    sim = Simulator(blocks.link('distance(sense("source"))'), line5,
                    Schedule(mode=mode, jitter=0.4, seed=3))
    sim.run(40)
    assert [sim.values[d] for d in range(5)] == [0.0, 1.0, 2.0, 3.0, 4.0]


def test_synchronous_rounds_read_previous_round_only(line5):
    # Information moves one hop per synchronous round.
    with_source(line5, 0)
    sim = sync_run('anyHood(nbr{sense("source")}) || sense("source")', line5, 1)
    assert [sim.values[d] for d in range(5)] == [True, False, False, False, False]
    sim.run(2)
    assert [sim.values[d] for d in range(5)] == [True, True, False, False, False]


def test_same_seed_same_trace():
    env = build_topology("uniformRandom", n=30, width=6, height=6, radius=2.0, seed=4)
    with_source(env, 0)
    prog = blocks.link('distance(sense("source"))')
    runs = [Simulator(prog, env, Schedule("fair-async", jitter=0.5, seed=9)).run(30).to_csv()
            for _ in range(2)]
    assert runs[0] == runs[1]
    other = Simulator(prog, env, Schedule("fair-async", jitter=0.5, seed=10)).run(30).to_csv()
    assert other != runs[0]


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32), st.floats(0.0, 0.95), st.floats(0.2, 3.0))
def test_fair_async_window(seed, jitter, period):
    env = build_topology("grid", rows=3, cols=3, radius=1.0)
    sim = Simulator(blocks.link("rep(0){(x)=>x+1}"), env,
                    Schedule("fair-async", period=period, jitter=jitter, seed=seed))
    report = check_fairness(sim.run(25))
    assert report.fair
    assert report.worst_gap <= 2 * period


def test_per_device_times_increase():
    env = build_topology("grid", rows=3, cols=3, radius=1.0)
    trace = Simulator(blocks.link("1"), env, Schedule("fair-async", jitter=0.9, seed=1)).run(20)
    for recs in trace.by_device().values():
        times = [r.time for r in recs]
        assert times == sorted(set(times))
        assert [r.seq for r in recs] == list(range(len(recs)))


def test_schedule_validation():
    with pytest.raises(ValueError):
        Schedule(mode="chaotic")
    with pytest.raises(ValueError):
        Schedule(jitter=1.0)
    with pytest.raises(ValueError):
        Schedule(period=0)


class Spy(Simulator):
    contexts: list

    def context(self, d) -> RoundContext:
        ctx = super().context(d)
        self.contexts.append((self.time, d, set(ctx.nbr_exports), set(self.env.neighbours(d))))
        return ctx


def test_exports_from_departed_neighbours_are_dropped(line5):
    moves = [Perturbation(at=5, kind="moveDevice", device=4, position=(20.0, 0.0)),
             Perturbation(at=8, kind="removeDevice", device=2),
             Perturbation(at=11, kind="addDevice", position=(2.0, 0.5))]
    sim = Spy(blocks.link("sumHood(nbr{1})"), line5, Schedule("fair-async", jitter=0.3, seed=2),
              moves)
    sim.contexts = []
    sim.run(20)
    for _, d, exporters, neighbours in sim.contexts:
        assert exporters <= neighbours
    assert sim.values[3] == 1.0  # only the new device 5 is left next to 3
    assert sorted(sim.values) == [0, 1, 3, 4, 5]
    assert [c[1] for c in sim.trace.changes] == ["moveDevice", "removeDevice", "addDevice"]


def test_perturbations_apply_before_rounds_at_their_time(line5):
    with_source(line5, 0)
    p = Perturbation(at=3, kind="setSensor", device=0, name="source", value=False)
    sim = Simulator(blocks.link('sense("source")'), line5, Schedule(), [p])
    trace = sim.run(5)
    values = [r.value for r in trace.records if r.device == 0]
    assert values == [True, True, True, False, False]


def test_runtime_errors_are_tagged_with_the_event(line5):
    sim = Simulator(blocks.link('sense("nope")'), line5, Schedule())
    with pytest.raises(SimulationError) as info:
        sim.run(1)
    assert info.value.event.device == 0 and info.value.event.seq == 0


def test_warm_start_scrambles_rep_state(line5):
    prog = blocks.link("rep(0){(x) => x}")
    sim = Simulator(prog, line5, Schedule(), warm_start=random_rep_state(random.Random(1), 0, 10))
    sim.run(1)
    assert len(set(sim.values.values())) == 5
    assert all(0 <= v <= 10 for v in sim.values.values())


def test_csv_has_full_precision():
    env = Environment({0: (0.0, 0.0), 1: (0.1, 0.2)}, radius=1.0)
    trace = Simulator(blocks.link("minHood(nbrRange())"), env).run(2)
    line = trace.to_csv().splitlines()[-1]
    assert float(line.split(",")[2]) == math.dist((0.0, 0.0), (0.1, 0.2))


def test_snapshots_cover_live_devices(line5):
    p = Perturbation(at=2, kind="removeDevice", device=1)
    trace = Simulator(blocks.link("1"), line5, Schedule(), [p]).run(4)
    assert set(trace.snapshot().values) == {0, 2, 3, 4}
    assert set(trace.snapshot(1.0).values) == {0, 1, 2, 3, 4}


def test_removal_keeps_connectivity():
    env = build_topology("uniformRandom", n=40, width=6, height=6, radius=2.0, seed=5,
                         connected=True)
    gone = removal_keeping_connectivity(env, 0.1, random.Random(0), protect=[0])
    assert len(gone) == 4 and 0 not in gone
    for d in gone:
        env.remove_device(d)
    assert env.is_connected()
