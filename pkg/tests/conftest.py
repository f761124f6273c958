import pytest

from fieldcalc import blocks
from fieldcalc.sim import Environment, Schedule, Simulator, build_topology


def sync_run(source, env, rounds, defs=""):
    """Run ``source`` (linked with the stdlib) synchronously; return the simulator."""
    sim = Simulator(blocks.link(source, defs), env, Schedule())
    sim.run(rounds)
    return sim


def with_source(env, *devices, name="source"):
    for d in env.devices:
        env.set_sensor(d, name, d in devices)
    return env


@pytest.fixture
def line5():
    return build_topology("line", n=5, spacing=1.0, radius=1.5)


@pytest.fixture
def pair():
    return Environment({0: (0.0, 0.0), 1: (1.0, 0.0)}, radius=1.5)


# One line per acceptance criterion, printed at the end of the session.
ACCEPTANCE: dict = {}


def record(criterion, ok, detail=""):
    ACCEPTANCE[criterion] = (ok, detail)
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")
