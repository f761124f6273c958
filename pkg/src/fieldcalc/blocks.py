"""Building-block library: the bundled ``stdlib.fc`` plus helpers that build
programs on top of it.

The blocks themselves (G, C, T, distance, gossipMin, ...) are DSL source; the
Python functions here only assemble expression text and link it against the
library.
"""
from __future__ import annotations

import re
from functools import lru_cache
from importlib import resources

from .lang import Program, parse

BLOCK_NAMES = (
    "G", "C", "T", "distance", "hopCountDistance", "gossipMin",
    "broadcast", "summarize", "replicatedGossip",
)


@lru_cache(maxsize=None)
def stdlib_source() -> str:
    return resources.files(__package__).joinpath("stdlib.fc").read_text(encoding="utf-8")


@lru_cache(maxsize=None)
def stdlib() -> Program:
    return parse(stdlib_source(), "stdlib.fc")


def library() -> dict[str, str]:
    """Source text of each named block definition."""
    src = stdlib_source()
    out = {}
    for name in BLOCK_NAMES:
        m = re.search(rf"^def {name}\(.*?^\}}\n", src, re.S | re.M)
        out[name] = m.group(0)
    return out


def link(main: str, defs: str = "", filename: str = "<program>") -> Program:
    """Parse ``defs`` followed by ``main`` with the standard library in scope."""
    return parse(f"{defs}\n{main}" if defs else main, filename, prelude=stdlib_source())


def load_program(text: str, filename: str = "<program>") -> Program:
    return parse(text, filename, prelude=stdlib_source())


def sense(name: str) -> str:
    return f'sense("{name}")'


def G(source: str, init: str, metric: str = "nbrRange", accumulate: str = "+") -> str:
    return f"G({source}, {init}, {metric}, {accumulate})"


def C(potential: str, accumulate: str, local: str, null: str) -> str:
    return f"C({potential}, {accumulate}, {local}, {null})"


def T(initial: str, floor: str, decay: str) -> str:
    return f"T({initial}, {floor}, {decay})"


def replicated_gossip_source(k: int) -> str:
    """Definition of ``replicatedGossip<k>(field, lifetime)``.

    Each of the ``k`` replicas is a gossipMin restarted every ``lifetime/k``
    rounds; the output comes from the oldest one.  With ``k == 1`` there is
    nothing to stagger against, so the single replica is never restarted and
    the block is plain gossipMin.
    """
    if k < 1:
        raise ValueError("replica count must be positive")
    name = f"replicatedGossip{k}"
    if k == 1:
        return f"def {name}(field, lifetime) {{\n  gossipMin(field)\n}}\n"
    empty = ", ".join(["tuple(-1, infinity)"] * k)
    slots = ", ".join(f"rgSlot(field, gen, {k}, {i}, ns)" for i in range(k))
    return (
        f"def {name}(field, lifetime) {{\n"
        f"  rgOldest{k}(field, rgGeneration(rgClock(), max(1, floor(lifetime / {k}))))\n"
        f"}}\n\n"
        f"def rgOldest{k}(field, gen) {{\n"
        f"  get(get(rep(tuple({empty})) {{ (s) => rgStep{k}(field, gen, nbr{{s}}) }},"
        f" mod(max(gen - {k - 1}, 0), {k})), 1)\n"
        f"}}\n\n"
        f"def rgStep{k}(field, gen, ns) {{\n"
        f"  tuple({slots})\n"
        f"}}\n"
    )


def replicated_gossip(field: str, k: int, lifetime: int) -> Program:
    """Program computing replicated gossip of ``field`` with ``k`` replicas."""
    return link(f"replicatedGossip{k}({field}, {lifetime})", replicated_gossip_source(k))
