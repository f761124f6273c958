"""Runtime values of the field calculus.

Plain Python types are used where they fit: ``bool`` for booleans, ``float``
for numbers, ``tuple`` for tuples and ``str`` for sensor names.  Functions are
:class:`Closure` objects and neighbour-indexed values are :class:`NbrMap`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Optional

Value = Any


class NbrMap(dict):
    """Map from neighbour device id to that neighbour's value.

    Engine-internal: it may flow through expressions and function arguments
    but never into a round result or an export.
    """

    def __repr__(self):
        return f"NbrMap({dict.__repr__(self)})"


@dataclass(frozen=True, eq=False)
class Closure:
    tag: str
    params: tuple[str, ...] = ()
    body: Any = None
    env: dict = field(default_factory=dict)
    builtin: Optional[str] = None

    def __eq__(self, other):
        return isinstance(other, Closure) and other.tag == self.tag

    def __hash__(self):
        return hash(self.tag)

    def __repr__(self):
        return f"<fn {self.tag}>"


def is_num(v) -> bool:
    return type(v) is float


def type_name(v) -> str:
    if isinstance(v, bool):
        return "Bool"
    if isinstance(v, float):
        return "Num"
    if isinstance(v, tuple):
        return "Tuple"
    if isinstance(v, Closure):
        return "Function"
    if isinstance(v, NbrMap):
        return "NbrMap"
    if isinstance(v, str):
        return "Name"
    return type(v).__name__


def contains_nbrmap(v) -> bool:
    if isinstance(v, NbrMap):
        return True
    if isinstance(v, tuple):
        return any(contains_nbrmap(x) for x in v)
    return False


def values_close(a, b, eps: float = 0.0) -> bool:
    """Equality up to ``eps`` on numeric leaves; exact elsewhere."""
    if isinstance(a, bool) or isinstance(b, bool):
        return a is b
    if isinstance(a, float) and isinstance(b, float):
        if a == b:
            return True
        if math.isnan(a) and math.isnan(b):
            return True
        if math.isinf(a) or math.isinf(b):
            return False
        return abs(a - b) <= eps
    if isinstance(a, tuple) and isinstance(b, tuple):
        return len(a) == len(b) and all(values_close(x, y, eps) for x, y in zip(a, b))
    return a == b


def value_distance(a, b) -> float:
    """Largest absolute difference over numeric leaves (inf on shape mismatch)."""
    if isinstance(a, float) and not isinstance(a, bool) and isinstance(b, float):
        if a == b or (math.isnan(a) and math.isnan(b)):
            return 0.0
        return abs(a - b) if not math.isnan(a - b) else math.inf
    if isinstance(a, tuple) and isinstance(b, tuple) and len(a) == len(b):
        return max((value_distance(x, y) for x, y in zip(a, b)), default=0.0)
    return 0.0 if a == b else math.inf


def to_json(v):
    """JSON-compatible encoding; non-finite floats become strings."""
    if isinstance(v, bool):
        return v
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(v, tuple):
        return [to_json(x) for x in v]
    if isinstance(v, Closure):
        return {"fn": v.tag}
    if isinstance(v, str):
        return {"name": v}
    raise TypeError(f"cannot serialize {type_name(v)}")


def from_json(j):
    if isinstance(j, bool):
        return j
    if isinstance(j, (int, float)):
        return float(j)
    if j in ("inf", "+inf", "infinity"):
        return math.inf
    if j in ("-inf", "-infinity"):
        return -math.inf
    if j == "nan":
        return math.nan
    if isinstance(j, list):
        return tuple(from_json(x) for x in j)
    raise ValueError(f"unsupported sensor value {j!r}")


def format_value(v) -> str:
    """Compact text form used in CSV traces (floats keep full precision)."""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return "(" + " ".join(format_value(x) for x in v) + ")"
    if isinstance(v, Closure):
        return f"<{v.tag}>"
    return str(v)
