"""Primitive functions available to field-calculus programs.

Pure builtins are lifted pointwise when any argument is an :class:`NbrMap`
(key sets intersect, scalars broadcast).  Hood builtins fold an NbrMap back
to a local value in ascending device-id order so results never depend on map
iteration order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

from .values import Closure, NbrMap, type_name


class BuiltinTypeError(TypeError):
    pass


@dataclass(frozen=True)
class BuiltinSpec:
    name: str
    arity: Optional[int]  # None: variadic
    fn: Callable
    kind: str  # pure | hood | context | higher
    doc: str = ""

    @property
    def pure(self) -> bool:
        return self.kind in ("pure", "hood")


BUILTINS: dict[str, BuiltinSpec] = {}

INFIX = {"+", "-", "*", "/", "<", "<=", ">", ">=", "==", "!=", "&&", "||"}
PREFIX = {"!"}


def builtin(name, arity, kind="pure", doc=""):
    def register(fn):
        BUILTINS[name] = BuiltinSpec(name, arity, fn, kind, doc)
        return fn
    return register


def _num(name, *xs):
    for x in xs:
        if type(x) is not float:
            raise BuiltinTypeError(f"{name} expects Num, got {type_name(x)}")


def _bool(name, *xs):
    for x in xs:
        if type(x) is not bool:
            raise BuiltinTypeError(f"{name} expects Bool, got {type_name(x)}")


# --- arithmetic -------------------------------------------------------------

@builtin("+", 2, doc="addition")
def _add(a, b):
    if type(a) is not float or type(b) is not float:
        _num("+", a, b)
    return a + b


@builtin("-", 2, doc="subtraction")
def _sub(a, b):
    _num("-", a, b)
    return a - b


@builtin("*", 2, doc="multiplication")
def _mul(a, b):
    _num("*", a, b)
    return a * b


@builtin("/", 2, doc="division; x/0 follows IEEE semantics")
def _div(a, b):
    _num("/", a, b)
    if b == 0.0:
        if a == 0.0 or math.isnan(a):
            return math.nan
        return math.copysign(math.inf, a) * math.copysign(1.0, b)
    return a / b


@builtin("neg", 1, doc="arithmetic negation (prefix -)")
def _neg(a):
    _num("neg", a)
    return -a


@builtin("mod", 2, doc="remainder with the sign of the divisor")
def _mod(a, b):
    _num("mod", a, b)
    if b == 0.0:
        return math.nan
    return a % b


@builtin("abs", 1)
def _abs(a):
    _num("abs", a)
    return abs(a)


@builtin("floor", 1)
def _floor(a):
    _num("floor", a)
    if math.isinf(a) or math.isnan(a):
        return a
    return float(math.floor(a))


@builtin("sqrt", 1)
def _sqrt(a):
    _num("sqrt", a)
    return math.sqrt(a) if a >= 0 else math.nan


@builtin("pow", 2)
def _pow(a, b):
    _num("pow", a, b)
    try:
        return float(math.pow(a, b))
    except (OverflowError, ValueError):
        return math.nan if a < 0 else math.inf


def _less(a, b) -> bool:
    if type(a) is float and type(b) is float:
        return a < b
    if isinstance(a, tuple) and isinstance(b, tuple):
        for x, y in zip(a, b):
            if _less(x, y):
                return True
            if _less(y, x):
                return False
        return len(a) < len(b)
    if type(a) is bool and type(b) is bool:
        return a < b
    raise BuiltinTypeError(f"cannot order {type_name(a)} and {type_name(b)}")


def _is_nan(x) -> bool:
    return type(x) is float and math.isnan(x)


@builtin("min", 2, doc="minimum; NaN loses (min(NaN, x) = x); tuples compare lexicographically")
def vmin(a, b):
    if type(a) is float and type(b) is float:
        return b if b < a or a != a else a
    if _is_nan(a):
        return b
    if _is_nan(b):
        return a
    return b if _less(b, a) else a


@builtin("max", 2, doc="maximum; NaN loses")
def vmax(a, b):
    if type(a) is float and type(b) is float:
        return b if b > a or a != a else a
    if _is_nan(a):
        return b
    if _is_nan(b):
        return a
    return b if _less(a, b) else a


# --- comparison and logic ----------------------------------------------------

@builtin("<", 2)
def _lt(a, b):
    return _less(a, b)


@builtin("<=", 2)
def _le(a, b):
    if _is_nan(a) or _is_nan(b):
        return False
    return not _less(b, a)


@builtin(">", 2)
def _gt(a, b):
    return _less(b, a)


@builtin(">=", 2)
def _ge(a, b):
    if _is_nan(a) or _is_nan(b):
        return False
    return not _less(a, b)


def _equal(a, b) -> bool:
    if type(a) is not type(b):
        return False
    if isinstance(a, tuple):
        return len(a) == len(b) and all(_equal(x, y) for x, y in zip(a, b))
    return a == b


@builtin("==", 2, doc="exact equality")
def _eq(a, b):
    return _equal(a, b)


@builtin("!=", 2)
def _ne(a, b):
    return not _equal(a, b)


@builtin("approxEq", 3, doc="|x - y| <= eps")
def _approx_eq(a, b, eps):
    _num("approxEq", a, b, eps)
    return a == b or abs(a - b) <= eps


@builtin("&&", 2)
def _and(a, b):
    _bool("&&", a, b)
    return a and b


@builtin("||", 2)
def _or(a, b):
    _bool("||", a, b)
    return a or b


@builtin("!", 1)
def _not(a):
    _bool("!", a)
    return not a


@builtin("mux", 3, doc="mux(b, t, f): t where b is true, f otherwise")
def mux(b, t, f):
    _bool("mux", b)
    return t if b else f


# --- tuples ------------------------------------------------------------------

@builtin("tuple", None)
def _tuple(*xs):
    return tuple(xs)


@builtin("get", 2, doc="get(t, i): i-th element (0-based) of tuple t")
def _get(t, i):
    if not isinstance(t, tuple):
        raise BuiltinTypeError(f"get expects Tuple, got {type_name(t)}")
    _num("get", i)
    if not i.is_integer() or not 0 <= i < len(t):
        raise BuiltinTypeError(f"tuple index {i!r} out of range for length {len(t)}")
    return t[int(i)]


# --- hood folds --------------------------------------------------------------

def _hood_values(name, m):
    if not isinstance(m, NbrMap):
        raise BuiltinTypeError(f"{name} expects NbrMap, got {type_name(m)}")
    return [m[k] for k in sorted(m)]


@builtin("minHood", 1, "hood", "minimum over neighbours; +inf when there are none")
def min_hood(m):
    vals = _hood_values("minHood", m)
    if not vals:
        return math.inf
    acc = vals[0]
    for v in vals[1:]:
        acc = vmin(acc, v)
    return acc


@builtin("maxHood", 1, "hood", "maximum over neighbours; -inf when there are none")
def max_hood(m):
    vals = _hood_values("maxHood", m)
    if not vals:
        return -math.inf
    acc = vals[0]
    for v in vals[1:]:
        acc = vmax(acc, v)
    return acc


@builtin("sumHood", 1, "hood", "sum over neighbours; 0 when there are none")
def sum_hood(m):
    acc = 0.0
    for v in _hood_values("sumHood", m):
        acc = _add(acc, v)
    return acc


@builtin("anyHood", 1, "hood")
def any_hood(m):
    vals = _hood_values("anyHood", m)
    _bool("anyHood", *vals)
    return any(vals)


@builtin("allHood", 1, "hood")
def all_hood(m):
    vals = _hood_values("allHood", m)
    _bool("allHood", *vals)
    return all(vals)


HOOD_FOLDS = {
    "min": min_hood,
    "max": max_hood,
    "sum": sum_hood,
    "any": any_hood,
    "all": all_hood,
}


def hood_fold(op: str, m: NbrMap):
    """Fold ``m`` with the named combiner (min, max, sum, any, all)."""
    return HOOD_FOLDS[op](m)


@builtin("foldHood", 3, "higher", "foldHood(m, init, f): f(...f(init, m[d1])..., m[dn]) by ascending id")
def fold_hood(apply, m, init, f):
    if not isinstance(f, Closure):
        raise BuiltinTypeError(f"foldHood expects a function, got {type_name(f)}")
    acc = init
    for v in _hood_values("foldHood", m):
        acc = apply(f, (acc, v))
    return acc


# --- context -----------------------------------------------------------------

@builtin("nbrRange", 0, "context", "distance in meters to each neighbour")
def nbr_range(ctx):
    return NbrMap((d, float(r)) for d, r in ctx.nbr_ranges.items())


@builtin("nbrId", 0, "context", "id of each neighbour")
def nbr_id(ctx):
    return NbrMap((d, float(d)) for d in ctx.nbr_ranges)


@builtin("uid", 0, "context", "id of the evaluating device")
def uid(ctx):
    return float(ctx.self_id)


class UnboundSensor(KeyError):
    pass


@builtin("sense", 1, "context", 'sense("name"): local value of a sensor')
def sense(ctx, name):
    if not isinstance(name, str):
        raise BuiltinTypeError(f"sense expects a sensor name, got {type_name(name)}")
    try:
        return ctx.sensors[name]
    except KeyError:
        raise UnboundSensor(name) from None


# -----------------------------------------------------------------------------

def lift(fn: Callable, args: tuple):
    """Apply ``fn`` pointwise over NbrMap arguments."""
    idx = [i for i, a in enumerate(args) if type(a) is NbrMap]
    if not idx:
        return fn(*args)
    first = args[idx[0]]
    others = [args[i] for i in idx[1:]]
    if not others:
        keys = first
    elif len(others) == 1:
        other = others[0]
        keys = [k for k in first if k in other]
    else:
        keys = [k for k in first if all(k in m for m in others)]
    out = NbrMap()
    if len(args) == 2:
        a, b = args
        if len(idx) == 2:
            for k in keys:
                out[k] = fn(a[k], b[k])
        elif idx[0] == 0:
            for k in keys:
                out[k] = fn(a[k], b)
        else:
            for k in keys:
                out[k] = fn(a, b[k])
        return out
    if len(args) == 1:
        for k in keys:
            out[k] = fn(first[k])
        return out
    row = list(args)
    for k in keys:
        for i in idx:
            row[i] = args[i][k]
        out[k] = fn(*row)
    return out


def call(spec: BuiltinSpec, args: tuple, ctx, apply):
    if spec.kind == "pure":
        return lift(spec.fn, args)
    if spec.kind == "hood":
        return spec.fn(*args)
    if spec.kind == "context":
        return spec.fn(ctx, *args)
    return spec.fn(apply, *args)


def describe() -> list[tuple[str, str, str]]:
    """(name, arity, doc) rows for every builtin, sorted by name."""
    rows = []
    for name in sorted(BUILTINS):
        spec = BUILTINS[name]
        arity = "*" if spec.arity is None else str(spec.arity)
        rows.append((name, arity, spec.doc or spec.kind))
    return rows
