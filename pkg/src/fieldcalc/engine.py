"""Single-device round evaluation.

:func:`eval_round` evaluates a program once for one device, given its sensors,
its own previous export and the latest exports of its neighbours.  It returns
the value of the main expression and the new export.

Exports are keyed by *paths*: tuples of child slots and function tags that
identify where in the evaluation tree a ``rep`` or ``nbr`` was reached.  A
``nbr`` at path ``p`` only reads neighbour values exported at exactly ``p``, so
devices that applied different functions never exchange values there.
"""
from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass, field
from typing import Optional

from . import builtins as bi
from .lang import Apply, BuiltinRef, DefRef, Lambda, Literal, Nbr, Program, Rep, Var
from .values import Closure, NbrMap, contains_nbrmap, type_name

Path = tuple


def format_path(path: Path) -> str:
    return "/" + "/".join(str(k) for k in path)


class FieldRuntimeError(RuntimeError):
    def __init__(self, message: str, path: Path = ()):
        self.message = message
        self.path = path
        super().__init__(f"at {format_path(path)}: {message}")


class ExportTree(Mapping):
    """Path-indexed values a device publishes after a round."""

    __slots__ = ("values", "rep_paths")

    def __init__(self, values: Optional[dict] = None, rep_paths=frozenset()):
        self.values = dict(values or {})
        self.rep_paths = frozenset(rep_paths)

    def __getitem__(self, path):
        return self.values[path]

    def __iter__(self):
        return iter(self.values)

    def __len__(self):
        return len(self.values)

    def __eq__(self, other):
        if isinstance(other, ExportTree):
            return self.values == other.values and self.rep_paths == other.rep_paths
        return NotImplemented

    def __repr__(self):
        return f"ExportTree({self.values!r})"


@dataclass
class RoundContext:
    self_id: int
    sensors: dict = field(default_factory=dict)
    prev_export: Optional[ExportTree] = None
    nbr_exports: dict = field(default_factory=dict)
    nbr_ranges: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.self_id in self.nbr_exports:
            raise ValueError("neighbour exports must exclude the device itself")
        if self.nbr_ranges.keys() != self.nbr_exports.keys():
            raise ValueError("neighbour ranges and exports must cover the same devices")


class _Round:
    def __init__(self, program: Program, ctx: RoundContext):
        self.program = program
        self.ctx = ctx
        self.prev = ctx.prev_export.values if ctx.prev_export is not None else {}
        self.nbrs = sorted(ctx.nbr_exports.items())
        self.out: dict = {}
        self.reps: set = set()
        self.def_closures: dict = {}

    def closure_for_def(self, name):
        c = self.def_closures.get(name)
        if c is None:
            d = self.program.defs[name]
            c = self.def_closures[name] = Closure(d.tag, d.params, d.body, {})
        return c

    def eval(self, e, path, env):
        t = type(e)
        if t is Literal:
            return e.value
        if t is Var:
            return env[e.name]
        if t is Apply:
            return self.eval_apply(e, path, env)
        if t is Nbr:
            return self.eval_nbr(e, path, env)
        if t is Rep:
            return self.eval_rep(e, path, env)
        if t is Lambda:
            return Closure(e.tag, e.params, e.body, env)
        if t is DefRef:
            return self.closure_for_def(e.name)
        if t is BuiltinRef:
            return Closure("builtin:" + e.name, builtin=e.name)
        raise FieldRuntimeError(f"unknown node {t.__name__}", path)

    def eval_apply(self, e, path, env):
        target = e.target
        ev = self.eval
        args = tuple([ev(a, path + (a.slot,), env) for a in e.args])
        if type(target) is BuiltinRef:
            return self.call_builtin(target.name, args, path)
        f = self.eval(target, path + (0,), env)
        return self.apply(f, args, path)

    def apply(self, f, args, path):
        if not isinstance(f, Closure):
            raise FieldRuntimeError(f"cannot apply {type_name(f)}", path)
        if f.builtin is not None:
            return self.call_builtin(f.builtin, args, path)
        if len(args) != len(f.params):
            raise FieldRuntimeError(
                f"{f.tag} expects {len(f.params)} argument(s), got {len(args)}", path)
        env = dict(f.env)
        env.update(zip(f.params, args))
        return self.eval(f.body, path + (f.tag,), env)

    def call_builtin(self, name, args, path):
        spec = bi.BUILTINS[name]
        if spec.arity is not None and len(args) != spec.arity:
            raise FieldRuntimeError(
                f"{name} expects {spec.arity} argument(s), got {len(args)}", path)
        try:
            if spec.kind == "pure":
                for a in args:
                    if type(a) is NbrMap:
                        return bi.lift(spec.fn, args)
                return spec.fn(*args)
            return bi.call(spec, args, self.ctx,
                           lambda f, xs: self.apply(f, xs, path + ("builtin:" + name,)))
        except bi.BuiltinTypeError as exc:
            raise FieldRuntimeError(str(exc), path) from None
        except bi.UnboundSensor as exc:
            raise FieldRuntimeError(f"unbound sensor {exc.args[0]!r}", path) from None

    def eval_rep(self, e, path, env):
        if path in self.prev:
            update = self.eval(e.update, path + (1,), env)
            value = self.apply(update, (self.prev[path],), path)
        else:
            value = self.eval(e.init, path + (0,), env)
        if contains_nbrmap(value):
            raise FieldRuntimeError("rep state cannot hold a neighbour map", path)
        self.out[path] = value
        self.reps.add(path)
        return value

    def eval_nbr(self, e, path, env):
        own = self.eval(e.body, path + (0,), env)
        if contains_nbrmap(own):
            raise FieldRuntimeError("nbr cannot share a neighbour map", path)
        self.out[path] = own
        gathered = NbrMap()
        for d, export in self.nbrs:
            values = export.values
            if path in values:
                gathered[d] = values[path]
        return gathered


def eval_round(program: Program, ctx: RoundContext):
    """Run one round of ``program.main``; returns ``(value, ExportTree)``."""
    if program.main is None:
        raise FieldRuntimeError("program has no main expression")
    r = _Round(program, ctx)
    try:
        value = r.eval(program.main, (), {})
    except RecursionError:
        raise FieldRuntimeError("evaluation nested too deeply") from None
    if contains_nbrmap(value):
        raise FieldRuntimeError("round result cannot be a neighbour map (use a hood fold)")
    return value, ExportTree(r.out, r.reps)
