"""Field-calculus DSL: tokenizer, recursive-descent parser and pretty printer.

Concrete syntax::

    def distance(source) {
      rep(infinity) { (d) => mux(source, 0, minHood(nbrRange() + nbr{d})) }
    }
    distance(sense("source"))

A program is a sequence of ``def`` declarations followed by an optional main
expression.  Every AST node carries ``slot``, its index among its siblings;
the evaluator builds alignment paths out of slots and function tags.
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field, replace
from typing import Optional, Union

from .builtins import BUILTINS, INFIX, PREFIX

KEYWORDS = {"def", "rep", "nbr", "true", "false", "infinity"}


@dataclass(frozen=True)
class Loc:
    filename: str
    line: int
    col: int

    def __str__(self):
        return f"{self.filename}:{self.line}:{self.col}"


class ProgramError(ValueError):
    """A static error in DSL source, reported as ``file:line:col: message``."""

    def __init__(self, message: str, loc: Optional[Loc] = None):
        self.message = message
        self.loc = loc
        super().__init__(f"{loc}: {message}" if loc else message)


class FieldSyntaxError(ProgramError):
    pass


class ResolutionError(ProgramError):
    pass


class ArityError(ProgramError):
    pass


# --------------------------------------------------------------------------
# AST

@dataclass(frozen=True)
class Literal:
    value: Union[float, bool, str]
    slot: int = 0
    loc: Optional[Loc] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Var:
    name: str
    slot: int = 0
    loc: Optional[Loc] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class DefRef:
    name: str
    slot: int = 0
    loc: Optional[Loc] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class BuiltinRef:
    name: str
    slot: int = 0
    loc: Optional[Loc] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Lambda:
    params: tuple[str, ...]
    body: "Expr"
    tag: str = ""
    slot: int = 0
    loc: Optional[Loc] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Apply:
    target: "Expr"
    args: tuple["Expr", ...]
    slot: int = 0
    loc: Optional[Loc] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Rep:
    init: "Expr"
    update: "Expr"
    slot: int = 0
    loc: Optional[Loc] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Nbr:
    body: "Expr"
    slot: int = 0
    loc: Optional[Loc] = field(default=None, compare=False, repr=False)


Expr = Union[Literal, Var, DefRef, BuiltinRef, Lambda, Apply, Rep, Nbr]


@dataclass(frozen=True)
class Definition:
    name: str
    params: tuple[str, ...]
    body: Expr
    loc: Optional[Loc] = field(default=None, compare=False, repr=False)

    @property
    def tag(self) -> str:
        return f"def:{self.name}"


@dataclass(frozen=True)
class Program:
    defs: dict[str, Definition]
    main: Optional[Expr] = None

    def __hash__(self):
        return hash((tuple(self.defs.items()), self.main))


# --------------------------------------------------------------------------
# Tokenizer

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>//[^\n]*)
  | (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<str>"(?:[^"\\\n]|\\.)*")
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>=>|==|!=|<=|>=|&&|\|\||[-+*/<>!(){},;])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str  # num | str | ident | kw | op | eof
    text: str
    loc: Loc


def tokenize(source: str, filename: str = "<input>") -> list[Token]:
    tokens = []
    line, line_start, pos = 1, 0, 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        loc = Loc(filename, line, pos - line_start + 1)
        if m is None:
            raise FieldSyntaxError(f"unexpected character {source[pos]!r}", loc)
        kind = m.lastgroup
        text = m.group()
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind == "ident":
            tokens.append(Token("kw" if text in KEYWORDS else "ident", text, loc))
        elif kind in ("num", "str", "op"):
            tokens.append(Token(kind, text, loc))
        pos = m.end()
    tokens.append(Token("eof", "", Loc(filename, line, pos - line_start + 1)))
    return tokens


# --------------------------------------------------------------------------
# Parser (produces unresolved trees: identifiers are Var, lambdas untagged)

_BINARY_LEVELS = [
    ("||",),
    ("&&",),
    ("==", "!="),
    ("<", "<=", ">", ">="),
    ("+", "-"),
    ("*", "/"),
]
_REF_FOLLOW = {",", ")", "}", ";"}


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.toks = tokens
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def at(self, text: str) -> bool:
        return self.tok.kind in ("op", "kw") and self.tok.text == text

    def advance(self) -> Token:
        t = self.tok
        self.i += 1
        return t

    def expect(self, text: str) -> Token:
        if not self.at(text):
            self.fail(f"expected {text!r}")
        return self.advance()

    def ident(self) -> Token:
        if self.tok.kind != "ident":
            self.fail("expected identifier")
        return self.advance()

    def fail(self, message: str):
        found = self.tok.text or "end of input"
        raise FieldSyntaxError(f"{message}, found {found!r}", self.tok.loc)

    def program(self) -> tuple[list[Definition], Optional[Expr]]:
        if self.tok.kind == "eof":
            self.fail("empty program")
        defs = []
        while self.at("def"):
            defs.append(self.definition())
        main = None
        if self.tok.kind != "eof":
            main = self.expr()
            if self.at(";"):
                self.advance()
        if self.tok.kind != "eof":
            self.fail("unexpected token after main expression")
        return defs, main

    def definition(self) -> Definition:
        loc = self.expect("def").loc
        name = self.ident().text
        params = self.param_list()
        self.expect("{")
        body = self.expr()
        self.expect("}")
        return Definition(name, params, body, loc)

    def param_list(self) -> tuple[str, ...]:
        self.expect("(")
        params = []
        if not self.at(")"):
            params.append(self.ident().text)
            while self.at(","):
                self.advance()
                params.append(self.ident().text)
        self.expect(")")
        return tuple(params)

    def lambda_ahead(self) -> bool:
        if not self.at("("):
            return False
        k = 1
        if self.peek(k).kind == "ident":
            k += 1
            while self.peek(k).text == "," and self.peek(k + 1).kind == "ident":
                k += 2
        return self.peek(k).text == ")" and self.peek(k + 1).text == "=>"

    def expr(self) -> Expr:
        if self.lambda_ahead():
            loc = self.tok.loc
            params = self.param_list()
            self.expect("=>")
            return Lambda(params, self.expr(), loc=loc)
        return self.binary(0)

    def binary(self, level: int) -> Expr:
        if level == len(_BINARY_LEVELS):
            return self.unary()
        left = self.binary(level + 1)
        while self.tok.kind == "op" and self.tok.text in _BINARY_LEVELS[level]:
            if self.peek().text in _REF_FOLLOW or self.peek().kind == "eof":
                break
            op = self.advance()
            right = self.binary(level + 1)
            left = Apply(BuiltinRef(op.text, loc=op.loc), (left, right), loc=op.loc)
        return left

    def unary(self) -> Expr:
        t = self.tok
        if t.kind == "op" and (t.text in INFIX or t.text in PREFIX):
            nxt = self.peek()
            if nxt.text in _REF_FOLLOW or nxt.kind == "eof":
                self.advance()
                return BuiltinRef(t.text, loc=t.loc)
            if t.text == "-":
                self.advance()
                operand = self.unary()
                if isinstance(operand, Literal) and isinstance(operand.value, float):
                    return Literal(-operand.value, loc=t.loc)
                return Apply(BuiltinRef("neg", loc=t.loc), (operand,), loc=t.loc)
            if t.text == "!":
                self.advance()
                return Apply(BuiltinRef("!", loc=t.loc), (self.unary(),), loc=t.loc)
            self.fail("operator used without operands")
        return self.postfix()

    def postfix(self) -> Expr:
        e = self.primary()
        while self.at("("):
            loc = self.advance().loc
            args = []
            if not self.at(")"):
                args.append(self.expr())
                while self.at(","):
                    self.advance()
                    args.append(self.expr())
            self.expect(")")
            e = Apply(e, tuple(args), loc=loc)
        return e

    def primary(self) -> Expr:
        t = self.tok
        if t.kind == "num":
            self.advance()
            return Literal(float(t.text), loc=t.loc)
        if t.kind == "str":
            self.advance()
            return Literal(json.loads(t.text), loc=t.loc)
        if t.kind == "ident":
            self.advance()
            return Var(t.text, loc=t.loc)
        if t.kind == "kw":
            if t.text in ("true", "false"):
                self.advance()
                return Literal(t.text == "true", loc=t.loc)
            if t.text == "infinity":
                self.advance()
                return Literal(math.inf, loc=t.loc)
            if t.text == "rep":
                self.advance()
                self.expect("(")
                init = self.expr()
                self.expect(")")
                self.expect("{")
                update = self.expr()
                self.expect("}")
                return Rep(init, update, loc=t.loc)
            if t.text == "nbr":
                self.advance()
                self.expect("{")
                body = self.expr()
                self.expect("}")
                return Nbr(body, loc=t.loc)
        if self.at("("):
            self.advance()
            e = self.expr()
            self.expect(")")
            return e
        self.fail("expected expression")


# --------------------------------------------------------------------------
# Resolution: names, slots, lambda tags, static arity

class _Resolver:
    def __init__(self, arities: dict[str, int]):
        self.arities = arities
        self.owner = ""
        self.counter = 0

    def start(self, owner: str):
        self.owner = owner
        self.counter = 0

    def node(self, e: Expr, slot: int, scope: frozenset) -> Expr:
        if isinstance(e, Literal):
            return replace(e, slot=slot)
        if isinstance(e, Var):
            if e.name in scope:
                return replace(e, slot=slot)
            if e.name in self.arities:
                return DefRef(e.name, slot, e.loc)
            if e.name in BUILTINS:
                return BuiltinRef(e.name, slot, e.loc)
            raise ResolutionError(f"unresolved identifier {e.name!r}", e.loc)
        if isinstance(e, (DefRef, BuiltinRef)):
            return replace(e, slot=slot)
        if isinstance(e, Lambda):
            if len(set(e.params)) != len(e.params):
                raise ResolutionError("duplicate parameter name", e.loc)
            tag = f"{self.owner}#{self.counter}"
            self.counter += 1
            body = self.node(e.body, 0, scope | set(e.params))
            return Lambda(e.params, body, tag, slot, e.loc)
        if isinstance(e, Apply):
            target = self.node(e.target, 0, scope)
            args = tuple(self.node(a, i + 1, scope) for i, a in enumerate(e.args))
            self.check_arity(target, len(args), e.loc)
            return Apply(target, args, slot, e.loc)
        if isinstance(e, Rep):
            return Rep(self.node(e.init, 0, scope), self.node(e.update, 1, scope), slot, e.loc)
        if isinstance(e, Nbr):
            return Nbr(self.node(e.body, 0, scope), slot, e.loc)
        raise TypeError(e)

    def check_arity(self, target: Expr, n: int, loc):
        if isinstance(target, DefRef):
            expected = self.arities[target.name]
        elif isinstance(target, BuiltinRef):
            expected = BUILTINS[target.name].arity
        elif isinstance(target, Lambda):
            expected = len(target.params)
        else:
            return
        if expected is not None and expected != n:
            raise ArityError(
                f"{_callee_name(target)} expects {expected} argument(s), got {n}", loc
            )


def _callee_name(target: Expr) -> str:
    return getattr(target, "name", None) or "function literal"


def parse(source: str, filename: str = "<input>", prelude: Optional[str] = None,
          prelude_filename: str = "<stdlib>") -> Program:
    """Parse and resolve DSL source into a :class:`Program`.

    ``prelude`` is library source whose definitions become visible to
    ``source``; a definition in ``source`` replaces a prelude one of the same
    name.
    """
    raw: dict[str, Definition] = {}
    if prelude is not None:
        pdefs, pmain = _Parser(tokenize(prelude, prelude_filename)).program()
        if pmain is not None:
            raise FieldSyntaxError("prelude must contain only definitions", _loc_of(pmain))
        _collect(raw, pdefs, allow_override=False)
    defs, main = _Parser(tokenize(source, filename)).program()
    user: dict[str, Definition] = {}
    _collect(user, defs, allow_override=False)
    raw.update(user)

    resolver = _Resolver({name: len(d.params) for name, d in raw.items()})
    resolved = {}
    for name, d in raw.items():
        if len(set(d.params)) != len(d.params):
            raise ResolutionError("duplicate parameter name", d.loc)
        resolver.start(name)
        resolved[name] = Definition(name, d.params, resolver.node(d.body, 0, frozenset(d.params)), d.loc)
    if main is not None:
        resolver.start("@main")
        main = resolver.node(main, 0, frozenset())
    return Program(resolved, main)


def _collect(into: dict, defs: list[Definition], allow_override: bool):
    for d in defs:
        if d.name in into and not allow_override:
            raise ResolutionError(f"duplicate definition {d.name!r}", d.loc)
        if d.name in KEYWORDS:
            raise ResolutionError(f"{d.name!r} is a keyword", d.loc)
        into[d.name] = d


def _loc_of(e) -> Optional[Loc]:
    return getattr(e, "loc", None)


# --------------------------------------------------------------------------
# Pretty printer

def format_number(v: float) -> str:
    if math.isinf(v):
        return "infinity" if v > 0 else "-infinity"
    if math.isnan(v):
        raise ValueError("NaN has no literal form")
    if v.is_integer() and abs(v) < 1e16:
        text = str(int(v))
        return "-0" if text == "0" and math.copysign(1.0, v) < 0 else text
    return repr(v)


def pretty_expr(e: Expr, top: bool = False) -> str:
    if isinstance(e, Literal):
        if isinstance(e.value, bool):
            return "true" if e.value else "false"
        if isinstance(e.value, str):
            return json.dumps(e.value)
        return format_number(e.value)
    if isinstance(e, (Var, DefRef, BuiltinRef)):
        return e.name
    if isinstance(e, Lambda):
        text = f"({', '.join(e.params)}) => {pretty_expr(e.body, top=True)}"
        return text if top else f"({text})"
    if isinstance(e, Apply):
        t = e.target
        if isinstance(t, BuiltinRef) and t.name in INFIX and len(e.args) == 2:
            a, b = e.args
            return f"({pretty_expr(a)} {t.name} {pretty_expr(b)})"
        if isinstance(t, BuiltinRef) and t.name == "!" and len(e.args) == 1:
            return f"(!{pretty_expr(e.args[0])})"
        args = ", ".join(pretty_expr(a) for a in e.args)
        return f"{pretty_expr(t)}({args})"
    if isinstance(e, Rep):
        return f"rep({pretty_expr(e.init, top=True)}) {{ {pretty_expr(e.update, top=True)} }}"
    if isinstance(e, Nbr):
        return f"nbr{{{pretty_expr(e.body, top=True)}}}"
    raise TypeError(e)


def pretty(program: Program) -> str:
    parts = []
    for d in program.defs.values():
        parts.append(f"def {d.name}({', '.join(d.params)}) {{\n  {pretty_expr(d.body, top=True)}\n}}\n")
    if program.main is not None:
        parts.append(pretty_expr(program.main, top=True) + "\n")
    return "\n".join(parts)


def lambdas(program: Program) -> dict[str, Lambda]:
    """All function literals of ``program`` keyed by tag."""
    found: dict[str, Lambda] = {}

    def walk(e):
        if isinstance(e, Lambda):
            found[e.tag] = e
            walk(e.body)
        elif isinstance(e, Apply):
            walk(e.target)
            for a in e.args:
                walk(a)
        elif isinstance(e, Rep):
            walk(e.init)
            walk(e.update)
        elif isinstance(e, Nbr):
            walk(e.body)

    for d in program.defs.values():
        walk(d.body)
    if program.main is not None:
        walk(program.main)
    return found
