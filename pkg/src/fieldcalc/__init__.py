"""Executable field calculus with a deterministic network simulator."""
from .engine import ExportTree, FieldRuntimeError, RoundContext, eval_round
from .lang import ProgramError, Program, parse, pretty

__all__ = [
    "ExportTree",
    "FieldRuntimeError",
    "Program",
    "ProgramError",
    "RoundContext",
    "eval_round",
    "parse",
    "pretty",
]
