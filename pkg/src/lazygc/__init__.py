"""Liveness-based copying garbage collection for a small lazy first-order language."""

from .analysis import Analysis, LivenessGrammar, analyze, build_grammar
from .automata import Compiler, Dfa, LivenessTable, Nfa
from .gc import GcPolicy, GcTables, compile_tables
from .machine import Machine, Result, run
from .minefield import MinefieldMachine, check
from .syntax import Program, load, parse_program

__version__ = "0.1.0"
CACHE_FORMAT = 1

__all__ = [
    "Analysis", "Compiler", "Dfa", "GcPolicy", "GcTables", "LivenessGrammar", "LivenessTable",
    "Machine", "MinefieldMachine", "Nfa", "Program", "Result", "analyze", "build_grammar", "check",
    "compile_tables", "load", "parse_program", "run",
]
