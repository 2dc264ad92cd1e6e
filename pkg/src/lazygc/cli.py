"""Command line front end: run, analyze, check, census and bench."""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import platform
import re
import sys
from pathlib import Path

from . import CACHE_FORMAT, __version__, corpus
from .analysis import analyze
from .automata import Compiler
from .gc import GC_LOG_HEADER, MODES, GcPolicy, GcTables, compile_tables
from .heap import MachineError
from .machine import Machine
from .minefield import DemandError, check, mutate
from .profiler import CELL_SIZE_FACTOR, MemorySample, bench, memory_curve, write_csv
from .syntax import ProgramError, SyntaxError_, load


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def read_program(where: str) -> tuple[str, str]:
    """``where`` is a file path or the name of a bundled example; returns (name, source)."""
    p = Path(where)
    if p.exists():
        return p.stem, p.read_text(encoding="utf-8")
    if where in corpus.names():
        return where, corpus.source(where)
    raise UsageError(f"no such program file or bundled example: {where}")


def _cache_dir(args) -> Path:
    if args.cache_dir:
        return Path(args.cache_dir)
    base = os.environ.get("XDG_CACHE_HOME") or os.path.join(os.path.expanduser("~"), ".cache")
    return Path(base) / "lazygc"


def tables_for(text: str, program, args, main_demand: str = "all") -> GcTables:
    """Compiled liveness tables, cached by a hash of the program text."""
    key = hashlib.sha256(f"{__version__}:{CACHE_FORMAT}:{main_demand}\n{text}".encode()).hexdigest()
    path = _cache_dir(args) / f"{key}.json"
    if not args.no_cache and path.exists():
        try:
            return GcTables.from_json(path.read_text())
        except (ValueError, KeyError):
            pass  # stale or damaged entry: rebuild it
    tables = compile_tables(analyze(program, main_demand))
    if not args.no_cache:
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(".tmp")
            tmp.write_text(tables.to_json())
            tmp.replace(path)
        except OSError:
            pass
    return tables


def _safe(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", name).strip("_")


# ---------------------------------------------------------------------------


def cmd_run(args) -> int:
    name, text = read_program(args.program)
    program = load(text)
    tables = tables_for(text, program, args) if args.gc == "lgc" else None
    log = [] if args.gc_log else None
    trace = open(args.trace, "w") if args.trace else None
    try:
        m = Machine(program, GcPolicy(args.gc, not args.no_revisit_heuristic), args.heap_cells, tables,
                    trace=trace, gc_log=log)
        res = m.run(args.max_steps)
    finally:
        if trace:
            trace.close()
    print(res.output)
    if log is not None:
        with open(args.gc_log, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(GC_LOG_HEADER)
            w.writerows(m.gc_stats.log_rows())
    if args.stats:
        s = res.stats
        peak = s.peak_memory * (args.cell_size_factor if args.gc == "lgc" else 1)
        print(json.dumps({
            "program": name, "gc": args.gc, "heap_cells": args.heap_cells, "steps": s.steps,
            "allocations": s.allocations, "gcs": s.gc.collections,
            "cells_collected_per_gc": s.gc.collected_per_gc, "cells_touched_per_gc": s.gc.touched_per_gc,
            "peak_memory": s.peak_memory, "peak_memory_scaled": round(peak, 2),
            "gc_time": round(s.gc.gc_time, 6), "total_time": round(s.gc.total_time, 6),
        }), file=sys.stderr)
    return 0


def cmd_analyze(args) -> int:
    name, text = read_program(args.program)
    program = load(text)
    an = analyze(program, args.main_demand)
    text_out = an.grammar.to_text()
    if args.output:
        Path(args.output).write_text(text_out)
    else:
        sys.stdout.write(text_out)
    if args.emit_dot or args.emit_automata:
        comp = Compiler(an.grammar)
        roots = sorted(set(an.grammar.roots.values()))
        for d in filter(None, (args.emit_dot, args.emit_automata)):
            Path(d).mkdir(parents=True, exist_ok=True)
        for nt in roots:
            dfa = comp.forward(nt)
            if args.emit_dot:
                Path(args.emit_dot, f"{_safe(nt)}.dot").write_text(dfa.to_dot(nt))
            if args.emit_automata:
                Path(args.emit_automata, f"{_safe(nt)}.ldfa").write_bytes(dfa.serialize())
        print(f"{len(roots)} liveness roots written", file=sys.stderr)
    return 0


def _parse_production(text: str) -> tuple[str, tuple]:
    if "->" not in text:
        raise UsageError(f"a production looks like 'LHS -> sym sym ...', not {text!r}")
    lhs, rhs = text.split("->", 1)
    return lhs.strip(), tuple(rhs.split())


def cmd_check(args) -> int:
    name, text = read_program(args.program)
    program = load(text)
    an = analyze(program)
    grammar = an.grammar
    if args.drop_production:
        lhs, rhs = _parse_production(args.drop_production)
        try:
            grammar = mutate(grammar, lhs, rhs)
        except KeyError as e:
            raise UsageError(str(e.args[0]))
    report = check(program, an, grammar, poison=not args.no_poison, max_steps=args.max_steps)
    if report.ok:
        print(f"{name}: no bang ({report.steps} steps, {report.collections} poisoning collections, "
              f"{report.poisoned} cells poisoned)")
        return 0
    print(json.dumps({"program": name, "bang": report.bang}, indent=2))
    return 2


def cmd_census(args) -> int:
    name, text = read_program(args.program)
    program = load(text)
    tables = tables_for(text, program, args) if args.gc == "lgc" else None
    samples, _ = memory_curve(program, args.gc, args.heap_cells, tables, args.every,
                              not args.no_revisit_heuristic)
    out = args.out or f"memory_{name}_{args.gc}.csv"
    write_csv(Path(out), samples, MemorySample)
    print(f"{len(samples)} samples written to {out}", file=sys.stderr)
    return 0


def cmd_bench(args) -> int:
    wanted = args.programs or corpus.names()
    programs = {}
    for s in wanted:
        name, text = read_program(s)
        programs[name] = load(text)
    stats, rows = bench(programs, args.modes, args.heap_cells, args.heap_fraction, args.out,
                        args.cell_size_factor, args.census_every, args.workers,
                        not args.no_revisit_heuristic)
    w = csv.writer(sys.stdout)
    w.writerow(["program", "mode", "heap_cells", "gcs", "collected_per_gc", "touched_per_gc",
                "peak_memory", "peak_memory_scaled", "error"])
    for r in rows:
        w.writerow([r.program, r.mode, r.heap_cells, r.gcs,
                    "" if r.cells_collected_per_gc is None else f"{r.cells_collected_per_gc:.1f}",
                    "" if r.cells_touched_per_gc is None else f"{r.cells_touched_per_gc:.1f}",
                    r.peak_memory, f"{r.peak_memory_scaled:.1f}", r.error])
    return 0


# ---------------------------------------------------------------------------


def _positive(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text}")
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def _factor(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text}")
    if v <= 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="lazygc", description=__doc__)
    p.add_argument("--version", action="version",
                   version=f"lazygc {__version__} (python {platform.python_version()}, "
                           f"analysis cache format {CACHE_FORMAT})")
    p.add_argument("--no-cache", action="store_true", help="do not read or write the analysis cache")
    p.add_argument("--cache-dir", help="analysis cache directory (default ~/.cache/lazygc)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def gc_flags(sp, default="none"):
        sp.add_argument("--gc", choices=MODES, default=default)
        sp.add_argument("--heap-cells", type=_positive, help="semispace size in cells (default unbounded)")
        sp.add_argument("--no-revisit-heuristic", action="store_true",
                        help="re-enter closures once per liveness state instead of once")

    r = sub.add_parser("run", help="evaluate a program and print its value")
    r.add_argument("program")
    gc_flags(r)
    r.add_argument("--cell-size-factor", type=_factor, default=CELL_SIZE_FACTOR)
    r.add_argument("--gc-log", help="CSV file with one row per collection")
    r.add_argument("--trace", help="file receiving one line per machine transition")
    r.add_argument("--max-steps", type=_positive)
    r.add_argument("--stats", action="store_true", help="print run statistics as JSON on stderr")
    r.set_defaults(func=cmd_run)

    a = sub.add_parser("analyze", help="print the liveness grammar; optionally emit automata")
    a.add_argument("program")
    a.add_argument("--main-demand", choices=("all", "whnf"), default="all")
    a.add_argument("-o", "--output", help="write the grammar here instead of stdout")
    a.add_argument("--emit-dot", metavar="DIR", help="one DOT file per liveness root")
    a.add_argument("--emit-automata", metavar="DIR", help="one binary automaton per liveness root")
    a.set_defaults(func=cmd_analyze)

    c = sub.add_parser("check", help="run the poisoning soundness oracle")
    c.add_argument("program")
    c.add_argument("--no-poison", action="store_true", help="thread demands but never poison")
    c.add_argument("--drop-production", metavar="'LHS -> RHS'", help="remove one production first")
    c.add_argument("--max-steps", type=_positive)
    c.set_defaults(func=cmd_check)

    s = sub.add_parser("census", help="memory curve of one run as CSV")
    s.add_argument("program")
    gc_flags(s)
    s.add_argument("--every", type=_positive, default=64, help="sample every N allocations")
    s.add_argument("--out")
    s.set_defaults(func=cmd_census)

    b = sub.add_parser("bench", help="benchmark programs (default: all bundled examples)")
    b.add_argument("programs", nargs="*")
    b.add_argument("--modes", nargs="+", choices=MODES, default=list(MODES))
    b.add_argument("--heap-cells", type=_positive)
    b.add_argument("--heap-fraction", type=_factor, default=0.5,
                   help="semispace as a fraction of the no-collection high-water mark")
    b.add_argument("--no-revisit-heuristic", action="store_true")
    b.add_argument("--cell-size-factor", type=_factor, default=CELL_SIZE_FACTOR)
    b.add_argument("--census-every", type=_positive, help="also write memory curves")
    b.add_argument("--workers", type=_positive, default=1)
    b.add_argument("--out", help="directory for summary.csv, analysis.csv and memory curves")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as e:
        print(f"lazygc: error: {e}", file=sys.stderr)
        return 1
    except (SyntaxError_, ProgramError, MachineError, DemandError, OSError) as e:
        print(f"lazygc: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
