"""Measurements: memory census curves, live-cell ground truth and per-mode benchmark rows.

Time is measured by the allocation clock (cells allocated so far).  The
ground truth of live cells comes from an access log: a cell is live at a
moment if it already exists and is dereferenced again later.
"""

from __future__ import annotations

import bisect
import csv
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .analysis import analyze
from .automata import Compiler
from .gc import GcPolicy, GcTables, compile_tables
from .heap import MachineError
from .machine import Machine
from .syntax import Program

CELL_SIZE_FACTOR = 1.16


@dataclass
class MemorySample:
    alloc_clock: int
    step: int
    active_cells: int
    reachable_cells: int
    live_cells: int | None = None


@dataclass
class BenchRow:
    program: str
    mode: str
    heap_cells: int | None
    gcs: int
    cells_collected_per_gc: float | None
    cells_touched_per_gc: float | None
    peak_memory: int
    peak_memory_scaled: float
    gc_time: float
    total_time: float
    output: str = ""
    error: str = ""


@dataclass
class AnalysisStats:
    program: str
    nonterminals: int
    productions: int
    dfa_states: int
    dfa_transitions: int
    analysis_time: float


def census(m: Machine) -> MemorySample:
    """Active and reachable cells of ``m`` right now; the machine is not disturbed."""
    return MemorySample(m.alloc_count, m.steps, len(m.cells), len(m.reachable_cids()))


class AccessLog:
    """Creation and last-dereference steps per cell id, queried by step."""

    def __init__(self, created: dict[int, int], last: dict[int, int]):
        self.created = created
        self.last = last
        # a cell is live during [created, last); never-read cells have no interval
        spans = [(created[c], last[c]) for c in created if last.get(c, -1) > created[c]]
        self._starts = sorted(s for s, _ in spans)
        self._ends = sorted(e for _, e in spans)

    @classmethod
    def of(cls, m: Machine) -> "AccessLog":
        if m.access is None:
            raise ValueError("the run was made without an access log")
        return cls(*m.access)

    def live_count(self, step: int) -> int:
        born = bisect.bisect_right(self._starts, step)
        done = bisect.bisect_right(self._ends, step)
        return born - done

    def live_cids(self, step: int) -> frozenset[int]:
        return frozenset(c for c, s in self.created.items() if s <= step < self.last.get(c, -1))


def live_ground_truth(samples: list[MemorySample], log: AccessLog) -> list[MemorySample]:
    """Fill in ``live_cells`` of every sample."""
    if log.created and len(log.created) < max(log.created) + 1:
        raise ValueError("access log is truncated")
    for s in samples:
        s.live_cells = log.live_count(s.step)
    return samples


def memory_curve(program: Program, mode: str, heap_cells: int | None, tables: GcTables | None = None,
                 every: int = 64, revisit_heuristic: bool = True) -> tuple[list[MemorySample], Machine]:
    """Census samples every ``every`` allocations, with live counts filled in."""
    m = Machine(program, GcPolicy(mode, revisit_heuristic), heap_cells, tables,
                access_log=True, census_every=every)
    m.run()
    samples = [MemorySample(c, s, a, r) for c, s, a, r in m.samples]
    return live_ground_truth(samples, AccessLog.of(m)), m


def analysis_stats(name: str, program: Program) -> tuple[AnalysisStats, GcTables]:
    t0 = time.perf_counter()
    an = analyze(program)
    comp = Compiler(an.grammar)
    tables = compile_tables(an, comp)
    elapsed = time.perf_counter() - t0
    g = an.grammar
    nts = set(g.prods) | {s for alts in g.prods.values() for rhs in alts for s in rhs if s in g.prods}
    states = sum(d.size for d in comp.full.values())
    trans = sum(1 for d in comp.full.values() for q in d.useful for r in d.delta[q] if r in d.useful)
    return AnalysisStats(name, len(nts), g.production_count(), states, trans, elapsed), tables


def bench_one(program: Program, name: str, mode: str, heap_cells: int | None,
              tables: GcTables | None = None, cell_size_factor: float = CELL_SIZE_FACTOR,
              revisit_heuristic: bool = True) -> BenchRow:
    """Run once and summarise; failures are reported in the row instead of raised."""
    try:
        m = Machine(program, GcPolicy(mode, revisit_heuristic), heap_cells, tables)
        res = m.run()
    except MachineError as e:
        return BenchRow(name, mode, heap_cells, 0, None, None, 0, 0.0, 0.0, 0.0, "", f"{type(e).__name__}: {e}")
    g = res.stats.gc
    peak = res.stats.peak_memory
    scaled = peak * cell_size_factor if mode == "lgc" else float(peak)
    return BenchRow(name, mode, heap_cells, g.collections, g.collected_per_gc, g.touched_per_gc,
                    peak, scaled, g.gc_time, g.total_time, res.output)


def _bench_program(job) -> tuple[AnalysisStats, list[BenchRow], dict]:
    name, program, modes, heap_cells, heap_fraction, factor, every, heuristic = job
    stats, tables = analysis_stats(name, program)
    heap = heap_cells
    if heap is None and heap_fraction is not None:
        hw = Machine(program).run().stats.max_heap
        heap = max(1, int(hw * heap_fraction))
    rows, curves = [], {}
    for mode in modes:
        rows.append(bench_one(program, name, mode, None if mode == "none" else heap, tables, factor, heuristic))
        if every and not rows[-1].error:
            curves[mode], _ = memory_curve(program, mode, None if mode == "none" else heap, tables, every,
                                           heuristic)
    return stats, rows, curves


def write_csv(path: Path, rows: list, cls) -> None:
    names = [f.name for f in fields(cls)]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=names)
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if v is None else v) for k, v in asdict(r).items()})


def bench(programs: dict[str, Program], modes=("none", "rgc", "lgc"), heap_cells: int | None = None,
          heap_fraction: float | None = 0.5, out: str | os.PathLike | None = None,
          cell_size_factor: float = CELL_SIZE_FACTOR, census_every: int | None = None,
          workers: int = 1, revisit_heuristic: bool = True) -> tuple[list[AnalysisStats], list[BenchRow]]:
    """Benchmark every program in every mode.

    With no explicit ``heap_cells`` the semispace is ``heap_fraction`` of
    the program's high-water mark without collection.  When ``out`` is
    given, ``summary.csv``, ``analysis.csv`` and (with ``census_every``)
    one ``memory_<program>_<mode>.csv`` per run are written there.
    """
    jobs = [(n, p, tuple(modes), heap_cells, heap_fraction, cell_size_factor, census_every, revisit_heuristic)
            for n, p in programs.items()]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            results = list(ex.map(_bench_program, jobs))
    else:
        results = [_bench_program(j) for j in jobs]
    stats = [r[0] for r in results]
    rows = [row for r in results for row in r[1]]
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "summary.csv", rows, BenchRow)
        write_csv(out / "analysis.csv", stats, AnalysisStats)
        for (name, *_), (_, _, curves) in zip(jobs, results):
            for mode, samples in curves.items():
                write_csv(out / f"memory_{name}_{mode}.csv", samples, MemorySample)
    return stats, rows
