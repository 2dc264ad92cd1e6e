"""Semispace copying collection by reachability (RGC) or by liveness (LGC).

The liveness collector follows the usual copying scheme but carries a
state of the global ``LivenessTable`` along every reference: a cell is
copied only if its state is live, pair fields continue in the successor
states for ``0`` and ``1``, and the captured variables of a closure start
afresh from the states stored in the closure itself.  References that
are not live are replaced by ``DEAD``.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

from .analysis import Analysis, _ifs_below
from .automata import Compiler, LivenessTable
from .heap import CLO, DEAD, PAIR, Cell, OutOfMemory
from .syntax import Let, distinct_free_vars, walk

ALL = LivenessTable.ALL
MODES = ("none", "rgc", "lgc")


@dataclass(frozen=True)
class GcPolicy:
    mode: str = "none"
    revisit_heuristic: bool = True

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"gc mode must be one of {', '.join(MODES)}, not {self.mode!r}")


@dataclass
class GcEvent:
    index: int
    alloc_clock: int
    step: int
    cells_before: int
    cells_after: int
    cells_touched: int
    duration: float


@dataclass
class GcStats:
    collections: int = 0
    cells_collected: int = 0
    cells_touched: int = 0
    peak_active_cells: int = 0
    gc_time: float = 0.0
    total_time: float = 0.0
    events: list[GcEvent] = field(default_factory=list)

    def record(self, ev: GcEvent) -> None:
        self.events.append(ev)
        self.collections += 1
        self.cells_collected += ev.cells_before - ev.cells_after
        self.cells_touched += ev.cells_touched
        self.gc_time += ev.duration
        self.peak_active_cells = max(self.peak_active_cells, ev.cells_after)

    @property
    def collected_per_gc(self) -> float | None:
        return self.cells_collected / self.collections if self.collections else None

    @property
    def touched_per_gc(self) -> float | None:
        return self.cells_touched / self.collections if self.collections else None

    def log_rows(self) -> list[list]:
        return [[e.index, e.alloc_clock, e.cells_before, e.cells_after, e.cells_touched,
                 f"{e.duration:.6f}"] for e in self.events]


GC_LOG_HEADER = ["index", "alloc_clock", "cells_before", "cells_after", "cells_touched", "duration"]


# ---------------------------------------------------------------------------
# liveness tables for the runtime


@dataclass
class GcTables:
    """Runtime view of the analysis: table states for every root the collector consults."""

    table: LivenessTable
    entry: dict[tuple[str, str], int]
    branch: dict[tuple[int, str, str], int]
    eval: dict[tuple[int, str], int]
    closure: dict[int, dict[str, int]]
    variant: dict[tuple[int, int, str], dict[str, int]]
    refine: dict[int, list[tuple[str, int]]]

    def to_json(self) -> str:
        t = self.table
        return json.dumps({
            "table": [t.next0, t.next1, [int(x) for x in t.live]],
            "entry": [[*k, v] for k, v in self.entry.items()],
            "branch": [[*k, v] for k, v in self.branch.items()],
            "eval": [[*k, v] for k, v in self.eval.items()],
            "closure": [[k, v] for k, v in self.closure.items()],
            "variant": [[*k, v] for k, v in self.variant.items()],
            "refine": [[k, v] for k, v in self.refine.items()],
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "GcTables":
        d = json.loads(text)
        t = LivenessTable()
        t.next0, t.next1 = d["table"][0], d["table"][1]
        t.live = [bool(x) for x in d["table"][2]]
        return cls(
            t,
            {(f, x): s for f, x, s in d["entry"]},
            {(q, b, x): s for q, b, x, s in d["branch"]},
            {(q, x): s for q, x, s in d["eval"]},
            {k: v for k, v in d["closure"]},
            {(p, q, b): v for p, q, b, v in d["variant"]},
            {k: [tuple(e) for e in v] for k, v in d["refine"]},
        )


def compile_tables(an: Analysis, compiler: Compiler | None = None) -> GcTables:
    """Turn every collector-facing root of ``an`` into a liveness-table state."""
    comp = compiler or Compiler(an.grammar)
    table = LivenessTable()
    memo: dict[str, int] = {}

    def state(nt: str) -> int:
        if nt not in memo:
            memo[nt] = table.add(comp.forward(nt))
        return memo[nt]

    entry, branch, ev, closure, variant = {}, {}, {}, {}, {}
    for role, nt in an.grammar.roots.items():
        k, a = role.kind, role.args
        if k == "entry":
            entry[a] = state(nt)
        elif k == "branch":
            branch[a] = state(nt)
        elif k == "eval":
            ev[a] = state(nt)
        elif k == "closure":
            closure.setdefault(a[1], {})[a[0]] = state(nt)
        elif k == "variant":
            variant.setdefault(a[1:], {})[a[0]] = state(nt)
    refine: dict[int, list[tuple[str, int]]] = {}
    for d in an.program.defs:
        for n in walk(d.body):
            if isinstance(n, Let) and distinct_free_vars(n.rhs):
                for iff, _ in _ifs_below(n.body):
                    refine.setdefault(iff.psi, []).append((n.var, n.pi))
    return GcTables(table, entry, branch, ev, closure, variant, refine)


# ---------------------------------------------------------------------------
# collectors


class _Copier:
    """Shared copy machinery.  ``lgc`` selects liveness-guided copying."""

    def __init__(self, old: list[Cell], table: LivenessTable | None, heuristic: bool = True):
        self.old = old
        self.new: list[Cell] = []
        self.fwd = [-1] * len(old)
        self.table = table
        self.heuristic = heuristic
        self.seen: set = set()
        self.work: list = []
        self.touched = 0

    def copy(self, ref: int, state: int = ALL) -> int:
        if ref == DEAD:
            return DEAD
        table = self.table
        if table is not None and not table.live[state]:
            return DEAD
        self.touched += 1
        new = self.fwd[ref]
        if new < 0:
            cell = self.old[ref]
            new = self.fwd[ref] = len(self.new)
            self.new.append(cell.shell())
        cell = self.old[ref]
        if cell.tag == PAIR:
            key = (ref, state) if table is not None else ref
        elif cell.tag == CLO:
            key = ref if (table is None or self.heuristic) else (ref, state)
        else:
            return new
        if key not in self.seen:
            self.seen.add(key)
            self.work.append((ref, state))
        return new

    def env(self, env: dict[str, int], states) -> dict[str, int]:
        """Translate an environment; ``states`` maps variables to states (None means all)."""
        out = {}
        for v, r in env.items():
            out[v] = self.copy(r, ALL if states is None else states.get(v, ALL))
        return out

    def drain(self) -> None:
        table, old, new, fwd = self.table, self.old, self.new, self.fwd
        while self.work:
            ref, state = self.work.pop()
            cell = old[ref]
            dst = new[fwd[ref]]
            if cell.tag == PAIR:
                if table is None:
                    dst.a, dst.b = self.copy(cell.a), self.copy(cell.b)
                else:
                    a = self.copy(cell.a, table.next0[state])
                    b = self.copy(cell.b, table.next1[state])
                    if a != DEAD:
                        dst.a = a
                    if b != DEAD:
                        dst.b = b
            else:
                desc = cell.desc if table is not None else None
                for v, r in cell.env.items():
                    s = ALL if desc is None else desc.get(v, ALL)
                    nr = self.copy(r, s)
                    if nr != DEAD:
                        dst.env[v] = nr


def _frame_states(m, frame, tables: GcTables | None):
    from .machine import PRINT
    from .syntax import If, Return
    if tables is None or frame.resume is PRINT:
        return None
    if type(frame.resume) in (If, Return):
        psi = frame.resume.psi
        return {v: tables.eval[(psi, v)] for v in frame.env}
    return frame.desc


def collect(m, mode: str, states: dict[str, int] | None = None, need: int = 0) -> GcEvent:
    """Collect the heap of machine ``m`` in place.

    ``states`` gives the liveness state of every variable of the current
    environment (only used by ``lgc``).  Raises ``OutOfMemory`` if fewer
    than ``need`` cells are free afterwards.
    """
    t0 = time.perf_counter()
    tables = m.tables if mode == "lgc" else None
    if mode == "lgc" and tables is None:
        raise ValueError("liveness collection needs compiled liveness tables")
    before = len(m.cells)
    reach = m.reachable_cids() if m.audit is not None else None
    cp = _Copier(m.cells, tables.table if tables else None, m.policy.revisit_heuristic)
    m.env = cp.env(m.env, states if tables else None)
    for f in m.stack:
        f.env = cp.env(f.env, _frame_states(m, f, tables))
        f.update = cp.copy(f.update, ALL)
    m.print_stack = [(kind, cp.copy(r, ALL)) if kind != "text" else (kind, r)
                     for kind, r in m.print_stack]
    cp.drain()
    if m.audit is not None:
        m.audit.append((m.steps, frozenset(c.cid for c in cp.new), reach))
    m.cells = cp.new
    ev = GcEvent(m.gc_stats.collections, m.alloc_count, m.steps, before, len(cp.new), cp.touched,
                 time.perf_counter() - t0)
    m.gc_stats.record(ev)
    if m.gc_log is not None:
        m.gc_log.append(ev)
    if m.capacity is not None and m.capacity - len(m.cells) < need:
        raise OutOfMemory(f"{mode} collection left {m.capacity - len(m.cells)} free cells, "
                          f"{need} needed")
    return ev


def reachable(m) -> list[int]:
    """References reachable from the machine roots (non-destructive trace)."""
    cells = m.cells
    seen = set()
    stack = [r for r in m.env.values()]
    for f in m.stack:
        stack.extend(f.env.values())
        stack.append(f.update)
    stack.extend(r for kind, r in m.print_stack if kind != "text")
    while stack:
        r = stack.pop()
        if r == DEAD or r in seen:
            continue
        seen.add(r)
        c = cells[r]
        if c.tag == PAIR:
            stack.append(c.a)
            stack.append(c.b)
        elif c.tag == CLO:
            stack.extend(c.env.values())
    return sorted(seen)


def refine_closure_liveness(m, psi: int, taken: bool) -> int:
    """Narrow the descriptors of this activation's closures once the if at ``psi`` is decided."""
    tables = m.tables
    entries = tables.refine.get(psi)
    if not entries:
        return 0
    tag = "then" if taken else "else"
    n = 0
    for var, pi in entries:
        r = m.env.get(var, DEAD)
        if r == DEAD:
            continue
        cell = m.cells[r]
        if cell.tag == CLO and cell.pi == pi:
            desc = tables.variant.get((pi, psi, tag))
            if desc is not None:
                cell.desc = desc
                n += 1
    return n


def rgc_collect(m, need: int = 0) -> GcEvent:
    return collect(m, "rgc", need=need)


def lgc_collect(m, states: dict[str, int], need: int = 0) -> GcEvent:
    return collect(m, "lgc", states, need)
