"""Small-step interpreter with thunks, update frames and a built-in printer.

A configuration is an environment, a stack of continuation frames, a heap
and a control, which is an expression of a function body, an application
(the body of a closure being forced) or the printer.  ``Machine.step``
applies exactly one transition.  Lets allocate closures; nothing else
allocates.  Forcing a closure pushes a frame recording the cell to update
and where to resume; returning a WHNF value pops it.
"""

from __future__ import annotations

import time
from collections import Counter
from dataclasses import dataclass, field
from typing import TextIO

from .gc import GcEvent, GcPolicy, GcStats, GcTables, collect, reachable, refine_closure_liveness
from .heap import CLO, DEAD, EMPTY, NIL, NUM, PAIR, Cell, DanglingReference, MachineError, OutOfMemory
from .syntax import (Call, Car, Cdr, Cons, Const, If, Let, NullQ, Prim, Program, Return,
                     distinct_free_vars, let_count)

INT_MIN, INT_MAX = -(2 ** 63), 2 ** 63 - 1


class _Print:
    """Control of the built-in printer."""

    def __repr__(self) -> str:
        return "PRINT"


PRINT = _Print()


class Frame:
    """Continuation frame: resume ``resume`` in ``env`` after updating ``update``."""

    __slots__ = ("env", "update", "resume", "desc", "pi", "demand", "roots")

    def __init__(self, env, update, resume, desc=None, pi=None, demand=None):
        self.env = env
        self.update = update
        self.resume = resume
        self.desc = desc
        self.pi = pi
        self.demand = demand
        self.roots = None

    def __repr__(self) -> str:
        return f"Frame(update={self.update}, resume={type(self.resume).__name__})"


@dataclass
class RunStats:
    steps: int = 0
    allocations: int = 0
    closure_entries: int = 0
    rules: Counter = field(default_factory=Counter)
    gc: GcStats = field(default_factory=GcStats)
    max_stack: int = 0
    max_heap: int = 0

    @property
    def peak_memory(self) -> int:
        """Most cells retained by any collection, or the heap high-water mark without one."""
        return self.gc.peak_active_cells if self.gc.collections else self.max_heap


@dataclass
class Result:
    output: str
    stats: RunStats


def _check(v: int) -> int:
    if not INT_MIN <= v <= INT_MAX:
        raise MachineError(f"integer overflow: {v}")
    return v


def arith(op: str, x: int, y: int) -> int:
    if op == "+":
        return _check(x + y)
    if op == "-":
        return _check(x - y)
    if op == "*":
        return _check(x * y)
    if op == "/":
        if y == 0:
            raise MachineError("division by zero")
        q = abs(x) // abs(y)
        return _check(q if (x < 0) == (y < 0) else -q)
    if op == "<":
        return int(x < y)
    if op == "=":
        return int(x == y)
    raise MachineError(f"unknown primitive {op}")


class Machine:
    """One execution of a program.

    ``heap_cells`` is the semispace size (None: unbounded).  ``tables`` are
    required for liveness collection.  ``audit`` (a list) receives, per
    collection, the step, the preserved cell ids and the reachable cell ids.
    ``access_log`` records for every cell id its creation and last access step.
    """

    def __init__(self, program: Program, policy: GcPolicy | str = "none", heap_cells: int | None = None,
                 tables: GcTables | None = None, *, trace: TextIO | None = None,
                 audit: list | None = None, access_log: bool = False,
                 census_every: int | None = None, gc_log: list | None = None):
        self.program = program
        self.policy = GcPolicy(policy) if isinstance(policy, str) else policy
        if self.policy.mode == "lgc" and tables is None:
            raise ValueError("lgc mode needs liveness tables (see compile_tables)")
        if heap_cells is not None and heap_cells < 1:
            raise ValueError("the heap needs at least one cell")
        self.capacity = heap_cells
        self.tables = tables
        self.trace = trace
        self.audit = audit
        self.gc_log = gc_log
        self.access = ({}, {}) if access_log else None  # cid -> created step, cid -> last access
        self.census_every = census_every
        self.samples: list[tuple[int, int, int, int]] = []  # clock, step, active, reachable
        self.stats = RunStats(gc=GcStats())
        self.gc_stats = self.stats.gc
        self._lets = {d.name: let_count(d.body) for d in program.defs}
        self._fvs: dict[int, tuple[str, ...]] = {}
        self.out: list[str] = []
        self.halted = False
        self._stop_at = None
        self.paused_in = None
        self.reset()

    # -- state ------------------------------------------------------------

    def reset(self) -> None:
        self.cells: list[Cell] = []
        self.alloc_count = 0
        self.steps = 0
        ans = self._alloc(Cell(EMPTY))
        self.env: dict[str, int] = {}
        self.stack: list[Frame] = [Frame({"ans": ans}, ans, PRINT)]
        self.print_stack: list[tuple[str, object]] = [("val", ans)]
        self.cur_desc = None
        self.cur_pi = None
        # the call of main has already happened: start in its body
        main = self.program.main
        self.control = main.body
        self._at_entry(main)

    @property
    def heap_size(self) -> int:
        return len(self.cells)

    @property
    def free(self) -> int | None:
        return None if self.capacity is None else self.capacity - len(self.cells)

    def _alloc(self, cell: Cell) -> int:
        if self.capacity is not None and len(self.cells) >= self.capacity:
            raise OutOfMemory(f"heap of {self.capacity} cells exhausted")
        cell.cid = self.alloc_count
        self.alloc_count += 1
        self.cells.append(cell)
        if self.access is not None:
            self.access[0][cell.cid] = self.steps
        if len(self.cells) > self.stats.max_heap:
            self.stats.max_heap = len(self.cells)
        if self.census_every and self.alloc_count % self.census_every == 0:
            self.samples.append((self.alloc_count, self.steps, len(self.cells), len(reachable(self))))
        return len(self.cells) - 1

    def deref(self, ref: int, var: str = "?", path: str = "") -> Cell:
        if ref == DEAD:
            raise DanglingReference(f"dereferenced a collected reference: {var}{'.' + path if path else ''}")
        cell = self.cells[ref]
        if self.access is not None:
            self.access[1][cell.cid] = self.steps
        return cell

    def _update(self, ref: int, value: Cell) -> None:
        cell = self.cells[ref]
        if self.access is not None:
            self.access[1][cell.cid] = self.steps
        cell.assign(value)

    def reachable_cids(self) -> frozenset[int]:
        return frozenset(self.cells[r].cid for r in reachable(self))

    # -- hooks overridden by the minefield machine -----------------------

    def _before_let(self, e: Let) -> None:
        pass

    def _on_closure(self, cell: Cell, e: Let) -> None:
        pass

    def _push(self, ref: int, resume, rule: str) -> None:
        if type(resume) is If or type(resume) is Return or resume is PRINT:
            f = Frame(self.env, ref, resume)
        else:
            f = Frame(self.env, ref, resume, self.cur_desc, self.cur_pi)
        self.stack.append(f)
        if len(self.stack) > self.stats.max_stack:
            self.stats.max_stack = len(self.stack)

    def _pop(self) -> Frame:
        f = self.stack.pop()
        self.env, self.control, self.cur_desc, self.cur_pi = f.env, f.resume, f.desc, f.pi
        return f

    # -- transitions ------------------------------------------------------

    def _force(self, ref: int, cell: Cell, resume, rule: str) -> str:
        """Push a frame and start evaluating the closure ``cell`` stored at ``ref``."""
        self._push(ref, resume, rule)
        self.env, self.control = cell.env, cell.app
        self.cur_desc, self.cur_pi = cell.desc, cell.pi
        # blackhole: until its update the cell is only a placeholder, and
        # keeping the captured variables reachable through it would leak
        cell.env, cell.desc = {}, {}
        self.stats.closure_entries += 1
        return rule

    def _deliver(self, value: Cell) -> None:
        f = self._pop()
        self._update(f.update, value)

    def step(self) -> str:
        """Apply one transition and return the name of the rule used."""
        c = self.control
        t = type(c)
        where = self.label(c) if self.trace is not None else None
        if t is Let:
            rule = self._let(c)
        elif t is If:
            rule = self._if(c)
        elif t is Return:
            rule = self._return(c)
        elif c is PRINT:
            rule = self._print()
        else:
            rule = self._app(c)
        self.steps += 1
        self.stats.rules[rule] += 1
        if self.trace is not None:
            self.trace.write(f"{rule}\t{where}\t{len(self.stack)}\t{len(self.cells)}\n")
        return rule

    def label(self, c) -> str:
        if c is PRINT:
            return "print"
        if type(c) is If or type(c) is Return:
            return f"psi{c.psi}"
        if type(c) is Let:
            return f"pi{c.pi}"
        return f"app@pi{self.cur_pi}" if self.cur_pi is not None else "app"

    def _let(self, e: Let) -> str:
        self._before_let(e)
        fvs = self._fvs.get(e.pi)
        if fvs is None:
            fvs = self._fvs[e.pi] = distinct_free_vars(e.rhs)
        env = self.env
        cell = Cell(CLO, app=e.rhs, env={v: env[v] for v in fvs}, pi=e.pi)
        if self.tables is not None and self.policy.mode == "lgc":
            cell.desc = self.tables.closure.get(e.pi, {})
        self._on_closure(cell, e)
        env[e.var] = self._alloc(cell)
        self.control = e.body
        return "let"

    def _if(self, e: If) -> str:
        r = self.env[e.cond]
        cell = self.deref(r, e.cond)
        if cell.tag == CLO:
            return self._force(r, cell, e, "if-clo")
        if cell.tag != NUM:
            raise MachineError(f"if condition {e.cond} is not a number")
        taken = cell.a != 0
        branch = e.then if taken else e.else_
        self.control = branch
        self._after_if(e, taken, branch)
        return "if-true" if taken else "if-false"

    def _return(self, e: Return) -> str:
        r = self.env[e.var]
        cell = self.deref(r, e.var)
        if cell.tag == CLO:
            return self._force(r, cell, e, "return-clo")
        self._deliver(cell)
        return "return-whnf"

    def _app(self, s) -> str:
        t = type(s)
        env = self.env
        if t is Const:
            self._deliver(Cell(NIL) if s.value is None else Cell(NUM, s.value))
            return "const"
        if t is Cons:
            self._deliver(Cell(PAIR, env[s.x], env[s.y]))
            return "cons"
        if t is Car or t is Cdr:
            name = "car" if t is Car else "cdr"
            r = env[s.x]
            cell = self.deref(r, s.x)
            if cell.tag == CLO:
                return self._force(r, cell, s, f"{name}-clo")
            if cell.tag != PAIR:
                raise MachineError(f"{name} of a non-pair ({s.x})")
            fr = cell.a if t is Car else cell.b
            field_cell = self.deref(fr, s.x, "0" if t is Car else "1")
            if field_cell.tag == CLO:
                return self._force(fr, field_cell, s, f"{name}-1-clo")
            self._deliver(field_cell)
            return f"{name}-select"
        if t is NullQ:
            r = env[s.x]
            cell = self.deref(r, s.x)
            if cell.tag == CLO:
                return self._force(r, cell, s, "null-clo")
            if cell.tag == NIL:
                self._deliver(Cell(NUM, 1))
            elif cell.tag == PAIR:
                self._deliver(Cell(NUM, 0))
            else:
                raise MachineError(f"null? of a non-list ({s.x})")
            return "null-select"
        if t is Prim:
            vals = []
            for i, x in enumerate((s.x, s.y), 1):
                if type(x) is int:
                    vals.append(x)
                    continue
                r = env[x]
                cell = self.deref(r, x)
                if cell.tag == CLO:
                    return self._force(r, cell, s, f"prim-{i}-clo")
                if cell.tag != NUM:
                    raise MachineError(f"operand {x} of {s.op} is not a number")
                vals.append(cell.a)
            self._deliver(Cell(NUM, arith(s.op, vals[0], vals[1])))
            return "prim"
        if t is Call:
            fn = self.program.fn(s.fn)
            self.env = {y: env[x] for y, x in zip(fn.params, s.args)}
            self.control = fn.body
            self.cur_desc = self.cur_pi = None
            self._at_entry(fn)
            return "funcall"
        raise MachineError(f"cannot evaluate {s!r}")

    # -- the printer ------------------------------------------------------

    def _print(self) -> str:
        ps = self.print_stack
        if not ps:
            self.halted = True
            return "halt"
        kind, r = ps.pop()
        if kind == "text":
            self.out.append(r)
            return "print"
        cell = self.deref(r, "ans")
        if cell.tag == CLO:
            ps.append((kind, r))
            return self._force(r, cell, PRINT, "print-clo")
        if kind == "val":
            if cell.tag == PAIR:
                ps.append(("tail", cell.b))
                ps.append(("val", cell.a))
                self.out.append("(")
            else:
                self.out.append(self._atom(cell))
        else:
            if cell.tag == NIL:
                self.out.append(")")
            elif cell.tag == PAIR:
                ps.append(("tail", cell.b))
                ps.append(("val", cell.a))
                self.out.append(" ")
            else:
                self.out.append(" . " + self._atom(cell) + ")")
        return "print"

    @staticmethod
    def _atom(cell: Cell) -> str:
        if cell.tag == NUM:
            return str(cell.a)
        if cell.tag == NIL:
            return "nil"
        raise MachineError(f"cannot print a {cell!r}")

    # -- collection points ---------------------------------------------------

    def _need_gc(self, need: int) -> bool:
        return self.capacity is not None and self.capacity - len(self.cells) < need

    def _at_entry(self, fn) -> None:
        if self._stop_at is not None and self._stop_at[0] == fn.name:
            self._stop_at[1] -= 1
            if self._stop_at[1] == 0:
                self._stop_at = None
                self.paused_in = fn
                return
        need = self._lets[fn.name]
        if self._need_gc(need):
            states = None
            if self.policy.mode == "lgc":
                states = {x: self.tables.entry[(fn.name, x)] for x in fn.params}
            self.collect(states, need)

    def _after_if(self, e: If, taken: bool, branch) -> None:
        if self.policy.mode == "lgc":
            refine_closure_liveness(self, e.psi, taken)
        need = let_count(branch)
        if self._need_gc(need):
            states = None
            if self.policy.mode == "lgc":
                tag = "then" if taken else "else"
                states = {x: self.tables.branch[(e.psi, tag, x)] for x in self.env}
            self.collect(states, need)

    def collect(self, states: dict[str, int] | None = None, need: int = 0, mode: str | None = None):
        mode = mode or self.policy.mode
        if mode == "none":
            raise OutOfMemory(f"heap of {self.capacity} cells exhausted and collection is disabled")
        return collect(self, mode, states, need)

    # -- driving ----------------------------------------------------------

    def run_to_entry(self, fn: str, nth: int = 1) -> bool:
        """Run until the ``nth`` entry into ``fn``; False if the program ends first."""
        self._stop_at = [fn, nth]
        self.paused_in = None
        while not self.halted and self.paused_in is None:
            self.step()
        self._stop_at = None
        return self.paused_in is not None

    def collect_at_entry(self, mode: str) -> GcEvent:
        """Force a collection right where ``run_to_entry`` stopped."""
        fn = self.paused_in
        if fn is None:
            raise MachineError("the machine is not paused at a function entry")
        states = None
        if mode == "lgc":
            states = {x: self.tables.entry[(fn.name, x)] for x in fn.params}
        return collect(self, mode, states)

    def run(self, max_steps: int | None = None) -> Result:
        t0 = time.perf_counter()
        step = self.step
        while not self.halted:
            step()
            if max_steps is not None and self.steps >= max_steps:
                raise MachineError(f"step limit {max_steps} reached")
        self.stats.steps = self.steps
        self.stats.allocations = self.alloc_count
        self.stats.gc.total_time = time.perf_counter() - t0
        return Result("".join(self.out), self.stats)

    @property
    def output(self) -> str:
        return "".join(self.out)


def run(program: Program, gc: GcPolicy | str = "none", heap_cells: int | None = None,
        tables: GcTables | None = None, **kw) -> Result:
    """Evaluate ``program`` and print the value of ``main`` in full."""
    return Machine(program, gc, heap_cells, tables, **kw).run()


def init_state(program: Program) -> Machine:
    return Machine(program)
