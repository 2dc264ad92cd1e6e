"""Executable soundness oracle: collect before every let, poison what the analysis calls dead.

Each control, frame and closure carries a concrete demand, a regular set
of forward access paths kept as a DFA.  Before every let the oracle
computes which cells are witnessed by some live access path from some
environment (the current one, every frame's, and that of every witnessed
closure) and poisons the rest.  Dereferencing a poisoned cell is a *bang*:
the analysis called something dead that the program still needed.

Poisoning is implemented with epochs: a cell is valid only while its
``mf`` field equals the current epoch, and each collection advances the
epoch of the witnessed, still valid cells.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from .analysis import TAIL, Analysis, LivenessGrammar, analyze, ref_app
from .automata import Compiler, Dfa, LivenessTable, Nfa, all_dfa, empty_dfa, forward_dfa
from .heap import CLO, PAIR, Cell
from .machine import PRINT, Machine
from .syntax import If, Let, Program, Return

ALL = LivenessTable.ALL


class Bang(Exception):
    """A poisoned reference was dereferenced."""

    def __init__(self, msg: str, trace: dict):
        super().__init__(msg)
        self.trace = trace


class DemandError(AssertionError):
    """The demand on the current control became null, which the analysis rules exclude."""


class Demands:
    """Interned demand automata; a demand is an index into ``self.dfas``."""

    def __init__(self, compiler: Compiler):
        self.compiler = compiler
        self.dfas: list[Dfa] = []
        self.null: list[bool] = []
        self._ids: dict[tuple, int] = {}
        self._concat: dict[tuple, int] = {}
        self._prefix: dict[tuple, int] = {}
        self._union: dict[tuple, int] = {}
        self.EMPTY = self.intern(empty_dfa())
        self.ALL = self.intern(all_dfa())
        self.table = LivenessTable()
        self._state: dict[int, int] = {}

    def intern(self, d: Dfa) -> int:
        key = d.key()
        i = self._ids.get(key)
        if i is None:
            i = self._ids[key] = len(self.dfas)
            self.dfas.append(d)
            self.null.append(d.is_empty())
        return i

    def state(self, i: int) -> int:
        """Start of demand ``i`` in the merged prefix-closed table (0 when null)."""
        q = self._state.get(i)
        if q is None:
            q = self._state[i] = self.table.add(self.dfas[i])
        return q

    def is_null(self, i: int) -> bool:
        return self.null[i]

    def prepend(self, sym: str, i: int) -> int:
        """``{eps} U sym.sigma`` (null stays null)."""
        key = (sym, i)
        if key not in self._prefix:
            if self.is_null(i):
                self._prefix[key] = self.EMPTY
            else:
                n = Nfa()
                n.start = n.new_state()
                mid, fin = n.new_state(), n.new_state()
                n.finals = {n.start, fin}
                n.add(n.start, sym, mid)
                n.embed(self.dfas[i], mid, fin)
                self._prefix[key] = self.intern(forward_dfa(n))
        return self._prefix[key]

    def two_of(self, i: int) -> int:
        """``2 sigma``: the empty path if sigma is non-null, else null."""
        if self.is_null(i):
            return self.EMPTY
        return self.intern(Dfa(("0", "1"), ((1, 1), (1, 1)), frozenset({0})))

    def union(self, i: int, j: int) -> int:
        if i == j or self.is_null(j):
            return i
        if self.is_null(i):
            return j
        key = (min(i, j), max(i, j))
        r = self._union.get(key)
        if r is None:
            n = Nfa()
            n.start = n.new_state()
            fin = n.new_state()
            n.finals = {fin}
            n.embed(self.dfas[i], n.start, fin)
            n.embed(self.dfas[j], n.start, fin)
            r = self._union[key] = self.intern(forward_dfa(n))
        return r

    def concat(self, seqs: frozenset, i: int) -> int:
        """The concrete set ``seqs . sigma``, approximated exactly like the collector's automata."""
        if not seqs or self.is_null(i):
            return self.EMPTY
        key = (seqs, i)
        r = self._concat.get(key)
        if r is None:
            r = self._concat[key] = self.intern(self.compiler.forward_for(seqs, tail=self.dfas[i]))
        return r


@dataclass
class CheckReport:
    ok: bool
    output: str
    steps: int
    collections: int
    poisoned: int
    bang: dict | None = None


class MinefieldMachine(Machine):
    """The machine with demands threaded through and a poisoning collection before every let."""

    def __init__(self, program: Program, analysis: Analysis | None = None,
                 grammar: LivenessGrammar | None = None, *, poison: bool = True,
                 history: int = 40, **kw):
        self.analysis = analysis or analyze(program)
        self.demands = Demands(Compiler(grammar or self.analysis.grammar))
        self.poison = poison
        self.epoch = 0
        self.epoch_step = [0]
        self.mf_collections = 0
        self.poisoned = 0
        self.history: deque = deque(maxlen=history)
        self.demand = None
        self._at = {}
        for rec in self.analysis.body_live.values():
            self._at.update(rec.at)
        self._let_demand = {}
        for rec in self.analysis.body_live.values():
            self._let_demand.update(rec.let_demand)
        self._app_live: dict[int, dict] = {}
        self._clo_roots: dict[int, tuple] = {}
        super().__init__(program, "none", None, **kw)

    def reset(self) -> None:
        self.epoch = 0
        self.demand = self.demands.ALL
        super().reset()
        self.stack[0].demand = self.demands.ALL

    # -- demand threading -------------------------------------------------

    def _force(self, ref, cell, resume, rule):
        d = self.demands
        sigma = self.demand
        if rule == "car-clo":
            new = d.prepend("0", sigma)
        elif rule == "cdr-clo":
            new = d.prepend("1", sigma)
        elif rule in ("if-clo", "null-clo", "prim-1-clo", "prim-2-clo"):
            new = d.two_of(sigma)
        elif rule == "print-clo":
            new = d.ALL
        else:  # car-1-clo, cdr-1-clo, return-clo
            new = sigma
        # A shared thunk is evaluated once for every context that will ever
        # read it, so its body runs under everything its let promised too.
        if cell.sigma is not None:
            new = d.union(new, cell.sigma)
        out = super()._force(ref, cell, resume, rule)
        self.demand = new
        return out

    def _push(self, ref, resume, rule):
        super()._push(ref, resume, rule)
        self.stack[-1].demand = self.demand

    def _pop(self):
        f = super()._pop()
        self.demand = f.demand
        return f

    def _on_closure(self, cell: Cell, e: Let) -> None:
        cell.sigma = self.demands.concat(self._let_demand[e.pi], self.demand)

    def _alloc(self, cell: Cell) -> int:
        cell.mf = self.epoch
        return super()._alloc(cell)

    def deref(self, ref, var="?", path=""):
        cell = super().deref(ref, var, path)
        if cell.mf != self.epoch:
            where = f"{var}.{path}" if path else var
            raise Bang(f"dereferenced poisoned cell via {where}", {
                "rules": list(self.history),
                "step": self.steps,
                "poisoned_at_step": self.epoch_step[cell.mf + 1] if cell.mf + 1 < len(self.epoch_step) else None,
                "access_path": where,
                "cell": cell.cid,
            })
        return cell

    def step(self) -> str:
        if self.demands.null[self.demand]:
            raise DemandError(f"null demand at step {self.steps} on {self.label(self.control)}")
        rule = super().step()
        self.history.append(rule)
        return rule

    # -- the poisoning collection -----------------------------------------

    def _app_env(self, app) -> dict:
        k = id(app)
        r = self._app_live.get(k)
        if r is None:
            r = self._app_live[k] = (app, {v: s for v, s in ref_app(app, TAIL).items()})
        return r[1]

    def _before_let(self, e: Let) -> None:
        if self.poison:
            self.mf_gc(e)

    def _roots(self, env: dict, live: dict, sigma: int) -> list[tuple[int, int]]:
        d = self.demands
        out = []
        for v, r in env.items():
            s = live.get(v)
            if s:
                q = d.state(d.concat(s, sigma))
                if q:
                    out.append((r, q))
        return out

    def _frame_roots(self, f) -> list[tuple[int, int]]:
        if f.roots is None:
            if f.resume is PRINT:
                f.roots = [(r, ALL) for r in f.env.values()]
            elif type(f.resume) in (If, Return, Let):
                f.roots = self._roots(f.env, self._at[f.resume.pi], f.demand)
            else:
                f.roots = self._roots(f.env, self._app_env(f.resume), f.demand)
        return f.roots

    def _closure_roots(self, r: int, cell: Cell) -> list[tuple[int, int]]:
        hit = self._clo_roots.get(r)
        if hit is None or hit[0] is not cell.env:
            hit = self._clo_roots[r] = (cell.env, self._roots(cell.env, self._app_env(cell.app), cell.sigma))
        return hit[1]

    def witnessed(self, e) -> set[int]:
        """References witnessed by a live forward path from some environment."""
        table = self.demands.table
        next0, next1 = table.next0, table.next1
        cells, epoch = self.cells, self.epoch
        seen: set = set()
        wit: set[int] = set()
        clo_seen: set[int] = set()
        work = self._roots(self.env, self._at[e.pi], self.demand)
        for f in self.stack:
            work.extend(self._frame_roots(f))
            # the cell awaiting the update is kept, but nothing is read through it
            if cells[f.update].mf == epoch:
                wit.add(f.update)
        for kind, r in self.print_stack:
            if kind != "text":
                work.append((r, ALL))

        pop, push, extend = work.pop, work.append, work.extend
        while work:
            item = pop()
            if item in seen:
                continue
            seen.add(item)
            r, q = item
            cell = cells[r]
            if cell.mf != epoch:
                continue  # already poison: nothing is reachable through it
            wit.add(r)
            tag = cell.tag
            if tag == PAIR:
                q0, q1 = next0[q], next1[q]
                if q0:
                    push((cell.a, q0))
                if q1:
                    push((cell.b, q1))
            elif tag == CLO and r not in clo_seen:
                clo_seen.add(r)
                extend(self._closure_roots(r, cell))
        return wit

    def mf_gc(self, e) -> int:
        """Poison every cell not witnessed before the let ``e``; returns how many were poisoned."""
        wit = self.witnessed(e)
        new = self.epoch + 1
        cells = self.cells
        for r in wit:
            cells[r].mf = new
        self.epoch = new
        self.epoch_step.append(self.steps)
        self.mf_collections += 1
        newly = len(cells) - len(wit) - self.poisoned
        self.poisoned = len(cells) - len(wit)
        return newly


def check(program: Program, analysis: Analysis | None = None, grammar: LivenessGrammar | None = None,
          *, poison: bool = True, max_steps: int | None = None) -> CheckReport:
    """Run the oracle; ``ok`` is False iff a bang occurred."""
    m = MinefieldMachine(program, analysis, grammar, poison=poison)
    try:
        res = m.run(max_steps)
    except Bang as b:
        return CheckReport(False, m.output, m.steps, m.mf_collections, m.poisoned, b.trace)
    return CheckReport(True, res.output, res.stats.steps, m.mf_collections, m.poisoned)


def mutate(g: LivenessGrammar, lhs: str, rhs: tuple) -> LivenessGrammar:
    """A copy of ``g`` without the production ``lhs -> rhs``."""
    out = g.copy()
    alts = out.prods.get(lhs, [])
    if tuple(rhs) not in alts:
        raise KeyError(f"no production {lhs} -> {' '.join(rhs)}")
    out.prods[lhs] = [a for a in alts if a != tuple(rhs)]
    return out
