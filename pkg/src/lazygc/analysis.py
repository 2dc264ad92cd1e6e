"""Symbolic liveness analysis producing a context-free liveness grammar.

Liveness and demand sets are kept as *sequence sets*: a frozenset of
tuples over the grammar alphabet, each tuple standing for ``tuple . tail``
where ``tail`` is the symbolic demand on the enclosing function body.
Terminals are ``0`` and ``1`` (car/cdr edges), ``0bar``/``1bar`` (their
inverses) and ``2`` (evaluate to WHNF); any other string is a nonterminal.

Nonterminal naming:

* ``D[f,i]``  demand transformer for the i-th parameter of ``f``
* ``Sig[f]``  summary demand on the body of ``f``
* ``L[x]``    liveness of stack variable ``x``
* ``C[x@p]``  liveness of the copy of ``x`` captured by the closure built at ``p``
* ``E[f:x]``  liveness of parameter ``x`` at the entry of ``f``
* ``B[q:then:x]`` / ``B[q:else:x]`` liveness of ``x`` once the if at ``q`` is decided
* ``V[q:x]``  liveness of ``x`` while the evaluation point ``q`` is forcing a closure
* ``C[x@p|q:then]`` the closure liveness narrowed by a decided if
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

from .syntax import (App, Call, Car, Cdr, Cons, Const, Expr, If, Let, NullQ, Prim, Program,
                     Return, distinct_free_vars, walk)

ZERO, ONE, BAR0, BAR1, TWO = "0", "1", "0bar", "1bar", "2"
TERMINALS = (ZERO, ONE, BAR0, BAR1, TWO)
FORWARD = (ZERO, ONE)

SeqSet = frozenset  # frozenset[tuple[str, ...]]
EMPTY: SeqSet = frozenset()
TAIL: SeqSet = frozenset({()})  # the symbolic demand itself


def is_terminal(sym: str) -> bool:
    return sym in TERMINALS


def _push(out: list[str], sym: str) -> bool:
    """Append ``sym`` applying the local rewriting rules; False means the string dies."""
    if out:
        last = out[-1]
        if last == BAR0:
            if sym == ZERO:
                out.pop()
                return True
            if sym in (ONE, TWO):
                return False
        elif last == BAR1:
            if sym == ONE:
                out.pop()
                return True
            if sym in (ZERO, TWO):
                return False
        elif last == TWO and sym in (ZERO, ONE, TWO):
            return True
    out.append(sym)
    return True


def concat(a: tuple, b: tuple) -> tuple | None:
    """Concatenate two symbol strings, normalizing at the junction (None if empty)."""
    out = list(a)
    for sym in b:
        if not _push(out, sym):
            return None
    return tuple(out)


def prefix(syms: tuple, d: SeqSet) -> SeqSet:
    """The sequence set ``syms . d``."""
    out = set()
    for t in d:
        r = concat(syms, t)
        if r is not None:
            out.add(r)
    return frozenset(out)


def normalize(seq: Iterable[str]) -> tuple | None:
    return concat((), tuple(seq))


def _union(env: dict, var: str, s: SeqSet) -> None:
    if s:
        env[var] = env.get(var, EMPTY) | s
    else:
        env.setdefault(var, EMPTY)


def demand_nt(fn: str, i: int) -> str:
    return f"D[{fn},{i}]"


def summary_nt(fn: str) -> str:
    return f"Sig[{fn}]"


# ---------------------------------------------------------------------------
# liveness rules


def ref_app(s: App, d: SeqSet) -> dict[str, SeqSet]:
    """Liveness generated for the operands of ``s`` by a demand ``d`` on it."""
    env: dict[str, SeqSet] = {}
    if not d or isinstance(s, Const):
        return {v: EMPTY for v in s.free_vars()}
    if isinstance(s, Cons):
        _union(env, s.x, prefix((BAR0,), d))
        _union(env, s.y, prefix((BAR1,), d))
    elif isinstance(s, Car):
        _union(env, s.x, prefix((TWO,), d) | prefix((ZERO,), d))
    elif isinstance(s, Cdr):
        _union(env, s.x, prefix((TWO,), d) | prefix((ONE,), d))
    elif isinstance(s, (Prim, NullQ)):
        for v in s.free_vars():
            _union(env, v, prefix((TWO,), d))
    elif isinstance(s, Call):
        for i, v in enumerate(s.args, 1):
            _union(env, v, prefix((demand_nt(s.fn, i),), d))
    return env


@dataclass
class LiveResult:
    """Outcome of ``live_expr``: stack-variable liveness plus side tables."""

    env: dict[str, SeqSet]
    closures: dict[tuple[str, int], SeqSet] = field(default_factory=dict)
    # liveness environment just before every expression node, keyed by pi
    at: dict[int, dict[str, SeqSet]] = field(default_factory=dict)
    # demand on the let-bound variable of every let, keyed by pi
    let_demand: dict[int, SeqSet] = field(default_factory=dict)


def live_expr(e: Expr, d: SeqSet, decided: dict[int, bool] | None = None,
              record: LiveResult | None = None) -> dict[str, SeqSet]:
    """Liveness environment of ``e`` under demand ``d``.

    ``decided`` maps the psi of an if to the branch known to be taken
    (True for then); such ifs contribute only that branch and no use of
    their condition.  ``record`` collects closure-variable liveness and
    per-node environments.
    """
    decided = decided or {}
    if isinstance(e, Return):
        env = {e.var: d}
    elif isinstance(e, If):
        if e.psi in decided:
            env = dict(live_expr(e.then if decided[e.psi] else e.else_, d, decided, record))
        else:
            env = dict(live_expr(e.then, d, decided, record))
            for v, s in live_expr(e.else_, d, decided, record).items():
                _union(env, v, s)
            _union(env, e.cond, prefix((TWO,), d))
    else:
        body = live_expr(e.body, d, decided, record)
        demand = body.get(e.var, EMPTY)
        refs = ref_app(e.rhs, demand)
        env = {v: s for v, s in body.items() if v != e.var}
        for v, s in refs.items():
            _union(env, v, s)
            if record is not None:
                record.closures[(v, e.pi)] = s
        if record is not None:
            record.let_demand[e.pi] = demand
    if record is not None and e.pi is not None:
        record.at[e.pi] = env
    return env


# ---------------------------------------------------------------------------
# grammar


@dataclass(frozen=True)
class Role:
    """What a root nonterminal stands for."""

    kind: str  # demand summary stack closure entry branch eval variant
    args: tuple

    def __str__(self) -> str:
        return " ".join([self.kind, *map(str, self.args)])

    @staticmethod
    def parse(text: str) -> "Role":
        kind, *rest = text.split()
        return Role(kind, tuple(int(a) if a.lstrip("-").isdigit() else a for a in rest))


class LivenessGrammar:
    """Productions ``NT -> symbols`` with an index of root nonterminals."""

    def __init__(self):
        self.prods: dict[str, list[tuple[str, ...]]] = {}
        self.roots: dict[Role, str] = {}

    def add(self, lhs: str, rhs: Iterable[str]) -> None:
        alts = self.prods.setdefault(lhs, [])
        rhs = tuple(rhs)
        if rhs not in alts:
            alts.append(rhs)

    def declare(self, lhs: str) -> None:
        self.prods.setdefault(lhs, [])

    def add_root(self, role: Role, nt: str, seqs: SeqSet, suffix: tuple) -> None:
        self.declare(nt)
        for t in sorted(seqs):
            r = concat(t, suffix)
            if r is not None:
                self.add(nt, r)
        self.roots[role] = nt

    def copy(self) -> "LivenessGrammar":
        g = LivenessGrammar()
        g.prods = {k: list(v) for k, v in self.prods.items()}
        g.roots = dict(self.roots)
        return g

    @property
    def nonterminals(self) -> list[str]:
        return list(self.prods)

    def production_count(self) -> int:
        return sum(len(v) for v in self.prods.values())

    def undefined(self) -> set[str]:
        used = {s for alts in self.prods.values() for rhs in alts for s in rhs if not is_terminal(s)}
        return used - set(self.prods)

    def root(self, kind: str, *args) -> str:
        return self.roots[Role(kind, tuple(args))]

    def to_text(self) -> str:
        lines = ["[productions]"]
        for lhs, alts in self.prods.items():
            for rhs in alts:
                lines.append(f"{lhs} -> {' '.join(rhs)}".rstrip())
        lines.append("[empty]")
        lines.extend(lhs for lhs, alts in self.prods.items() if not alts)
        lines.append("[roots]")
        for role, nt in self.roots.items():
            lines.append(f"{role} = {nt}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "LivenessGrammar":
        g = cls()
        section = None
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            if line in ("[productions]", "[empty]", "[roots]"):
                section = line
            elif section == "[empty]":
                g.declare(line)
            elif section == "[productions]":
                lhs, _, rhs = line.partition(" ->")
                g.add(lhs, rhs.split())
            elif section == "[roots]":
                role, _, nt = line.rpartition(" = ")
                g.roots[Role.parse(role)] = nt
        return g


# ---------------------------------------------------------------------------
# building the grammar


@dataclass
class Analysis:
    """Everything the collector and the oracle need from the analysis."""

    program: Program
    grammar: LivenessGrammar
    main_demand: str
    fn_of: dict[int, str]  # pi -> function
    node: dict[int, Expr]  # pi -> expression node
    body_live: dict[str, LiveResult]  # per function, under the symbolic tail
    scope: dict[int, tuple[str, ...]]  # pi -> variables in scope before the node

    def suffix(self, fn: str) -> tuple:
        if fn == "main" and self.main_demand == "whnf":
            return ()
        return (summary_nt(fn),)


def _scopes(p: Program) -> dict[int, tuple[str, ...]]:
    out: dict[int, tuple[str, ...]] = {}

    def go(e: Expr, env: tuple[str, ...]):
        out[e.pi] = env
        if isinstance(e, Let):
            go(e.body, env + (e.var,))
        elif isinstance(e, If):
            go(e.then, env)
            go(e.else_, env)

    for d in p.defs:
        go(d.body, d.params)
    return out


def build_grammar(p: Program, main_demand: str = "all") -> LivenessGrammar:
    """Demand transformers, summary demands and stack/closure liveness roots."""
    return _analysis_core(p, main_demand).grammar


def _analysis_core(p: Program, main_demand: str) -> Analysis:
    if main_demand not in ("all", "whnf"):
        raise ValueError(f"unknown main demand {main_demand!r}")
    g = LivenessGrammar()
    fn_of, node, body_live = {}, {}, {}
    for d in p.defs:
        rec = LiveResult({})
        rec.env = live_expr(d.body, TAIL, record=rec)
        body_live[d.name] = rec
        for n in walk(d.body):
            fn_of[n.pi] = d.name
            node[n.pi] = n
    an = Analysis(p, g, main_demand, fn_of, node, body_live, _scopes(p))

    for d in p.defs:
        for i, x in enumerate(d.params, 1):
            nt = demand_nt(d.name, i)
            g.declare(nt)
            for t in sorted(body_live[d.name].env.get(x, EMPTY)):
                g.add(nt, t)
            g.roots[Role("demand", (d.name, i))] = nt

    for d in p.defs:
        if d.name != "main" or main_demand == "all":
            g.declare(summary_nt(d.name))
    if main_demand == "all":
        for rhs in ((), (ZERO, summary_nt("main")), (ONE, summary_nt("main"))):
            g.add(summary_nt("main"), rhs)
    for d in p.defs:
        rec = body_live[d.name]
        for n in walk(d.body):
            if isinstance(n, Let) and isinstance(n.rhs, Call) and not (
                    n.rhs.fn == "main" and main_demand == "whnf"):
                for t in sorted(rec.let_demand[n.pi]):
                    r = concat(t, an.suffix(d.name))
                    if r is not None:
                        g.add(summary_nt(n.rhs.fn), r)
    for d in p.defs:
        if d.name != "main" or main_demand == "all":
            g.roots[Role("summary", (d.name,))] = summary_nt(d.name)

    for d in p.defs:
        rec, suf = body_live[d.name], an.suffix(d.name)
        for x in d.params:
            g.add_root(Role("stack", (x,)), f"L[{x}]", rec.env.get(x, EMPTY), suf)
        for n in walk(d.body):
            if isinstance(n, Let):
                g.add_root(Role("stack", (n.var,)), f"L[{n.var}]", rec.let_demand[n.pi], suf)
                for v in distinct_free_vars(n.rhs):
                    g.add_root(Role("closure", (v, n.pi)), f"C[{v}@{n.pi}]",
                               rec.closures.get((v, n.pi), EMPTY), suf)
    return an


def build_gc_point_envs(p: Program, g: LivenessGrammar, an: Analysis | None = None) -> LivenessGrammar:
    """Add roots for every variable at function entry, after every if and at every evaluation point."""
    an = an or _analysis_core(p, "all")
    for d in p.defs:
        suf = an.suffix(d.name)
        for i, x in enumerate(d.params, 1):
            nt = f"E[{d.name}:{x}]"
            g.add(nt, concat((demand_nt(d.name, i),), suf))
            g.roots[Role("entry", (d.name, x))] = nt
        at = an.body_live[d.name].at
        for n in walk(d.body):
            if isinstance(n, If):
                for branch, sub in (("then", n.then), ("else", n.else_)):
                    env = at[sub.pi]
                    for x in an.scope[n.pi]:
                        g.add_root(Role("branch", (n.psi, branch, x)), f"B[{n.psi}:{branch}:{x}]",
                                   env.get(x, EMPTY), suf)
            if isinstance(n, (If, Return)):
                env = at[n.pi]
                for x in an.scope[n.pi]:
                    g.add_root(Role("eval", (n.psi, x)), f"V[{n.psi}:{x}]", env.get(x, EMPTY), suf)
    return g


def _ifs_below(e: Expr, path: tuple = ()) -> Iterable[tuple[If, tuple]]:
    """Every if in ``e`` with the branch decisions leading to it."""
    if isinstance(e, Let):
        yield from _ifs_below(e.body, path)
    elif isinstance(e, If):
        yield e, path
        yield from _ifs_below(e.then, path + ((e.psi, True),))
        yield from _ifs_below(e.else_, path + ((e.psi, False),))


def variant_liveness(an: Analysis, let: Let, decided: dict[int, bool]) -> dict[str, SeqSet]:
    """Closure-variable liveness of the closure built at ``let`` once ``decided`` ifs are known."""
    demand = live_expr(let.body, TAIL, decided).get(let.var, EMPTY)
    return ref_app(let.rhs, demand)


def build_eval_point_variants(p: Program, g: LivenessGrammar,
                              an: Analysis | None = None) -> LivenessGrammar:
    """Add narrowed closure-liveness roots keyed by (closure point, decided if, branch)."""
    an = an or _analysis_core(p, "all")
    for d in p.defs:
        suf = an.suffix(d.name)
        for n in walk(d.body):
            if not isinstance(n, Let):
                continue
            fvs = distinct_free_vars(n.rhs)
            if not fvs:
                continue
            for iff, path in _ifs_below(n.body):
                for branch in (True, False):
                    decided = dict(path)
                    decided[iff.psi] = branch
                    refs = variant_liveness(an, n, decided)
                    tag = "then" if branch else "else"
                    for v in fvs:
                        g.add_root(Role("variant", (v, n.pi, iff.psi, tag)),
                                   f"C[{v}@{n.pi}|{iff.psi}:{tag}]", refs.get(v, EMPTY), suf)
    return g


def analyze(p: Program, main_demand: str = "all") -> Analysis:
    """Full analysis: grammar with every root the collector and the oracle use."""
    an = _analysis_core(p, main_demand)
    build_gc_point_envs(p, an.grammar, an)
    build_eval_point_variants(p, an.grammar, an)
    return an
