"""From liveness grammars to deterministic liveness automata.

The pipeline for a root nonterminal is

1. regular approximation of the grammar (strongly regular form),
2. an NFA over ``0 1 0bar 1bar 2``,
3. cancellation of ``0bar 0`` / ``1bar 1`` pairs by epsilon bypasses,
   after which barred edges are dropped,
4. resolution of ``2`` edges (their source becomes accepting when the
   edge leads somewhere accepting), after which they are dropped,
5. subset construction over ``0 1`` and minimization.

Every step after (1) depends only on the language of the automaton, so
``Compiler`` replaces each nonterminal by its minimal DFA over the full
alphabet and splices those, which keeps automata small and makes the
results cacheable.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable

from .analysis import BAR0, BAR1, FORWARD, ONE, TERMINALS, TWO, ZERO, LivenessGrammar, is_terminal

EPS = None


class Nfa:
    """Mutable NFA; states are integers, a label of None is an epsilon edge."""

    def __init__(self):
        self.out: list[set[tuple[str | None, int]]] = []
        self.start = 0
        self.finals: set[int] = set()

    def new_state(self) -> int:
        self.out.append(set())
        return len(self.out) - 1

    def add(self, src: int, label: str | None, dst: int) -> None:
        self.out[src].add((label, dst))

    @property
    def size(self) -> int:
        return len(self.out)

    def labels(self) -> set:
        return {lab for edges in self.out for lab, _ in edges}

    def copy(self) -> "Nfa":
        n = Nfa()
        n.out = [set(e) for e in self.out]
        n.start, n.finals = self.start, set(self.finals)
        return n

    def closure(self, states: Iterable[int]) -> frozenset[int]:
        seen = set(states)
        stack = list(seen)
        while stack:
            q = stack.pop()
            for lab, r in self.out[q]:
                if lab is EPS and r not in seen:
                    seen.add(r)
                    stack.append(r)
        return frozenset(seen)

    def accepts(self, word: Iterable[str]) -> bool:
        cur = self.closure([self.start])
        for sym in word:
            cur = self.closure(r for q in cur for lab, r in self.out[q] if lab == sym)
            if not cur:
                return False
        return bool(cur & self.finals)

    def embed(self, d: "Dfa", entry: int, exit_: int) -> bool:
        """Splice a copy of ``d``'s useful part between ``entry`` and ``exit_``."""
        useful = d.useful
        if d.start not in useful:
            return False
        ids = {q: self.new_state() for q in sorted(useful)}
        for q in useful:
            for sym, r in zip(d.alphabet, d.delta[q]):
                if r in useful:
                    self.add(ids[q], sym, ids[r])
            if q in d.finals:
                self.add(ids[q], EPS, exit_)
        self.add(entry, EPS, ids[d.start])
        return True

    def to_dot(self, name: str = "nfa") -> str:
        lines = [f'digraph "{name}" {{', "  rankdir=LR;"]
        for q in range(self.size):
            shape = "doublecircle" if q in self.finals else "circle"
            lines.append(f"  {q} [shape={shape}];")
        lines.append(f'  start [shape=point]; start -> {self.start};')
        for q, edges in enumerate(self.out):
            for lab, r in sorted(edges, key=lambda e: (str(e[0]), e[1])):
                lines.append(f'  {q} -> {r} [label="{"eps" if lab is EPS else lab}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class Dfa:
    """Complete DFA; ``delta[q][k]`` is the successor of ``q`` on ``alphabet[k]``."""

    alphabet: tuple[str, ...]
    delta: tuple[tuple[int, ...], ...]
    finals: frozenset[int]
    start: int = 0

    @property
    def size(self) -> int:
        return len(self.delta)

    def next(self, q: int, sym: str) -> int:
        return self.delta[q][self.alphabet.index(sym)]

    def accepts(self, word: Iterable[str]) -> bool:
        q = self.start
        for sym in word:
            q = self.next(q, sym)
        return q in self.finals

    @cached_property
    def live(self) -> frozenset[int]:
        """States from which an accepting state is reachable (including themselves)."""
        back: dict[int, list[int]] = {}
        for q, row in enumerate(self.delta):
            for r in row:
                back.setdefault(r, []).append(q)
        seen = set(self.finals)
        stack = list(seen)
        while stack:
            q = stack.pop()
            for p in back.get(q, ()):
                if p not in seen:
                    seen.add(p)
                    stack.append(p)
        return frozenset(seen)

    @cached_property
    def useful(self) -> frozenset[int]:
        reach = {self.start}
        stack = [self.start]
        while stack:
            q = stack.pop()
            for r in self.delta[q]:
                if r not in reach:
                    reach.add(r)
                    stack.append(r)
        return frozenset(reach & self.live)

    def is_live(self, q: int) -> bool:
        return q in self.live

    def is_empty(self) -> bool:
        return self.start not in self.live

    def key(self) -> tuple:
        return (self.alphabet, self.delta, tuple(sorted(self.finals)), self.start)

    def prefix_closed(self) -> "Dfa":
        """Minimal DFA accepting every prefix of an accepted word."""
        return minimize(Dfa(self.alphabet, self.delta, self.live, self.start))

    def transitions(self) -> int:
        """Transitions that do not lead into a dead state."""
        return sum(1 for row in self.delta for r in row if r in self.live)

    def as_nfa(self) -> Nfa:
        n = Nfa()
        for _ in range(self.size):
            n.new_state()
        for q, row in enumerate(self.delta):
            for sym, r in zip(self.alphabet, row):
                n.add(q, sym, r)
        n.start, n.finals = self.start, set(self.finals)
        return n

    def to_dot(self, name: str = "dfa") -> str:
        lines = [f'digraph "{name}" {{', "  rankdir=LR;"]
        for q in range(self.size):
            shape = "doublecircle" if q in self.finals else "circle"
            style = "" if q in self.live else ", style=dashed"
            lines.append(f"  {q} [shape={shape}{style}];")
        lines.append(f"  start [shape=point]; start -> {self.start};")
        for q, row in enumerate(self.delta):
            for sym, r in zip(self.alphabet, row):
                if r in self.live:
                    lines.append(f'  {q} -> {r} [label="{sym}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"

    def serialize(self) -> bytes:
        """Versioned binary form: header, sizes, transition table, finals bitmap."""
        n, k = self.size, len(self.alphabet)
        head = struct.pack("<4sHIIH", b"LDFA", 1, n, self.start, k)
        alpha = b"".join(struct.pack("<B", len(s)) + s.encode() for s in self.alphabet)
        table = struct.pack(f"<{n * k}I", *(r for row in self.delta for r in row))
        bitmap = bytearray((n + 7) // 8)
        for q in self.finals:
            bitmap[q // 8] |= 1 << (q % 8)
        return head + alpha + table + bytes(bitmap)

    @classmethod
    def deserialize(cls, data: bytes) -> "Dfa":
        magic, version, n, start, k = struct.unpack_from("<4sHIIH", data)
        if magic != b"LDFA" or version != 1:
            raise ValueError("not a version-1 liveness automaton")
        pos = struct.calcsize("<4sHIIH")
        alphabet = []
        for _ in range(k):
            ln = data[pos]
            alphabet.append(data[pos + 1:pos + 1 + ln].decode())
            pos += 1 + ln
        flat = struct.unpack_from(f"<{n * k}I", data, pos)
        pos += 4 * n * k
        finals = frozenset(q for q in range(n) if data[pos + q // 8] >> (q % 8) & 1)
        delta = tuple(tuple(flat[q * k:(q + 1) * k]) for q in range(n))
        return cls(tuple(alphabet), delta, finals, start)


# ---------------------------------------------------------------------------
# determinization and minimization


def determinize(n: Nfa, alphabet: tuple[str, ...] = FORWARD, start: int | None = None) -> Dfa:
    """Subset construction (epsilon-closed), restricted to ``alphabet``."""
    first = n.closure([n.start if start is None else start])
    index = {first: 0}
    order = [first]
    delta = []
    i = 0
    while i < len(order):
        cur = order[i]
        row = []
        for sym in alphabet:
            nxt = n.closure(r for q in cur for lab, r in n.out[q] if lab == sym)
            if nxt not in index:
                index[nxt] = len(order)
                order.append(nxt)
            row.append(index[nxt])
        delta.append(tuple(row))
        i += 1
    finals = frozenset(i for i, s in enumerate(order) if s & n.finals)
    return minimize(Dfa(tuple(alphabet), tuple(delta), finals, 0))


def minimize(d: Dfa) -> Dfa:
    """Moore partition refinement followed by canonical breadth-first renumbering."""
    block = [1 if q in d.finals else 0 for q in range(d.size)]
    while True:
        sig = {}
        new = []
        for q in range(d.size):
            s = (block[q], tuple(block[r] for r in d.delta[q]))
            new.append(sig.setdefault(s, len(sig)))
        if len(sig) == len(set(block)):
            block = new
            break
        block = new
    # canonical numbering: breadth first from the start block
    start = block[d.start]
    rep = {}
    for q in range(d.size):
        rep.setdefault(block[q], q)
    order = {start: 0}
    queue = [start]
    for b in queue:
        for r in d.delta[rep[b]]:
            if block[r] not in order:
                order[block[r]] = len(order)
                queue.append(block[r])
    delta = [None] * len(order)
    finals = set()
    for b, i in order.items():
        q = rep[b]
        delta[i] = tuple(order[block[r]] for r in d.delta[q])
        if q in d.finals:
            finals.add(i)
    return Dfa(d.alphabet, tuple(delta), frozenset(finals), 0)


# ---------------------------------------------------------------------------
# grammar approximation


def sccs(prods: dict[str, list[tuple]]) -> list[list[str]]:
    """Strongly connected components in reverse topological order (callees first)."""
    index, low, on, stack, out = {}, {}, set(), [], []
    counter = 0
    for root in prods:
        if root in index:
            continue
        work = [(root, 0)]
        while work:
            v, i = work.pop()
            if i == 0:
                index[v] = low[v] = counter
                counter += 1
                stack.append(v)
                on.add(v)
            succ = [s for rhs in prods.get(v, ()) for s in rhs if not is_terminal(s)]
            for j in range(i, len(succ)):
                w = succ[j]
                if w not in index:
                    work.append((v, j + 1))
                    work.append((w, 0))
                    break
                if w in on:
                    low[v] = min(low[v], index[w])
            else:
                if low[v] == index[v]:
                    comp = []
                    while True:
                        w = stack.pop()
                        on.discard(w)
                        comp.append(w)
                        if w == v:
                            break
                    out.append(sorted(comp))
                if work:
                    parent = work[-1][0]
                    low[parent] = min(low[parent], low[v])
    return out


def _recursive(comp: list[str], prods) -> bool:
    members = set(comp)
    return len(comp) > 1 or any(s in members for rhs in prods.get(comp[0], ()) for s in rhs)


def _right_linear(comp: list[str], prods) -> bool:
    members = set(comp)
    for a in comp:
        for rhs in prods.get(a, ()):
            if any(s in members for s in rhs[:-1]):
                return False
    return True


def regular_approximation(g: LivenessGrammar, root: str | None = None) -> LivenessGrammar:
    """Strongly regular over-approximation of ``g`` (restricted to ``root`` if given).

    Each recursive component that is not right-linear is rewritten: a rule
    ``A -> a0 B1 a1 ... Bm am`` becomes ``A -> a0 B1``, ``Bj' -> aj Bj+1``
    and ``Bm' -> am A'``, and every member gets ``A' -> eps``.
    """
    prods = g.prods
    if root is not None:
        keep, stack = {root}, [root]
        while stack:
            for rhs in prods.get(stack.pop(), ()):
                for s in rhs:
                    if not is_terminal(s) and s not in keep:
                        keep.add(s)
                        stack.append(s)
        prods = {k: v for k, v in prods.items() if k in keep}
    out = LivenessGrammar()
    out.roots = {r: nt for r, nt in g.roots.items() if nt in prods}
    for comp in sccs(prods):
        if not _recursive(comp, prods) or _right_linear(comp, prods):
            for a in comp:
                out.declare(a)
                for rhs in prods.get(a, ()):
                    out.add(a, rhs)
            continue
        members = set(comp)
        for a in comp:
            out.declare(a)
            out.add(a + "'", ())
        for a in comp:
            for rhs in prods.get(a, ()):
                cuts = [i for i, s in enumerate(rhs) if s in members]
                if not cuts:
                    out.add(a, rhs + (a + "'",))
                    continue
                out.add(a, rhs[:cuts[0] + 1])
                for j, i in enumerate(cuts):
                    end = cuts[j + 1] + 1 if j + 1 < len(cuts) else len(rhs)
                    tail = rhs[i + 1:end]
                    if j + 1 == len(cuts):
                        tail = tail + (a + "'",)
                    out.add(rhs[i] + "'", tail)
    return out


def is_strongly_regular(g: LivenessGrammar) -> bool:
    return all(not _recursive(c, g.prods) or _right_linear(c, g.prods) for c in sccs(g.prods))


def to_nfa(sr: LivenessGrammar, root: str) -> Nfa:
    """Direct NFA construction for a strongly regular grammar (sub-automata are cloned)."""
    comp_of = {}
    for comp in sccs(sr.prods):
        for a in comp:
            comp_of[a] = comp
    n = Nfa()
    n.start = n.new_state()
    final = n.new_state()
    n.finals = {final}

    def build(nt: str, entry: int, exit_: int):
        comp = comp_of.get(nt, [nt])
        members = set(comp)
        states = {a: n.new_state() for a in comp}
        for a in comp:
            for rhs in sr.prods.get(a, ()):
                cur = states[a]
                body, target = rhs, exit_
                if rhs and rhs[-1] in members:
                    body, target = rhs[:-1], states[rhs[-1]]
                for sym in body:
                    nxt = n.new_state()
                    if is_terminal(sym):
                        n.add(cur, sym, nxt)
                    elif sym in members:
                        raise ValueError(f"grammar is not strongly regular at {a}")
                    else:
                        build(sym, cur, nxt)
                    cur = nxt
                n.add(cur, EPS, target)
        n.add(entry, EPS, states[nt])

    build(root, n.start, final)
    return n


# ---------------------------------------------------------------------------
# the simplification steps


def simplify(n: Nfa, order: list | None = None) -> Nfa:
    """Bypass ``0bar eps* 0`` and ``1bar eps* 1`` until stable, then drop barred edges.

    ``order`` optionally permutes the states visited in each sweep (the
    fixed point does not depend on it).
    """
    n = n.copy()
    states = order if order is not None else list(range(n.size))
    changed = True
    while changed:
        changed = False
        for q in states:
            for lab, q1 in list(n.out[q]):
                if lab not in (BAR0, BAR1):
                    continue
                want = ZERO if lab == BAR0 else ONE
                for q2 in n.closure([q1]):
                    for lab2, q3 in list(n.out[q2]):
                        if lab2 == want and (EPS, q3) not in n.out[q]:
                            n.add(q, EPS, q3)
                            changed = True
    for q in range(n.size):
        n.out[q] = {(lab, r) for lab, r in n.out[q] if lab not in (BAR0, BAR1)}
    return n


def _reaches_final(n: Nfa) -> set[int]:
    back: dict[int, list[int]] = {}
    for q, edges in enumerate(n.out):
        for _, r in edges:
            back.setdefault(r, []).append(q)
    seen = set(n.finals)
    stack = list(seen)
    while stack:
        q = stack.pop()
        for p in back.get(q, ()):
            if p not in seen:
                seen.add(p)
                stack.append(p)
    return seen


def resolve_two_edges(n: Nfa) -> Nfa:
    """Mark the source of each ``2`` edge accepting if the edge can reach acceptance; drop them."""
    n = n.copy()
    reach = _reaches_final(n)
    for q, edges in enumerate(n.out):
        if any(lab == TWO and r in reach for lab, r in edges):
            n.finals.add(q)
    for q in range(n.size):
        n.out[q] = {(lab, r) for lab, r in n.out[q] if lab != TWO}
    return n


def forward_dfa(n: Nfa) -> Dfa:
    """Steps 3 to 5 of the pipeline on an NFA over the full alphabet."""
    return determinize(resolve_two_edges(simplify(n)), FORWARD)


def empty_dfa() -> Dfa:
    return Dfa(FORWARD, ((0, 0),), frozenset())


def all_dfa() -> Dfa:
    """Every forward path."""
    return Dfa(FORWARD, ((0, 0),), frozenset({0}))


def is_live(d: Dfa, state: int) -> bool:
    return d.is_live(state)


def next_state(d: Dfa, state: int, edge: int) -> int:
    return d.delta[state][edge]


# ---------------------------------------------------------------------------
# whole-grammar compilation


class Compiler:
    """Per-nonterminal minimal DFAs over the full alphabet, and forward DFAs for roots."""

    def __init__(self, g: LivenessGrammar):
        self.grammar = g
        self.sr = regular_approximation(g)
        self.comps = sccs(self.sr.prods)
        self.comp_of = {a: c for c in self.comps for a in c}
        self.full: dict[str, Dfa] = {}
        self._forward: dict[tuple, Dfa] = {}

    def full_dfa(self, nt: str) -> Dfa:
        if nt not in self.full:
            if nt not in self.comp_of:
                raise KeyError(f"undefined nonterminal {nt}")
            self._build(self.comp_of[nt])
        return self.full[nt]

    def _build(self, comp: list[str]) -> None:
        # collect every component this one depends on, then build them in
        # the callees-first order the SCC pass already produced
        need, stack = set(), [comp[0]]
        while stack:
            a = stack.pop()
            if a in need or a in self.full:
                continue
            for b in self.comp_of[a]:
                need.add(b)
                for rhs in self.sr.prods.get(b, ()):
                    stack.extend(s for s in rhs if not is_terminal(s))
        for c in self.comps:
            if c[0] in need and c[0] not in self.full:
                self._build_component(c)

    def _build_component(self, comp: list[str]) -> None:
        members = set(comp)
        n = Nfa()
        final = n.new_state()
        n.finals = {final}
        states = {a: n.new_state() for a in comp}
        for a in comp:
            for rhs in self.sr.prods.get(a, ()):
                body, target = rhs, final
                if rhs and rhs[-1] in members:
                    body, target = rhs[:-1], states[rhs[-1]]
                cur = n.new_state()
                start = cur
                ok = True
                for sym in body:
                    nxt = n.new_state()
                    if is_terminal(sym):
                        n.add(cur, sym, nxt)
                    elif not n.embed(self.full[sym], cur, nxt):
                        ok = False
                        break
                    cur = nxt
                if ok:
                    n.add(states[a], EPS, start)
                    n.add(cur, EPS, target)
        for a in comp:
            self.full[a] = determinize(n, TERMINALS, states[a])

    def forward(self, nt: str) -> Dfa:
        full = self.full_dfa(nt)
        key = full.key()
        if key not in self._forward:
            self._forward[key] = forward_dfa(full.as_nfa())
        return self._forward[key]

    def forward_for(self, seqs, suffix: tuple = (), tail: Dfa | None = None) -> Dfa:
        """Forward DFA for ``seqs . suffix . tail``; seqs is a set of symbol tuples."""
        n = Nfa()
        n.start = n.new_state()
        final = n.new_state()
        n.finals = {final}
        end = final
        if tail is not None:
            end = n.new_state()
            if not n.embed(tail, end, final):
                return empty_dfa()
        for t in seqs:
            cur = n.start
            ok = True
            for sym in tuple(t) + tuple(suffix):
                nxt = n.new_state()
                if is_terminal(sym):
                    n.add(cur, sym, nxt)
                elif not n.embed(self.full_dfa(sym), cur, nxt):
                    ok = False
                    break
                cur = nxt
            if ok:
                n.add(cur, EPS, end)
        return forward_dfa(n)


def pipeline(g: LivenessGrammar, root: str) -> Dfa:
    """Reference pipeline for one root, through the plain (cloning) NFA construction."""
    sr = regular_approximation(g, root)
    return forward_dfa(to_nfa(sr, root))


# ---------------------------------------------------------------------------
# the collector's flat state table


class LivenessTable:
    """All liveness automata merged into one table of prefix-closed states.

    State 0 is dead (no path is live) and state 1 accepts every path.
    """

    DEAD, ALL = 0, 1

    def __init__(self):
        self.next0 = [0, 1]
        self.next1 = [0, 1]
        self.live = [False, True]
        self._memo: dict[tuple, int] = {}

    def __len__(self) -> int:
        return len(self.live)

    def add(self, d: Dfa) -> int:
        """Install ``d`` (any DFA over 0/1) and return the table state of its start."""
        pc = d.prefix_closed()
        key = pc.key()
        if key in self._memo:
            return self._memo[key]
        ids = {}
        for q in range(pc.size):
            if q not in pc.finals:
                ids[q] = self.DEAD
            elif pc.delta[q] == (q, q):
                ids[q] = self.ALL
            else:
                ids[q] = len(self.live)
                self.next0.append(0)
                self.next1.append(0)
                self.live.append(True)
        for q in range(pc.size):
            i = ids[q]
            if i > self.ALL:
                self.next0[i] = ids[pc.delta[q][0]]
                self.next1[i] = ids[pc.delta[q][1]]
        self._memo[key] = ids[pc.start]
        return ids[pc.start]

    def accepts_path(self, state: int, path: Iterable[str]) -> bool:
        """Whether ``path`` (over 0/1) is live from ``state``."""
        for sym in path:
            if not self.live[state]:
                return False
            state = self.next0[state] if sym == ZERO else self.next1[state]
        return self.live[state]
