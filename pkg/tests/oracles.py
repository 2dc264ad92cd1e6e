"""Independent reference implementations used to cross-check the library."""

from __future__ import annotations

import math
from fractions import Fraction

ZERO, ONE, BAR0, BAR1, TWO = "0", "1", "0bar", "1bar", "2"
_CANCEL = {(BAR0, ZERO), (BAR1, ONE), (TWO, ZERO), (TWO, ONE)}
_STUCK = {(BAR0, ONE), (BAR1, ZERO)}


def join(u: tuple, v: tuple) -> tuple | None:
    """Normal form of ``u v`` for normal forms ``u`` and ``v``; None if it can never cancel."""
    i, j = len(u), 0
    while i and j < len(v):
        a, b = u[i - 1], v[j]
        if (a, b) in _CANCEL:
            if a == TWO:
                j += 1  # 2 absorbs a following selector
            else:
                i -= 1
                j += 1
        elif (a, b) in _STUCK:
            return None
        else:
            break
    return u[:i] + v[j:]


def normalize(word: tuple) -> tuple | None:
    out: tuple | None = ()
    for sym in word:
        out = join(out, (sym,))
        if out is None:
            return None
    return out


def finish(word: tuple) -> tuple | None:
    """Apply the end marker: trailing 2s vanish, trailing bars leave nothing."""
    w = list(word)
    while w and w[-1] == TWO:
        w.pop()
    if any(s in (BAR0, BAR1, TWO) for s in w):
        return None
    return tuple(w)


def _extend(acc: set, parts, bound: int) -> set:
    out = set()
    for u in acc:
        for v in parts:
            w = join(u, v)
            if w is not None and len(w) <= bound:
                out.add(w)
    return out


def bounded_languages(prods: dict, bound: int) -> dict:
    """Normal forms of length <= bound derivable from each nonterminal (least fixpoint).

    Semi-naive iteration: each round only combines words in which at least
    one nonterminal contributes a word first found in the previous round.
    """
    lang: dict[str, set] = {a: set() for a in prods}
    old: dict[str, set] = {a: set() for a in prods}
    delta: dict[str, set] = {a: set() for a in prods}
    for a, alts in prods.items():
        for rhs in alts:
            if not any(s in prods for s in rhs):
                w = normalize(tuple(rhs))
                if w is not None and len(w) <= bound:
                    delta[a].add(w)
    while any(delta.values()):
        for a in prods:
            lang[a] |= delta[a]
        fresh: dict[str, set] = {a: set() for a in prods}
        for a, alts in prods.items():
            for rhs in alts:
                for k, sym in enumerate(rhs):
                    if sym not in prods or not delta[sym]:
                        continue
                    acc = {()}
                    for i, s in enumerate(rhs):
                        if s not in prods:
                            parts = ((s,),)
                        elif i < k:
                            parts = old[s]
                        elif i == k:
                            parts = delta[s]
                        else:
                            parts = lang[s]
                        acc = _extend(acc, parts, bound)
                        if not acc:
                            break
                    fresh[a] |= acc
        for a in prods:
            old[a] = set(lang[a])
            delta[a] = fresh[a] - lang[a]
    return lang


def forward_strings(prods: dict, root: str, bound: int, max_len: int) -> set:
    """Forward paths of length <= max_len obtainable from bounded derivations of ``root``."""
    lang = bounded_languages(prods, bound)
    out = set()
    for w in lang.get(root, ()):
        f = finish(w)
        if f is not None and len(f) <= max_len:
            out.add(f)
    return out


# ---------------------------------------------------------------------------
# a direct lazy evaluator, written independently of the abstract machine


class _Thunk:
    __slots__ = ("fn", "value", "done")

    def __init__(self, fn):
        self.fn, self.done = fn, False

    def force(self):
        if not self.done:
            self.value, self.done, self.fn = self.fn(), True, None
        return self.value


def _ready(v) -> _Thunk:
    t = _Thunk(None)
    t.value, t.done = v, True
    return t


def _arith(op, a, b):
    if op == "+":
        r = a + b
    elif op == "-":
        r = a - b
    elif op == "*":
        r = a * b
    elif op == "/":
        if b == 0:
            raise ZeroDivisionError
        r = math.trunc(Fraction(a, b))
    elif op == "<":
        return int(a < b)
    else:
        return int(a == b)
    if not -(2**63) <= r < 2**63:
        raise OverflowError
    return r


def lazy_eval(program) -> str:
    """Print the value of main using Python closures as thunks."""
    from lazygc.syntax import Car, Cdr, Cons, Const, If, Let, NullQ, Prim

    def operand(x, env):
        return x if isinstance(x, int) else env[x].force()

    def app(s, env):
        if isinstance(s, Const):
            return s.value
        if isinstance(s, Cons):
            return (env[s.x], env[s.y])
        if isinstance(s, (Car, Cdr)):
            pair = env[s.x].force()
            if not isinstance(pair, tuple):
                raise TypeError("selector applied to a non-pair")
            return pair[0 if isinstance(s, Car) else 1].force()
        if isinstance(s, NullQ):
            return int(env[s.x].force() is None)
        if isinstance(s, Prim):
            return _arith(s.op, operand(s.x, env), operand(s.y, env))
        fn = program.fn(s.fn)
        return expr(fn.body, {p: env[a] for p, a in zip(fn.params, s.args)})

    def expr(e, env):
        while True:
            if isinstance(e, Let):
                env = {**env, e.var: _Thunk(lambda s=e.rhs, env=env: app(s, env))}
                e = e.body
            elif isinstance(e, If):
                e = e.then if env[e.cond].force() != 0 else e.else_
            else:
                return env[e.var].force()

    out = []

    def show(v, tail=False):
        if isinstance(v, tuple):
            out.append(" " if tail else "(")
            show(v[0].force())
            rest = v[1].force()
            if rest is None:
                out.append(")")
            elif isinstance(rest, tuple):
                show(rest, True)
            else:
                out.append(" . ")
                show(rest)
                out.append(")")
        else:
            out.append("nil" if v is None else str(v))

    show(expr(program.main.body, {}))
    return "".join(out)


def run_deep(fn, *args):
    """Call ``fn`` on a thread with a large stack, for deeply recursive oracles."""
    import sys
    import threading
    result = {}

    def target():
        try:
            result["value"] = fn(*args)
        except BaseException as e:  # re-raised in the caller
            result["error"] = e

    old = sys.getrecursionlimit()
    sys.setrecursionlimit(200000)
    threading.stack_size(512 * 1024 * 1024)
    try:
        t = threading.Thread(target=target)
        t.start()
        t.join()
    finally:
        threading.stack_size(0)
        sys.setrecursionlimit(old)
    if "error" in result:
        raise result["error"]
    return result["value"]
