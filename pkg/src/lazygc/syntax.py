"""Abstract syntax, reader, renamer and labeler for the first-order lazy language.

Programs are written as s-expressions::

    (define (length l)
      (let (x (null? l))
        (if x
            (let (v 0) (return v))
            (let (u (cdr l))
              (let (y (length u))
                (let (z (+ 1 y))
                  (return z)))))))

Every application operand is a variable (ANF).  The only exception is an
integer literal used as an operand of an arithmetic primitive, which is an
immediate value and never touches the heap.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from typing import Iterator, Union

PRIM_OPS = ("+", "-", "*", "/", "<", "=")
RESERVED = {"define", "let", "if", "return", "cons", "car", "cdr", "null?", "nil", *PRIM_OPS}


class SyntaxError_(Exception):
    """Malformed program text, with a 1-based line/column."""

    def __init__(self, msg: str, pos: tuple[int, int] | None = None):
        self.pos = pos
        if pos is not None:
            msg = f"{pos[0]}:{pos[1]}: {msg}"
        super().__init__(msg)


class ProgramError(Exception):
    """Well-formed text that is not a valid program (arity, scoping, ...)."""


# ---------------------------------------------------------------------------
# applications


@dataclass(frozen=True)
class Const:
    value: int | None  # None is nil

    def free_vars(self) -> tuple[str, ...]:
        return ()


@dataclass(frozen=True)
class Cons:
    x: str
    y: str

    def free_vars(self) -> tuple[str, ...]:
        return (self.x, self.y)


@dataclass(frozen=True)
class Car:
    x: str

    def free_vars(self) -> tuple[str, ...]:
        return (self.x,)


@dataclass(frozen=True)
class Cdr:
    x: str

    def free_vars(self) -> tuple[str, ...]:
        return (self.x,)


@dataclass(frozen=True)
class NullQ:
    x: str

    def free_vars(self) -> tuple[str, ...]:
        return (self.x,)


@dataclass(frozen=True)
class Prim:
    op: str
    x: str | int
    y: str | int

    def free_vars(self) -> tuple[str, ...]:
        return tuple(v for v in (self.x, self.y) if isinstance(v, str))


@dataclass(frozen=True)
class Call:
    fn: str
    args: tuple[str, ...]

    def free_vars(self) -> tuple[str, ...]:
        return self.args


App = Union[Const, Cons, Car, Cdr, NullQ, Prim, Call]


def distinct_free_vars(s: App) -> tuple[str, ...]:
    """Free variables of ``s`` in first-occurrence order, without repeats."""
    return tuple(dict.fromkeys(s.free_vars()))


# ---------------------------------------------------------------------------
# expressions
#
# ``pi`` labels every expression node (program point); ``psi`` labels the
# evaluation points: the condition of an if and the variable of a return.


@dataclass(frozen=True)
class Let:
    var: str
    rhs: App
    body: "Expr"
    pi: int | None = None
    pos: tuple[int, int] | None = field(default=None, compare=False)


@dataclass(frozen=True)
class If:
    cond: str
    then: "Expr"
    else_: "Expr"
    pi: int | None = None
    psi: int | None = None
    pos: tuple[int, int] | None = field(default=None, compare=False)


@dataclass(frozen=True)
class Return:
    var: str
    pi: int | None = None
    psi: int | None = None
    pos: tuple[int, int] | None = field(default=None, compare=False)


Expr = Union[Let, If, Return]


@dataclass(frozen=True)
class FunDef:
    name: str
    params: tuple[str, ...]
    body: Expr
    pos: tuple[int, int] | None = field(default=None, compare=False)


@dataclass(frozen=True)
class Program:
    defs: tuple[FunDef, ...]

    def __post_init__(self):
        object.__setattr__(self, "_by_name", {d.name: d for d in self.defs})

    @property
    def main(self) -> FunDef:
        return self._by_name["main"]

    def fn(self, name: str) -> FunDef:
        return self._by_name[name]

    def __contains__(self, name: str) -> bool:
        return name in self._by_name


def walk(e: Expr) -> Iterator[Expr]:
    """Pre-order traversal of an expression tree."""
    stack = [e]
    while stack:
        node = stack.pop()
        yield node
        if isinstance(node, Let):
            stack.append(node.body)
        elif isinstance(node, If):
            stack.append(node.else_)
            stack.append(node.then)


def let_count(e: Expr) -> int:
    """Number of let nodes in ``e``; each one allocates exactly one cell."""
    return sum(1 for n in walk(e) if isinstance(n, Let))


# ---------------------------------------------------------------------------
# reader

_TOKEN = re.compile(r"\s+|;[^\n]*|\(|\)|[^\s();]+")


@dataclass
class _Atom:
    text: str
    pos: tuple[int, int]


@dataclass
class _List:
    items: list
    pos: tuple[int, int]


def _read(text: str) -> list[_List | _Atom]:
    line, col = 1, 1
    stack: list[_List] = [_List([], (1, 1))]
    i = 0
    while i < len(text):
        m = _TOKEN.match(text, i)
        tok = m.group(0)
        pos = (line, col)
        if tok == "(":
            stack.append(_List([], pos))
        elif tok == ")":
            if len(stack) == 1:
                raise SyntaxError_("unbalanced ')'", pos)
            done = stack.pop()
            stack[-1].items.append(done)
        elif not tok[0].isspace() and tok[0] != ";":
            stack[-1].items.append(_Atom(tok, pos))
        nl = tok.count("\n")
        if nl:
            line += nl
            col = len(tok) - tok.rfind("\n")
        else:
            col += len(tok)
        i = m.end()
    if len(stack) > 1:
        raise SyntaxError_("unclosed '('", stack[-1].pos)
    return stack[0].items


def _int(text: str) -> int | None:
    try:
        return int(text)
    except ValueError:
        return None


def _var(node, what: str) -> str:
    if not isinstance(node, _Atom):
        raise SyntaxError_(f"{what} must be a variable, not a compound expression (programs are in ANF)",
                           node.pos)
    if _int(node.text) is not None or node.text == "nil":
        raise SyntaxError_(f"{what} must be a variable, not the literal {node.text!r} "
                           "(bind it with let first)", node.pos)
    if node.text in RESERVED:
        raise SyntaxError_(f"{what} must be a variable, not the keyword {node.text!r}", node.pos)
    return node.text


def _app(node) -> App:
    if isinstance(node, _Atom):
        if node.text == "nil":
            return Const(None)
        n = _int(node.text)
        if n is None:
            raise SyntaxError_(f"let right-hand side must be an application or a constant, "
                               f"got variable {node.text!r}", node.pos)
        return Const(n)
    if not node.items or not isinstance(node.items[0], _Atom):
        raise SyntaxError_("malformed application", node.pos)
    head, args = node.items[0].text, node.items[1:]

    def arity(n):
        if len(args) != n:
            raise SyntaxError_(f"{head} expects {n} operand(s), got {len(args)}", node.pos)

    if head == "cons":
        arity(2)
        return Cons(_var(args[0], "operand of cons"), _var(args[1], "operand of cons"))
    if head in ("car", "cdr", "null?"):
        arity(1)
        cls = {"car": Car, "cdr": Cdr, "null?": NullQ}[head]
        return cls(_var(args[0], f"operand of {head}"))
    if head in PRIM_OPS:
        arity(2)
        ops = []
        for a in args:
            lit = _int(a.text) if isinstance(a, _Atom) else None
            ops.append(lit if lit is not None else _var(a, f"operand of {head}"))
        return Prim(head, ops[0], ops[1])
    if head in RESERVED:
        raise SyntaxError_(f"{head!r} cannot appear as an application", node.pos)
    return Call(head, tuple(_var(a, f"argument of {head}") for a in args))


def _expr(node) -> Expr:
    if not isinstance(node, _List) or not node.items or not isinstance(node.items[0], _Atom):
        raise SyntaxError_("expected (let ...), (if ...) or (return ...)", node.pos)
    head = node.items[0].text
    rest = node.items[1:]
    if head == "return":
        if len(rest) != 1:
            raise SyntaxError_("return expects one operand", node.pos)
        return Return(_var(rest[0], "operand of return"), pos=node.pos)
    if head == "if":
        if len(rest) != 3:
            raise SyntaxError_("if expects a condition and two branches", node.pos)
        return If(_var(rest[0], "condition of if"), _expr(rest[1]), _expr(rest[2]), pos=node.pos)
    if head == "let":
        if len(rest) != 2 or not isinstance(rest[0], _List) or len(rest[0].items) != 2:
            raise SyntaxError_("let expects (let (x s) e)", node.pos)
        binder, rhs = rest[0].items
        return Let(_var(binder, "let binder"), _app(rhs), _expr(rest[1]), pos=node.pos)
    raise SyntaxError_(f"expected let, if or return, got {head!r}", node.pos)


def _define(node) -> FunDef:
    if (not isinstance(node, _List) or len(node.items) != 3 or not isinstance(node.items[0], _Atom)
            or node.items[0].text != "define"):
        raise SyntaxError_("expected (define (f x ...) e)", node.pos)
    sig = node.items[1]
    if not isinstance(sig, _List) or not sig.items:
        raise SyntaxError_("expected a signature (f x ...)", sig.pos)
    name = sig.items[0]
    if not isinstance(name, _Atom) or name.text in RESERVED or _int(name.text) is not None:
        raise SyntaxError_("bad function name", name.pos)
    params = tuple(_var(p, "parameter") for p in sig.items[1:])
    if len(set(params)) != len(params):
        raise SyntaxError_(f"duplicate parameter in {name.text}", sig.pos)
    return FunDef(name.text, params, _expr(node.items[2]), pos=node.pos)


def validate(p: Program) -> Program:
    names = [d.name for d in p.defs]
    dup = {n for n in names if names.count(n) > 1}
    if dup:
        raise ProgramError(f"function(s) defined twice: {', '.join(sorted(dup))}")
    if "main" not in p:
        raise ProgramError("program has no main function")
    if p.main.params:
        raise ProgramError("main takes no parameters")
    for d in p.defs:
        for node in walk(d.body):
            if isinstance(node, Let) and isinstance(node.rhs, Call):
                call = node.rhs
                if call.fn not in p:
                    raise ProgramError(f"{d.name}: call to undefined function {call.fn!r}")
                want = len(p.fn(call.fn).params)
                if want != len(call.args):
                    raise ProgramError(f"{d.name}: {call.fn} expects {want} argument(s), "
                                       f"got {len(call.args)}")
    return p


def parse_program(text: str) -> Program:
    """Parse program text into an (unrenamed, unlabeled) validated Program."""
    return validate(Program(tuple(_define(n) for n in _read(text))))


# ---------------------------------------------------------------------------
# renaming


def _rename_app(s: App, env: dict[str, str], where: str) -> App:
    def look(v):
        if isinstance(v, int):
            return v
        if v not in env:
            raise ProgramError(f"{where}: unbound variable {v!r}")
        return env[v]

    if isinstance(s, Const):
        return s
    if isinstance(s, Cons):
        return Cons(look(s.x), look(s.y))
    if isinstance(s, Prim):
        return Prim(s.op, look(s.x), look(s.y))
    if isinstance(s, Call):
        return Call(s.fn, tuple(look(a) for a in s.args))
    return type(s)(look(s.x))


def rename_distinct(p: Program) -> Program:
    """Give every binder in the program a distinct name.

    The first binder of a name keeps it; later ones get ``name_1``,
    ``name_2``, ... skipping names already used anywhere in the program.
    """
    taken: set[str] = set()
    for d in p.defs:
        taken.update(d.params)
        taken.update(n.var for n in walk(d.body) if isinstance(n, Let))
    used: set[str] = set()

    def fresh(v: str) -> str:
        if v not in used:
            used.add(v)
            return v
        k = 1
        while f"{v}_{k}" in used or f"{v}_{k}" in taken:
            k += 1
        name = f"{v}_{k}"
        used.add(name)
        return name

    def go(e: Expr, env: dict[str, str], fn: str) -> Expr:
        where = f"{fn}" + (f" at {e.pos[0]}:{e.pos[1]}" if e.pos else "")
        if isinstance(e, Return):
            if e.var not in env:
                raise ProgramError(f"{where}: unbound variable {e.var!r}")
            return replace(e, var=env[e.var])
        if isinstance(e, If):
            if e.cond not in env:
                raise ProgramError(f"{where}: unbound variable {e.cond!r}")
            return replace(e, cond=env[e.cond], then=go(e.then, env, fn), else_=go(e.else_, env, fn))
        rhs = _rename_app(e.rhs, env, where)
        new = fresh(e.var)
        return replace(e, var=new, rhs=rhs, body=go(e.body, {**env, e.var: new}, fn))

    defs = []
    for d in p.defs:
        params = tuple(fresh(x) for x in d.params)
        defs.append(replace(d, params=params, body=go(d.body, dict(zip(d.params, params)), d.name)))
    return Program(tuple(defs))


# ---------------------------------------------------------------------------
# labeling


def assign_labels(p: Program) -> Program:
    """Number program points (pi) and evaluation points (psi) in textual order."""
    pi = psi = 0

    def go(e: Expr) -> Expr:
        nonlocal pi, psi
        pi += 1
        here = pi
        if isinstance(e, Let):
            return replace(e, pi=here, body=go(e.body))
        psi += 1
        if isinstance(e, Return):
            return replace(e, pi=here, psi=psi)
        mine = psi
        then = go(e.then)
        return replace(e, pi=here, psi=mine, then=then, else_=go(e.else_))

    return Program(tuple(replace(d, body=go(d.body)) for d in p.defs))


def load(text: str) -> Program:
    """Parse, rename and label: the form every other module expects."""
    return assign_labels(rename_distinct(parse_program(text)))


# ---------------------------------------------------------------------------
# printing


def _op(v) -> str:
    return str(v)


def format_app(s: App) -> str:
    if isinstance(s, Const):
        return "nil" if s.value is None else str(s.value)
    if isinstance(s, Cons):
        return f"(cons {s.x} {s.y})"
    if isinstance(s, Car):
        return f"(car {s.x})"
    if isinstance(s, Cdr):
        return f"(cdr {s.x})"
    if isinstance(s, NullQ):
        return f"(null? {s.x})"
    if isinstance(s, Prim):
        return f"({s.op} {_op(s.x)} {_op(s.y)})"
    return "(" + " ".join((s.fn, *s.args)) + ")"


def format_expr(e: Expr, indent: int = 0) -> str:
    pad = " " * indent
    if isinstance(e, Return):
        return f"{pad}(return {e.var})"
    if isinstance(e, If):
        return (f"{pad}(if {e.cond}\n{format_expr(e.then, indent + 4)}\n"
                f"{format_expr(e.else_, indent + 4)})")
    return f"{pad}(let ({e.var} {format_app(e.rhs)})\n{format_expr(e.body, indent + 2)})"


def format_program(p: Program) -> str:
    out = []
    for d in p.defs:
        sig = " ".join((d.name, *d.params))
        out.append(f"(define ({sig})\n{format_expr(d.body, 2)})")
    return "\n\n".join(out) + "\n"
