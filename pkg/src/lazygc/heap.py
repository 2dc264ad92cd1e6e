"""Heap cells, references and runtime errors shared by the machine and the collectors."""

from __future__ import annotations

# cell tags
EMPTY, NUM, NIL, PAIR, CLO = range(5)
TAG_NAMES = ("empty", "num", "nil", "pair", "closure")

# A reference the collector decided not to preserve.  Dereferencing it is a
# soundness violation and fails loudly instead of reading stale memory.
DEAD = -1


class MachineError(Exception):
    """Dynamic error of the object program (type error, division by zero, overflow)."""


class DanglingReference(MachineError):
    """A reference dropped by the liveness-based collector was dereferenced."""


class OutOfMemory(MachineError):
    """A collection could not free enough cells for the pending allocations."""


class Cell:
    """One heap cell.

    ``a``/``b`` hold the number (in ``a``) or the two pair fields.  A closure
    keeps its application, its captured environment and, under the
    liveness collector, ``desc``: the liveness-table state of each captured
    variable.  ``cid`` is the allocation serial; it survives copying so that
    cells can be followed across collections.
    """

    __slots__ = ("tag", "a", "b", "app", "env", "desc", "pi", "cid", "sigma", "mf")

    def __init__(self, tag=EMPTY, a=None, b=None, app=None, env=None, desc=None, pi=None, cid=-1):
        self.tag = tag
        self.a = a
        self.b = b
        self.app = app
        self.env = env
        self.desc = desc
        self.pi = pi
        self.cid = cid
        self.sigma = None
        self.mf = 0

    def assign(self, other: "Cell") -> None:
        """Overwrite with the WHNF content of ``other`` (the update of a thunk)."""
        self.tag, self.a, self.b = other.tag, other.a, other.b
        self.app = self.env = self.desc = self.sigma = None

    def shell(self) -> "Cell":
        """A copy for to-space whose references are all still unset."""
        c = Cell(self.tag, self.a, self.b, self.app, None, self.desc, self.pi, self.cid)
        if self.tag == PAIR:
            c.a = c.b = DEAD
        elif self.tag == CLO:
            c.env = dict.fromkeys(self.env, DEAD)
        c.sigma, c.mf = self.sigma, self.mf
        return c

    def __repr__(self) -> str:
        if self.tag == NUM:
            return f"Num({self.a})"
        if self.tag == PAIR:
            return f"Pair({self.a}, {self.b})"
        if self.tag == CLO:
            return f"Closure(@{self.pi}, {self.env})"
        return TAG_NAMES[self.tag].capitalize()
