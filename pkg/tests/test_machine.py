import io
import math
from fractions import Fraction

import pytest
from conftest import program
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import lazy_eval, run_deep
from programs import programs

from lazygc import corpus
from lazygc.heap import CLO, DEAD, EMPTY, NUM, Cell, DanglingReference, MachineError, OutOfMemory
from lazygc.machine import INT_MAX, INT_MIN, PRINT, Machine, arith, init_state, run
from lazygc.syntax import load

EXPECTED = {
    "length": "1",
    "motivating": "8",
    "gc_bench": "4092",
    "huffman": "2463",
    "nqueens": "10",
    "sum_pipeline": "73810",
    "closure_f": "(20 . 41)",
}


def main_only(body, extra=""):
    return load(f"{extra}\n(define (main) {body})")


@pytest.mark.parametrize("name", sorted(EXPECTED))
def test_known_outputs(name):
    assert run(program(name)).output == EXPECTED[name]


@pytest.mark.parametrize("name", corpus.names())
def test_corpus_matches_reference_evaluator(name):
    assert run(program(name)).output == run_deep(lazy_eval, program(name))


def test_initial_configuration():
    m = init_state(program("length"))
    assert m.control is program("length").main.body
    assert m.env == {}
    assert len(m.stack) == 1 and m.stack[0].resume is PRINT
    ans = m.stack[0].update
    assert m.cells[ans].tag == EMPTY and m.print_stack == [("val", ans)]


def test_lets_allocate_closures_and_nothing_else_allocates():
    m = Machine(main_only("(let (x 1) (let (y (+ x 1)) (return y)))"))
    m.step()
    assert len(m.cells) == 2 and m.cells[m.env[next(iter(m.env))]].tag == CLO
    res = m.run()
    assert res.output == "2" and res.stats.allocations == 3


def test_printer_forces_nested_structure():
    p = main_only("(let (n nil) (let (a 1) (let (b 2) (let (l (cons b n)) "
                  "(let (k (cons a l)) (let (q (cons k a)) (return q)))))))")
    assert run(p).output == "((1 2) . 1)"


def test_unused_bindings_are_never_forced():
    p = main_only("(let (z 0) (let (bad (/ z z)) (let (k 5) (return k))))")
    assert run(p).output == "5"


def test_sharing_forces_each_thunk_once():
    p = main_only("(let (a 3) (let (b (* a a)) (let (c (+ b b)) (return c))))")
    m = Machine(p)
    m.run()
    assert m.output == "18"
    assert m.stats.closure_entries == 3


def test_rule_counts_are_kept():
    res = run(program("length"))
    assert res.stats.steps == sum(res.stats.rules.values())
    assert res.stats.rules["if-true"] == res.stats.rules["if-false"] == 1
    assert res.stats.rules["halt"] == 1


def test_trace_gets_one_line_per_transition():
    buf = io.StringIO()
    res = run(program("length"), trace=buf)
    assert len(buf.getvalue().splitlines()) == res.stats.steps


@pytest.mark.parametrize("body, message", [
    ("(let (z 0) (let (a 1) (let (q (/ a z)) (return q))))", "division by zero"),
    ("(let (a 1) (let (q (car a)) (return q)))", "car"),
    ("(let (n nil) (let (q (cdr n)) (return q)))", "cdr"),
    ("(let (n nil) (let (q (+ n 1)) (return q)))", None),
    (f"(let (a {INT_MAX}) (let (q (+ a 1)) (return q)))", "overflow"),
])
def test_dynamic_errors(body, message):
    with pytest.raises(MachineError) as err:
        run(main_only(body))
    if message:
        assert message in str(err.value)


def test_step_limit():
    with pytest.raises(MachineError, match="step limit"):
        Machine(program("length")).run(max_steps=10)


def test_heap_exhaustion_without_collection():
    with pytest.raises(OutOfMemory):
        run(program("length"), "none", 10)


def test_bad_configuration_is_rejected():
    with pytest.raises(ValueError):
        Machine(program("length"), "lgc")
    with pytest.raises(ValueError):
        Machine(program("length"), "rgc", 0)
    with pytest.raises(ValueError):
        Machine(program("length"), "mark-sweep")


def test_dead_reference_fails_loudly():
    m = Machine(program("length"))
    with pytest.raises(DanglingReference, match="xs"):
        m.deref(DEAD, "xs")


def test_update_overwrites_thunk_with_value():
    c = Cell(CLO, app=object(), env={"x": 0}, desc={"x": 1})
    c.assign(Cell(NUM, 7))
    assert (c.tag, c.a, c.env, c.desc, c.app) == (NUM, 7, None, None, None)


def test_run_to_entry_pauses_before_body():
    m = Machine(program("length"))
    assert m.run_to_entry("length", 2)
    assert m.paused_in.name == "length"
    assert m.control is m.paused_in.body
    assert not Machine(program("length")).run_to_entry("length", 10 ** 6)


ints = st.integers(INT_MIN, INT_MAX)


@given(ints, ints.filter(bool))
def test_division_truncates_toward_zero(x, y):
    if (x, y) != (INT_MIN, -1):
        assert arith("/", x, y) == math.trunc(Fraction(x, y))


@given(ints, ints)
def test_arithmetic_is_checked_64_bit(x, y):
    for op, exact in (("+", x + y), ("-", x - y), ("*", x * y)):
        if INT_MIN <= exact <= INT_MAX:
            assert arith(op, x, y) == exact
        else:
            with pytest.raises(MachineError, match="overflow"):
                arith(op, x, y)
    assert arith("<", x, y) == int(x < y)
    assert arith("=", x, y) == int(x == y)


def test_division_overflow_is_detected():
    with pytest.raises(MachineError, match="overflow"):
        arith("/", INT_MIN, -1)


@settings(max_examples=120, deadline=None)
@given(programs())
def test_random_programs_match_reference(src):
    p = load(src)
    assert run(p).output == lazy_eval(p)
