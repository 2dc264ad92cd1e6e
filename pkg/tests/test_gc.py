import pytest
from conftest import analysis, program, tables
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import lazy_eval
from programs import programs

from lazygc.analysis import analyze
from lazygc.gc import GcPolicy, GcTables, collect, compile_tables, reachable
from lazygc.heap import DEAD, PAIR, OutOfMemory
from lazygc.machine import Machine, run
from lazygc.profiler import AccessLog
from lazygc.syntax import load

SMALL = {"length": 13, "motivating": 117, "append_reverse": 240, "sieve": 191, "msort": 617, "fib": 79}


def test_reachability_collection_keeps_exactly_the_reachable_cells():
    m = Machine(program("msort"), "rgc", 617, audit=[])
    m.run()
    assert m.audit
    for _, kept, reach in m.audit:
        assert kept == reach


@pytest.mark.parametrize("name", sorted(SMALL))
def test_liveness_collection_sits_between_truth_and_reachability(name):
    truth = Machine(program(name), access_log=True)
    truth.run()
    log = AccessLog.of(truth)
    m = Machine(program(name), "lgc", SMALL[name], tables(name), audit=[])
    assert m.run().output == truth.output
    assert m.audit
    for step, kept, reach in m.audit:
        assert log.live_cids(step) <= kept <= reach


@pytest.mark.parametrize("name", sorted(SMALL))
def test_collection_is_idempotent_on_a_fresh_heap(name):
    m = Machine(program(name), "rgc")
    for _ in range(150):
        m.step()
    before = m.reachable_cids()
    collect(m, "rgc")
    assert frozenset(c.cid for c in m.cells) == before
    collect(m, "rgc")
    assert frozenset(c.cid for c in m.cells) == before


def test_dead_references_are_never_followed_by_the_tracer():
    m = Machine(program("motivating"), "lgc", None, tables("motivating"))
    m.run_to_entry("length")
    m.collect_at_entry("lgc")
    assert all(0 <= r < len(m.cells) for r in reachable(m))
    assert any(r == DEAD for c in m.cells for r in ((c.a, c.b) if c.tag == PAIR else ()))
    assert m.run().output == run(program("motivating")).output


def test_tables_survive_json():
    tb = tables("huffman")
    back = GcTables.from_json(tb.to_json())
    assert back.to_json() == tb.to_json()
    assert (back.table.next0, back.table.next1, back.table.live) == (tb.table.next0, tb.table.next1, tb.table.live)
    a = run(program("huffman"), "lgc", 7271, tb)
    b = run(program("huffman"), "lgc", 7271, back)
    assert (a.output, a.stats.gc.collections, a.stats.peak_memory) == \
        (b.output, b.stats.gc.collections, b.stats.peak_memory)


@pytest.mark.parametrize("name", ["motivating", "closure_f", "mapfilter"])
def test_revisit_heuristic_changes_work_not_results(name):
    heap = {"motivating": 117, "closure_f": 327, "mapfilter": 149}[name]
    on = Machine(program(name), GcPolicy("lgc", True), heap, tables(name), audit=[])
    off = Machine(program(name), GcPolicy("lgc", False), heap, tables(name), audit=[])
    assert on.run().output == off.run().output == run(program(name)).output
    for (_, kept_on, reach), (_, kept_off, _) in zip(on.audit, off.audit):
        assert kept_on <= reach and kept_off <= reach


def test_liveness_collects_at_least_as_well_as_reachability():
    for name in ("gc_bench", "huffman"):
        heap = {"gc_bench": 10361, "huffman": 7271}[name]
        r = run(program(name), "rgc", heap)
        lg = run(program(name), "lgc", heap, tables(name))
        assert lg.stats.gc.collections <= r.stats.gc.collections
        assert lg.stats.peak_memory <= r.stats.peak_memory


def test_too_small_heap_runs_out_of_memory():
    with pytest.raises(OutOfMemory):
        run(program("length"), "rgc", 8)


def test_collection_log_and_statistics():
    log = []
    res = run(program("msort"), "rgc", 700, gc_log=log)
    gs = res.stats.gc
    assert gs.collections == len(log) == len(gs.events) > 0
    assert gs.cells_collected == sum(e.cells_before - e.cells_after for e in log)
    assert gs.peak_active_cells == max(e.cells_after for e in log)
    assert [e.index for e in log] == list(range(len(log)))
    assert len(gs.log_rows()) == len(log)


def test_entry_states_cover_every_parameter():
    tb = tables("nqueens")
    for d in program("nqueens").defs:
        for x in d.params:
            assert (d.name, x) in tb.entry


def test_compile_tables_is_deterministic():
    a = compile_tables(analyze(program("sieve")))
    b = compile_tables(analysis("sieve"))
    assert a.to_json() == b.to_json()


@settings(max_examples=60, deadline=None)
@given(programs(), st.integers(3, 12))
def test_random_programs_give_the_same_output_under_every_collector(src, slack):
    p = load(src)
    expected = lazy_eval(p)
    tb = compile_tables(analyze(p))
    high = Machine(p)
    high.run()
    heap = max(high.stats.max_heap // 2, slack)
    for mode in ("rgc", "lgc"):
        try:
            m = Machine(p, mode, heap, tb, audit=[])
            assert m.run().output == expected
        except OutOfMemory:
            continue
        for _, kept, reach in m.audit:
            assert kept <= reach

