import csv

import pytest
from conftest import program, tables
from hypothesis import given
from hypothesis import strategies as st

from lazygc.machine import Machine, run
from lazygc.profiler import (AccessLog, BenchRow, MemorySample, analysis_stats, bench, bench_one, census,
                             live_ground_truth, memory_curve)


@given(st.dictionaries(st.integers(0, 30), st.tuples(st.integers(0, 40), st.integers(-1, 40)), max_size=20),
       st.integers(-1, 45))
def test_live_count_agrees_with_live_set(spans, step):
    created = {c: s for c, (s, _) in spans.items()}
    last = {c: e for c, (_, e) in spans.items() if e >= 0}
    log = AccessLog(created, last)
    assert log.live_count(step) == len(log.live_cids(step))


def test_access_log_intervals():
    log = AccessLog({0: 0, 1: 2, 2: 3}, {0: 5, 1: 2})
    assert log.live_cids(0) == {0}
    assert log.live_cids(2) == {0}  # cell 1 is read only at its creation step
    assert log.live_cids(4) == {0}
    assert log.live_cids(5) == frozenset()  # the last read ends liveness
    assert 2 not in log.live_cids(3)  # never read again: never live


def test_access_log_needs_recording():
    with pytest.raises(ValueError):
        AccessLog.of(Machine(program("length")))


def test_truncated_logs_are_refused():
    with pytest.raises(ValueError):
        live_ground_truth([MemorySample(1, 1, 1, 1)], AccessLog({0: 0, 5: 1}, {}))


@pytest.mark.parametrize("mode, heap", [("none", None), ("rgc", 12433), ("lgc", 12433)])
def test_memory_curve_chain(mode, heap):
    samples, m = memory_curve(program("gc_bench"), mode, heap, tables("gc_bench"), every=256)
    assert samples
    for s in samples:
        assert s.live_cells <= s.reachable_cells <= s.active_cells
    assert [s.alloc_clock for s in samples] == [256 * (i + 1) for i in range(len(samples))]


def test_census_does_not_disturb_the_run():
    plain = run(program("huffman"), "rgc", 8725)
    sampled = Machine(program("huffman"), "rgc", 8725, census_every=50)
    res = sampled.run()
    assert res.output == plain.output
    assert res.stats.gc.collections == plain.stats.gc.collections
    assert res.stats.peak_memory == plain.stats.peak_memory
    m = Machine(program("length"))
    for _ in range(20):
        m.step()
    before = (len(m.cells), m.steps)
    s = census(m)
    assert (s.active_cells, s.step) == before and (len(m.cells), m.steps) == before


def test_bench_rows():
    none = bench_one(program("msort"), "msort", "none", None)
    assert none.gcs == 0 and none.cells_collected_per_gc is None and none.peak_memory > 0
    lgc = bench_one(program("msort"), "msort", "lgc", 617, tables("msort"), cell_size_factor=2.0)
    assert lgc.gcs > 0 and lgc.peak_memory_scaled == 2.0 * lgc.peak_memory
    assert lgc.output == none.output
    oom = bench_one(program("msort"), "msort", "rgc", 20)
    assert oom.error.startswith("OutOfMemory")


def test_analysis_stats():
    stats, tb = analysis_stats("length", program("length"))
    assert stats.nonterminals > 0 and stats.productions > 0
    assert stats.dfa_states >= stats.nonterminals // 2 and stats.dfa_transitions > 0
    assert tb.entry


def test_bench_writes_csv_files(tmp_path):
    stats, rows = bench({"length": program("length"), "fib": program("fib")}, heap_fraction=2.0,
                        out=tmp_path, census_every=16)
    assert [(r.program, r.mode) for r in rows] == [(p, m) for p in ("length", "fib") for m in ("none", "rgc", "lgc")]
    assert len({r.output for r in rows if r.program == "fib"}) == 1
    with open(tmp_path / "summary.csv") as fh:
        summary = list(csv.DictReader(fh))
    assert len(summary) == 6 and set(summary[0]) == set(BenchRow.__dataclass_fields__)
    assert (tmp_path / "analysis.csv").exists()
    assert (tmp_path / "memory_fib_lgc.csv").exists()
    assert {s.program for s in stats} == {"length", "fib"}


@pytest.mark.parametrize("name, heap", [("gc_bench", 12433), ("huffman", 8725), ("msort", 617)])
def test_liveness_heap_dips_below_reachability_heap(name, heap):
    rgc = run(program(name), "rgc", heap).stats.gc.events
    lgc = run(program(name), "lgc", heap, tables(name)).stats.gc.events
    after = {e.alloc_clock: e.cells_after for e in rgc}
    matched = [(e.cells_after, after[e.alloc_clock]) for e in lgc if e.alloc_clock in after]
    assert matched
    assert all(lo <= hi for lo, hi in matched)
