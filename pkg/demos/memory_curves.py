"""Memory over time for the tree benchmark under each collector.

Writes one CSV per collector (allocation clock, active, reachable and live
cells) into the directory given on the command line (default: curves/)
and prints a coarse text chart of the active cells.
"""

import sys
from pathlib import Path

from lazygc import corpus
from lazygc.analysis import analyze
from lazygc.gc import compile_tables
from lazygc.profiler import MemorySample, memory_curve, write_csv

HEAP = 12433
EVERY = 512
WIDTH = 60

out = Path(sys.argv[1] if len(sys.argv) > 1 else "curves")
out.mkdir(parents=True, exist_ok=True)
program = corpus.load("gc_bench")
tables = compile_tables(analyze(program))

curves = {}
for mode in ("rgc", "lgc"):
    samples, m = memory_curve(program, mode, HEAP, tables, EVERY)
    curves[mode] = samples
    write_csv(out / f"memory_gc_bench_{mode}.csv", samples, MemorySample)
    print(f"{mode}: {m.stats.gc.collections} collections, peak {m.stats.peak_memory} cells after a collection")

print()
print(f"active cells every {EVERY} allocations (r = rgc, l = lgc, * = both; full width = {HEAP} cells)")
for r, lg in zip(curves["rgc"], curves["lgc"]):
    line = [" "] * (WIDTH + 1)
    a, b = r.active_cells * WIDTH // HEAP, lg.active_cells * WIDTH // HEAP
    line[a] = "r"
    line[b] = "*" if a == b else "l"
    print(f"{r.alloc_clock:>7} |{''.join(line)}|  live {r.live_cells}")
print(f"\nCSV files written to {out}/")
