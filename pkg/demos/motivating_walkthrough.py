"""Pause the motivating program as it enters ``length`` and collect both ways.

Prints the liveness the analysis computed for ``length``'s parameter, then
what a reachability collection and a liveness collection each keep at that
moment, cell by cell.
"""

from lazygc import corpus
from lazygc.analysis import analyze
from lazygc.automata import Compiler
from lazygc.gc import compile_tables
from lazygc.heap import TAG_NAMES
from lazygc.machine import Machine

program = corpus.load("motivating")
an = analyze(program)
tables = compile_tables(an)

print("demand transformer of length's argument:")
for rhs in an.grammar.prods["D[length,1]"]:
    print("   D[length,1] ->", " ".join(rhs) or "eps")
dfa = Compiler(an.grammar).forward("D[length,1]")
words = ["", "0", "1", "01", "10", "11", "111"]
print("   live forward paths among", words, ":", [w or "eps" for w in words if dfa.accepts(w)])
print()

kept = {}
for mode in ("rgc", "lgc"):
    m = Machine(program, mode, None, tables, audit=[])
    m.run_to_entry("length")
    before = len(m.cells)
    m.collect_at_entry(mode)
    kept[mode] = m.audit[0][1]
    tags = {}
    for c in m.cells:
        tags[TAG_NAMES[c.tag]] = tags.get(TAG_NAMES[c.tag], 0) + 1
    print(f"{mode}: {before} cells before, {len(m.cells)} kept {tags}")
    print(f"   and the program still prints {m.run().output}")

dropped = sorted(kept["rgc"] - kept["lgc"])
print()
print(f"cells reachable but not live ({len(dropped)}): ids {dropped}")
print("these hold the numbers of x and the one-element lists built from them.")
print("length only walks the spine of z, so none of them is read again.")
