"""Run the poisoning oracle on every bundled program, then on weakened grammars.

Each production of ``length``'s grammar is removed in turn; some removals
make the analysis claim that a still-needed cell is dead, and the oracle
reports the access that would have read freed memory.
"""

from lazygc import corpus
from lazygc.analysis import analyze
from lazygc.minefield import check, mutate

for name in corpus.names():
    rep = check(corpus.load(name))
    print(f"{name:15} {'ok' if rep.ok else 'BANG'}  {rep.collections} poisoning collections,"
          f" {rep.poisoned} cells poisoned at the end")

program = corpus.load("length")
an = analyze(program)
print()
print("removing one production at a time from the grammar of length:")
survivors = 0
for lhs, alts in an.grammar.prods.items():
    for rhs in alts:
        rep = check(program, an, mutate(an.grammar, lhs, rhs))
        if rep.ok:
            survivors += 1
        else:
            print(f"   without {lhs} -> {' '.join(rhs) or 'eps'}: bang via {rep.bang['access_path']}"
                  f" at step {rep.bang['step']}")
print(f"   {survivors} other removals went unnoticed on this input")
