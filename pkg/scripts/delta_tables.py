"""Leakage tables for four small reference trees and the joint-distribution example."""

from fractions import Fraction
from itertools import combinations

from ptleak.bisim import DeltaPrimeEngine, delta, delta_prime, refine
from ptleak.semantics import TimedTree, frac_str

HALF = Fraction(1, 2)


def chain(n, lab="x"):
    s = lab
    for _ in range(n):
        s = (lab, [(1, 1, s)])
    return s


TREES = {
    "T1": chain(3),
    "T2": ("x", [(HALF, 1, chain(1)), (HALF, 1, chain(2))]),
    "T3": ("x", [(1, 1, ("x", [(HALF, 1, "x"), (HALF, 1, chain(1))]))]),
    "T4": ("x", [(1, 1, ("x", [(1, 1, ("x", [(HALF, 1, "x"), (HALF, 1, "x")]))]))]),
}


def table(title, fn, trees):
    names = list(trees)
    print(title)
    print("      " + "".join(f"{n:>8}" for n in names))
    for a in names:
        print(f"{a:>6}" + "".join(f"{frac_str(fn(trees[a], trees[b])):>8}" for b in names))
    print()


def main() -> None:
    trees = {k: TimedTree.from_nested(v) for k, v in TREES.items()}
    table("delta", lambda s, t: delta(s, t).value, trees)
    for agg in ("root", "layers"):
        eng = DeltaPrimeEngine(agg)
        table(f"delta' ({agg} aggregation)", lambda s, t: delta_prime(s, t, eng).value, trees)

    q = Fraction(1, 4)
    a = TimedTree.from_nested(("b", [(q, 1, "o"), (q, 2, "o"), (q, 1, "b"), (q, 2, "b")]))
    b = TimedTree.from_nested(("b", [(q, 2, "b"), (q, 2, "b"), (q, 1, "o"), (q, 1, "o")]))
    part = refine(a, b)
    for side, root in ((0, a.root), (1, b.root)):
        chi = part.chi((side, root))
        print(f"chi side {side}: " + ", ".join(
            f"(t={frac_str(t)}, {part.label[blk]}): {frac_str(p)}" for (t, blk), p in sorted(chi.items(), key=str)))
    print(f"joint example delta = {frac_str(delta(a, b).value)}")


if __name__ == "__main__":
    main()
