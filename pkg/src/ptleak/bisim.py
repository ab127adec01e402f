"""Stratified bisimulation, the leakage estimate δ and its class-weighted variant δ′."""

from __future__ import annotations

import csv
import io
import json
import math
from collections.abc import Callable, Hashable, Mapping, Sequence
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from typing import NamedTuple

from .lang import Program, bind_params
from .semantics import CostModel, Env, TimedTree, frac_str, program_tree

NodeRef = tuple[int, int]  # (tree index, node id)
JointDist = dict[tuple[Fraction, int], Fraction]
ZERO, ONE = Fraction(0), Fraction(1)


# --------------------------------------------------------------------------
# Layers and partition refinement


class Layer(NamedTuple):
    height: int
    first: tuple[int, ...]
    second: tuple[int, ...]


def stratify(t1: TimedTree, t2: TimedTree) -> list[Layer]:
    """Nodes of each tree grouped by height (longest distance to a leaf)."""
    h1, h2 = t1.heights(), t2.heights()
    top = max(max(h1.values()), max(h2.values()))
    return [
        Layer(n, tuple(x for x in t1.nodes() if h1[x] == n), tuple(x for x in t2.nodes() if h2[x] == n))
        for n in range(top + 1)
    ]


@dataclass(frozen=True)
class Partition:
    trees: tuple[TimedTree, ...]
    block_of: Mapping[NodeRef, int]
    height: Mapping[int, int]
    rep: Mapping[int, NodeRef]
    label: Mapping[int, Hashable]

    def chi(self, ref: NodeRef) -> JointDist:
        return chi(ref, self)

    def same_block(self, a: NodeRef, b: NodeRef) -> bool:
        return self.block_of[a] == self.block_of[b]

    def blocks_below(self, n: int) -> list[int]:
        return [b for b, h in self.height.items() if h < n]


def refine(*trees: TimedTree) -> Partition:
    """Coarsest stable partition of the disjoint union of `trees`, built bottom-up.

    A node's signature is its observed label plus its joint distribution over
    (duration, block) of its successors; blocks are numbered in creation order.
    """
    heights = [t.heights() for t in trees]
    refs = sorted(
        ((i, n) for i, t in enumerate(trees) for n in t.nodes()),
        key=lambda r: (heights[r[0]][r[1]], r[0], r[1]),
    )
    block_of: dict[NodeRef, int] = {}
    height: dict[int, int] = {}
    rep: dict[int, NodeRef] = {}
    label: dict[int, Hashable] = {}
    sigs: dict[tuple, int] = {}
    for ref in refs:
        i, n = ref
        t = trees[i]
        dist: dict[tuple[Fraction, int], Fraction] = {}
        for e in t.children(n):
            key = (e.dur, block_of[(i, e.child)])
            dist[key] = dist.get(key, ZERO) + e.prob
        sig = (t.observe(n), frozenset(dist.items()))
        b = sigs.get(sig)
        if b is None:
            b = sigs[sig] = len(sigs)
            height[b], rep[b], label[b] = heights[i][n], ref, t.observe(n)
        block_of[ref] = b
    return Partition(tuple(trees), block_of, height, rep, label)


def chi(ref: NodeRef, partition: Partition) -> JointDist:
    """Joint distribution of `ref`'s successors over (duration, block)."""
    i, n = ref
    out: JointDist = {}
    for e in partition.trees[i].children(n):
        key = (e.dur, partition.block_of[(i, e.child)])
        out[key] = out.get(key, ZERO) + e.prob
    return out


# --------------------------------------------------------------------------
# Weights and results


class Uniform:
    """ω ≡ 1; yields δ."""

    name = "uniform"

    def __call__(self, dur: Fraction, block: int) -> Fraction:
        return ONE


class ClassMatch:
    """ω_{tC} = μ(C); yields δ′ (dispatched to :func:`delta_prime`)."""

    name = "classmatch"


@dataclass(frozen=True)
class TimeRescale:
    """ω_{tC} = f(t) for a nonnegative duration transform."""

    f: Callable[[Fraction], Fraction]
    name: str = "timerescale"

    def __call__(self, dur: Fraction, block: int) -> Fraction:
        w = Fraction(self.f(dur))
        if w < 0:
            raise ValueError("weights must be nonnegative")
        return w


def log_time(t: Fraction) -> Fraction:
    """log t, floored at 0 so that sub-unit durations get zero weight."""
    return Fraction(math.log(t)) if t > 1 else ZERO


LogTime = TimeRescale(log_time, "logtime")
WeightScheme = Uniform | ClassMatch | TimeRescale


class Term(NamedTuple):
    weight: Fraction
    p1: Fraction
    p2: Fraction


@dataclass(frozen=True)
class Witness:
    """Where the returned value is attained.

    `kind` is ``entry`` (one χ entry of a matched pair), ``unmatched`` (a node
    with no counterpart in its layer; `terms` lists its weighted mass) or
    ``label`` (the roots are observably different).
    """

    kind: str
    layer: int
    node1: NodeRef | None
    node2: NodeRef | None
    entry: tuple[Fraction, int] | None
    terms: tuple[Term, ...]

    def reevaluate(self) -> Fraction:
        if self.kind == "entry":
            (t,) = self.terms
            return t.weight * abs(t.p1 - t.p2)
        return sum((t.weight * abs(t.p1 - t.p2) for t in self.terms), ZERO)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "layer": self.layer,
            "node1": list(self.node1) if self.node1 else None,
            "node2": list(self.node2) if self.node2 else None,
            "entry": None if self.entry is None else {"dur": frac_str(self.entry[0]), "block": self.entry[1]},
            "terms": [{"weight": frac_str(t.weight), "p1": frac_str(t.p1), "p2": frac_str(t.p2)} for t in self.terms],
        }


@dataclass(frozen=True)
class DeltaResult:
    value: Fraction
    witness: Witness | None = None
    forward: Fraction | None = None  # one-directional values, for diagnostics
    backward: Fraction | None = None

    def to_json(self) -> str:
        doc = {
            "value": frac_str(self.value),
            "decimal": float(self.value),
            "forward": None if self.forward is None else frac_str(self.forward),
            "backward": None if self.backward is None else frac_str(self.backward),
            "witness": None if self.witness is None else self.witness.to_dict(),
        }
        return json.dumps(doc, indent=2)


def _weighted_gap(d1: JointDist, d2: JointDist, w) -> tuple[Fraction, tuple | None, Term | None]:
    best, arg, term = ZERO, None, None
    for key in sorted(d1.keys() | d2.keys()):
        p1, p2 = d1.get(key, ZERO), d2.get(key, ZERO)
        wt = w(*key)
        gap = wt * abs(p1 - p2)
        if arg is None or gap > best:
            best, arg, term = gap, key, Term(wt, p1, p2)
    return best, arg, term


def _mass(d: JointDist, w) -> tuple[Fraction, tuple[Term, ...]]:
    terms = tuple(Term(w(*k), p, ZERO) for k, p in sorted(d.items()))
    return sum((t.weight * t.p1 for t in terms), ZERO), terms


# --------------------------------------------------------------------------
# δ (per-layer best match)


def delta(t1: TimedTree, t2: TimedTree, w: WeightScheme | None = None) -> DeltaResult:
    """Maximal best-match weighted sup-norm gap over height layers, symmetrized."""
    if isinstance(w, ClassMatch):
        return delta_prime(t1, t2)
    w = w or Uniform()
    if t1.observe(t1.root) != t2.observe(t2.root):
        wit = Witness("label", max(max(t1.heights().values()), max(t2.heights().values())),
                      (0, t1.root), (1, t2.root), None, (Term(ONE, ONE, ZERO),))
        return DeltaResult(ONE, wit, ONE, ONE)
    part = refine(t1, t2)
    layers = stratify(t1, t2)
    fwd, wf = _directed(part, layers, 0, w)
    bwd, wb = _directed(part, layers, 1, w)
    value, wit = (fwd, wf) if fwd >= bwd else (bwd, wb)
    return DeltaResult(value, wit, fwd, bwd)


def _directed(part: Partition, layers: list[Layer], side: int, w) -> tuple[Fraction, Witness | None]:
    best, wit = ZERO, None
    for layer in layers:
        mine, theirs = (layer.first, layer.second) if side == 0 else (layer.second, layer.first)
        for s1 in mine:
            r1 = (side, s1)
            d1 = part.chi(r1)
            if not theirs:
                beta, terms = _mass(d1, w)
                cand = Witness("unmatched", layer.height, r1, None, None, terms)
            else:
                beta, cand = None, None
                for s2 in theirs:
                    r2 = (1 - side, s2)
                    gap, key, term = _weighted_gap(d1, part.chi(r2), w)
                    if beta is None or gap < beta:
                        beta = gap
                        cand = Witness("entry", layer.height, r1, r2, key,
                                       (term,) if term else (Term(ONE, ZERO, ZERO),))
                if side == 1:
                    cand = Witness(cand.kind, cand.layer, cand.node2, cand.node1, cand.entry,
                                   tuple(Term(t.weight, t.p2, t.p1) for t in cand.terms))
            if wit is None or beta > best:
                best, wit = beta, cand
    return best, wit


# --------------------------------------------------------------------------
# δ′ (class-weighted)


@dataclass(frozen=True, eq=False)
class Block:
    """Hash-consed bisimulation class: observed label plus χ over child blocks."""

    uid: int
    label: Hashable
    chi: Mapping[tuple[Fraction, int], Fraction]
    height: int
    reach: frozenset[int]  # uids of all blocks in the subtree, self included


class DeltaPrimeEngine:
    """Memoized δ′ over hash-consed blocks.

    ``aggregate="root"`` (default) takes the class-weighted distance of the two
    top-layer nodes, so lower-layer differences enter only through the μ
    weights.  ``aggregate="layers"`` takes the maximum over all height layers
    instead, like :func:`delta`.  μ(C) is the least δ′ from C to another block
    strictly below the compared layer, 1 when there is none, clamped to [0,1].
    """

    def __init__(self, aggregate: str = "root"):
        if aggregate not in ("root", "layers"):
            raise ValueError(f"unknown aggregation {aggregate!r}")
        self.aggregate = aggregate
        self.blocks: list[Block] = []
        self._intern: dict[tuple, Block] = {}
        self._pair: dict[tuple[int, int], Fraction] = {}
        self._mu: dict[tuple[int, frozenset[int]], Fraction] = {}

    # block construction ---------------------------------------------------

    def intern_tree(self, t: TimedTree) -> dict[int, Block]:
        out: dict[int, Block] = {}
        for n in reversed(t.nodes()):
            dist: dict[tuple[Fraction, int], Fraction] = {}
            for e in t.children(n):
                key = (e.dur, out[e.child].uid)
                dist[key] = dist.get(key, ZERO) + e.prob
            out[n] = self._make(t.observe(n), dist)
        return out

    def _make(self, label: Hashable, dist: dict) -> Block:
        sig = (label, frozenset(dist.items()))
        b = self._intern.get(sig)
        if b is None:
            kids = [self.blocks[c] for _, c in dist]
            uid = len(self.blocks)
            b = Block(
                uid, label, dict(sorted(dist.items())),
                1 + max(k.height for k in kids) if kids else 0,
                frozenset({uid}).union(*(k.reach for k in kids)),
            )
            self.blocks.append(b)
            self._intern[sig] = b
        return b

    # distances ------------------------------------------------------------

    def mu(self, c: int, competitors: frozenset[int]) -> Fraction:
        key = (c, competitors)
        if key not in self._mu:
            others = [d for d in competitors if d != c]
            m = min((self.between(c, d) for d in others), default=ONE)
            self._mu[key] = min(ONE, max(ZERO, m))
        return self._mu[key]

    def _weight(self, layer: int, universe: frozenset[int]):
        below = frozenset(d for d in universe if self.blocks[d].height < layer)
        return lambda dur, c: self.mu(c, below)

    def between(self, a: int, b: int) -> Fraction:
        if a == b:
            return ZERO
        key = (a, b) if a < b else (b, a)
        if key not in self._pair:
            self._pair[key] = self._compare(self.blocks[a], self.blocks[b])[0]
        return self._pair[key]

    def _compare(self, x: Block, y: Block) -> tuple[Fraction, Witness | None, Fraction, Fraction]:
        top = max(x.height, y.height)
        if x.label != y.label:
            wit = Witness("label", top, None, None, None, (Term(ONE, ONE, ZERO),))
            return ONE, wit, ONE, ONE
        if x is y:
            return ZERO, None, ZERO, ZERO
        universe = x.reach | y.reach
        if self.aggregate == "root":
            w = self._weight(top, universe)
            if x.height == y.height:
                gap, key, term = _weighted_gap(x.chi, y.chi, w)
                return gap, Witness("entry", top, None, None, key, (term,)), gap, gap
            tall, swapped = (x, False) if x.height > y.height else (y, True)
            mass, terms = _mass(tall.chi, w)
            if swapped:
                terms = tuple(Term(t.weight, t.p2, t.p1) for t in terms)
            return mass, Witness("unmatched", top, None, None, None, terms), mass, mass
        return self._layers(x, y, universe, top)

    def _layers(self, x: Block, y: Block, universe, top):
        results = []
        for mine, theirs, flip in ((x, y, False), (y, x, True)):
            best, wit = ZERO, None
            for n in range(top + 1):
                w = self._weight(n, universe)
                l1 = [self.blocks[b] for b in sorted(mine.reach) if self.blocks[b].height == n]
                l2 = [self.blocks[b] for b in sorted(theirs.reach) if self.blocks[b].height == n]
                for b1 in l1:
                    if not l2:
                        beta, terms = _mass(b1.chi, w)
                        cand = Witness("unmatched", n, None, None, None, terms)
                    else:
                        beta, cand = None, None
                        for b2 in l2:
                            gap, key, term = _weighted_gap(b1.chi, b2.chi, w)
                            if beta is None or gap < beta:
                                beta = gap
                                cand = Witness("entry", n, None, None, key, (term,) if term else (Term(ONE, ZERO, ZERO),))
                    if flip:
                        cand = Witness(cand.kind, cand.layer, None, None, cand.entry,
                                       tuple(Term(t.weight, t.p2, t.p1) for t in cand.terms))
                    if wit is None or beta > best:
                        best, wit = beta, cand
            results.append((best, wit))
        (f, wf), (b, wb) = results
        return (f, wf, f, b) if f >= b else (b, wb, f, b)

    def compare(self, t1: TimedTree, t2: TimedTree) -> DeltaResult:
        r1, r2 = self.intern_tree(t1)[t1.root], self.intern_tree(t2)[t2.root]
        value, wit, fwd, bwd = self._compare(r1, r2)
        if wit is not None and wit.kind != "label":
            # report the tree-level roots when the comparison is at the top layer
            at_root = wit.layer == max(r1.height, r2.height)
            wit = Witness(wit.kind, wit.layer, (0, t1.root) if at_root else None,
                          (1, t2.root) if at_root and wit.kind == "entry" else None, wit.entry, wit.terms)
        elif wit is not None:
            wit = Witness("label", wit.layer, (0, t1.root), (1, t2.root), None, wit.terms)
        return DeltaResult(value, wit, fwd, bwd)


def delta_prime(t1: TimedTree, t2: TimedTree, engine: DeltaPrimeEngine | None = None) -> DeltaResult:
    """δ′ between two trees; pass a shared `engine` to reuse memoized block distances."""
    return (engine or DeltaPrimeEngine()).compare(t1, t2)


# --------------------------------------------------------------------------
# PT-security


class SecurityVerdict(NamedTuple):
    secure: bool
    max_delta: Fraction
    worst_pair: tuple[int, int] | None


def completion(low_env: Env, high: Mapping | Env) -> Env:
    return Env({**dict(low_env), **dict(high)})


def pt_secure(prog: Program, gamma=None, low_env: Env | None = None, high_domain: Sequence = (), *,
              cm: CostModel | None = None, params: Mapping[str, Fraction] | None = None,
              depth_bound: int = 10_000) -> SecurityVerdict:
    """Pairwise δ over the collapsed trees of every high completion of `low_env`.

    `gamma` is accepted for interface symmetry; levels come from `prog`'s
    declarations.
    """
    if not high_domain:
        raise ValueError("high domain must be nonempty")
    from .semantics import initial_env

    low_env = low_env if low_env is not None else initial_env(prog)
    lows = prog.low_vars()
    body = bind_params(prog.body, dict(params or {}))
    prog = Program(prog.decls, body)
    trees = []
    for high in high_domain:
        env = completion(low_env, high)
        if env.project(lows) != low_env.project(lows):
            raise ValueError("high-domain entries must not change low variables")
        trees.append(program_tree(prog, env, cm, depth_bound=depth_bound))
    worst, pair = ZERO, None
    for i, j in combinations(range(len(trees)), 2):
        d = delta(trees[i], trees[j]).value
        if pair is None or d > worst:
            worst, pair = d, (i, j)
    return SecurityVerdict(worst == 0, worst, pair)


# --------------------------------------------------------------------------
# Reports


def matrix_csv(labels: Sequence[str], matrix: Sequence[Sequence[Fraction]], *, decimal: bool = False) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["", *labels])
    for lab, row in zip(labels, matrix):
        wr.writerow([lab, *((f"{float(v):.6f}" if decimal else frac_str(v)) for v in row)])
    return buf.getvalue()
