"""Timed probabilistic small-step semantics, execution trees and collapsing."""

from __future__ import annotations

import json
from collections.abc import Hashable, Iterator, Mapping
from dataclasses import dataclass, field, fields, replace
from fractions import Fraction
from typing import NamedTuple

from .lang import (
    ArrayRead, Assign, BinOp, BoolLit, Choose, Command, Expr, If, IntLit, Program,
    Seq, Skip, SkipAsn, SkipIf, Var, While, render_inline,
)

Value = int | bool | tuple


class EvalError(Exception):
    pass


class DepthExceeded(Exception):
    def __init__(self, bound: int):
        self.bound = bound
        super().__init__(f"execution exceeded {bound} small steps (possible divergence)")


# --------------------------------------------------------------------------
# Environments


class Env(Mapping):
    """Immutable, hashable variable store.  Arrays are tuples."""

    __slots__ = ("_items", "_hash")

    def __init__(self, data: Mapping[str, Value] | None = None, **kw: Value):
        d = dict(data or {}, **kw)
        self._items = tuple(sorted((k, tuple(v) if isinstance(v, list) else v) for k, v in d.items()))
        self._hash = None

    def __getitem__(self, name):
        for k, v in self._items:
            if k == name:
                return v
        raise KeyError(name)

    def __iter__(self):
        return (k for k, _ in self._items)

    def __len__(self):
        return len(self._items)

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(tuple((k, type(v).__name__, v) for k, v in self._items))
        return self._hash

    def __eq__(self, other):
        if not isinstance(other, Env):
            return NotImplemented
        # bool is an int subclass in Python; keep true and 1 apart
        return len(self._items) == len(other._items) and all(
            k1 == k2 and v1 == v2 and type(v1) is type(v2)
            for (k1, v1), (k2, v2) in zip(self._items, other._items)
        )

    def set(self, name: str, value: Value) -> "Env":
        return Env({**dict(self._items), name: value})

    def project(self, names) -> "Env":
        return Env({k: v for k, v in self._items if k in names})

    def __repr__(self):
        return "{" + ", ".join(f"{k}↦{_show(v)}" for k, v in self._items) + "}"

    def to_json(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in self._items}


def _show(v: Value) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return "".join(_show(x) for x in v) if all(type(x) is int and x in (0, 1) for x in v) else str(list(v))
    return str(v)


def initial_env(prog: Program, overrides: Mapping[str, Value] | None = None) -> Env:
    """Declared defaults (zero / false / declared initializer) updated by `overrides`."""
    values = {d.name: d.default() for d in prog.decls}
    for name, v in (overrides or {}).items():
        if name not in values:
            raise KeyError(f"{name!r} is not declared")
        d = prog.decl(name)
        v = tuple(v) if isinstance(v, list) else v
        base_ok = (lambda x: type(x) is bool) if d.base == "bool" else (lambda x: type(x) is int)
        if d.is_array:
            if not isinstance(v, tuple) or len(v) != d.length or not all(map(base_ok, v)):
                raise ValueError(f"{name!r} needs {d.length} {d.base} values")
        elif not base_ok(v):
            raise ValueError(f"{name!r} needs a {d.base} value")
        values[name] = v
    return Env(values)


# --------------------------------------------------------------------------
# Expressions


def eval_expr(env: Env, e: Expr) -> Value:
    match e:
        case IntLit(v) | BoolLit(v):
            return v
        case Var(name):
            try:
                v = env[name]
            except KeyError:
                raise EvalError(f"unbound variable {name!r}") from None
            if isinstance(v, tuple):
                raise EvalError(f"array {name!r} used as a scalar")
            return v
        case ArrayRead(name, idx):
            try:
                arr = env[name]
            except KeyError:
                raise EvalError(f"unbound array {name!r}") from None
            i = eval_expr(env, idx)
            if not isinstance(arr, tuple):
                raise EvalError(f"{name!r} is not an array")
            if type(i) is not int:
                raise EvalError(f"array index of {name!r} is not an integer")
            if not 1 <= i <= len(arr):
                raise EvalError(f"index {i} out of bounds for {name!r} (length {len(arr)}, 1-based)")
            return arr[i - 1]
        case BinOp(op, l, r):
            a, b = eval_expr(env, l), eval_expr(env, r)
            if op in ("=", "!="):
                if (type(a) is bool) != (type(b) is bool):
                    raise EvalError(f"cannot compare {_show(a)} and {_show(b)}")
                return (a == b) == (op == "=")
            if type(a) is not int or type(b) is not int:
                raise EvalError(f"operator {op!r} needs integers")
            match op:
                case "+":
                    return a + b
                case "-":
                    return a - b
                case "*":
                    return a * b
                case "<":
                    return a < b
                case "<=":
                    return a <= b
    raise EvalError(f"cannot evaluate {e!r}")


def eval_guard(env: Env, e: Expr) -> bool:
    v = eval_expr(env, e)
    if type(v) is not bool:
        raise EvalError("guard is not boolean")
    return v


# --------------------------------------------------------------------------
# Small steps


@dataclass(frozen=True)
class CostModel:
    """Atomic durations of one small step's components."""

    t_e: Fraction = Fraction(0)
    t_x: Fraction = Fraction(0)
    t_asn: Fraction = Fraction(3)
    t_br: Fraction = Fraction(1)
    t_ch: Fraction = Fraction(0)
    t_skip: Fraction = Fraction(1)

    def __post_init__(self):
        for f in fields(self):
            v = Fraction(getattr(self, f.name))
            if v < 0:
                raise ValueError(f"{f.name} must be nonnegative")
            object.__setattr__(self, f.name, v)

    @classmethod
    def profile(cls, name: str) -> "CostModel":
        """`paper-trees` matches the published execution trees; `paper-text` uses the stated t_br = 2."""
        match name:
            case "paper-trees":
                return cls()
            case "paper-text":
                return cls(t_br=Fraction(2))
        raise ValueError(f"unknown cost profile {name!r}")

    def with_overrides(self, **kw) -> "CostModel":
        return replace(self, **{k: Fraction(v) for k, v in kw.items() if v is not None})


@dataclass(frozen=True)
class Config:
    env: Env
    cmd: Command | None = None  # None is the terminated configuration

    @property
    def terminated(self) -> bool:
        return self.cmd is None

    def __repr__(self):
        return f"⟨{self.env!r} | {'√' if self.cmd is None else render_inline(self.cmd)}⟩"


class Transition(NamedTuple):
    prob: Fraction
    dur: Fraction
    next: Config


ONE = Fraction(1)


def step(cfg: Config, cm: CostModel) -> list[Transition]:
    if cfg.terminated:
        raise ValueError("terminated configuration has no steps")
    env, c = cfg.env, cfg.cmd
    match c:
        case Assign(x, e):
            if isinstance(env.get(x), tuple):
                raise EvalError(f"array {x!r} is read-only")
            v = eval_expr(env, e)
            return [Transition(ONE, cm.t_e + cm.t_x + cm.t_asn, Config(env.set(x, v)))]
        case SkipAsn(_, e):
            eval_expr(env, e)
            return [Transition(ONE, cm.t_e + cm.t_asn, Config(env))]
        case Skip():
            return [Transition(ONE, cm.t_skip, Config(env))]
        case If(e, a, b):
            return [Transition(ONE, cm.t_e + cm.t_br, Config(env, a if eval_guard(env, e) else b))]
        case SkipIf(e, body):
            eval_guard(env, e)
            return [Transition(ONE, cm.t_e + cm.t_br, Config(env, body))]
        case While(e, body):
            if eval_guard(env, e):
                return [Transition(ONE, cm.t_e + cm.t_br, Config(env, Seq(body, c)))]
            return [Transition(ONE, cm.t_e + cm.t_br, Config(env))]
        case Seq(first, second):
            out = []
            for p, t, nxt in step(Config(env, first), cm):
                rest = second if nxt.terminated else Seq(nxt.cmd, second)
                out.append(Transition(p, t, Config(nxt.env, rest)))
            return out
        case Choose(p, a, b):
            if isinstance(p, str):
                raise EvalError(f"unbound probability parameter {p!r}")
            branches = [Transition(p, cm.t_ch, Config(env, a)), Transition(1 - p, cm.t_ch, Config(env, b))]
            return [tr for tr in branches if tr.prob > 0]
    raise TypeError(f"not a command: {c!r}")


# --------------------------------------------------------------------------
# Trees


class Edge(NamedTuple):
    prob: Fraction
    dur: Fraction
    child: int


@dataclass(frozen=True)
class TimedTree:
    """Finite execution tree.

    `labels` holds each node's state label (normally a full `Env`);
    `low_vars`, when set, makes `observe` return the low projection.
    """

    root: int
    labels: Mapping[int, Hashable]
    edges: Mapping[int, tuple[Edge, ...]]
    configs: Mapping[int, Config] = field(default_factory=dict)
    low_vars: frozenset[str] | None = None

    def children(self, n: int) -> tuple[Edge, ...]:
        return self.edges.get(n, ())

    def is_leaf(self, n: int) -> bool:
        return not self.edges.get(n)

    def observe(self, n: int) -> Hashable:
        lab = self.labels[n]
        if self.low_vars is not None and isinstance(lab, Env):
            return lab.project(self.low_vars)
        return lab

    def nodes(self) -> list[int]:
        """Reachable nodes in depth-first pre-order."""
        out, stack = [], [self.root]
        while stack:
            n = stack.pop()
            out.append(n)
            stack.extend(e.child for e in reversed(self.children(n)))
        return out

    def leaves(self) -> list[int]:
        return [n for n in self.nodes() if self.is_leaf(n)]

    def heights(self) -> dict[int, int]:
        h: dict[int, int] = {}
        for n in reversed(self.nodes()):
            kids = self.children(n)
            h[n] = 1 + max(h[e.child] for e in kids) if kids else 0
        return h

    def check_generative(self) -> None:
        for n in self.nodes():
            kids = self.children(n)
            if kids and sum(e.prob for e in kids) != 1:
                raise ValueError(f"outgoing probabilities of node {n} do not sum to 1")
            for e in kids:
                if not 0 < e.prob <= 1 or e.dur < 0:
                    raise ValueError(f"bad edge {e} at node {n}")

    @classmethod
    def from_nested(cls, spec, low_vars=None) -> "TimedTree":
        """Build from ``(label, [(prob, dur, subspec), ...])``; a bare label is a leaf."""
        labels, edges = {}, {}

        def go(s) -> int:
            lab, kids = (s, []) if not isinstance(s, tuple) or len(s) != 2 or not isinstance(s[1], list) else s
            nid = len(labels)
            labels[nid] = lab
            out = [Edge(Fraction(p), Fraction(t), go(sub)) for p, t, sub in kids]
            if out:
                edges[nid] = tuple(out)
            return nid

        root = go(spec)
        return cls(root, labels, edges, {}, None if low_vars is None else frozenset(low_vars))

    # export ---------------------------------------------------------------

    def _label_json(self, n: int):
        lab = self.labels[n]
        if isinstance(lab, Env):
            return lab.to_json()
        return lab if isinstance(lab, (int, str, bool)) or lab is None else str(lab)

    def to_json(self) -> str:
        doc = {
            "root": self.root,
            "low_vars": None if self.low_vars is None else sorted(self.low_vars),
            "nodes": [{"id": n, "label": self._label_json(n), "leaf": self.is_leaf(n)} for n in self.nodes()],
            "edges": [
                {"from": n, "to": e.child, "prob": frac_str(e.prob), "dur": frac_str(e.dur)}
                for n in self.nodes() for e in self.children(n)
            ],
        }
        return json.dumps(doc, indent=2)

    def to_dot(self) -> str:
        lines = ["digraph tree {", "  node [shape=box, fontname=monospace];"]
        for n in self.nodes():
            shape = ", shape=ellipse" if self.is_leaf(n) else ""
            text = repr(self.observe(n)).replace('"', r"\"")
            lines.append(f'  n{n} [label="{text}"{shape}];')
        for n in self.nodes():
            for e in self.children(n):
                lines.append(f'  n{n} -> n{e.child} [label="{frac_str(e.prob)} : {frac_str(e.dur)}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        lines = []

        def go(n, depth, head):
            lines.append("  " * depth + head + repr(self.observe(n)))
            for e in self.children(n):
                go(e.child, depth + 1, f"{frac_str(e.prob)}:{frac_str(e.dur)} → ")

        go(self.root, 0, "")
        return "\n".join(lines) + "\n"


def frac_str(x: Fraction) -> str:
    x = Fraction(x)
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


def build_tree(cfg: Config, cm: CostModel | None = None, depth_bound: int = 10_000) -> TimedTree:
    """Unfold `step` exhaustively from `cfg`; raises DepthExceeded past `depth_bound` steps."""
    if depth_bound < 1:
        raise ValueError("depth_bound must be positive")
    cm = cm or CostModel()
    labels: dict[int, Env] = {}
    configs: dict[int, Config] = {}
    edges: dict[int, tuple[Edge, ...]] = {}
    pending: list[tuple[int, int]] = []  # (node, depth)

    def new(c: Config) -> int:
        nid = len(labels)
        labels[nid], configs[nid] = c.env, c
        return nid

    root = new(cfg)
    if not cfg.terminated:
        pending.append((root, 0))
    while pending:
        n, depth = pending.pop()
        if depth >= depth_bound:
            raise DepthExceeded(depth_bound)
        out = []
        for p, t, nxt in step(configs[n], cm):
            child = new(nxt)
            out.append(Edge(p, t, child))
            if not nxt.terminated:
                pending.append((child, depth + 1))
        edges[n] = tuple(out)
    return TimedTree(root, labels, edges, configs)


def program_tree(prog: Program, env: Env, cm: CostModel | None = None, *,
                 depth_bound: int = 10_000, collapsed: bool = True) -> TimedTree:
    t = build_tree(Config(env, prog.body), cm, depth_bound)
    return collapse(t, prog.low_vars()) if collapsed else replace(t, low_vars=prog.low_vars())


# --------------------------------------------------------------------------
# Collapsing


def collapse(t: TimedTree, low_vars) -> TimedTree:
    """Collapsed low-observation tree.

    Each edge bundles one original step with the following run of
    probability-1 steps that leave the low projection unchanged.  Parallel
    edges with equal duration into observably identical subtrees are merged;
    comparing full environments here would let high data shape the tree.  The pass
    is repeated until nothing changes, which makes the result idempotent.
    """
    low = frozenset(low_vars)
    cur = replace(t, low_vars=low)
    while True:
        nxt = _collapse_pass(cur)
        if _shape(nxt) == _shape(cur):
            return nxt
        cur = nxt


def _shape(t: TimedTree):
    return tuple((n, t.children(n)) for n in t.nodes())


def _collapse_pass(t: TimedTree) -> TimedTree:
    obs = t.observe
    absorbed: dict[int, list[Edge]] = {}
    order, stack = [], [t.root]
    while stack:
        u = stack.pop()
        order.append(u)
        out = []
        for e in t.children(u):
            v, dur = e.child, e.dur
            while True:
                kids = t.children(v)
                if len(kids) != 1 or kids[0].prob != 1 or obs(v) != obs(u):
                    break
                dur += kids[0].dur
                v = kids[0].child
            out.append(Edge(e.prob, dur, v))
            stack.append(v)
        absorbed[u] = out

    canon: dict[int, int] = {}
    interned: dict[tuple, int] = {}
    edges: dict[int, tuple[Edge, ...]] = {}
    for u in reversed(order):
        merged: dict[tuple, list] = {}
        for e in absorbed[u]:
            key = (e.dur, canon[e.child])
            if key in merged:
                merged[key][0] += e.prob
            else:
                merged[key] = [e.prob, e.child]
        kids = tuple(Edge(p, d, c) for (d, _), (p, c) in merged.items())
        if kids:
            edges[u] = kids
        sig = (obs(u), frozenset((e.prob, e.dur, canon[e.child]) for e in kids))
        canon[u] = interned.setdefault(sig, len(interned))
    keep = set(canon)
    return TimedTree(
        t.root,
        {n: lab for n, lab in t.labels.items() if n in keep},
        edges,
        {n: c for n, c in t.configs.items() if n in keep},
        t.low_vars,
    )


# --------------------------------------------------------------------------
# Path statistics


class PathInfo(NamedTuple):
    prob: Fraction
    time: Fraction
    leaf: int
    final: Hashable  # observed label of the leaf


@dataclass(frozen=True)
class PathStats:
    paths: tuple[PathInfo, ...]

    @property
    def expected_runtime(self) -> Fraction:
        return sum((p.prob * p.time for p in self.paths), Fraction(0))

    @property
    def total_prob(self) -> Fraction:
        return sum((p.prob for p in self.paths), Fraction(0))

    def joint(self) -> dict[tuple[Hashable, Fraction], Fraction]:
        """Distribution over (final observed label, total time)."""
        out: dict = {}
        for p in self.paths:
            key = (p.final, p.time)
            out[key] = out.get(key, Fraction(0)) + p.prob
        return out


def iter_paths(t: TimedTree) -> Iterator[PathInfo]:
    stack = [(t.root, Fraction(1), Fraction(0))]
    while stack:
        n, p, time = stack.pop()
        kids = t.children(n)
        if not kids:
            yield PathInfo(p, time, n, t.observe(n))
        for e in reversed(kids):
            stack.append((e.child, p * e.prob, time + e.dur))


def run_stats(t: TimedTree) -> PathStats:
    return PathStats(tuple(iter_paths(t)))
