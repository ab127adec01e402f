"""Two-level security type system that also computes low slices."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import IntEnum
from fractions import Fraction

from .lang import (
    ArrayRead, Assign, BinOp, BoolLit, Choose, Command, Expr, If, IntLit, Program,
    Seq, Skip, SkipAsn, SkipIf, Var, While, bind_params, params, render_inline,
)
from .semantics import (
    Config, CostModel, DepthExceeded, Env, EvalError, build_tree, collapse, frac_str,
)


class Level(IntEnum):
    L = 0
    H = 1

    def join(self, other: "Level") -> "Level":
        return max(self, other)


@dataclass(frozen=True)
class SecType:
    base: str  # "int" | "bool"
    level: Level
    array: bool = False

    def __str__(self):
        arr = "-array" if self.array else ""
        return f"{self.base.capitalize()}{arr}_{self.level.name}"


TypeEnv = dict[str, SecType]


class ExprTypeError(TypeError):
    pass


def gamma_of(prog: Program) -> TypeEnv:
    return {
        d.name: SecType(d.base, Level.H if d.level == "high" else Level.L, d.is_array)
        for d in prog.decls
    }


def subtype(t1: SecType, t2: SecType) -> bool:
    return t1.base == t2.base and t1.array == t2.array and t1.level <= t2.level


def type_expr(gamma: TypeEnv, e: Expr) -> SecType:
    """Least security type of `e`."""
    match e:
        case IntLit():
            return SecType("int", Level.L)
        case BoolLit():
            return SecType("bool", Level.L)
        case Var(name):
            t = _lookup(gamma, name)
            if t.array:
                raise ExprTypeError(f"array {name!r} used as a scalar")
            return t
        case ArrayRead(name, idx):
            t = _lookup(gamma, name)
            if not t.array:
                raise ExprTypeError(f"{name!r} is not an array")
            i = type_expr(gamma, idx)
            if i.base != "int":
                raise ExprTypeError(f"index of {name!r} must be an integer")
            return SecType(t.base, t.level.join(i.level))
        case BinOp(op, l, r):
            a, b = type_expr(gamma, l), type_expr(gamma, r)
            lvl = a.level.join(b.level)
            if op in ("=", "!="):
                if a.base != b.base:
                    raise ExprTypeError(f"cannot compare {a.base} with {b.base}")
                return SecType("bool", lvl)
            if a.base != "int" or b.base != "int":
                raise ExprTypeError(f"operator {op!r} needs integers, got {a.base} and {b.base}")
            return SecType("bool" if op in ("<", "<=") else "int", lvl)
    raise ExprTypeError(f"not an expression: {e!r}")


def _lookup(gamma: TypeEnv, name: str) -> SecType:
    try:
        return gamma[name]
    except KeyError:
        raise ExprTypeError(f"undeclared identifier {name!r}") from None


# --------------------------------------------------------------------------
# Commands


@dataclass(frozen=True)
class Failure:
    kind: str
    location: str
    rule: str
    reason: str
    delta: Fraction | None = None

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "location": self.location, "rule": self.rule, "reason": self.reason}
        if self.delta is not None:
            d["delta"] = frac_str(self.delta)
        return d


@dataclass(frozen=True)
class TypeReport:
    ok: bool
    low_slice: Command | None
    failures: tuple[Failure, ...] = field(default=())

    def kinds(self) -> set[str]:
        return {f.kind for f in self.failures}

    def to_json(self) -> str:
        doc = {
            "ok": self.ok,
            "low_slice": None if self.low_slice is None else render_inline(self.low_slice),
            "failures": [f.to_dict() for f in self.failures],
        }
        return json.dumps(doc, indent=2)


# stand-in probability for symbolic choices when exploring reachable states
_PROBE = Fraction(1, 2)


class _Checker:
    def __init__(self, gamma: TypeEnv, env: Env | None, cm: CostModel, depth_bound: int):
        self.gamma = gamma
        self.cm = cm
        self.depth_bound = depth_bound
        self.failures: list[Failure] = []
        self.low_vars = frozenset(n for n, t in gamma.items() if t.level == Level.L)
        self.env = env
        self.reached: dict[int, list[Env]] = {}

    def fail(self, kind, where, rule, reason, delta=None):
        self.failures.append(Failure(kind, where, rule, reason, delta))

    def expr(self, e: Expr, where: str, rule: str) -> SecType | None:
        try:
            return type_expr(self.gamma, e)
        except ExprTypeError as err:
            self.fail("BaseTypeMismatch", where, rule, str(err))
            return None

    def explore(self, c: Command) -> None:
        """Record the environments in which each `if` is about to be executed."""
        if self.env is None:
            return
        bound = bind_params(c, {name: _PROBE for name in params(c)})
        origin = {id(b): id(o) for o, b in _paired_ifs(c, bound)}
        try:
            t = build_tree(Config(self.env, bound), self.cm, self.depth_bound)
        except DepthExceeded as err:
            self.fail("DepthExceeded", "program", "-", str(err))
            return
        except EvalError:
            return  # slice checks fall back to the initial environment
        for cfg in t.configs.values():
            cmd = cfg.cmd
            while isinstance(cmd, Seq):
                cmd = cmd.first
            if isinstance(cmd, If):
                envs = self.reached.setdefault(origin[id(cmd)], [])
                if cfg.env not in envs:
                    envs.append(cfg.env)

    def check(self, c: Command, path: str) -> Command | None:
        where = f"{c.pos[0]}:{c.pos[1]}" if c.pos else path
        match c:
            case Assign(x, e):
                target = self.gamma.get(x)
                t = self.expr(e, where, "Assign")
                if target is None:
                    self.fail("BaseTypeMismatch", where, "Assign", f"undeclared identifier {x!r}")
                    return None
                if target.array:
                    self.fail("BaseTypeMismatch", where, "Assign", f"array {x!r} is read-only")
                    return None
                if t is None:
                    return None
                if t.base != target.base:
                    self.fail("BaseTypeMismatch", where, "Assign", f"cannot assign {t.base} to {target.base} {x!r}")
                    return None
                if target.level == Level.H:
                    return SkipAsn(x, e, pos=c.pos)
                if t.level == Level.H:
                    self.fail("LowAssignFromHigh", where, "Assign_L", f"high expression assigned to low {x!r}")
                    return None
                return c
            case SkipAsn(x, e):
                if self.expr(e, where, "SkipAsn") is None:
                    return None
                return c
            case Skip():
                return c
            case Seq(first, second):
                a = self.check(first, path + ".0")
                b = self.check(second, path + ".1")
                return None if a is None or b is None else Seq(a, b, pos=c.pos)
            case Choose(p, left, right):
                a = self.check(left, path + ".left")
                b = self.check(right, path + ".right")
                return None if a is None or b is None else Choose(p, a, b, pos=c.pos)
            case While(e, body):
                t = self.expr(e, where, "While")
                bad = t is None
                if t is not None and t.base != "bool":
                    self.fail("BaseTypeMismatch", where, "While", "loop guard is not boolean")
                    bad = True
                elif t is not None and t.level == Level.H:
                    self.fail("HighGuardOnWhile", where, "While", "loop guard depends on high data")
                    bad = True
                s = self.check(body, path + ".body")
                return None if bad or s is None else While(e, s, pos=c.pos)
            case SkipIf(e, body):
                t = self.expr(e, where, "SkipIf")
                bad = t is None
                if t is not None and t.base != "bool":
                    self.fail("BaseTypeMismatch", where, "SkipIf", "guard is not boolean")
                    bad = True
                s = self.check(body, path + ".body")
                return None if bad or s is None else SkipIf(e, s, pos=c.pos)
            case If(e, then, orelse):
                t = self.expr(e, where, "If")
                bad = t is None
                if t is not None and t.base != "bool":
                    self.fail("BaseTypeMismatch", where, "If", "guard is not boolean")
                    bad = True
                a = self.check(then, path + ".then")
                b = self.check(orelse, path + ".else")
                if bad or a is None or b is None:
                    return None
                if t.level == Level.L:
                    return If(e, a, b, pos=c.pos)
                gap = self.slice_gap(c, a, b, where)
                if gap is None:
                    return None
                if gap != 0:
                    self.fail("BranchesNotBisimilar", where, "If_H",
                              f"low slices {render_inline(a)!r} and {render_inline(b)!r} differ in timing", gap)
                    return None
                return SkipIf(e, a, pos=c.pos)
        raise TypeError(f"not a command: {c!r}")

    def slice_gap(self, node: If, a: Command, b: Command, where: str) -> Fraction | None:
        """Largest δ between the two branch slices over the recorded environments."""
        if a == b:
            return Fraction(0)
        from .bisim import delta

        envs = self.reached.get(id(node)) or ([self.env] if self.env is not None else [])
        if not envs:
            self.fail("BranchesNotBisimilar", where, "If_H", "branch slices differ and no environment to compare them in", Fraction(1))
            return None
        probe = {name: _PROBE for name in params(a) | params(b)}
        a, b = bind_params(a, probe), bind_params(b, probe)
        worst = Fraction(0)
        for env in envs:
            try:
                ta = collapse(build_tree(Config(env, a), self.cm, self.depth_bound), self.low_vars)
                tb = collapse(build_tree(Config(env, b), self.cm, self.depth_bound), self.low_vars)
            except DepthExceeded as err:
                self.fail("DepthExceeded", where, "If_H", str(err))
                return None
            except EvalError as err:
                self.fail("EvalError", where, "If_H", str(err))
                return None
            worst = max(worst, delta(ta, tb).value)
        return worst


def _paired_ifs(orig: Command, bound: Command):
    """Matching `If` nodes of a command and its parameter-bound copy."""
    if isinstance(orig, If):
        yield orig, bound
    for name in ("then", "orelse", "body", "first", "second", "left", "right"):
        if hasattr(orig, name):
            yield from _paired_ifs(getattr(orig, name), getattr(bound, name))


def default_env(gamma: TypeEnv, lengths: dict[str, int] | None = None) -> Env:
    values = {}
    for name, t in gamma.items():
        zero = False if t.base == "bool" else 0
        values[name] = (zero,) * (lengths or {}).get(name, 1) if t.array else zero
    return Env(values)


def check_command(gamma: TypeEnv, c: Command, env: Env | None = None, *,
                  cm: CostModel | None = None, depth_bound: int = 10_000) -> TypeReport:
    """Type `c`; on success the report carries its low slice.

    The side condition of a high-guarded `if` compares the two branch slices
    semantically in every environment in which that `if` is reached when `c`
    runs from `env` (default: all variables zero/false).
    """
    checker = _Checker(gamma, env if env is not None else default_env(gamma), cm or CostModel(), depth_bound)
    checker.explore(c)
    slice_ = checker.check(c, "body")
    failures = tuple(checker.failures)
    ok = not failures and slice_ is not None
    return TypeReport(ok, slice_ if ok else None, failures)


def check_program(prog: Program, env: Env | None = None, **kw) -> TypeReport:
    from .semantics import initial_env

    return check_command(gamma_of(prog), prog.body, env if env is not None else initial_env(prog), **kw)
