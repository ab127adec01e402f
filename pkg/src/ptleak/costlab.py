"""Padding-probability sweeps: runtimes, leakage matrices and the cost trade-off."""

from __future__ import annotations

import csv
import io
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from typing import NamedTuple

from .bisim import DeltaPrimeEngine, delta, delta_prime, matrix_csv
from .lang import Program, bind_params, params
from .padding import pad
from .sectype import TypeEnv, gamma_of
from .semantics import CostModel, Env, frac_str, initial_env, program_tree, run_stats

Matrix = tuple[tuple[Fraction, ...], ...]


def default_grid(step: Fraction = Fraction(1, 10)) -> tuple[Fraction, ...]:
    n = int(1 / Fraction(step))
    if Fraction(step) * n != 1:
        raise ValueError("step must divide 1")
    return tuple(Fraction(i, n) for i in range(n + 1))


def bit_domain(name: str, length: int) -> tuple[tuple[str, dict], ...]:
    """All 0/1 vectors for array `name`, labelled like ``011`` (first element leftmost)."""
    return tuple(
        ("".join(map(str, bits)), {name: bits}) for bits in product((0, 1), repeat=length)
    )


@dataclass(frozen=True)
class SweepConfig:
    program: Program
    high_domain: tuple[tuple[str, Mapping], ...]
    grid: tuple[Fraction, ...] = field(default_factory=default_grid)
    alpha: Fraction = Fraction(6)
    cost_model: CostModel = field(default_factory=CostModel)
    low_env: Env | None = None
    gamma: TypeEnv | None = None
    param: str = "p"
    p_is_pad_prob: bool = True
    pairs: str = "unordered"  # or "ordered", "ordered+diagonal"
    depth_bound: int = 10_000

    def __post_init__(self):
        object.__setattr__(self, "grid", tuple(Fraction(p) for p in self.grid))
        object.__setattr__(self, "alpha", Fraction(self.alpha))
        if not self.grid:
            raise ValueError("empty grid")
        if any(not 0 <= p <= 1 for p in self.grid):
            raise ValueError("grid values must lie in [0,1]")
        if any(a >= b for a, b in zip(self.grid, self.grid[1:])):
            raise ValueError("grid must be strictly increasing")
        if not self.high_domain:
            raise ValueError("high domain must be nonempty")
        if self.pairs not in ("unordered", "ordered", "ordered+diagonal"):
            raise ValueError(f"unknown pair convention {self.pairs!r}")

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(lab for lab, _ in self.high_domain)

    def program_at(self, p: Fraction) -> Program:
        """The program with padding probability `p` substituted (padding first if needed)."""
        body = self.program.body
        if self.param not in params(body):
            gamma = self.gamma or gamma_of(self.program)
            body = pad(gamma, body, self.param, p_is_pad_prob=self.p_is_pad_prob).transformed
        return Program(self.program.decls, bind_params(body, {self.param: p}))


@dataclass(frozen=True)
class SweepRecord:
    p: Fraction
    labels: tuple[str, ...]
    runtimes: tuple[Fraction, ...]
    t_avg: Fraction
    delta: Matrix
    dprime: Matrix
    dprime_avg: Fraction
    cost: Fraction

    def runtime(self, label: str) -> Fraction:
        return self.runtimes[self.labels.index(label)]


def average_offdiag(m: Matrix, pairs: str = "unordered") -> Fraction:
    n = len(m)
    if pairs == "ordered+diagonal":
        vals = [m[i][j] for i in range(n) for j in range(n)]
    elif pairs == "ordered":
        vals = [m[i][j] for i in range(n) for j in range(n) if i != j]
    else:
        vals = [m[i][j] for i in range(n) for j in range(i + 1, n)]
    return sum(vals, Fraction(0)) / len(vals) if vals else Fraction(0)


def sweep_point(cfg: SweepConfig, p: Fraction) -> SweepRecord:
    prog = cfg.program_at(p)
    low_env = cfg.low_env if cfg.low_env is not None else initial_env(cfg.program)
    trees = [
        program_tree(prog, Env({**dict(low_env), **initial_env(cfg.program, high).project(high)}),
                     cfg.cost_model, depth_bound=cfg.depth_bound)
        for _, high in cfg.high_domain
    ]
    runtimes = tuple(run_stats(t).expected_runtime for t in trees)
    n = len(trees)
    engine = DeltaPrimeEngine()
    d = [[Fraction(0)] * n for _ in range(n)]
    dp = [[Fraction(0)] * n for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            d[i][j] = d[j][i] = delta(trees[i], trees[j]).value
            dp[i][j] = dp[j][i] = delta_prime(trees[i], trees[j], engine).value
    t_avg = sum(runtimes, Fraction(0)) / n
    dpm = tuple(map(tuple, dp))
    dprime_avg = average_offdiag(dpm, cfg.pairs)
    return SweepRecord(p, cfg.labels, runtimes, t_avg, tuple(map(tuple, d)), dpm, dprime_avg,
                       cfg.alpha * dprime_avg + t_avg)


def sweep(cfg: SweepConfig) -> list[SweepRecord]:
    return [sweep_point(cfg, p) for p in cfg.grid]


class CostCurve(NamedTuple):
    argmin: Fraction
    min_cost: Fraction
    table: tuple[tuple[Fraction, Fraction, Fraction, Fraction], ...]  # (p, t_avg, dprime_avg, cost)


def cost_curve(records: Sequence[SweepRecord], alpha: Fraction | None = None) -> CostCurve:
    """Grid minimum of c(p), ties toward smaller p.  `alpha` re-weights without re-sweeping."""
    if not records:
        raise ValueError("no records")
    rows = []
    for r in records:
        c = r.cost if alpha is None else Fraction(alpha) * r.dprime_avg + r.t_avg
        rows.append((r.p, r.t_avg, r.dprime_avg, c))
    best = min(rows, key=lambda row: (row[3], row[0]))
    return CostCurve(best[0], best[3], tuple(rows))


# --------------------------------------------------------------------------
# CSV output


def _dec(x: Fraction) -> str:
    return f"{float(x):.6f}"


def long_csv(records: Sequence[SweepRecord]) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["p", "key", "expected_runtime", "p_decimal", "expected_runtime_decimal"])
    for r in records:
        for lab, t in zip(r.labels, r.runtimes):
            wr.writerow([frac_str(r.p), lab, frac_str(t), _dec(r.p), _dec(t)])
    return buf.getvalue()


def summary_csv(records: Sequence[SweepRecord]) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    cols = ["p", "t_avg", "dprime_avg", "cost"]
    wr.writerow(cols + [f"{c}_decimal" for c in cols])
    for r in records:
        vals = (r.p, r.t_avg, r.dprime_avg, r.cost)
        wr.writerow([frac_str(v) for v in vals] + [_dec(v) for v in vals])
    return buf.getvalue()


def delta_matrix_report(records: Sequence[SweepRecord], p: Fraction, *, kind: str = "dprime",
                        decimal: bool = False) -> str:
    """Square CSV of the δ′ (or δ, with ``kind="delta"``) matrix at grid point `p`."""
    p = Fraction(p)
    for r in records:
        if r.p == p:
            m = r.dprime if kind == "dprime" else r.delta
            return matrix_csv(r.labels, m, decimal=decimal)
    raise ValueError(f"p = {p} is not on the grid")
