"""Padding sweep over the square-and-multiply example.

Writes summary, runtime and per-p matrix CSVs into a results directory and
prints the cost table with its minimiser.

    python scripts/case_study.py --out results/case_study --alpha 6
"""

import argparse
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

from ptleak.costlab import (
    SweepConfig, bit_domain, cost_curve, default_grid, delta_matrix_report, long_csv, summary_csv, sweep,
)
from ptleak.lang import parse_program
from ptleak.semantics import frac_str

import ptleak

PROGRAMS = Path(ptleak.__file__).parent / "programs"


@dataclass(frozen=True)
class Experiment:
    program: str = "pagat"
    bits: int = 3
    step: Fraction = Fraction(1, 10)
    alpha: Fraction = Fraction(6)
    out: Path = Path("results/case_study")


def run(exp: Experiment) -> None:
    prog = parse_program((PROGRAMS / f"{exp.program}.pw").read_text())
    records = sweep(SweepConfig(prog, bit_domain("k", exp.bits), default_grid(exp.step), alpha=exp.alpha))
    exp.out.mkdir(parents=True, exist_ok=True)
    (exp.out / "summary.csv").write_text(summary_csv(records))
    (exp.out / "runtimes.csv").write_text(long_csv(records))
    for r in records:
        tag = frac_str(r.p).replace("/", "-")
        for kind in ("dprime", "delta"):
            (exp.out / f"{kind}_p{tag}.csv").write_text(delta_matrix_report(records, r.p, kind=kind))

    print(f"{'p':>5} {'t_avg':>8} {'dprime_avg':>11} {'cost':>9}")
    for r in records:
        print(f"{float(r.p):5.2f} {float(r.t_avg):8.3f} {float(r.dprime_avg):11.5f} {float(r.cost):9.4f}")
    curve = cost_curve(records, alpha=exp.alpha)
    print(f"argmin p = {frac_str(curve.argmin)} at alpha = {frac_str(exp.alpha)}")
    half = [r for r in records if r.p == Fraction(1, 2)]
    if half:
        print("\ndelta' at p = 1/2")
        print(delta_matrix_report(records, Fraction(1, 2)))
    print(f"wrote {exp.out}")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--program", default="pagat", choices=["agat", "pagat"])
    ap.add_argument("--bits", type=int, default=3)
    ap.add_argument("--step", type=Fraction, default=Fraction(1, 10))
    ap.add_argument("--alpha", type=Fraction, default=Fraction(6))
    ap.add_argument("--out", type=Path, default=Path("results/case_study"))
    a = ap.parse_args()
    run(Experiment(a.program, a.bits, a.step, a.alpha, a.out))


if __name__ == "__main__":
    main()
