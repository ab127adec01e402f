"""Command-line front end: ``ptleak {check,tree,delta,pad,sweep} FILE ...``.

Exit codes: 0 success, 1 negative analysis result (untypeable program,
padding refused, evaluation failure or divergence), 2 usage, I/O or parse
errors.
"""

from __future__ import annotations

import argparse
import re
import sys
from fractions import Fraction
from pathlib import Path

from . import bisim, costlab
from .lang import DeclError, ParseError, Program, bind_params, params, parse_program, render_program
from .padding import PadError, pad
from .sectype import check_program, gamma_of
from .semantics import (
    CostModel, DepthExceeded, EvalError, build_tree, collapse, initial_env, Config, frac_str,
)


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------
# Argument parsing helpers


def rational(text: str) -> Fraction:
    try:
        return Fraction(text.strip())
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a rational number: {text!r}") from None


def parse_grid(text: str) -> tuple[Fraction, ...]:
    """``a:b:step`` (inclusive) or a comma-separated list of rationals."""
    text = text.strip()
    if not text:
        raise UsageError("empty grid")
    if ":" in text:
        try:
            a, b, s = (Fraction(x) for x in text.split(":"))
        except ValueError:
            raise UsageError(f"bad grid {text!r}") from None
        if s <= 0:
            raise UsageError("grid step must be positive")
        out, x = [], a
        while x <= b:
            out.append(x)
            x += s
        return tuple(out)
    try:
        return tuple(Fraction(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise UsageError(f"bad grid {text!r}") from None


def parse_value(prog: Program, name: str, text: str):
    try:
        d = prog.decl(name)
    except KeyError:
        raise UsageError(f"{name!r} is not declared") from None

    def scalar(tok: str):
        tok = tok.strip()
        if d.base == "bool":
            if tok in ("true", "1"):
                return True
            if tok in ("false", "0"):
                return False
            raise UsageError(f"{name!r} needs a boolean, got {tok!r}")
        try:
            return int(tok)
        except ValueError:
            raise UsageError(f"{name!r} needs an integer, got {tok!r}") from None

    if not d.is_array:
        return scalar(text)
    text = text.strip().strip("[]")
    items = list(text) if re.fullmatch(r"[01]+", text) and len(text) == d.length else text.split(",")
    vals = tuple(scalar(t) for t in items)
    if len(vals) != d.length:
        raise UsageError(f"{name!r} needs {d.length} values")
    return vals


def parse_assignments(prog: Program, specs: list[str], level: str | None = None) -> dict:
    """``name=value`` pairs; a bare value goes to the program's only high array."""
    out = {}
    for spec in specs or []:
        for part in ([spec] if "[" in spec else spec.split(";")):
            if "=" in part:
                name, _, value = part.partition("=")
            else:
                name, value = _only_high_array(prog), part
            name = name.strip()
            out[name] = parse_value(prog, name, value)
            if level and prog.decl(name).level != level:
                raise UsageError(f"{name!r} is not a {level} variable")
    return out


def _only_high_array(prog: Program) -> str:
    arrays = [d.name for d in prog.decls if d.level == "high" and d.is_array]
    if len(arrays) != 1:
        raise UsageError("bare value given but the program has no unique high array")
    return arrays[0]


def high_domain(prog: Program, specs: list[str]) -> tuple[tuple[str, dict], ...]:
    if not specs:
        raise UsageError("--high is required")
    if len(specs) == 1:
        m = re.fullmatch(r"\s*(\w+)\s*=\s*all(\d+)\s*", specs[0])
        if m:
            name, n = m.group(1), int(m.group(2))
            d = prog.decl(name) if name in prog.names else None
            if d is None or not d.is_array or d.length != n:
                raise UsageError(f"{name!r} is not an array of length {n}")
            return costlab.bit_domain(name, n)
    domain = []
    for spec in specs:
        values = parse_assignments(prog, [spec], "high")
        label = ";".join(f"{k}={_show(v)}" for k, v in values.items()) if len(values) > 1 else _show(next(iter(values.values())))
        domain.append((label, values))
    return tuple(domain)


def _show(v) -> str:
    if isinstance(v, tuple):
        return "".join(str(int(x)) for x in v) if all(x in (0, 1) for x in v) else ",".join(map(str, v))
    return str(v).lower() if isinstance(v, bool) else str(v)


def cost_model(args) -> CostModel:
    cm = CostModel.profile(args.profile)
    return cm.with_overrides(t_e=args.t_e, t_x=args.t_x, t_asn=args.t_asn, t_br=args.t_br,
                             t_ch=args.t_ch, t_skip=args.t_skip)


def load(path: str) -> Program:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as err:
        raise UsageError(f"cannot read {path}: {err.strerror}") from None
    return parse_program(text)


def emit(text: str, out: str | None) -> None:
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def bound_program(prog: Program, p: str | None) -> Program:
    names = params(prog.body)
    if not names:
        return prog
    if p is None:
        raise UsageError(f"program has symbolic probabilities {sorted(names)}; pass --p")
    value = rational(p)
    return Program(prog.decls, bind_params(prog.body, {n: value for n in names}))


# --------------------------------------------------------------------------
# Subcommands


def cmd_check(args) -> int:
    prog = load(args.file)
    env = initial_env(prog, parse_assignments(prog, args.env))
    report = check_program(prog, env, cm=cost_model(args), depth_bound=args.depth_bound)
    if args.format == "json":
        emit(report.to_json() + "\n", args.out)
    else:
        lines = ["ok" if report.ok else "not typeable"]
        lines += [f"{f.location}: {f.kind} [{f.rule}] {f.reason}"
                  + (f" (delta = {frac_str(f.delta)})" if f.delta is not None else "") for f in report.failures]
        emit("\n".join(lines) + "\n", args.out)
    return 0 if report.ok else 1


def _tree_for(prog: Program, args, assignments: dict, collapsed: bool = True):
    env = initial_env(prog, assignments)
    t = build_tree(Config(env, prog.body), cost_model(args), args.depth_bound)
    return collapse(t, prog.low_vars()) if collapsed else t


def cmd_tree(args) -> int:
    prog = bound_program(load(args.file), args.p)
    values = parse_assignments(prog, args.low, "low") | parse_assignments(prog, args.high, "high")
    t = _tree_for(prog, args, values, collapsed=not args.raw)
    if args.raw:
        from dataclasses import replace

        t = replace(t, low_vars=prog.low_vars())
    text = {"json": lambda: t.to_json() + "\n", "dot": t.to_dot, "text": t.to_text}[args.format]()
    emit(text, args.out)
    return 0


def cmd_delta(args) -> int:
    prog = bound_program(load(args.file), args.p)
    low = parse_assignments(prog, args.low, "low")
    t1 = _tree_for(prog, args, low | parse_assignments(prog, [args.k1], "high"))
    t2 = _tree_for(prog, args, low | parse_assignments(prog, [args.k2], "high"))
    weights = {"uniform": bisim.Uniform(), "classmatch": bisim.ClassMatch(), "logtime": bisim.LogTime}[args.weights]
    result = bisim.delta(t1, t2, weights)
    if args.format == "json":
        emit(result.to_json() + "\n", args.out)
    else:
        v = result.value
        emit((frac_str(v) if v.denominator <= 10**6 else f"{float(v):.6f}") + "\n", args.out)
    return 0


def cmd_pad(args) -> int:
    prog = load(args.file)
    p = args.p if re.fullmatch(r"[A-Za-z_]\w*", args.p) else rational(args.p)
    out = pad(gamma_of(prog), prog.body, p, p_is_pad_prob=args.p_is_pad_prob)
    emit(render_program(Program(prog.decls, out.transformed), self_assign=args.self_assign), args.out)
    if args.report:
        emit(out.report_json() + "\n", args.report)
    return 0


def cmd_sweep(args) -> int:
    prog = load(args.file)
    grid = parse_grid(args.grid)
    low = parse_assignments(prog, args.low, "low")
    cfg = costlab.SweepConfig(
        prog, high_domain(prog, args.high), grid, args.alpha, cost_model(args),
        initial_env(prog, low), pairs=args.pairs, depth_bound=args.depth_bound,
        p_is_pad_prob=args.p_is_pad_prob,
    )
    records = costlab.sweep(cfg)
    curve = costlab.cost_curve(records)
    line = f"argmin p = {frac_str(curve.argmin)} (cost {frac_str(curve.min_cost)} = {float(curve.min_cost):.6f})\n"
    if args.out == "-":
        sys.stdout.write(costlab.summary_csv(records))
        sys.stderr.write(line)
        return 0
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.csv").write_text(costlab.summary_csv(records), encoding="utf-8")
    (out / "runtimes.csv").write_text(costlab.long_csv(records), encoding="utf-8")
    for r in records:
        tag = frac_str(r.p).replace("/", "-")
        for kind in ("dprime", "delta"):
            (out / f"{kind}_p{tag}.csv").write_text(costlab.delta_matrix_report(records, r.p, kind=kind))
            (out / f"{kind}_p{tag}_decimal.csv").write_text(
                costlab.delta_matrix_report(records, r.p, kind=kind, decimal=True))
    sys.stdout.write(line)
    return 0


# --------------------------------------------------------------------------


def _orientation(p: argparse.ArgumentParser) -> None:
    p.add_argument("--p-is-pad-prob", action=argparse.BooleanOptionalAction, default=True,
                   help="p is the probability of the padded alternative (default)")
    p.add_argument("--table3-orientation", dest="p_is_pad_prob", action="store_false",
                   help="same as --no-p-is-pad-prob: p goes to the original branch")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ptleak", description="Timing-leak analysis for pWhile programs.")
    sub = ap.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("file", help="pWhile source (.pw)")
    common.add_argument("--profile", choices=["paper-trees", "paper-text"], default="paper-trees")
    for name in ("t-e", "t-x", "t-asn", "t-br", "t-ch", "t-skip"):
        common.add_argument(f"--{name}", type=rational, default=None, metavar="T")
    common.add_argument("--depth-bound", type=int, default=10_000)
    common.add_argument("--out", default="-", help="output path, '-' for standard output")

    p = sub.add_parser("check", parents=[common], help="security type check")
    p.add_argument("--env", action="append", default=[], metavar="NAME=VALUE")
    p.add_argument("--format", choices=["json", "text"], default="text")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("tree", parents=[common], help="print an execution tree")
    p.add_argument("--low", action="append", default=[], metavar="NAME=VALUE")
    p.add_argument("--high", action="append", default=[], metavar="NAME=VALUE")
    p.add_argument("--p", default=None, help="value for symbolic choice probabilities")
    p.add_argument("--raw", action="store_true", help="do not collapse")
    p.add_argument("--format", choices=["json", "dot", "text"], default="text")
    p.set_defaults(func=cmd_tree)

    p = sub.add_parser("delta", parents=[common], help="leakage estimate between two high inputs")
    p.add_argument("--k1", required=True, metavar="SPEC")
    p.add_argument("--k2", required=True, metavar="SPEC")
    p.add_argument("--low", action="append", default=[], metavar="NAME=VALUE")
    p.add_argument("--p", default=None)
    p.add_argument("--weights", choices=["uniform", "classmatch", "logtime"], default="uniform")
    p.add_argument("--format", choices=["json", "text"], default="text")
    p.set_defaults(func=cmd_delta)

    p = sub.add_parser("pad", parents=[common], help="apply probabilistic padding")
    p.add_argument("--p", default="p", help="padding probability or parameter name (default: p)")
    _orientation(p)
    p.add_argument("--self-assign", action="store_true", help="print skipAsn x e as x := x")
    p.add_argument("--report", default=None, help="write a JSON report of padded sites")
    p.set_defaults(func=cmd_pad)

    p = sub.add_parser("sweep", parents=[common], help="sweep the padding probability")
    p.add_argument("--high", action="append", default=[], metavar="NAME=allN|NAME=VALUE")
    p.add_argument("--low", action="append", default=[], metavar="NAME=VALUE")
    p.add_argument("--grid", default="0:1:1/10")
    p.add_argument("--alpha", type=rational, default=Fraction(6))
    p.add_argument("--pairs", choices=["unordered", "ordered", "ordered+diagonal"], default="unordered")
    _orientation(p)
    p.set_defaults(func=cmd_sweep)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ParseError, DeclError, argparse.ArgumentTypeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except (PadError, EvalError, DepthExceeded) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
