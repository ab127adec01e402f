"""Probabilistic padding of high-guarded branches, plus the global-effect analysis."""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction

from .lang import (
    Assign, Choose, Command, If, Prob, Seq, Skip, SkipAsn, SkipIf, While, render_expr,
    render_inline, seq,
)
from .sectype import ExprTypeError, Level, TypeEnv, type_expr


class PadError(Exception):
    def __init__(self, kind: str, location: str, reason: str):
        self.kind, self.location, self.reason = kind, location, reason
        super().__init__(f"{location}: {kind}: {reason}")


def global_effect(c: Command) -> frozenset[str]:
    """Variables that `c` may write."""
    match c:
        case Assign(x, _):
            return frozenset({x})
        case SkipAsn() | Skip():
            return frozenset()
        case Seq(a, b) | Choose(_, a, b) | If(_, a, b):
            return global_effect(a) | global_effect(b)
        case While(_, body) | SkipIf(_, body):
            return global_effect(body)
    raise TypeError(f"not a command: {c!r}")


@dataclass(frozen=True)
class PadSite:
    location: str
    guard: str
    then_slice: str
    else_slice: str


@dataclass(frozen=True)
class PadOutput:
    transformed: Command
    low_slice: Command
    applied_sites: tuple[PadSite, ...]

    def report_json(self) -> str:
        doc = {
            "low_slice": render_inline(self.low_slice),
            "sites": [vars(s) for s in self.applied_sites],
        }
        return json.dumps(doc, indent=2)


def pad(gamma: TypeEnv, c: Command, p: Prob, *, p_is_pad_prob: bool = True) -> PadOutput:
    """Pad every high-guarded `if` of `c`.

    Each branch becomes a choice between itself and the cross-padded sequence
    (own code followed by the other branch's low slice, or the other way
    round).  With `p_is_pad_prob` the padded alternative gets probability `p`
    and is listed first; otherwise `p` goes to the original branch.
    `p` may be a rational or a parameter name.  Sites whose two branch
    slices are already identical are left as they are.
    """
    if not isinstance(p, str):
        p = Fraction(p)
        if not 0 <= p <= 1:
            raise ValueError("p must lie in [0,1]")
    sites: list[PadSite] = []

    def choice(original: Command, padded: Command) -> Command:
        if p_is_pad_prob:
            return Choose(p, padded, original)
        return Choose(p, original, padded)

    def typ(e, where):
        try:
            return type_expr(gamma, e)
        except ExprTypeError as err:
            raise PadError("BaseTypeMismatch", where, str(err)) from None

    def go(c: Command, path: str) -> tuple[Command, Command]:
        where = f"{c.pos[0]}:{c.pos[1]}" if c.pos else path
        match c:
            case Assign(x, e):
                t = typ(e, where)
                target = gamma.get(x)
                if target is None or target.array or target.base != t.base:
                    raise PadError("BaseTypeMismatch", where, f"ill-typed assignment to {x!r}")
                if target.level == Level.H:
                    return c, SkipAsn(x, e, pos=c.pos)
                if t.level == Level.H:
                    raise PadError("LowAssignFromHigh", where, f"high expression assigned to low {x!r}")
                return c, c
            case SkipAsn() | Skip():
                return c, c
            case Seq(a, b):
                (d1, l1), (d2, l2) = go(a, path + ".0"), go(b, path + ".1")
                return seq(d1, d2), seq(l1, l2)
            case Choose(q, a, b):
                (d1, l1), (d2, l2) = go(a, path + ".left"), go(b, path + ".right")
                return Choose(q, d1, d2, pos=c.pos), Choose(q, l1, l2, pos=c.pos)
            case While(e, body):
                if typ(e, where).level == Level.H:
                    raise PadError("HighGuardOnWhile", where, "loop guard depends on high data")
                d, l = go(body, path + ".body")
                return While(e, d, pos=c.pos), While(e, l, pos=c.pos)
            case SkipIf(e, body):
                d, l = go(body, path + ".body")
                return SkipIf(e, d, pos=c.pos), SkipIf(e, l, pos=c.pos)
            case If(e, a, b):
                level = typ(e, where).level
                (d1, l1), (d2, l2) = go(a, path + ".then"), go(b, path + ".else")
                if level == Level.L:
                    return If(e, d1, d2, pos=c.pos), If(e, l1, l2, pos=c.pos)
                if l1 == l2 and not global_effect(l1):
                    # branches already take the same shape; nothing to pad
                    return If(e, d1, d2, pos=c.pos), SkipIf(e, l1, pos=c.pos)
                for name, sl in (("then", l1), ("else", l2)):
                    if global_effect(sl):
                        raise PadError("NonEmptyLowSliceEffect", where,
                                       f"low slice of the {name} branch writes {sorted(global_effect(sl))}")
                sites.append(PadSite(where, render_expr(e),
                                     render_inline(l1), render_inline(l2)))
                return (
                    If(e, choice(d1, seq(d1, l2)), choice(d2, seq(l1, d2)), pos=c.pos),
                    SkipIf(e, seq(l1, l2), pos=c.pos),
                )
        raise TypeError(f"not a command: {c!r}")

    transformed, low_slice = go(c, "body")
    return PadOutput(transformed, low_slice, tuple(sites))
