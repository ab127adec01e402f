"""Abstract syntax, parser and pretty-printer for pWhile.

Concrete syntax::

    i low int = 1;           // declarations: name level base [array n] [= init];
    k high int array 3;
    while i <= 3 do
      if k[i] == 1 then choose p: s := s; skip or q: s := s ro
      else skip fi;
      i := i + 1
    od

Choice probabilities are exact rationals (``1/3``, ``0.25``) or a parameter
name such as ``p`` that is bound later with :func:`bind_params`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Union

# --------------------------------------------------------------------------
# Expressions

ARITH_OPS = ("+", "-", "*")
CMP_OPS = ("=", "!=", "<", "<=")


@dataclass(frozen=True)
class IntLit:
    value: int


@dataclass(frozen=True)
class BoolLit:
    value: bool


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class ArrayRead:
    name: str
    index: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"

    def __post_init__(self):
        if self.op not in ARITH_OPS + CMP_OPS:
            raise ValueError(f"unknown operator {self.op!r}")


Expr = Union[IntLit, BoolLit, Var, ArrayRead, BinOp]

# --------------------------------------------------------------------------
# Commands.  `pos` is the (line, column) of the first token; it takes no part
# in equality so that parsed and constructed trees compare structurally.

Pos = tuple[int, int] | None
Prob = Union[Fraction, str]


def _pos() -> Pos:
    return field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Assign:
    x: str
    e: Expr
    pos: Pos = _pos()


@dataclass(frozen=True)
class SkipAsn:
    x: str
    e: Expr
    pos: Pos = _pos()


@dataclass(frozen=True)
class Skip:
    pos: Pos = _pos()


@dataclass(frozen=True)
class If:
    e: Expr
    then: "Command"
    orelse: "Command"
    pos: Pos = _pos()


@dataclass(frozen=True)
class SkipIf:
    e: Expr
    body: "Command"
    pos: Pos = _pos()


@dataclass(frozen=True)
class While:
    e: Expr
    body: "Command"
    pos: Pos = _pos()


@dataclass(frozen=True)
class Seq:
    first: "Command"
    second: "Command"
    pos: Pos = _pos()


@dataclass(frozen=True)
class Choose:
    p: Prob
    left: "Command"
    right: "Command"
    pos: Pos = _pos()

    def __post_init__(self):
        if isinstance(self.p, str):
            if not _IDENT.fullmatch(self.p):
                raise ValueError(f"bad probability parameter {self.p!r}")
        else:
            object.__setattr__(self, "p", Fraction(self.p))
            if not 0 <= self.p <= 1:
                raise ValueError(f"probability {self.p} outside [0,1]")


Command = Union[Assign, SkipAsn, Skip, If, SkipIf, While, Seq, Choose]


def seq(*cmds: Command) -> Command:
    """Right-associated sequence of `cmds`, flattening nested Seq nodes."""
    flat: list[Command] = []
    for c in cmds:
        flat.extend(seq_items(c))
    if not flat:
        raise ValueError("empty sequence")
    out = flat[-1]
    for c in reversed(flat[:-1]):
        out = Seq(c, out, pos=c.pos)
    return out


def seq_items(c: Command) -> list[Command]:
    if isinstance(c, Seq):
        return seq_items(c.first) + seq_items(c.second)
    return [c]


# --------------------------------------------------------------------------
# Programs

Literal = Union[int, bool, tuple]


@dataclass(frozen=True)
class Decl:
    name: str
    level: str  # "low" | "high"
    base: str  # "int" | "bool"
    length: int | None = None
    init: Literal | None = None

    @property
    def is_array(self) -> bool:
        return self.length is not None

    def default(self) -> Literal:
        if self.init is not None:
            return self.init
        zero = False if self.base == "bool" else 0
        return (zero,) * self.length if self.is_array else zero


@dataclass(frozen=True)
class Program:
    decls: tuple[Decl, ...]
    body: Command

    def decl(self, name: str) -> Decl:
        for d in self.decls:
            if d.name == name:
                return d
        raise KeyError(name)

    @property
    def names(self) -> list[str]:
        return [d.name for d in self.decls]

    def low_vars(self) -> frozenset[str]:
        return frozenset(d.name for d in self.decls if d.level == "low")

    def high_vars(self) -> frozenset[str]:
        return frozenset(d.name for d in self.decls if d.level == "high")


# --------------------------------------------------------------------------
# Errors


class ParseError(Exception):
    def __init__(self, msg: str, line: int, col: int, expected: frozenset[str] = frozenset()):
        self.msg, self.line, self.col, self.expected = msg, line, col, frozenset(expected)
        exp = f" (expected one of: {', '.join(sorted(self.expected))})" if self.expected else ""
        super().__init__(f"{line}:{col}: {msg}{exp}")


class DeclError(Exception):
    pass


# --------------------------------------------------------------------------
# Tokenizer

KEYWORDS = {
    "if", "then", "else", "fi", "while", "do", "od", "choose", "or", "ro",
    "skip", "skipAsn", "skipIf", "true", "false", "low", "high", "int", "bool", "array",
}

_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_TOKEN = re.compile(
    r"(?P<ws>[ \t\r\n]+)|(?P<comment>//[^\n]*)"
    r"|(?P<num>\d+(?:\.\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>:=|==|!=|<=|[-+*=<;:()\[\]/,])"
)


@dataclass(frozen=True)
class Token:
    kind: str  # num, name, kw, op, eof
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Token]:
    toks: list[Token] = []
    line, line_start, i = 1, 0, 0
    while i < len(text):
        m = _TOKEN.match(text, i)
        if m is None:
            raise ParseError(f"unexpected character {text[i]!r}", line, i - line_start + 1)
        kind, lexeme = m.lastgroup, m.group()
        if kind in ("num", "name", "op"):
            if kind == "name" and lexeme in KEYWORDS:
                kind = "kw"
            toks.append(Token(kind, lexeme, line, i - line_start + 1))
        for j, ch in enumerate(lexeme):
            if ch == "\n":
                line, line_start = line + 1, i + j + 1
        i = m.end()
    toks.append(Token("eof", "", line, i - line_start + 1))
    return toks


# --------------------------------------------------------------------------
# Parser

_STOP = {"else", "fi", "od", "or", "ro", ")"}


class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def at(self, *texts: str) -> bool:
        return self.tok.kind in ("kw", "op") and self.tok.text in texts

    def fail(self, expected: set[str], msg: str | None = None):
        t = self.tok
        got = "end of input" if t.kind == "eof" else repr(t.text)
        raise ParseError(msg or f"unexpected {got}", t.line, t.col, frozenset(expected))

    def advance(self) -> Token:
        t = self.tok
        self.i += 1
        return t

    def expect(self, text: str) -> Token:
        if not self.at(text):
            self.fail({text})
        return self.advance()

    def ident(self) -> Token:
        if self.tok.kind != "name":
            self.fail({"<identifier>"})
        return self.advance()

    # program -------------------------------------------------------------

    def program(self) -> tuple[list[tuple[Decl, Token]], Command]:
        decls = []
        while self.tok.kind == "name" and self.peek().kind == "kw" and self.peek().text in ("low", "high"):
            decls.append(self.decl())
        body = self.sequence()
        if self.tok.kind != "eof":
            self.fail({";", "<end of input>"})
        return decls, body

    def decl(self) -> tuple[Decl, Token]:
        name = self.ident()
        level = self.advance().text
        if not self.at("int", "bool"):
            self.fail({"int", "bool"})
        base = self.advance().text
        length = None
        if self.at("array"):
            self.advance()
            if self.tok.kind != "num" or not self.tok.text.isdigit() or int(self.tok.text) < 1:
                self.fail({"<positive length>"})
            length = int(self.advance().text)
        init = None
        if self.at("=", "=="):
            self.advance()
            init = self.decl_init(base, length)
        self.expect(";")
        return Decl(name.text, level, base, length, init), name

    def scalar_literal(self, base: str):
        if base == "bool":
            if not self.at("true", "false"):
                self.fail({"true", "false"})
            return self.advance().text == "true"
        neg = False
        if self.at("-"):
            self.advance()
            neg = True
        if self.tok.kind != "num" or not self.tok.text.isdigit():
            self.fail({"<integer>"})
        v = int(self.advance().text)
        return -v if neg else v

    def decl_init(self, base: str, length: int | None):
        if length is None:
            return self.scalar_literal(base)
        self.expect("[")
        vals = [self.scalar_literal(base)]
        while self.at(","):
            self.advance()
            vals.append(self.scalar_literal(base))
        self.expect("]")
        if len(vals) != length:
            self.fail(set(), f"array initializer has {len(vals)} elements, declared length {length}")
        return tuple(vals)

    # commands ------------------------------------------------------------

    def sequence(self) -> Command:
        cmds = [self.command()]
        while self.at(";"):
            self.advance()
            if self.tok.kind == "eof" or self.at(*_STOP):
                break  # trailing separator
            cmds.append(self.command())
        return seq(*cmds)

    def command(self) -> Command:
        t = self.tok
        pos = (t.line, t.col)
        if t.kind == "name":
            self.advance()
            self.expect(":=")
            return Assign(t.text, self.expr(), pos=pos)
        if t.kind == "kw":
            match t.text:
                case "skip":
                    self.advance()
                    return Skip(pos=pos)
                case "skipAsn":
                    self.advance()
                    x = self.ident().text
                    return SkipAsn(x, self.expr(), pos=pos)
                case "skipIf":
                    self.advance()
                    e = self.expr()
                    return SkipIf(e, self.command(), pos=pos)
                case "if":
                    self.advance()
                    e = self.expr()
                    self.expect("then")
                    c = self.sequence()
                    self.expect("else")
                    d = self.sequence()
                    self.expect("fi")
                    return If(e, c, d, pos=pos)
                case "while":
                    self.advance()
                    e = self.expr()
                    self.expect("do")
                    body = self.sequence()
                    self.expect("od")
                    return While(e, body, pos=pos)
                case "choose":
                    return self.choose(pos)
        if self.at("("):
            self.advance()
            c = self.sequence()
            self.expect(")")
            return c
        self.fail({"<identifier>", "skip", "skipAsn", "skipIf", "if", "while", "choose", "("})

    def prob(self) -> Prob:
        t = self.tok
        if t.kind == "name":
            self.advance()
            return t.text
        if t.kind != "num":
            self.fail({"<probability>"})
        self.advance()
        value = Fraction(t.text)
        if self.at("/"):
            self.advance()
            d = self.tok
            if d.kind != "num" or not d.text.isdigit() or int(d.text) == 0:
                self.fail({"<positive integer>"})
            self.advance()
            value /= int(d.text)
        if not 0 <= value <= 1:
            raise ParseError(f"probability {value} outside [0,1]", t.line, t.col)
        return value

    def choose(self, pos) -> Choose:
        self.advance()
        p = self.prob()
        self.expect(":")
        left = self.sequence()
        self.expect("or")
        named = self.tok.kind == "name" and self.peek().kind == "op" and self.peek().text == ":"
        if named or self.tok.kind == "num":
            t = self.tok
            q = self.prob()
            self.expect(":")
            if isinstance(p, Fraction) != isinstance(q, Fraction) or (
                isinstance(p, Fraction) and p + q != 1
            ) or (isinstance(p, str) and p == q):
                raise ParseError("second weight must be the complement of the first", t.line, t.col)
        right = self.sequence()
        self.expect("ro")
        return Choose(p, left, right, pos=pos)

    # expressions (precedence climbing: comparison < additive < multiplicative)

    def expr(self) -> Expr:
        left = self.additive()
        if self.at("=", "==", "!=", "<", "<="):
            op = self.advance().text
            op = "=" if op == "==" else op
            left = BinOp(op, left, self.additive())
            if self.at("=", "==", "!=", "<", "<="):
                self.fail(set(), "comparison operators are non-associative")
        return left

    def additive(self) -> Expr:
        left = self.term()
        while self.at("+", "-"):
            op = self.advance().text
            left = BinOp(op, left, self.term())
        return left

    def term(self) -> Expr:
        left = self.atom()
        while self.at("*"):
            self.advance()
            left = BinOp("*", left, self.atom())
        return left

    def atom(self) -> Expr:
        t = self.tok
        if t.kind == "num":
            if not t.text.isdigit():
                self.fail({"<integer>"})
            self.advance()
            return IntLit(int(t.text))
        if self.at("-") and self.peek().kind == "num" and self.peek().text.isdigit():
            self.advance()
            return IntLit(-int(self.advance().text))
        if self.at("true", "false"):
            return BoolLit(self.advance().text == "true")
        if t.kind == "name":
            self.advance()
            if self.at("["):
                self.advance()
                idx = self.expr()
                self.expect("]")
                return ArrayRead(t.text, idx)
            return Var(t.text)
        if self.at("("):
            self.advance()
            e = self.expr()
            self.expect(")")
            return e
        self.fail({"<integer>", "<identifier>", "true", "false", "("})


def parse_command(text: str) -> Command:
    """Parse a bare command (no declarations, no scope checks)."""
    p = _Parser(text)
    c = p.sequence()
    if p.tok.kind != "eof":
        p.fail({";", "<end of input>"})
    return c


def parse_expr(text: str) -> Expr:
    p = _Parser(text)
    e = p.expr()
    if p.tok.kind != "eof":
        p.fail({"<end of input>"})
    return e


def parse_program(text: str) -> Program:
    p = _Parser(text)
    entries, body = p.program()
    seen: set[str] = set()
    for d, tok in entries:
        if d.name in seen:
            raise DeclError(f"{tok.line}:{tok.col}: duplicate declaration of {d.name!r}")
        seen.add(d.name)
    prog = Program(tuple(d for d, _ in entries), body)
    check_scope(prog)
    return prog


def check_scope(prog: Program) -> None:
    declared = {d.name: d for d in prog.decls}
    undeclared = sorted(free_vars(prog.body) - declared.keys())
    if undeclared:
        raise DeclError(f"undeclared identifiers: {', '.join(undeclared)}")
    for name, is_array_use in _uses(prog.body):
        if declared[name].is_array != is_array_use:
            kind = "array" if declared[name].is_array else "scalar"
            raise DeclError(f"{name!r} is declared as {kind} but used otherwise")


def _uses(t) -> Iterator[tuple[str, bool]]:
    match t:
        case Var(name):
            yield name, False
        case ArrayRead(name, idx):
            yield name, True
            yield from _uses(idx)
        case Assign(x, e) | SkipAsn(x, e):
            yield x, False
            yield from _uses(e)
        case _:
            for child in _children(t):
                yield from _uses(child)


def _children(t) -> tuple:
    match t:
        case BinOp(_, l, r):
            return (l, r)
        case ArrayRead(_, idx):
            return (idx,)
        case Assign(_, e) | SkipAsn(_, e):
            return (e,)
        case If(e, c, d):
            return (e, c, d)
        case SkipIf(e, c) | While(e, c):
            return (e, c)
        case Seq(c, d) | Choose(_, c, d):
            return (c, d)
        case _:
            return ()


def free_vars(t: Command | Expr) -> frozenset[str]:
    """All identifiers occurring in `t` (array names included, parameters excluded)."""
    match t:
        case Var(name):
            return frozenset({name})
        case ArrayRead(name, idx):
            return frozenset({name}) | free_vars(idx)
        case Assign(x, e) | SkipAsn(x, e):
            return frozenset({x}) | free_vars(e)
        case _:
            out: frozenset[str] = frozenset()
            for child in _children(t):
                out |= free_vars(child)
            return out


def params(c: Command) -> frozenset[str]:
    """Names used as symbolic choice probabilities."""
    own = {c.p} if isinstance(c, Choose) and isinstance(c.p, str) else set()
    for child in _children(c):
        if not isinstance(child, (IntLit, BoolLit, Var, ArrayRead, BinOp)):
            own |= params(child)
    return frozenset(own)


def bind_params(c: Command, values: dict[str, Fraction]) -> Command:
    """Replace symbolic choice probabilities by the given rationals."""
    match c:
        case Choose(p, l, r):
            if isinstance(p, str) and p in values:
                p = Fraction(values[p])
            return Choose(p, bind_params(l, values), bind_params(r, values), pos=c.pos)
        case If(e, a, b):
            return If(e, bind_params(a, values), bind_params(b, values), pos=c.pos)
        case SkipIf(e, body):
            return SkipIf(e, bind_params(body, values), pos=c.pos)
        case While(e, body):
            return While(e, bind_params(body, values), pos=c.pos)
        case Seq(a, b):
            return Seq(bind_params(a, values), bind_params(b, values), pos=c.pos)
        case _:
            return c


# --------------------------------------------------------------------------
# Rendering

_PREC = {"=": 0, "!=": 0, "<": 0, "<=": 0, "+": 1, "-": 1, "*": 2}


def render_prob(p: Prob) -> str:
    if isinstance(p, str):
        return p
    return str(p.numerator) if p.denominator == 1 else f"{p.numerator}/{p.denominator}"


def render_expr(e: Expr, prec: int = 0) -> str:
    match e:
        case IntLit(v):
            return str(v)
        case BoolLit(v):
            return "true" if v else "false"
        case Var(name):
            return name
        case ArrayRead(name, idx):
            return f"{name}[{render_expr(idx)}]"
        case BinOp(op, l, r):
            mine = _PREC[op]
            # left-assoc for arithmetic; comparisons are non-associative
            text = f"{render_expr(l, mine if mine else 1)} {'==' if op == '=' else op} {render_expr(r, mine + 1)}"
            return f"({text})" if mine < prec else text
    raise TypeError(f"not an expression: {e!r}")


def render_command(c: Command, indent: int = 0, *, self_assign: bool = False) -> str:
    """Pretty-print `c`.  With `self_assign`, `skipAsn x e` prints as `x := x`."""
    pad = "  " * indent

    def sub(cmd, extra=1):
        return render_command(cmd, indent + extra, self_assign=self_assign)

    match c:
        case Seq():
            return ";\n".join(render_command(x, indent, self_assign=self_assign) for x in seq_items(c))
        case Assign(x, e):
            return f"{pad}{x} := {render_expr(e)}"
        case SkipAsn(x, e):
            return f"{pad}{x} := {x}" if self_assign else f"{pad}skipAsn {x} {render_expr(e)}"
        case Skip():
            return f"{pad}skip"
        case If(e, a, b):
            return f"{pad}if {render_expr(e)} then\n{sub(a)}\n{pad}else\n{sub(b)}\n{pad}fi"
        case While(e, body):
            return f"{pad}while {render_expr(e)} do\n{sub(body)}\n{pad}od"
        case SkipIf(e, body):
            return f"{pad}skipIf {render_expr(e)} (\n{sub(body)}\n{pad})"
        case Choose(p, a, b):
            return f"{pad}choose {render_prob(p)}:\n{sub(a)}\n{pad}or\n{sub(b)}\n{pad}ro"
    raise TypeError(f"not a command: {c!r}")


def render_inline(c: Command, *, self_assign: bool = False) -> str:
    """Single-line rendering, e.g. ``choose 1/2: skip or l := 1 ro``."""
    match c:
        case Seq():
            return "; ".join(render_inline(x, self_assign=self_assign) for x in seq_items(c))
        case Assign(x, e):
            return f"{x} := {render_expr(e)}"
        case SkipAsn(x, e):
            return f"{x} := {x}" if self_assign else f"skipAsn {x} {render_expr(e)}"
        case Skip():
            return "skip"
        case If(e, a, b):
            return f"if {render_expr(e)} then {render_inline(a, self_assign=self_assign)} else {render_inline(b, self_assign=self_assign)} fi"
        case While(e, body):
            return f"while {render_expr(e)} do {render_inline(body, self_assign=self_assign)} od"
        case SkipIf(e, body):
            return f"skipIf {render_expr(e)} ({render_inline(body, self_assign=self_assign)})"
        case Choose(p, a, b):
            return f"choose {render_prob(p)}: {render_inline(a, self_assign=self_assign)} or {render_inline(b, self_assign=self_assign)} ro"
    raise TypeError(f"not a command: {c!r}")


def _render_literal(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return "[" + ", ".join(_render_literal(x) for x in v) + "]"
    return str(v)


def render_decl(d: Decl) -> str:
    text = f"{d.name} {d.level} {d.base}"
    if d.is_array:
        text += f" array {d.length}"
    if d.init is not None:
        text += f" = {_render_literal(d.init)}"
    return text + ";"


def render_program(prog: Program, *, self_assign: bool = False) -> str:
    lines = [render_decl(d) for d in prog.decls]
    lines.append(render_command(prog.body, self_assign=self_assign))
    return "\n".join(lines) + "\n"
