"""Concrete syntax shared by formulas, sketches and lemma libraries.

Precedence, loosest first: ``<->`` (sugar), ``->`` (right-assoc), ``\\/``,
``/\\``, ``~``. Quantifiers ``forall x:S. body`` extend as far right as
possible. Atoms are ``P(t, ...)``, ``t = t``, ``t != t`` and the four integer
comparisons.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping

from .logic import (
    CMP_OPS,
    QUANT,
    And,
    Arith,
    Bot,
    Cmp,
    Eq,
    Exists,
    Fn,
    Forall,
    Formula,
    Iff,
    Imp,
    IntLit,
    LogicError,
    Not,
    Or,
    Pred,
    Signature,
    Term,
    Top,
    Var,
    children,
    with_children,
)


class ParseError(Exception):
    def __init__(self, message: str, line: int = 0, col: int = 0):
        super().__init__(f"{line}:{col}: {message}" if line else message)
        self.message = message
        self.line = line
        self.col = col


@dataclass(frozen=True)
class Token:
    kind: str  # IDENT, INT, SYM, EOF
    text: str
    line: int
    col: int


_SYMBOLS = ["<->", "->", "/\\", "\\/", "<=", ">=", "!=", ":=", "~", "<", ">", "=", ":", ";", ",", ".", "(", ")", "{", "}", "[", "]", "+", "-", "*"]
_TOKEN_RE = re.compile(
    r"(?P<ws>[ \t\r]+)|(?P<nl>\n)|(?P<comment>//[^\n]*)"
    r"|(?P<ident>[A-Za-z][A-Za-z0-9_']*)|(?P<int>[0-9]+)"
    r"|(?P<sym>" + "|".join(re.escape(s) for s in _SYMBOLS) + ")"
)
KEYWORDS = frozenset({"forall", "exists", "true", "false"})


def tokenize(text: str) -> list[Token]:
    out: list[Token] = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        col = pos - line_start + 1
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind == "ident":
            out.append(Token("IDENT", m.group(), line, col))
        elif kind == "int":
            out.append(Token("INT", m.group(), line, col))
        elif kind == "sym":
            out.append(Token("SYM", m.group(), line, col))
        pos = m.end()
    out.append(Token("EOF", "", line, pos - line_start + 1))
    return out


class Parser:
    """Recursive-descent parser over a token list.

    Bare identifiers in term position come out as ``Var(name, None)`` unless
    bound by an enclosing quantifier; :func:`resolve` later turns them into
    constants or eigenvariables against a signature.
    """

    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0
        self.bound: list[tuple[str, str]] = []

    # -- token plumbing
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def at(self, text: str) -> bool:
        t = self.tok
        return t.kind in ("SYM", "IDENT") and t.text == text

    def error(self, msg: str, tok: Token | None = None) -> ParseError:
        t = tok or self.tok
        return ParseError(msg, t.line, t.col)

    def expect(self, text: str) -> Token:
        if not self.at(text):
            got = self.tok.text or "end of input"
            raise self.error(f"expected {text!r}, got {got!r}")
        t = self.tok
        self.i += 1
        return t

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.i += 1
            return True
        return False

    def ident(self, what: str = "identifier") -> str:
        t = self.tok
        if t.kind != "IDENT" or t.text in KEYWORDS:
            raise self.error(f"expected {what}, got {t.text or 'end of input'!r}")
        self.i += 1
        return t.text

    def integer(self) -> int:
        neg = self.accept("-")
        t = self.tok
        if t.kind != "INT":
            raise self.error(f"expected integer, got {t.text!r}")
        self.i += 1
        return -int(t.text) if neg else int(t.text)

    def eof(self) -> None:
        if self.tok.kind != "EOF":
            raise self.error(f"unexpected {self.tok.text!r}")

    # -- formulas
    def formula(self) -> Formula:
        lhs = self.imp()
        if self.accept("<->"):
            return Iff(lhs, self.imp())
        return lhs

    def imp(self) -> Formula:
        lhs = self.disj()
        if self.accept("->"):
            return Imp(lhs, self.imp())
        return lhs

    def disj(self) -> Formula:
        f = self.conj()
        while self.accept("\\/"):
            f = Or(f, self.conj())
        return f

    def conj(self) -> Formula:
        f = self.unary()
        while self.accept("/\\"):
            f = And(f, self.unary())
        return f

    def unary(self) -> Formula:
        if self.accept("~"):
            return Not(self.unary())
        if self.at("forall") or self.at("exists"):
            cls = Forall if self.tok.text == "forall" else Exists
            self.i += 1
            var = self.ident("bound variable")
            self.expect(":")
            sort = self.ident("sort")
            self.expect(".")
            self.bound.append((var, sort))
            try:
                body = self.formula()
            finally:
                self.bound.pop()
            return cls(var, sort, body)
        return self.primary()

    def primary(self) -> Formula:
        if self.accept("true"):
            return Top()
        if self.accept("false"):
            return Bot()
        if self.at("("):
            save = self.i
            try:
                return self.atom(require_relation=True)
            except ParseError:
                self.i = save
            self.expect("(")
            f = self.formula()
            self.expect(")")
            return f
        return self.atom(require_relation=False)

    def atom(self, require_relation: bool) -> Formula:
        start = self.tok
        lhs = self.term()
        t = self.tok
        if t.kind == "SYM" and t.text in CMP_OPS + ("=", "!="):
            self.i += 1
            rhs = self.term()
            if t.text == "=":
                return Eq(lhs, rhs)
            if t.text == "!=":
                return Not(Eq(lhs, rhs))
            return Cmp(t.text, lhs, rhs)
        if require_relation:
            raise self.error("expected relation")
        if isinstance(lhs, Fn) and lhs.sort is None:
            return Pred(lhs.name, lhs.args)
        if isinstance(lhs, Var) and lhs.sort is None:
            return Pred(lhs.name, ())
        raise self.error("expected a formula", start)

    # -- terms
    def term(self) -> Term:
        t = self.product()
        while self.tok.kind == "SYM" and self.tok.text in ("+", "-"):
            op = self.tok.text
            self.i += 1
            t = Arith(op, (t, self.product()))
        return t

    def product(self) -> Term:
        t = self.signed()
        while self.at("*"):
            star = self.tok
            self.i += 1
            rhs = self.signed()
            try:
                t = Arith("*", (t, rhs))
            except LogicError:
                raise self.error("non-linear multiplication (left factor must be an integer literal)", star) from None
        return t

    def signed(self) -> Term:
        if self.accept("-"):
            t = self.signed()
            if isinstance(t, IntLit):
                return IntLit(-t.value)
            return Arith("*", (IntLit(-1), t))
        return self.term_primary()

    def term_primary(self) -> Term:
        t = self.tok
        if t.kind == "INT":
            self.i += 1
            return IntLit(int(t.text))
        if self.accept("("):
            inner = self.term()
            self.expect(")")
            return inner
        name = self.ident("term")
        if self.accept("("):
            args = [self.term()]
            while self.accept(","):
                args.append(self.term())
            self.expect(")")
            return Fn(name, tuple(args))
        for var, sort in reversed(self.bound):
            if var == name:
                return Var(name, sort)
        return Var(name, None)

    def dotted(self) -> str:
        """Fact reference: IDENT ('.' IDENT)*."""
        parts = [self.ident("fact name")]
        while self.at(".") and self.peek().kind == "IDENT":
            self.i += 1
            parts.append(self.ident("fact name"))
        return ".".join(parts)


def resolve(x, sig: Signature | None, scope: Mapping[str, str] | None = None):
    """Attach sorts to parsed expressions.

    Unannotated bare names become eigenvariables from ``scope`` or constants
    of ``sig``; anything else is left as ``Var(name, None)`` for the sort
    checker to report.
    """
    scope = scope or {}
    return _resolve(x, sig, scope, ())


def _resolve(x, sig, scope, bound):
    if isinstance(x, Var):
        if x.sort is not None or x.name in bound:
            return x
        if x.name in scope:
            return Var(x.name, scope[x.name])
        if sig is not None and x.name in sig.constants:
            return Fn(x.name, (), sig.constants[x.name])
        return x
    if isinstance(x, Fn):
        args = tuple(_resolve(a, sig, scope, bound) for a in x.args)
        sort = x.sort
        if sort is None and sig is not None:
            sort = sig.fn_sort(x.name) if args else sig.constants.get(x.name)
        return Fn(x.name, args, sort)
    if isinstance(x, QUANT):
        return type(x)(x.var, x.sort, _resolve(x.body, sig, scope, bound + (x.var,)))
    kids = children(x)
    if not kids:
        return x
    return with_children(x, tuple(_resolve(c, sig, scope, bound) for c in kids))


def parse_formula(text: str, sig: Signature | None = None, scope: Mapping[str, str] | None = None) -> Formula:
    p = Parser(text)
    f = p.formula()
    p.eof()
    return resolve(f, sig, scope)


def parse_term(text: str, sig: Signature | None = None, scope: Mapping[str, str] | None = None) -> Term:
    p = Parser(text)
    t = p.term()
    p.eof()
    return resolve(t, sig, scope)


# ----------------------------------------------------------------- rendering


def render_term(t: Term) -> str:
    return _rt(t, 0)


def _rt(t: Term, ctx: int) -> str:
    # ctx: 0 = sum operand (left), 1 = right operand of +/-, 2 = factor
    if isinstance(t, IntLit):
        s = str(t.value)
        return f"({s})" if t.value < 0 and ctx == 2 else s
    if isinstance(t, Var):
        return t.name
    if isinstance(t, Fn):
        if not t.args:
            return t.name
        return f"{t.name}({', '.join(_rt(a, 0) for a in t.args)})"
    if isinstance(t, Arith):
        a, b = t.args
        if t.op == "*":
            s = f"{_rt(a, 0)} * {_rt(b, 2)}"
            return f"({s})" if ctx == 2 else s
        s = f"{_rt(a, 0)} {t.op} {_rt(b, 1)}"
        return f"({s})" if ctx >= 1 else s
    raise TypeError(f"not a term: {t!r}")


_LEVEL = {Imp: 1, Or: 2, And: 3}


def render(f) -> str:
    """Render a formula or term in the concrete syntax."""
    if isinstance(f, (Var, Fn, IntLit, Arith)):
        return render_term(f)
    return _rf(f, 0)


def _rf(f: Formula, ctx: int) -> str:
    # ctx is the minimum binding level the context requires without parens
    if isinstance(f, Top):
        return "true"
    if isinstance(f, Bot):
        return "false"
    if isinstance(f, Pred):
        if not f.args:
            return f.name
        return f"{f.name}({', '.join(_rt(a, 0) for a in f.args)})"
    if isinstance(f, Eq):
        s = f"{_rt(f.lhs, 0)} = {_rt(f.rhs, 0)}"
        return f"({s})" if ctx >= 4 else s
    if isinstance(f, Cmp):
        s = f"{_rt(f.lhs, 0)} {f.op} {_rt(f.rhs, 0)}"
        return f"({s})" if ctx >= 4 else s
    if isinstance(f, Not):
        return "~" + _rf(f.arg, 4)
    if isinstance(f, QUANT):
        q = "forall" if isinstance(f, Forall) else "exists"
        s = f"{q} {f.var}:{f.sort}. {_rf(f.body, 0)}"
        return f"({s})" if ctx > 0 else s
    if isinstance(f, (And, Or, Imp)):
        lvl = _LEVEL[type(f)]
        sym = {And: "/\\", Or: "\\/", Imp: "->"}[type(f)]
        if isinstance(f, Imp):
            left, right = _rf(f.lhs, lvl + 1), _rf(f.rhs, lvl)
        else:
            left, right = _rf(f.lhs, lvl), _rf(f.rhs, lvl + 1)
        s = f"{left} {sym} {right}"
        return f"({s})" if ctx > lvl else s
    raise TypeError(f"not a formula: {f!r}")
