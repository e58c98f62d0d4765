"""Translation of sequents to solver problems.

This unit is trusted: the certificate checker re-runs it on the obligation's
sequent instead of believing the problem a solver claims to have solved.
Validity of ``G |- phi`` is encoded as unsatisfiability of ``G /\\ ~phi``.

Both encodings only ever *weaken* the hypothesis set (quantified hypotheses
and non-linear conjuncts are dropped, non-propositional atoms are opaque), so
an unsatisfiability certificate for the translation is a certificate for the
sequent.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Union

from .logic import (
    INT,
    QUANT,
    And,
    Arith,
    Bot,
    Cmp,
    Eq,
    Fn,
    Formula,
    Imp,
    IntLit,
    Not,
    Or,
    Pred,
    Sequent,
    Term,
    Top,
    Var,
    alpha_eq,
    canon,
    children,
    encode,
    term_sort,
)
from .syntax import render


class Unsupported(Exception):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


def has_quantifier(f: Formula) -> bool:
    if isinstance(f, QUANT):
        return True
    return any(has_quantifier(c) for c in children(f) if not _is_termish(c))


def _is_termish(x) -> bool:
    return isinstance(x, (Var, Fn, IntLit, Arith))


def usable_hypotheses(seq: Sequent) -> list[Formula]:
    return [f for f in seq.formulas() if not has_quantifier(f)]


def is_arith_atom(f: Formula) -> bool:
    return isinstance(f, Cmp) or (isinstance(f, Eq) and term_sort(f.lhs) == INT)


# ------------------------------------------------------------------------ CNF


@dataclass(frozen=True)
class CnfProblem:
    num_vars: int
    clauses: tuple[tuple[int, ...], ...]
    atoms: tuple[Formula, ...]  # atoms[i - 1] is the atom of variable i (None for auxiliaries)

    def to_dimacs(self) -> str:
        lines = [f"p cnf {self.num_vars} {len(self.clauses)}"]
        lines += [" ".join(str(l) for l in c) + " 0" if c else "0" for c in self.clauses]
        return "\n".join(lines) + "\n"

    def atom_vars(self) -> dict[int, Formula]:
        return {i + 1: a for i, a in enumerate(self.atoms) if a is not None}


def parse_dimacs(text: str) -> tuple[int, list[tuple[int, ...]]]:
    n = 0
    clauses: list[tuple[int, ...]] = []
    cur: list[int] = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("c"):
            continue
        if line.startswith("p"):
            parts = line.split()
            if len(parts) != 4 or parts[1] != "cnf":
                raise ValueError(f"bad problem line {line!r}")
            n = int(parts[2])
            continue
        for tok in line.split():
            v = int(tok)
            if v == 0:
                clauses.append(tuple(cur))
                cur = []
            else:
                cur.append(v)
    if cur:
        raise ValueError("unterminated clause")
    return n, clauses


class _Tseitin:
    def __init__(self) -> None:
        self.atoms: list[Formula | None] = []
        self.keys: dict = {}
        self.clauses: list[tuple[int, ...]] = []
        self.true_var: int | None = None

    def new_var(self, atom: Formula | None) -> int:
        self.atoms.append(atom)
        return len(self.atoms)

    def add(self, lits: Iterable[int]) -> None:
        c = tuple(dict.fromkeys(lits))
        if any(-l in c for l in c):
            return
        self.clauses.append(c)

    def true_lit(self) -> int:
        if self.true_var is None:
            self.true_var = self.new_var(None)
            self.add([self.true_var])
        return self.true_var

    def lit(self, f: Formula) -> int:
        if isinstance(f, Top):
            return self.true_lit()
        if isinstance(f, Bot):
            return -self.true_lit()
        if isinstance(f, Not):
            return -self.lit(f.arg)
        if isinstance(f, Eq) and alpha_eq(f.lhs, f.rhs):
            return self.true_lit()
        key = canon(f)
        if key in self.keys:
            return self.keys[key]
        if isinstance(f, (And, Or, Imp)):
            a = self.lit(f.lhs)
            b = self.lit(f.rhs)
            x = self.new_var(None)
            if isinstance(f, Imp):
                a = -a
            if isinstance(f, And):
                self.add([-x, a])
                self.add([-x, b])
                self.add([x, -a, -b])
            else:
                self.add([-x, a, b])
                self.add([x, -a])
                self.add([x, -b])
        else:
            # atoms and (nested) quantified formulas are opaque
            x = self.new_var(f)
        self.keys[key] = x
        return x

    def assert_formula(self, f: Formula) -> None:
        if isinstance(f, And):
            self.assert_formula(f.lhs)
            self.assert_formula(f.rhs)
            return
        if isinstance(f, Not) and isinstance(f.arg, Or):
            self.assert_formula(Not(f.arg.lhs))
            self.assert_formula(Not(f.arg.rhs))
            return
        if isinstance(f, Not) and isinstance(f.arg, Imp):
            self.assert_formula(f.arg.lhs)
            self.assert_formula(Not(f.arg.rhs))
            return
        if isinstance(f, Or):
            self.add([self.lit(f.lhs), self.lit(f.rhs)])
            return
        self.add([self.lit(f)])


def translate_cnf(seq: Sequent) -> CnfProblem:
    """Propositional abstraction of ``G /\\ ~goal`` in CNF.

    Raises Unsupported when the goal contains a quantifier.
    """
    if has_quantifier(seq.goal):
        raise Unsupported("quantified-after-flattening")
    ts = _Tseitin()
    for f in usable_hypotheses(seq):
        ts.assert_formula(f)
    ts.assert_formula(Not(seq.goal))
    return CnfProblem(len(ts.atoms), tuple(ts.clauses), tuple(ts.atoms))


# ------------------------------------------------------------------------ LIA

LIA_OPS = ("<=", ">=", "=", "!=")


@dataclass(frozen=True)
class Constraint:
    """``sum(coeffs) op bound`` with integer coefficients."""

    coeffs: tuple[tuple[str, int], ...]
    op: str
    bound: int

    def evaluate(self, model: dict[str, int]) -> bool:
        s = sum(a * model.get(v, 0) for v, a in self.coeffs)
        return {"<=": s <= self.bound, ">=": s >= self.bound, "=": s == self.bound, "!=": s != self.bound}[self.op]

    def to_json(self) -> list:
        return [[[v, a] for v, a in self.coeffs], self.op, self.bound]


@dataclass(frozen=True)
class LiaProblem:
    variables: tuple[str, ...]
    constraints: tuple[Constraint, ...]
    roster: tuple[str, ...] = ()  # rendered term behind each variable

    def rows(self) -> list[tuple[dict[str, int], int]]:
        """The <=-normalized system, integer-tightened, in fixed order."""
        out = []
        for c in self.constraints:
            a = dict(c.coeffs)
            if c.op == "<=":
                out.append(tighten(a, c.bound))
            elif c.op == ">=":
                out.append(tighten({v: -k for v, k in a.items()}, -c.bound))
            elif c.op == "=":
                out.append(tighten(a, c.bound))
                out.append(tighten({v: -k for v, k in a.items()}, -c.bound))
        return out

    def disequalities(self) -> list[Constraint]:
        return [c for c in self.constraints if c.op == "!="]

    def to_json(self) -> dict:
        return {
            "variables": list(self.variables),
            "roster": list(self.roster),
            "constraints": [c.to_json() for c in self.constraints],
        }


def tighten(coeffs: dict[str, int], bound) -> tuple[dict[str, int], int]:
    """Divide an integer row by the gcd of its coefficients, rounding the bound
    down; ``bound`` may be a Fraction."""
    coeffs = {v: k for v, k in coeffs.items() if k != 0}
    g = 0
    for k in coeffs.values():
        g = math.gcd(g, abs(k))
    if g <= 1:
        return coeffs, math.floor(bound)
    return {v: k // g for v, k in coeffs.items()}, math.floor(Fraction(bound) / g)


class _Linearizer:
    def __init__(self) -> None:
        self.names: dict[str, str] = {}
        self.shown: dict[str, str] = {}

    def var(self, t: Term) -> str:
        # keyed by the full encoding: a constant and a variable may share a name
        key = json.dumps(encode(canon(t)), separators=(",", ":"))
        if key not in self.names:
            self.names[key] = f"x{len(self.names)}"
            self.shown[self.names[key]] = render(t)
        return self.names[key]

    def lin(self, t: Term) -> tuple[dict[str, int], int]:
        if isinstance(t, IntLit):
            return {}, t.value
        if isinstance(t, Arith):
            (a, ac), (b, bc) = self.lin(t.args[0]), self.lin(t.args[1])
            if t.op == "*":
                k = ac  # left factor is a literal
                return {v: k * c for v, c in b.items()}, k * bc
            sign = 1 if t.op == "+" else -1
            out = dict(a)
            for v, c in b.items():
                out[v] = out.get(v, 0) + sign * c
            return out, ac + sign * bc
        return {self.var(t): 1}, 0

    def diff(self, l: Term, r: Term) -> tuple[dict[str, int], int]:
        (a, ac), (b, bc) = self.lin(l), self.lin(r)
        out = dict(a)
        for v, c in b.items():
            out[v] = out.get(v, 0) - c
        return out, ac - bc


def _literals(f: Formula, positive: bool, out: list, dropped: list) -> None:
    """Collect the conjunctive literals of f (negated when ``positive`` is False)."""
    if isinstance(f, Not):
        _literals(f.arg, not positive, out, dropped)
    elif isinstance(f, And) and positive:
        _literals(f.lhs, True, out, dropped)
        _literals(f.rhs, True, out, dropped)
    elif isinstance(f, Or) and not positive:
        _literals(f.lhs, False, out, dropped)
        _literals(f.rhs, False, out, dropped)
    elif isinstance(f, Imp) and not positive:
        _literals(f.lhs, True, out, dropped)
        _literals(f.rhs, False, out, dropped)
    elif isinstance(f, Top):
        if not positive:
            out.append((Bot(), True))
    elif isinstance(f, Bot):
        if positive:
            out.append((Bot(), True))
    elif isinstance(f, Eq) and alpha_eq(f.lhs, f.rhs):
        if not positive:
            out.append((Bot(), True))
    elif is_arith_atom(f):
        out.append((f, positive))
    else:
        dropped.append(f if positive else Not(f))


_FLIP = {"<=": ">", "<": ">=", ">=": "<", ">": "<="}


def _constraint(lz: _Linearizer, atom: Formula, positive: bool) -> Constraint:
    if isinstance(atom, Bot):
        return Constraint((), "<=", -1)
    if isinstance(atom, Eq):
        a, c = lz.diff(atom.lhs, atom.rhs)
        op = "=" if positive else "!="
    else:
        rel = atom.op if positive else _FLIP[atom.op]
        a, c = lz.diff(atom.lhs, atom.rhs)  # a.x + c  rel  0
        op, shift = {"<=": ("<=", 0), "<": ("<=", -1), ">=": (">=", 0), ">": (">=", 1)}[rel]
        return Constraint(tuple(sorted((v, k) for v, k in a.items() if k)), op, -c + shift)
    return Constraint(tuple(sorted((v, k) for v, k in a.items() if k)), op, -c)


def translate_lia(seq: Sequent) -> tuple[LiaProblem, bool]:
    """Conjunctive linear part of ``G /\\ ~goal``.

    Returns the problem and whether the translation is exact (nothing was
    dropped), in which case an integer model is a genuine countermodel.
    Maximal non-arithmetic Int terms become opaque integer variables.
    """
    if has_quantifier(seq.goal):
        raise Unsupported("quantified-after-flattening")
    lits: list = []
    dropped: list = []
    hyps = seq.formulas()
    usable = usable_hypotheses(seq)
    if len(usable) != len(hyps):
        dropped.append(Top())
    for f in usable:
        _literals(f, True, lits, dropped)
    _literals(seq.goal, False, lits, dropped)
    return lia_from_literals(lits), not dropped


def lia_from_literals(lits: list[tuple[Formula, bool]]) -> LiaProblem:
    lz = _Linearizer()
    cons = tuple(_constraint(lz, a, pos) for a, pos in lits)
    names = sorted(lz.shown, key=lambda v: int(v[1:]))
    return LiaProblem(tuple(names), cons, tuple(lz.shown[v] for v in names))


def fragment(seq: Sequent) -> str:
    """Theory fragment hint: propositional, equality, lia or mixed."""
    arith = eq = False
    stack = [seq.goal, *seq.formulas()]
    while stack:
        f = stack.pop()
        if is_arith_atom(f):
            arith = True
        elif isinstance(f, Eq):
            eq = True
        elif not isinstance(f, Pred):
            stack.extend(c for c in children(f) if not _is_termish(c))
    if arith and eq:
        return "mixed"
    if arith:
        return "lia"
    if eq:
        return "equality"
    return "propositional"


# ---------------------------------------------------------------- certificates


@dataclass(frozen=True)
class RupProof:
    clauses: tuple[tuple[int, ...], ...]

    def to_text(self) -> str:
        return "".join((" ".join(str(l) for l in c) + " 0\n") if c else "0\n" for c in self.clauses)

    @classmethod
    def from_text(cls, text: str) -> "RupProof":
        out = []
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("c"):
                continue
            nums = [int(t) for t in line.split()]
            if not nums or nums[-1] != 0 or 0 in nums[:-1]:
                raise ValueError(f"bad proof line {line!r}")
            out.append(tuple(nums[:-1]))
        return cls(tuple(out))


@dataclass(frozen=True)
class LiaBranch:
    var: str
    bound: int
    left: "LiaCert"
    right: "LiaCert"


@dataclass(frozen=True)
class LiaSplit:
    """Case split on the ``index``-th disequality ``s != b`` into ``s <= b-1`` / ``s >= b+1``."""

    index: int
    left: "LiaCert"
    right: "LiaCert"


@dataclass(frozen=True)
class LiaCut:
    """Add the gcd-tightened row ``sum(multipliers * rows)``; its coefficients
    must be integers, so the rounded-down bound stays sound over Int."""

    multipliers: tuple[Fraction, ...]
    child: "LiaCert"


@dataclass(frozen=True)
class LiaFarkas:
    multipliers: tuple[Fraction, ...]


LiaCert = Union[LiaBranch, LiaSplit, LiaCut, LiaFarkas]


def _frac_text(q: Fraction) -> str:
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


def lia_cert_to_text(c) -> str:
    if isinstance(c, LiaFarkas):
        return "(farkas" + "".join(" " + _frac_text(q) for q in c.multipliers) + ")"
    if isinstance(c, LiaBranch):
        return f"(branch {c.var} {c.bound} {lia_cert_to_text(c.left)} {lia_cert_to_text(c.right)})"
    if isinstance(c, LiaSplit):
        return f"(split {c.index} {lia_cert_to_text(c.left)} {lia_cert_to_text(c.right)})"
    if isinstance(c, LiaCut):
        return "(cut" + "".join(" " + _frac_text(q) for q in c.multipliers) + f" {lia_cert_to_text(c.child)})"
    raise TypeError(type(c).__name__)


def lia_cert_from_text(text: str):
    toks = text.replace("(", " ( ").replace(")", " ) ").split()
    pos = 0

    def parse():
        nonlocal pos
        if toks[pos] != "(":
            raise ValueError("expected (")
        head = toks[pos + 1]
        pos += 2
        if head == "farkas":
            qs = []
            while toks[pos] != ")":
                qs.append(Fraction(toks[pos]))
                pos += 1
            pos += 1
            return LiaFarkas(tuple(qs))
        if head == "branch":
            var, bound = toks[pos], int(toks[pos + 1])
            pos += 2
            left, right = parse(), parse()
            if toks[pos] != ")":
                raise ValueError("expected )")
            pos += 1
            return LiaBranch(var, bound, left, right)
        if head == "split":
            idx = int(toks[pos])
            pos += 1
            left, right = parse(), parse()
            if toks[pos] != ")":
                raise ValueError("expected )")
            pos += 1
            return LiaSplit(idx, left, right)
        if head == "cut":
            qs = []
            while toks[pos] != "(":
                qs.append(Fraction(toks[pos]))
                pos += 1
            child = parse()
            if toks[pos] != ")":
                raise ValueError("expected )")
            pos += 1
            return LiaCut(tuple(qs), child)
        raise ValueError(f"unknown node {head!r}")

    try:
        out = parse()
    except (IndexError, ZeroDivisionError) as e:
        raise ValueError(f"malformed certificate: {e}") from None
    if pos != len(toks):
        raise ValueError("trailing input after certificate")
    return out


@dataclass(frozen=True)
class SmtCert:
    """Theory lemmas plus a RUP refutation of the CNF extended by them.

    Each lemma is a clause over arithmetic atom variables of the CNF; its
    certificate shows the conjunction of the negated literals is infeasible.
    """

    lemmas: tuple[tuple[tuple[int, ...], LiaCert], ...]
    proof: RupProof

    def to_text(self) -> str:
        out = ["lemma " + " ".join(str(l) for l in c) + " 0 " + lia_cert_to_text(lc) + "\n" for c, lc in self.lemmas]
        return "".join(out) + "proof\n" + self.proof.to_text()

    @classmethod
    def from_text(cls, text: str) -> "SmtCert":
        head, sep, tail = text.partition("proof\n")
        if not sep:
            raise ValueError("missing proof section")
        lemmas = []
        for line in head.splitlines():
            line = line.strip()
            if not line:
                continue
            if not line.startswith("lemma "):
                raise ValueError(f"bad lemma line {line!r}")
            nums, zero, rest = line[6:].partition(" 0 ")
            if not zero:
                raise ValueError(f"unterminated lemma clause {line!r}")
            clause = tuple(int(t) for t in nums.split())
            if 0 in clause:
                raise ValueError("literal 0 in lemma clause")
            lemmas.append((clause, lia_cert_from_text(rest)))
        return cls(tuple(lemmas), RupProof.from_text(tail))


def lemma_problem(p: CnfProblem, clause: tuple[int, ...]) -> LiaProblem:
    """LIA problem for the negation of a theory-lemma clause over ``p``'s atoms.

    Raises ValueError when a literal is not an arithmetic atom of ``p``.
    """
    atoms = p.atom_vars()
    lits = []
    for l in clause:
        a = atoms.get(abs(l))
        if a is None or not is_arith_atom(a):
            raise ValueError(f"literal {l} is not an arithmetic atom")
        lits.append((a, l < 0))
    return lia_from_literals(lits)
