"""The trusted kernel.

Only this module can construct :class:`Theorem` values. A theorem is built
by :func:`apply_rule` from a fixed set of natural-deduction rules (classical,
with ``raa``), by :func:`admit_certified` from a checker acceptance token, or
by :func:`replay` of a serialized :class:`ProofObject`.

Contexts are sets of named hypotheses; premises are merged by name and a name
bound to two different formulas is a side-condition violation.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

from . import checker
from .logic import (
    INT,
    QUANT,
    Arith,
    Bot,
    Cmp,
    Eq,
    Exists,
    Fn,
    Forall,
    Formula,
    Imp,
    IntLit,
    LogicError,
    Not,
    Or,
    Sequent,
    Top,
    Var,
    And,
    alpha_eq,
    canonical_digest,
    children,
    decode,
    encode,
    free_vars,
    is_formula,
    is_term,
    replace_at,
    subst_many,
    subterm_at,
    term_sort,
    with_children,
)


class KernelError(Exception):
    """A rule application or replay was rejected.

    ``condition`` names the violated side condition, e.g.
    ``eigenvariable-not-fresh`` or ``premise-shape``.
    """

    def __init__(self, condition: str, message: str = "", step: int | None = None):
        self.condition = condition
        self.step = step
        text = f"{condition}: {message}" if message else condition
        if step is not None:
            text = f"step {step}: {text}"
        super().__init__(text)


_KEY = object()


class Theorem:
    """A sequent certified by the kernel. Not constructible from outside."""

    __slots__ = ("_sequent", "_rule", "_params", "_premises", "_cert")

    def __init__(self, sequent: Sequent, rule: str, params: tuple, premises: tuple, cert: str | None = None, *, _key=None):
        if _key is not _KEY:
            raise TypeError("Theorem values can only be produced by the kernel")
        _check_sequent(sequent)
        object.__setattr__(self, "_sequent", sequent)
        object.__setattr__(self, "_rule", rule)
        object.__setattr__(self, "_params", params)
        object.__setattr__(self, "_premises", premises)
        object.__setattr__(self, "_cert", cert)

    def __setattr__(self, name, value):
        raise AttributeError("Theorem is immutable")

    @property
    def sequent(self) -> Sequent:
        return self._sequent

    @property
    def rule(self) -> str:
        return self._rule

    @property
    def premises(self) -> tuple["Theorem", ...]:
        return self._premises

    def proof_object(self) -> "ProofObject":
        return record(self)

    def __repr__(self) -> str:
        from .syntax import render

        ctx = ", ".join(f"{n}: {render(f)}" for n, f in self._sequent.context)
        return f"<Theorem {ctx} |- {render(self._sequent.goal)}>"


# -------------------------------------------------------------- well-formedness


def _wf(x, what: str = "formula") -> None:
    """Reject expressions whose sort annotations are inconsistent."""
    free: dict[str, str] = {}

    def term(t, bound: dict[str, str]) -> str:
        if isinstance(t, IntLit):
            return INT
        if isinstance(t, Var):
            if t.sort is None:
                raise KernelError("ill-sorted", f"variable {t.name} has no sort")
            if t.name in bound:
                if bound[t.name] != t.sort:
                    raise KernelError("ill-sorted", f"bound variable {t.name} used at two sorts")
            elif free.setdefault(t.name, t.sort) != t.sort:
                raise KernelError("ill-sorted", f"free variable {t.name} used at two sorts")
            return t.sort
        if isinstance(t, Fn):
            if t.sort is None:
                raise KernelError("ill-sorted", f"symbol {t.name} has no sort")
            for a in t.args:
                term(a, bound)
            return t.sort
        if isinstance(t, Arith):
            for a in t.args:
                if term(a, bound) != INT:
                    raise KernelError("ill-sorted", "arithmetic on non-Int term")
            return INT
        raise KernelError("ill-sorted", f"not a term: {t!r}")

    def form(f, bound: dict[str, str]) -> None:
        if isinstance(f, Eq):
            if term(f.lhs, bound) != term(f.rhs, bound):
                raise KernelError("ill-sorted", "equation between different sorts")
        elif isinstance(f, Cmp):
            if term(f.lhs, bound) != INT or term(f.rhs, bound) != INT:
                raise KernelError("ill-sorted", "comparison of non-Int terms")
        elif isinstance(f, QUANT):
            form(f.body, {**bound, f.var: f.sort})
        elif is_formula(f):
            for c in children(f):
                if is_term(c):
                    term(c, bound)
                else:
                    form(c, bound)
        else:
            raise KernelError("ill-sorted", f"not a formula: {f!r}")

    if what == "term":
        if not is_term(x):
            raise KernelError("bad-parameter", "term expected")
        term(x, {})
    else:
        if not is_formula(x):
            raise KernelError("bad-parameter", "formula expected")
        form(x, {})


def _check_sequent(s: Sequent) -> None:
    sorts: dict[str, str] = {}
    for v in s.free_vars():
        if sorts.setdefault(v.name, v.sort) != v.sort:
            raise KernelError("ill-sorted", f"free variable {v.name} used at two sorts")


# ------------------------------------------------------------------- contexts

Context = tuple[tuple[str, Formula], ...]


def _merge(*ctxs: Context) -> Context:
    out: dict[str, Formula] = {}
    for ctx in ctxs:
        for n, f in ctx:
            if n in out:
                if not alpha_eq(out[n], f):
                    raise KernelError("context-clash", f"hypothesis {n} names two different formulas")
            else:
                out[n] = f
    return tuple(out.items())


def _discharge(ctx: Context, name: str, expected: Formula) -> Context:
    out = []
    for n, f in ctx:
        if n == name:
            if not alpha_eq(f, expected):
                raise KernelError("discharge-mismatch", f"hypothesis {name} is not the discharged formula")
            continue
        out.append((n, f))
    return tuple(out)


def _free_in_ctx(ctx: Context, name: str) -> bool:
    return any(name in {v.name for v in free_vars(f)} for _, f in ctx)


def _expect(cond: bool, msg: str) -> None:
    if not cond:
        raise KernelError("premise-shape", msg)


# ---------------------------------------------------------------------- rules

# parameter kinds per rule
PARAM_KINDS: dict[str, tuple[str, ...]] = {
    "assume": ("name", "formula"),
    "weaken": ("name", "formula"),
    "and_i": (),
    "and_e_l": (),
    "and_e_r": (),
    "or_i_l": ("formula",),
    "or_i_r": ("formula",),
    "or_e": ("name", "name"),
    "imp_i": ("name", "formula"),
    "imp_e": (),
    "not_i": ("name", "formula"),
    "not_e": (),
    "raa": ("name", "formula"),
    "falsum_e": ("formula",),
    "top_i": (),
    "refl": ("term",),
    "sym": (),
    "trans": (),
    "cong": ("term", "int"),
    "subst_eq": ("pos", "dir"),
    "forall_e": ("term",),
    "forall_i": ("var",),
    "exists_i": ("formula", "term"),
    "exists_e": ("var", "name"),
    "induction_int": ("formula", "var", "name", "name"),
}
PREMISE_COUNT = {
    "assume": 0, "weaken": 1, "and_i": 2, "and_e_l": 1, "and_e_r": 1, "or_i_l": 1, "or_i_r": 1,
    "or_e": 3, "imp_i": 1, "imp_e": 2, "not_i": 1, "not_e": 2, "raa": 1, "falsum_e": 1,
    "top_i": 0, "refl": 0, "sym": 1, "trans": 2, "cong": 1, "subst_eq": 2, "forall_e": 1,
    "forall_i": 1, "exists_i": 1, "exists_e": 2, "induction_int": 2,
}
RULES = tuple(PARAM_KINDS)


def _check_params(rule: str, params: tuple) -> None:
    kinds = PARAM_KINDS[rule]
    if len(params) != len(kinds):
        raise KernelError("bad-parameter", f"{rule} takes {len(kinds)} parameters")
    for k, p in zip(kinds, params):
        if k == "name":
            ok = isinstance(p, str) and p != ""
        elif k == "formula":
            ok = is_formula(p)
            if ok:
                _wf(p)
        elif k == "term":
            ok = is_term(p)
            if ok:
                _wf(p, "term")
        elif k == "var":
            ok = isinstance(p, Var) and p.sort is not None
        elif k == "int":
            ok = isinstance(p, int) and not isinstance(p, bool)
        elif k == "pos":
            ok = isinstance(p, tuple) and all(isinstance(i, int) and i >= 0 for i in p)
        elif k == "dir":
            ok = p in ("ltr", "rtl")
        else:  # pragma: no cover
            ok = False
        if not ok:
            raise KernelError("bad-parameter", f"{rule}: bad {k} parameter {p!r}")


def _conclude(rule: str, prem: Sequence[Sequent], params: tuple) -> Sequent:
    g = [p.goal for p in prem]
    c = [p.context for p in prem]

    if rule == "assume":
        name, a = params
        return Sequent(((name, a),), a)
    if rule == "weaken":
        name, a = params
        return Sequent(_merge(c[0], ((name, a),)), g[0])
    if rule == "and_i":
        return Sequent(_merge(c[0], c[1]), And(g[0], g[1]))
    if rule in ("and_e_l", "and_e_r"):
        _expect(isinstance(g[0], And), f"{rule} needs a conjunction")
        return Sequent(c[0], g[0].lhs if rule == "and_e_l" else g[0].rhs)
    if rule == "or_i_l":
        return Sequent(c[0], Or(g[0], params[0]))
    if rule == "or_i_r":
        return Sequent(c[0], Or(params[0], g[0]))
    if rule == "or_e":
        h1, h2 = params
        _expect(isinstance(g[0], Or), "or_e needs a disjunction")
        _expect(alpha_eq(g[1], g[2]), "or_e branches prove different goals")
        left = _discharge(c[1], h1, g[0].lhs)
        right = _discharge(c[2], h2, g[0].rhs)
        return Sequent(_merge(c[0], left, right), g[1])
    if rule == "imp_i":
        h, a = params
        return Sequent(_discharge(c[0], h, a), Imp(a, g[0]))
    if rule == "imp_e":
        _expect(isinstance(g[0], Imp), "imp_e needs an implication")
        _expect(alpha_eq(g[0].lhs, g[1]), "imp_e antecedent mismatch")
        return Sequent(_merge(c[0], c[1]), g[0].rhs)
    if rule == "not_i":
        h, a = params
        _expect(isinstance(g[0], Bot), "not_i needs a proof of false")
        return Sequent(_discharge(c[0], h, a), Not(a))
    if rule == "not_e":
        _expect(isinstance(g[0], Not), "not_e needs a negation")
        _expect(alpha_eq(g[0].arg, g[1]), "not_e operand mismatch")
        return Sequent(_merge(c[0], c[1]), Bot())
    if rule == "raa":
        h, a = params
        _expect(isinstance(g[0], Bot), "raa needs a proof of false")
        return Sequent(_discharge(c[0], h, Not(a)), a)
    if rule == "falsum_e":
        _expect(isinstance(g[0], Bot), "falsum_e needs a proof of false")
        return Sequent(c[0], params[0])
    if rule == "top_i":
        return Sequent((), Top())
    if rule == "refl":
        return Sequent((), Eq(params[0], params[0]))
    if rule == "sym":
        _expect(isinstance(g[0], Eq), "sym needs an equation")
        return Sequent(c[0], Eq(g[0].rhs, g[0].lhs))
    if rule == "trans":
        _expect(isinstance(g[0], Eq) and isinstance(g[1], Eq), "trans needs two equations")
        _expect(alpha_eq(g[0].rhs, g[1].lhs), "trans middle terms differ")
        return Sequent(_merge(c[0], c[1]), Eq(g[0].lhs, g[1].rhs))
    if rule == "cong":
        tmpl, i = params
        _expect(isinstance(g[0], Eq), "cong needs an equation")
        _expect(isinstance(tmpl, (Fn, Arith)) and 0 <= i < len(tmpl.args), "cong template has no such argument")
        _expect(alpha_eq(tmpl.args[i], g[0].lhs), "cong argument differs from the equation's left side")
        args = list(tmpl.args)
        args[i] = g[0].rhs
        try:
            new = with_children(tmpl, tuple(args))
        except LogicError as e:
            raise KernelError("premise-shape", str(e)) from None
        return Sequent(c[0], Eq(tmpl, new))
    if rule == "subst_eq":
        pos, direction = params
        _expect(isinstance(g[0], Eq), "subst_eq needs an equation")
        src, dst = (g[0].lhs, g[0].rhs) if direction == "ltr" else (g[0].rhs, g[0].lhs)
        try:
            here = subterm_at(g[1], pos)
            if not alpha_eq(here, src):
                raise KernelError("position-mismatch", "subterm at position does not match the equation")
            out = replace_at(g[1], pos, dst)
        except LogicError as e:
            raise KernelError("position-invalid", str(e)) from None
        return Sequent(_merge(c[0], c[1]), out)
    if rule == "forall_e":
        (t,) = params
        _expect(isinstance(g[0], Forall), "forall_e needs a universal")
        if term_sort(t) != g[0].sort:
            raise KernelError("sort-mismatch", f"instance of sort {term_sort(t)} for {g[0].sort}")
        return Sequent(c[0], subst_many(g[0].body, {g[0].var: t}))
    if rule == "forall_i":
        (v,) = params
        if _free_in_ctx(c[0], v.name):
            raise KernelError("eigenvariable-not-fresh", f"{v.name} occurs free in the context")
        _same_sort(g[0], v)
        return Sequent(c[0], Forall(v.name, v.sort, g[0]))
    if rule == "exists_i":
        target, t = params
        _expect(isinstance(target, Exists), "exists_i target must be existential")
        if term_sort(t) != target.sort:
            raise KernelError("sort-mismatch", f"witness of sort {term_sort(t)} for {target.sort}")
        _expect(alpha_eq(subst_many(target.body, {target.var: t}), g[0]), "premise is not the witnessed instance")
        return Sequent(c[0], target)
    if rule == "exists_e":
        v, h = params
        _expect(isinstance(g[0], Exists), "exists_e needs an existential")
        if v.sort != g[0].sort:
            raise KernelError("sort-mismatch", "eigenvariable sort differs from the quantifier")
        rest = _discharge(c[1], h, subst_many(g[0].body, {g[0].var: v}))
        if (
            v.name in {x.name for x in free_vars(g[0])}
            or v.name in {x.name for x in free_vars(g[1])}
            or _free_in_ctx(rest, v.name)
            or _free_in_ctx(c[0], v.name)
        ):
            raise KernelError("eigenvariable-not-fresh", f"{v.name} is not fresh")
        return Sequent(_merge(c[0], rest), g[1])
    if rule == "induction_int":
        target, k, h_nonneg, h_ih = params
        body = _induction_body(target)
        if k.sort != INT:
            raise KernelError("sort-mismatch", "induction eigenvariable must be Int")
        n = target.var
        if k.name in {x.name for x in free_vars(target)}:
            raise KernelError("eigenvariable-not-fresh", f"{k.name} occurs in the induction target")
        base = subst_many(body, {n: IntLit(0)})
        step = subst_many(body, {n: Arith("+", (k, IntLit(1)))})
        ih = subst_many(body, {n: k})
        _expect(alpha_eq(g[0], base), "base premise does not prove P(0)")
        _expect(alpha_eq(g[1], step), "step premise does not prove P(k+1)")
        rest = _discharge(_discharge(c[1], h_nonneg, Cmp(">=", k, IntLit(0))), h_ih, ih)
        if _free_in_ctx(rest, k.name):
            raise KernelError("eigenvariable-not-fresh", f"{k.name} occurs free in the step context")
        return Sequent(_merge(c[0], rest), target)
    raise KernelError("unknown-rule", rule)


def _same_sort(f: Formula, v: Var) -> None:
    for x in free_vars(f):
        if x.name == v.name and x.sort != v.sort:
            raise KernelError("sort-mismatch", f"{v.name} occurs at sort {x.sort}")


def _induction_body(target: Formula) -> Formula:
    if (
        isinstance(target, Forall)
        and target.sort == INT
        and isinstance(target.body, Imp)
        and target.body.lhs == Cmp(">=", Var(target.var, INT), IntLit(0))
    ):
        return target.body.rhs
    raise KernelError("premise-shape", "induction target must be forall n:Int. n >= 0 -> P")


def apply_rule(rule: str, premises: Sequence[Theorem], params: Iterable[Any] = ()) -> Theorem:
    """Apply one inference rule; raises KernelError naming the failed condition."""
    if rule not in PARAM_KINDS:
        raise KernelError("unknown-rule", repr(rule))
    params = tuple(tuple(p) if isinstance(p, list) else p for p in params)
    premises = tuple(premises)
    if len(premises) != PREMISE_COUNT[rule]:
        raise KernelError("premise-shape", f"{rule} takes {PREMISE_COUNT[rule]} premises")
    for p in premises:
        if not isinstance(p, Theorem):
            raise KernelError("premise-shape", "premises must be kernel theorems")
    _check_params(rule, params)
    seq = _conclude(rule, [p.sequent for p in premises], params)
    return Theorem(seq, rule, params, premises, _key=_KEY)


# ------------------------------------------------------------ certified steps


class CertRegistry:
    """Sequents whose certificates the checker has validated.

    Concurrent reads; insertions are serialized by a lock.
    """

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._seqs: dict[str, Sequent] = {}

    def _add(self, seq: Sequent) -> None:
        key = canonical_digest(seq).hex()
        with self._lock:
            self._seqs.setdefault(key, seq)

    def get(self, digest_hex: str) -> Sequent | None:
        return self._seqs.get(digest_hex)

    def __contains__(self, digest_hex: str) -> bool:
        return digest_hex in self._seqs

    def __len__(self) -> int:
        return len(self._seqs)


DEFAULT_REGISTRY = CertRegistry()


def admit_certified(sequent: Sequent, token: checker.AcceptanceToken, registry: CertRegistry | None = None) -> Theorem:
    """Record a checker-validated external step as a theorem.

    ``sequent`` is the obligation's sequent; the token must have been issued
    by the certificate checker for a sequent with the same canonical digest.
    """
    if hasattr(sequent, "sequent") and not isinstance(sequent, Sequent):
        sequent = sequent.sequent  # an Obligation
    if not checker.is_genuine(token):
        raise KernelError("token-invalid", "token was not issued by the certificate checker")
    d = canonical_digest(sequent).hex()
    if token.sequent_digest != d:
        raise KernelError("token-mismatch", "token was issued for a different sequent")
    for _, f in sequent.context:
        _wf(f)
    _wf(sequent.goal)
    reg = registry if registry is not None else DEFAULT_REGISTRY
    reg._add(sequent)
    return Theorem(sequent, "CERT", (), (), d, _key=_KEY)


# --------------------------------------------------------------- proof objects


@dataclass(frozen=True)
class Step:
    index: int
    rule: str  # rule id or "CERT"
    params: tuple = ()
    premises: tuple[int, ...] = ()
    cert: str | None = None


@dataclass(frozen=True)
class ProofObject:
    """Flattened derivation DAG; premises always precede their conclusions."""

    steps: tuple[Step, ...]
    theorem_digest: str
    certs: tuple[tuple[str, str], ...] = ()  # (sequent digest, certificate bundle JSON)

    def to_text(self) -> str:
        lines = [f"PROOFOBJ v1 {self.theorem_digest}"]
        for s in self.steps:
            if s.rule == "CERT":
                named = "".join(
                    " " + json.dumps([[n, encode(f)] for n, f in ctx], separators=(",", ":"), ensure_ascii=False)
                    for ctx in s.params
                )
                lines.append(f"{s.index} CERT {s.cert}{named}")
            else:
                ps = json.dumps([_enc_param(k, p) for k, p in zip(PARAM_KINDS[s.rule], s.params)], separators=(",", ":"), ensure_ascii=False)
                prem = ",".join(str(i) for i in s.premises) or "-"
                lines.append(f"{s.index} {s.rule} {ps} {prem}")
        for d, bundle in self.certs:
            lines.append(f"CERTDATA {d} {bundle}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ProofObject":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise KernelError("malformed-proof", "empty proof object")
        head = lines[0].split()
        if len(head) != 3 or head[:2] != ["PROOFOBJ", "v1"]:
            raise KernelError("malformed-proof", "bad header", 0)
        steps = []
        certs = []
        for ln in lines[1:]:
            if ln.startswith("CERTDATA "):
                _, d, bundle = ln.split(" ", 2)
                certs.append((d, bundle))
                continue
            try:
                idx_s, rest = ln.split(" ", 1)
                idx = int(idx_s)
                rule, rest = rest.split(" ", 1)
                if rule == "CERT":
                    parts = rest.strip().split(" ", 1)
                    ctx = ()
                    if len(parts) == 2:
                        ctx = (tuple((str(n), decode(f)) for n, f in json.loads(parts[1])),)
                    steps.append(Step(idx, "CERT", ctx, cert=parts[0]))
                    continue
                pjson, prem = rest.rsplit(" ", 1)
                if rule not in PARAM_KINDS:
                    raise KernelError("unknown-rule", rule, idx)
                raw = json.loads(pjson)
                params = tuple(_dec_param(k, p) for k, p in zip(PARAM_KINDS[rule], raw))
                if len(raw) != len(PARAM_KINDS[rule]):
                    raise KernelError("bad-parameter", f"{rule} parameter count", idx)
                premises = () if prem == "-" else tuple(int(x) for x in prem.split(","))
            except KernelError:
                raise
            except (ValueError, LogicError, TypeError, IndexError) as e:
                raise KernelError("malformed-proof", f"cannot parse line {ln!r}: {e}") from None
            steps.append(Step(idx, rule, params, premises))
        return cls(tuple(steps), head[2], tuple(certs))


def _enc_param(kind: str, p: Any) -> Any:
    if kind in ("formula", "term", "var"):
        return encode(p)
    if kind == "pos":
        return list(p)
    return p


def _dec_param(kind: str, p: Any) -> Any:
    if kind in ("formula", "term"):
        return decode(p)
    if kind == "var":
        v = decode(p)
        if not isinstance(v, Var):
            raise LogicError("variable expected")
        return v
    if kind == "pos":
        return tuple(p)
    return p


def record(thm: Theorem, certs: Sequence[tuple[str, str]] = ()) -> ProofObject:
    """Flatten a theorem's derivation into a proof object (shared premises once)."""
    index: dict[int, int] = {}
    steps: list[Step] = []

    stack: list[tuple[Theorem, bool]] = [(thm, False)]
    while stack:
        t, expanded = stack.pop()
        if id(t) in index:
            continue
        if not expanded:
            stack.append((t, True))
            for p in reversed(t._premises):
                if id(p) not in index:
                    stack.append((p, False))
            continue
        i = len(steps)
        index[id(t)] = i
        if t._rule == "CERT":
            steps.append(Step(i, "CERT", (t.sequent.context,), cert=t._cert))
        else:
            steps.append(Step(i, t._rule, t._params, tuple(index[id(p)] for p in t._premises)))
    return ProofObject(tuple(steps), canonical_digest(thm.sequent).hex(), tuple(certs))


def replay(po: ProofObject, claimed: Sequent | None = None, certs: CertRegistry | None = None) -> Theorem:
    """Re-run every step through the kernel.

    Certified leaves are accepted only if their sequent digest is in the
    registry. With ``claimed`` given, the result must prove the claimed goal
    from a subset (up to alpha-equivalence) of the claimed hypotheses.
    """
    reg = certs if certs is not None else DEFAULT_REGISTRY
    built: list[Theorem] = []
    if not po.steps:
        raise KernelError("malformed-proof", "no steps")
    for pos, s in enumerate(po.steps):
        if s.index != pos:
            raise KernelError("malformed-proof", "step indices must be consecutive", pos)
        if s.rule == "CERT":
            seq = reg.get(s.cert or "")
            if seq is None:
                raise KernelError("unknown-certificate", f"certificate for {s.cert} not validated", pos)
            if s.params:
                # the digest ignores hypothesis names; the step restores them
                try:
                    named = Sequent(tuple(s.params[0]), seq.goal)
                except LogicError as e:
                    raise KernelError("malformed-proof", str(e), pos) from None
                if canonical_digest(named).hex() != s.cert:
                    raise KernelError("unknown-certificate", "named context does not match the certified sequent", pos)
                seq = named
            built.append(Theorem(seq, "CERT", (), (), s.cert, _key=_KEY))
            continue
        if any(i < 0 or i >= pos for i in s.premises):
            raise KernelError("malformed-proof", "premise index out of order", pos)
        try:
            built.append(apply_rule(s.rule, [built[i] for i in s.premises], s.params))
        except KernelError as e:
            raise KernelError(e.condition, str(e), pos) from None
    result = built[-1]
    if canonical_digest(result.sequent).hex() != po.theorem_digest:
        raise KernelError("conclusion-mismatch", "proof does not conclude the recorded theorem")
    if claimed is not None and not result.sequent.entails(claimed):
        raise KernelError("conclusion-mismatch", "proof does not establish the claimed sequent")
    return result


def admit_bundles(po: ProofObject, registry: CertRegistry | None = None) -> int:
    """Re-check the certificate bundles carried by a proof object.

    Each bundle is validated by the certificate checker against a fresh
    translation of its sequent, then admitted into the registry. Returns the
    number admitted; raises KernelError on the first invalid bundle.
    """
    n = 0
    for d, bundle in po.certs:
        try:
            data = json.loads(bundle)
            seq = Sequent(
                tuple((str(name), decode(f)) for name, f in data["sequent"]["context"]),
                decode(data["sequent"]["goal"]),
            )
            token = checker.certify(seq, data["kind"], data["certificate"])
        except checker.Rejection as e:
            raise KernelError("certificate-rejected", str(e)) from None
        except (ValueError, KeyError, TypeError, LogicError) as e:
            raise KernelError("malformed-proof", f"bad certificate bundle: {e}") from None
        if canonical_digest(seq).hex() != d:
            raise KernelError("certificate-rejected", "bundle sequent does not match its digest")
        admit_certified(seq, token, registry)
        n += 1
    return n


def make_bundle(sequent: Sequent, kind: str, certificate_text: str) -> tuple[str, str]:
    """(digest, bundle JSON) for embedding a certificate in a proof object."""
    data = {
        "kind": kind,
        "sequent": {"context": [[n, encode(f)] for n, f in sequent.context], "goal": encode(sequent.goal)},
        "certificate": certificate_text,
    }
    return canonical_digest(sequent).hex(), json.dumps(data, separators=(",", ":"), ensure_ascii=False)
