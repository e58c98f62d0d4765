"""Terms, formulas and sequents for many-sorted first-order logic with equality
and linear integer arithmetic.

All values are frozen dataclasses. Formula identity used by the kernel and the
cache is alpha-equivalence, implemented by :func:`canon` (bound variables are
renamed to de Bruijn levels) and :func:`alpha_eq`.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Callable, Iterable, Iterator, Mapping, Union

INT = "Int"
ARITH_OPS = ("+", "-", "*")
CMP_OPS = ("<=", "<", ">=", ">")
BUILTIN_SYMBOLS = frozenset({"+", "-", "*", "<=", "<", ">=", ">", "=", INT})


class LogicError(Exception):
    """Base class for ill-formed terms, formulas, substitutions and positions."""


class SortError(LogicError):
    pass


class PositionError(LogicError):
    pass


class CaptureError(LogicError):
    pass


class EvalError(LogicError):
    pass


# --------------------------------------------------------------------- terms


@dataclass(frozen=True)
class Var:
    name: str
    sort: str | None = None


@dataclass(frozen=True)
class Fn:
    """Function application; constants are applications with no arguments."""

    name: str
    args: tuple = ()
    sort: str | None = None


@dataclass(frozen=True)
class IntLit:
    value: int


@dataclass(frozen=True)
class Arith:
    op: str
    args: tuple

    def __post_init__(self) -> None:
        if self.op not in ARITH_OPS or len(self.args) != 2:
            raise LogicError(f"bad arithmetic application {self.op!r}")
        if self.op == "*" and not isinstance(self.args[0], IntLit):
            raise SortError("multiplication is only allowed as literal * term")


Term = Union[Var, Fn, IntLit, Arith]

# ------------------------------------------------------------------ formulas


@dataclass(frozen=True)
class Pred:
    name: str
    args: tuple = ()


@dataclass(frozen=True)
class Eq:
    lhs: Term
    rhs: Term


@dataclass(frozen=True)
class Cmp:
    op: str
    lhs: Term
    rhs: Term

    def __post_init__(self) -> None:
        if self.op not in CMP_OPS:
            raise LogicError(f"bad comparison {self.op!r}")


@dataclass(frozen=True)
class Top:
    pass


@dataclass(frozen=True)
class Bot:
    pass


@dataclass(frozen=True)
class Not:
    arg: "Formula"


@dataclass(frozen=True)
class And:
    lhs: "Formula"
    rhs: "Formula"


@dataclass(frozen=True)
class Or:
    lhs: "Formula"
    rhs: "Formula"


@dataclass(frozen=True)
class Imp:
    lhs: "Formula"
    rhs: "Formula"


@dataclass(frozen=True)
class Forall:
    var: str
    sort: str
    body: "Formula"


@dataclass(frozen=True)
class Exists:
    var: str
    sort: str
    body: "Formula"


Formula = Union[Pred, Eq, Cmp, Top, Bot, Not, And, Or, Imp, Forall, Exists]
TERM_TYPES = (Var, Fn, IntLit, Arith)
FORMULA_TYPES = (Pred, Eq, Cmp, Top, Bot, Not, And, Or, Imp, Forall, Exists)
BINARY = (And, Or, Imp)
QUANT = (Forall, Exists)
ATOMS = (Pred, Eq, Cmp)


def is_term(x: Any) -> bool:
    return isinstance(x, TERM_TYPES)


def is_formula(x: Any) -> bool:
    return isinstance(x, FORMULA_TYPES)


def Iff(a: Formula, b: Formula) -> Formula:
    return And(Imp(a, b), Imp(b, a))


# ----------------------------------------------------------------- signature


@dataclass
class Signature:
    sorts: set[str] = field(default_factory=lambda: {INT})
    functions: dict[str, tuple[tuple[str, ...], str]] = field(default_factory=dict)
    predicates: dict[str, tuple[str, ...]] = field(default_factory=dict)
    constants: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.sorts = set(self.sorts) | {INT}

    def declared(self, name: str) -> bool:
        return (
            name in self.functions
            or name in self.predicates
            or name in self.constants
            or (name in self.sorts and name != INT)
        )

    def _check_new(self, name: str) -> None:
        if name in BUILTIN_SYMBOLS:
            raise SortError(f"{name!r} is builtin and cannot be redeclared")
        if self.declared(name):
            raise SortError(f"duplicate declaration of {name!r}")

    def add_sort(self, name: str) -> None:
        self._check_new(name)
        self.sorts.add(name)

    def add_function(self, name: str, args: Iterable[str], result: str) -> None:
        self._check_new(name)
        args = tuple(args)
        for s in (*args, result):
            self._need_sort(s)
        if not args:
            self.constants[name] = result
        else:
            self.functions[name] = (args, result)

    def add_predicate(self, name: str, args: Iterable[str]) -> None:
        self._check_new(name)
        args = tuple(args)
        for s in args:
            self._need_sort(s)
        self.predicates[name] = args

    def add_constant(self, name: str, sort: str) -> None:
        self._check_new(name)
        self._need_sort(sort)
        self.constants[name] = sort

    def _need_sort(self, s: str) -> None:
        if s not in self.sorts:
            raise SortError(f"unknown sort {s!r}")

    def fn_sort(self, name: str) -> str | None:
        if name in self.constants:
            return self.constants[name]
        if name in self.functions:
            return self.functions[name][1]
        return None

    def to_json(self) -> dict:
        return {
            "sorts": sorted(self.sorts - {INT}),
            "functions": {k: [list(a), r] for k, (a, r) in sorted(self.functions.items())},
            "predicates": {k: list(v) for k, v in sorted(self.predicates.items())},
            "constants": dict(sorted(self.constants.items())),
        }


# -------------------------------------------------------------- term helpers


def term_sort(t: Term) -> str | None:
    if isinstance(t, (IntLit, Arith)):
        return INT
    return t.sort


def children(x: Term | Formula) -> tuple:
    if isinstance(x, (Fn, Arith, Pred)):
        return tuple(x.args)
    if isinstance(x, (Eq, Cmp)):
        return (x.lhs, x.rhs)
    if isinstance(x, Not):
        return (x.arg,)
    if isinstance(x, BINARY):
        return (x.lhs, x.rhs)
    if isinstance(x, QUANT):
        return (x.body,)
    return ()


def with_children(x: Term | Formula, kids: tuple) -> Term | Formula:
    if isinstance(x, Fn):
        return Fn(x.name, tuple(kids), x.sort)
    if isinstance(x, Arith):
        return Arith(x.op, tuple(kids))
    if isinstance(x, Pred):
        return Pred(x.name, tuple(kids))
    if isinstance(x, Eq):
        return Eq(kids[0], kids[1])
    if isinstance(x, Cmp):
        return Cmp(x.op, kids[0], kids[1])
    if isinstance(x, Not):
        return Not(kids[0])
    if isinstance(x, BINARY):
        return type(x)(kids[0], kids[1])
    if isinstance(x, QUANT):
        return type(x)(x.var, x.sort, kids[0])
    return x


@lru_cache(maxsize=200_000)
def free_vars(x: Term | Formula) -> frozenset[Var]:
    """Free variables (with their sorts) of a term or formula."""
    if isinstance(x, Var):
        return frozenset({x})
    if isinstance(x, QUANT):
        return frozenset(v for v in free_vars(x.body) if v.name != x.var)
    out: frozenset[Var] = frozenset()
    for c in children(x):
        out |= free_vars(c)
    return out


def free_names(x: Term | Formula) -> set[str]:
    return {v.name for v in free_vars(x)}


def all_names(x: Term | Formula) -> set[str]:
    """Every variable name occurring in x, bound or free."""
    out: set[str] = set()
    stack = [x]
    while stack:
        y = stack.pop()
        if isinstance(y, Var):
            out.add(y.name)
        elif isinstance(y, QUANT):
            out.add(y.var)
        stack.extend(children(y))
    return out


def fresh_name(base: str, avoid: set[str]) -> str:
    base = base.rstrip("0123456789") or "v"
    i = 0
    while f"{base}{i}" in avoid:
        i += 1
    return f"{base}{i}"


def subst_many(x: Term | Formula, sub: Mapping[str, Term]) -> Term | Formula:
    """Capture-avoiding simultaneous substitution keyed by variable name."""
    if not sub:
        return x
    if isinstance(x, Var):
        return sub.get(x.name, x)
    if isinstance(x, (IntLit, Top, Bot)):
        return x
    if isinstance(x, QUANT):
        inner = {k: v for k, v in sub.items() if k != x.var}
        if not inner:
            return x
        incoming: set[str] = set()
        for k, t in inner.items():
            if k in free_names(x.body):
                incoming |= free_names(t)
        var, body = x.var, x.body
        if var in incoming:
            avoid = incoming | all_names(body) | set(inner)
            new = fresh_name(var, avoid)
            body = subst_many(body, {var: Var(new, x.sort)})
            var = new
        return type(x)(var, x.sort, subst_many(body, inner))
    return with_children(x, tuple(subst_many(c, sub) for c in children(x)))


def substitute(f: Term | Formula, x: Var | str, t: Term) -> Term | Formula:
    """Replace free occurrences of variable ``x`` by ``t`` without capture."""
    name = x if isinstance(x, str) else x.name
    if isinstance(x, Var) and x.sort is not None and term_sort(t) is not None:
        if x.sort != term_sort(t):
            raise SortError(f"cannot substitute {term_sort(t)} term for {x.name}:{x.sort}")
    return subst_many(f, {name: t})


# ------------------------------------------------------------------ positions


def subterm_at(f: Term | Formula, path: Iterable[int]) -> Term | Formula:
    cur = f
    for depth, i in enumerate(path):
        kids = children(cur)
        if not isinstance(i, int) or i < 0 or i >= len(kids):
            raise PositionError(f"position index {i} out of range at depth {depth}")
        cur = kids[i]
    return cur


def _bound_on_path(f: Formula, path: list[int]) -> set[str]:
    out: set[str] = set()
    cur = f
    for i in path:
        if isinstance(cur, QUANT):
            out.add(cur.var)
        cur = children(cur)[i]
    return out


def replace_at(f: Formula, path: Iterable[int], t: Term) -> Formula:
    """Replace the term at ``path`` by ``t``.

    Raises PositionError when the path does not resolve to a term, SortError
    on a sort change, and CaptureError when either the old or the new term
    mentions a variable bound above the position.
    """
    path = list(path)
    old = subterm_at(f, path)
    if not is_term(old):
        raise PositionError("position does not denote a term")
    so, st = term_sort(old), term_sort(t)
    if so is not None and st is not None and so != st:
        raise SortError(f"replacement sort {st} differs from {so}")
    bound = _bound_on_path(f, path)
    if bound & (free_names(old) | free_names(t)):
        raise CaptureError(f"variables {sorted(bound & (free_names(old) | free_names(t)))} would be captured")

    def go(x, rest):
        if not rest:
            return t
        kids = list(children(x))
        kids[rest[0]] = go(kids[rest[0]], rest[1:])
        return with_children(x, tuple(kids))

    return go(f, path)


def positions(f: Term | Formula, prefix: tuple = ()) -> Iterator[tuple[tuple[int, ...], Any]]:
    """Pre-order enumeration of (path, subexpression)."""
    yield prefix, f
    for i, c in enumerate(children(f)):
        yield from positions(c, prefix + (i,))


# ------------------------------------------------------------ alpha / digest


@lru_cache(maxsize=200_000)
def canon(f: Term | Formula) -> Term | Formula:
    """Rename bound variables to ``#<level>`` so alpha-variants coincide."""
    return _canon(f, (), 0)


def _canon(x, env: tuple, depth: int):
    if isinstance(x, Var):
        for name, new in reversed(env):
            if name == x.name:
                return Var(new, x.sort)
        return x
    if isinstance(x, QUANT):
        new = f"#{depth}"
        return type(x)(new, x.sort, _canon(x.body, env + ((x.var, new),), depth + 1))
    kids = children(x)
    if not kids:
        return x
    return with_children(x, tuple(_canon(c, env, depth) for c in kids))


def alpha_eq(a: Term | Formula, b: Term | Formula) -> bool:
    return a == b or canon(a) == canon(b)


def encode(x: Any) -> Any:
    """Self-describing JSON-compatible encoding of a term or formula."""
    if isinstance(x, Var):
        return ["var", x.name, x.sort]
    if isinstance(x, Fn):
        return ["fn", x.name, x.sort, [encode(a) for a in x.args]]
    if isinstance(x, IntLit):
        return ["int", x.value]
    if isinstance(x, Arith):
        return ["arith", x.op, [encode(a) for a in x.args]]
    if isinstance(x, Pred):
        return ["pred", x.name, [encode(a) for a in x.args]]
    if isinstance(x, Eq):
        return ["eq", encode(x.lhs), encode(x.rhs)]
    if isinstance(x, Cmp):
        return ["cmp", x.op, encode(x.lhs), encode(x.rhs)]
    if isinstance(x, Top):
        return ["top"]
    if isinstance(x, Bot):
        return ["bot"]
    if isinstance(x, Not):
        return ["not", encode(x.arg)]
    if isinstance(x, BINARY):
        return [type(x).__name__.lower(), encode(x.lhs), encode(x.rhs)]
    if isinstance(x, QUANT):
        return [type(x).__name__.lower(), x.var, x.sort, encode(x.body)]
    raise TypeError(f"cannot encode {type(x).__name__}")


_BIN_BY_TAG = {"and": And, "or": Or, "imp": Imp}
_Q_BY_TAG = {"forall": Forall, "exists": Exists}


def decode(j: Any) -> Term | Formula:
    try:
        tag = j[0]
        if tag == "var":
            return Var(j[1], j[2])
        if tag == "fn":
            return Fn(j[1], tuple(decode(a) for a in j[3]), j[2])
        if tag == "int":
            if not isinstance(j[1], int) or isinstance(j[1], bool):
                raise LogicError("integer literal expected")
            return IntLit(j[1])
        if tag == "arith":
            return Arith(j[1], tuple(decode(a) for a in j[2]))
        if tag == "pred":
            return Pred(j[1], tuple(decode(a) for a in j[2]))
        if tag == "eq":
            return Eq(decode(j[1]), decode(j[2]))
        if tag == "cmp":
            return Cmp(j[1], decode(j[2]), decode(j[3]))
        if tag == "top":
            return Top()
        if tag == "bot":
            return Bot()
        if tag == "not":
            return Not(decode(j[1]))
        if tag in _BIN_BY_TAG:
            return _BIN_BY_TAG[tag](decode(j[1]), decode(j[2]))
        if tag in _Q_BY_TAG:
            return _Q_BY_TAG[tag](j[1], j[2], decode(j[3]))
    except (IndexError, TypeError, KeyError) as e:
        raise LogicError(f"malformed encoded expression: {e}") from None
    raise LogicError(f"unknown tag {tag!r}")


# -------------------------------------------------------------------- sequent


@dataclass(frozen=True)
class Sequent:
    """Named hypotheses (order-preserving, names unique) entailing a goal."""

    context: tuple[tuple[str, Formula], ...]
    goal: Formula

    def __post_init__(self) -> None:
        names = [n for n, _ in self.context]
        if len(set(names)) != len(names):
            raise LogicError(f"duplicate hypothesis names in {names}")

    def hyp(self, name: str) -> Formula | None:
        for n, f in self.context:
            if n == name:
                return f
        return None

    def formulas(self) -> list[Formula]:
        return [f for _, f in self.context]

    def free_vars(self) -> frozenset[Var]:
        out = free_vars(self.goal)
        for _, f in self.context:
            out |= free_vars(f)
        return out

    def alpha_eq(self, other: "Sequent") -> bool:
        return canonical_digest(self) == canonical_digest(other)

    def entails(self, other: "Sequent") -> bool:
        """True when this sequent's goal matches and its hypotheses are a
        sub-multiset (up to alpha) of ``other``'s, i.e. it is at least as strong."""
        if not alpha_eq(self.goal, other.goal):
            return False
        theirs = [canon(f) for f in other.formulas()]
        for f in self.formulas():
            c = canon(f)
            if c not in theirs:
                return False
        return True


def _jsonable(v: Any) -> Any:
    if is_term(v) or is_formula(v):
        return encode(canon(v))
    if isinstance(v, Sequent):
        ctx = sorted(json.dumps(encode(canon(f)), separators=(",", ":")) for f in v.formulas())
        return ["sequent", ctx, encode(canon(v.goal))]
    if isinstance(v, Signature):
        return v.to_json()
    if isinstance(v, (bytes, bytearray)):
        return ["bytes", bytes(v).hex()]
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (set, frozenset)):
        return sorted((_jsonable(x) for x in v), key=lambda j: json.dumps(j, sort_keys=True))
    if v is None or isinstance(v, (str, int, bool)):
        return v
    raise TypeError(f"cannot digest {type(v).__name__}")


def canonical_bytes(v: Any) -> bytes:
    return json.dumps(_jsonable(v), sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode()


def canonical_digest(v: Any) -> bytes:
    """SHA-256 of the canonical serialization; alpha-variants collide on purpose."""
    return hashlib.sha256(canonical_bytes(v)).digest()


def digest_hex(v: Any) -> str:
    return canonical_digest(v).hex()


# ------------------------------------------------------------- sort checking


def check_term(t: Term, sig: Signature) -> str:
    """Return the sort of ``t`` or raise SortError."""
    if isinstance(t, IntLit):
        return INT
    if isinstance(t, Var):
        if t.sort is None:
            raise SortError(f"unknown symbol {t.name!r}")
        if t.sort not in sig.sorts:
            raise SortError(f"unknown sort {t.sort!r}")
        return t.sort
    if isinstance(t, Arith):
        for a in t.args:
            if check_term(a, sig) != INT:
                raise SortError(f"arithmetic on non-Int term in {t.op}")
        return INT
    if isinstance(t, Fn):
        if not t.args:
            if t.name not in sig.constants:
                raise SortError(f"unknown constant {t.name!r}")
            want = sig.constants[t.name]
        else:
            if t.name not in sig.functions:
                raise SortError(f"unknown function {t.name!r}")
            params, want = sig.functions[t.name]
            if len(params) != len(t.args):
                raise SortError(f"{t.name} expects {len(params)} arguments, got {len(t.args)}")
            for p, a in zip(params, t.args):
                got = check_term(a, sig)
                if got != p:
                    raise SortError(f"argument of {t.name} has sort {got}, expected {p}")
        if t.sort is not None and t.sort != want:
            raise SortError(f"{t.name} annotated {t.sort}, declared {want}")
        return want
    raise SortError(f"not a term: {t!r}")


def check_formula(f: Formula, sig: Signature) -> None:
    if isinstance(f, (Top, Bot)):
        return
    if isinstance(f, Pred):
        if f.name not in sig.predicates:
            raise SortError(f"unknown predicate {f.name!r}")
        params = sig.predicates[f.name]
        if len(params) != len(f.args):
            raise SortError(f"{f.name} expects {len(params)} arguments, got {len(f.args)}")
        for p, a in zip(params, f.args):
            got = check_term(a, sig)
            if got != p:
                raise SortError(f"argument of {f.name} has sort {got}, expected {p}")
        return
    if isinstance(f, Eq):
        a, b = check_term(f.lhs, sig), check_term(f.rhs, sig)
        if a != b:
            raise SortError(f"equation between {a} and {b}")
        return
    if isinstance(f, Cmp):
        if check_term(f.lhs, sig) != INT or check_term(f.rhs, sig) != INT:
            raise SortError(f"comparison {f.op} on non-Int terms")
        return
    if isinstance(f, QUANT):
        if f.sort not in sig.sorts:
            raise SortError(f"unknown sort {f.sort!r}")
        check_formula(f.body, sig)
        return
    for c in children(f):
        check_formula(c, sig)


# ------------------------------------------------------------------- semantics


@dataclass
class Interpretation:
    """Finite model for the bounded evaluator.

    ``carriers`` gives the size k of each uninterpreted sort (elements 0..k-1).
    ``symbols`` maps constants to values and functions/predicates to a dict
    keyed by argument tuples or to a callable. ``values`` holds free variables.
    """

    carriers: dict[str, int] = field(default_factory=dict)
    symbols: dict[str, Any] = field(default_factory=dict)
    values: dict[str, int] = field(default_factory=dict)
    int_range: tuple[int, int] = (-3, 3)

    def domain(self, sort: str) -> range:
        if sort == INT:
            lo, hi = self.int_range
            return range(lo, hi + 1)
        if sort not in self.carriers:
            raise EvalError(f"no carrier for sort {sort!r}")
        return range(self.carriers[sort])

    def apply(self, name: str, args: tuple) -> Any:
        if name not in self.symbols:
            raise EvalError(f"symbol {name!r} not interpreted")
        s = self.symbols[name]
        if callable(s):
            return s(*args)
        if isinstance(s, dict):
            if args not in s:
                raise EvalError(f"{name}{args} outside interpretation table")
            return s[args]
        if isinstance(s, (set, frozenset)):
            return args in s
        if args:
            raise EvalError(f"{name} is interpreted as a constant")
        return s


def eval_term(t: Term, i: Interpretation, env: Mapping[str, int] | None = None) -> int:
    env = env if env is not None else {}
    if isinstance(t, IntLit):
        return t.value
    if isinstance(t, Var):
        if t.name in env:
            return env[t.name]
        if t.name in i.values:
            return i.values[t.name]
        raise EvalError(f"free variable {t.name!r} has no value")
    if isinstance(t, Arith):
        a, b = (eval_term(x, i, env) for x in t.args)
        return a + b if t.op == "+" else a - b if t.op == "-" else a * b
    if isinstance(t, Fn):
        return i.apply(t.name, tuple(eval_term(a, i, env) for a in t.args))
    raise EvalError(f"not a term: {t!r}")


_CMP: dict[str, Callable[[int, int], bool]] = {
    "<=": lambda a, b: a <= b,
    "<": lambda a, b: a < b,
    ">=": lambda a, b: a >= b,
    ">": lambda a, b: a > b,
}


def eval_formula(f: Formula, i: Interpretation, env: Mapping[str, int] | None = None) -> bool:
    """Tarskian truth under bounded semantics (Int quantifiers range over i.int_range)."""
    env = dict(env) if env is not None else {}
    return _ev(f, i, env)


def _ev(f: Formula, i: Interpretation, env: dict) -> bool:
    if isinstance(f, Top):
        return True
    if isinstance(f, Bot):
        return False
    if isinstance(f, Pred):
        return bool(i.apply(f.name, tuple(eval_term(a, i, env) for a in f.args)))
    if isinstance(f, Eq):
        return eval_term(f.lhs, i, env) == eval_term(f.rhs, i, env)
    if isinstance(f, Cmp):
        return _CMP[f.op](eval_term(f.lhs, i, env), eval_term(f.rhs, i, env))
    if isinstance(f, Not):
        return not _ev(f.arg, i, env)
    if isinstance(f, And):
        return _ev(f.lhs, i, env) and _ev(f.rhs, i, env)
    if isinstance(f, Or):
        return _ev(f.lhs, i, env) or _ev(f.rhs, i, env)
    if isinstance(f, Imp):
        return (not _ev(f.lhs, i, env)) or _ev(f.rhs, i, env)
    if isinstance(f, QUANT):
        saved = env.get(f.var, _MISSING)
        try:
            for v in i.domain(f.sort):
                env[f.var] = v
                r = _ev(f.body, i, env)
                if isinstance(f, Forall) and not r:
                    return False
                if isinstance(f, Exists) and r:
                    return True
            return isinstance(f, Forall)
        finally:
            if saved is _MISSING:
                env.pop(f.var, None)
            else:
                env[f.var] = saved
    raise EvalError(f"not a formula: {f!r}")


_MISSING = object()

# public name used by the rest of the package
eval = eval_formula  # noqa: A001


def symbols_of(x: Term | Formula) -> set[str]:
    """Function, constant and predicate names occurring in x."""
    out: set[str] = set()
    stack = [x]
    while stack:
        y = stack.pop()
        if isinstance(y, (Fn, Pred)):
            out.add(y.name)
        stack.extend(children(y))
    return out
