import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from derivations import signature, formula
from proofsketch.logic import (
    INT,
    And,
    Arith,
    Cmp,
    Eq,
    Exists,
    Fn,
    Forall,
    IntLit,
    Interpretation,
    PositionError,
    Pred,
    Bot,
    Var,
    CaptureError,
    alpha_eq,
    canonical_digest,
    decode,
    encode,
    eval_formula,
    replace_at,
    subst_many,
    substitute,
    subterm_at,
)
from proofsketch.syntax import ParseError, parse_formula, parse_term, render

S = "S"
x, y = Var("x", S), Var("y", S)
c, d = Fn("c", (), S), Fn("d", (), S)


def P(t):
    return Pred("P", (t,))


def test_substitute_free_occurrence():
    assert substitute(P(x), x, c) == P(c)


def test_substitute_leaves_bound_occurrence():
    f = Forall("x", S, P(x))
    assert substitute(f, x, c) == f


def test_substitute_arith_atom():
    n = Var("x", INT)
    f = Cmp(">=", Arith("+", (n, IntLit(1))), IntLit(0))
    assert substitute(f, n, IntLit(3)) == Cmp(">=", Arith("+", (IntLit(3), IntLit(1))), IntLit(0))


def test_substitution_renames_to_avoid_capture():
    f = Forall("y", S, Eq(x, y))
    g = substitute(f, x, y)
    assert isinstance(g, Forall) and g.var != "y"
    assert g.body == Eq(y, Var(g.var, S))


def test_subterm_at():
    a, b = Fn("a", (), S), Fn("b", (), S)
    assert subterm_at(P(Fn("f", (a, b), S)), [0, 1]) == b
    conj = And(P(a), P(b))
    assert subterm_at(conj, []) == conj
    assert subterm_at(Forall("x", S, P(x)), [0, 0]) == x


def test_subterm_at_bad_path():
    with pytest.raises(PositionError):
        subterm_at(P(c), [3])


def test_replace_at():
    a, b = Fn("a", (), S), Fn("b", (), S)
    fa = Fn("f", (a,), S)
    assert replace_at(P(fa), [0], b) == P(b)
    assert replace_at(Eq(fa, fa), [1], b) == Eq(fa, b)


def test_replace_at_formula_position_is_an_error():
    with pytest.raises(PositionError):
        replace_at(P(c), [], d)


def test_replace_at_refuses_capture():
    with pytest.raises(CaptureError):
        replace_at(Forall("y", S, Eq(x, y)), [0, 0], y)


def test_eval_examples():
    i = Interpretation({S: 3}, {}, {}, (-2, 2))
    assert eval_formula(Bot(), i) is False
    assert eval_formula(Forall("x", S, Eq(x, x)), i)
    n = Var("n", INT)
    assert eval_formula(Exists("n", INT, Eq(Arith("+", (n, IntLit(1))), IntLit(0))), i)
    assert not eval_formula(Exists("n", INT, Eq(Arith("+", (n, IntLit(1))), IntLit(-5))), i)


def test_digest_alpha_and_order():
    assert canonical_digest(Forall("x", S, P(x))) == canonical_digest(Forall("y", S, P(y)))
    a, b = P(c), P(d)
    assert canonical_digest(And(a, b)) != canonical_digest(And(b, a))
    assert canonical_digest(And(a, b)) == canonical_digest(And(a, b))


def test_parse_errors_carry_position():
    with pytest.raises(ParseError) as e:
        parse_formula("p /\\ (q")
    assert e.value.line == 1 and e.value.col > 1


def test_parse_precedence():
    sig = signature()
    f = parse_formula("p /\\ q -> p \\/ q", sig)
    assert render(f) == "p /\\ q -> p \\/ q"
    assert parse_term("1 + 2 + 3") == Arith("+", (Arith("+", (IntLit(1), IntLit(2))), IntLit(3)))


SCOPE = {"x": "S", "a": "Int"}


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 10**9))
def test_render_parse_round_trip(seed):
    f = formula(random.Random(seed), 3)
    assert parse_formula(render(f), signature(), SCOPE) == f


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 10**9))
def test_encode_decode_round_trip(seed):
    f = formula(random.Random(seed), 3)
    assert decode(encode(f)) == f


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10**9))
def test_alpha_renaming_preserves_digest(seed):
    f = formula(random.Random(seed), 3)
    g = Forall("y", S, subst_many(f, {"x": Var("y", S)}))
    h = Forall("w", S, subst_many(f, {"x": Var("w", S)}))
    assert alpha_eq(g, h)
    assert canonical_digest(g) == canonical_digest(h)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10**9), st.integers(0, 1))
def test_substitution_agrees_with_evaluation(seed, value):
    """Evaluating f[x := c] equals evaluating f with x bound to c's value."""
    rng = random.Random(seed)
    f = formula(rng, 2)
    table = {(0,): rng.randint(0, 1), (1,): rng.randint(0, 1)}
    i = Interpretation({S: 2}, {"p": True, "q": False, "r": table, "f": {(0,): 1, (1,): 0}, "c": value}, {}, (-2, 2))
    env = {"a": rng.randint(-2, 2)}
    lhs = eval_formula(substitute(f, x, Fn("c", (), S)), i, env)
    rhs = eval_formula(f, i, {**env, "x": value})
    assert lhs == rhs
