
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import corpus
from derivations import derivations, signature
from oracles import counterexample
from proofsketch import checker
from proofsketch.checker import AcceptanceToken
from proofsketch.kernel import (
    PARAM_KINDS,
    PREMISE_COUNT,
    CertRegistry,
    KernelError,
    ProofObject,
    Theorem,
    admit_certified,
    apply_rule,
    record,
    replay,
)
from proofsketch.logic import (
    INT,
    And,
    Cmp,
    Eq,
    Fn,
    Forall,
    Imp,
    IntLit,
    Interpretation,
    Or,
    Pred,
    Sequent,
    Var,
    canonical_digest,
    eval_formula,
)
from proofsketch.prover import prove
from proofsketch.solver import Certified, discharge

S = "S"
x = Var("x", S)
c = Fn("c", (), S)
A, B = Pred("p"), Pred("q")


def assume(name, f):
    return apply_rule("assume", [], [name, f])


def test_rule_tables_agree():
    assert set(PARAM_KINDS) == set(PREMISE_COUNT)


def test_and_i():
    t = apply_rule("and_i", [assume("h1", A), assume("h2", B)])
    assert t.sequent.goal == And(A, B)
    assert dict(t.sequent.context) == {"h1": A, "h2": B}


def test_forall_e_instantiates():
    t = assume("h", Forall("x", S, Pred("r", (x,))))
    assert apply_rule("forall_e", [t], [c]).sequent.goal == Pred("r", (c,))


def test_forall_i_eigenvariable_not_fresh():
    t = assume("h", Pred("r", (x,)))
    with pytest.raises(KernelError) as e:
        apply_rule("forall_i", [t], [x])
    assert e.value.condition == "eigenvariable-not-fresh"


def test_subst_eq_ltr():
    a, b = Fn("a", (), S), Fn("b", (), S)
    fa = Fn("f", (a,), S)
    eq = assume("e", Eq(fa, b))
    pa = assume("h", Pred("r", (fa,)))
    assert apply_rule("subst_eq", [eq, pa], [(0,), "ltr"]).sequent.goal == Pred("r", (b,))


def test_subst_eq_wrong_position():
    a, b = Fn("a", (), S), Fn("b", (), S)
    eq = assume("e", Eq(a, b))
    with pytest.raises(KernelError):
        apply_rule("subst_eq", [eq, assume("h", Pred("r", (Fn("f", (a,), S),)))], [(0,), "ltr"])


def test_context_clash_on_merge():
    with pytest.raises(KernelError) as e:
        apply_rule("and_i", [assume("h", A), assume("h", B)])
    assert e.value.condition == "context-clash"


def test_discharge_checks_formula():
    t = assume("h", A)
    with pytest.raises(KernelError):
        apply_rule("imp_i", [t], ["h", B])
    assert apply_rule("imp_i", [t], ["h", A]).sequent == Sequent((), Imp(A, A))


def test_bad_parameters_and_premises():
    with pytest.raises(KernelError):
        apply_rule("and_i", [assume("h", A)])
    with pytest.raises(KernelError):
        apply_rule("assume", [], ["h", "not a formula"])
    with pytest.raises(KernelError):
        apply_rule("no_such_rule", [])
    with pytest.raises(KernelError):
        apply_rule("weaken", ["forged"], ["h", A])


def test_theorems_cannot_be_built_outside_the_kernel():
    with pytest.raises(TypeError):
        Theorem(Sequent((), A), "assume", (), ())
    t = apply_rule("top_i", [])
    with pytest.raises(AttributeError):
        t._sequent = Sequent((), A)
    with pytest.raises(AttributeError):
        t.rule = "assume"


def test_tokens_cannot_be_forged():
    with pytest.raises(TypeError):
        AcceptanceToken("d", "c")

    class Fake:
        sequent_digest = ""

    seq = Sequent((), Or(A, Pred("q")))
    Fake.sequent_digest = canonical_digest(seq).hex()
    with pytest.raises(KernelError) as e:
        admit_certified(seq, Fake())
    assert e.value.condition == "token-invalid"


def _excluded_middle_token():
    n = Var("n", INT)
    seq = Sequent((), Or(Cmp(">=", n, IntLit(0)), Cmp("<", n, IntLit(0))))
    out = discharge(seq)
    assert isinstance(out, Certified)
    return seq, checker.certify(seq, out.kind, out.text)


def test_admit_certified_with_matching_token():
    seq, tok = _excluded_middle_token()
    reg = CertRegistry()
    t = admit_certified(seq, tok, reg)
    assert t.sequent == seq and t.rule == "CERT"
    assert len(reg) == 1


def test_admit_certified_rejects_token_for_other_sequent():
    _, tok = _excluded_middle_token()
    with pytest.raises(KernelError) as e:
        admit_certified(Sequent((), A), tok, CertRegistry())
    assert e.value.condition == "token-mismatch"


def test_token_reused_on_alpha_variant():
    # free variable names are part of the sequent, so rename under a binder
    seq = Sequent((("h", Forall("n", INT, Cmp(">=", Var("n", INT), IntLit(0)))),), A)
    seq2 = Sequent((("h", Forall("k", INT, Cmp(">=", Var("k", INT), IntLit(0)))),), A)
    tok2 = checker._issue(canonical_digest(seq).hex(), "test")
    assert admit_certified(seq2, tok2, CertRegistry()).sequent == seq2


def test_replay_round_trip():
    t = apply_rule("and_i", [assume("h1", A), assume("h2", B)])
    po = ProofObject.from_text(record(t).to_text())
    assert replay(po).sequent == t.sequent


def test_replay_corrupted_rule_reports_step():
    t = apply_rule("and_i", [assume("h1", A), assume("h2", B)])
    text = record(t).to_text().replace(" and_i ", " or_i_l ")
    with pytest.raises(KernelError) as e:
        replay(ProofObject.from_text(text))
    assert e.value.step == 2


def test_replay_unknown_certificate():
    seq, tok = _excluded_middle_token()
    t = admit_certified(seq, tok, CertRegistry())
    with pytest.raises(KernelError) as e:
        replay(record(t), certs=CertRegistry())
    assert e.value.condition == "unknown-certificate"


def test_replay_claim_must_be_entailed():
    t = assume("h", A)
    with pytest.raises(KernelError):
        replay(record(t), claimed=Sequent((("h", B),), A))
    assert replay(record(t), claimed=Sequent((("h", A), ("g", B)), A))


def _induction_parts(base_goal):
    n, k = Var("n", INT), Var("k", INT)
    target = Forall("n", INT, Imp(Cmp(">=", n, IntLit(0)), Cmp(">=", n, IntLit(0))))
    base = assume("hb", base_goal)
    step = apply_rule("weaken", [assume("hn", Cmp(">=", k, IntLit(0)))], ["hi", Cmp(">=", k, IntLit(0))])
    return target, base, step, k


def test_induction_base_shape_mismatch():
    target, base, step, k = _induction_parts(Cmp(">=", IntLit(1), IntLit(0)))
    with pytest.raises(KernelError):
        apply_rule("induction_int", [base, step], [target, k, "hn", "hi"])


def test_induction_eigenvariable_must_be_int():
    target, base, step, _ = _induction_parts(Cmp(">=", IntLit(0), IntLit(0)))
    with pytest.raises(KernelError):
        apply_rule("induction_int", [base, step], [target, Var("k", S), "hn", "hi"])


def test_add_zero_is_valid_under_real_addition():
    """The induction proof's conclusion holds in every candidate model of the
    axioms over n in [0,3]."""
    s = corpus.sketch("add_zero.psk")
    res = prove(s)
    assert res.accepted
    seq = res.theorem.sequent
    candidates = [lambda a, b: a + b, lambda a, b: a + b + 1, lambda a, b: b, lambda a, b: a * 0 + b + a]
    satisfied = 0
    for plus in candidates:
        i = Interpretation({}, {"plus": plus}, {}, (0, 3))
        if all(eval_formula(h, i) for h in seq.formulas()):
            satisfied += 1
            assert eval_formula(seq.goal, i)
    assert satisfied >= 1


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**9))
def test_random_derivations_are_sound(seed):
    sig = signature()
    pool, _ = derivations(seed, 25)
    for t in pool:
        assert counterexample(t.sequent, sig) is None, t


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**9))
def test_random_derivations_replay(seed):
    pool, _ = derivations(seed, 25)
    t = pool[-1]
    po = ProofObject.from_text(record(t).to_text())
    assert replay(po).sequent == t.sequent
