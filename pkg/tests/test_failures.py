import pytest

import corpus
from proofsketch.failures import CauseClass, FailureReport, classify
from proofsketch.library import LemmaLibrary, LibraryError, retrieve_hints, score
from proofsketch.logic import Signature
from proofsketch.prover import Prover, prove, verify
from proofsketch.sketch import parse_sketch
from proofsketch.syntax import ParseError, parse_formula


def sketch(theorem, body, sig="const x: Int;", ctx=""):
    return parse_sketch(f"theorem t: {theorem}\nsignature {{ {sig} }}\ncontext {{ {ctx} }}\nproof\n{body}")


def primary(s, lib=None):
    res = prove(s, lib)
    assert not res.accepted
    return res.primary_failures()[0]


def test_unknown_exact_fact_is_missing_lemma():
    f = primary(sketch("x >= 0", "node n0 { goal: x >= 0; method: exact(lemX); }"))
    assert f.cause is CauseClass.MISSING_LEMMA and f.node_id == "n0"


def test_rewrite_mismatch_is_invalid_rewrite():
    s = sketch(
        "plus(x, 0) = x",
        "node n0 { goal: plus(x, 0) = x; method: rewrite(pz, [1], ltr, y := x); node n1 { goal: x = x; method: hole; } }",
        sig="const x: Int; fun plus: Int, Int -> Int;",
        ctx="pz: forall y:Int. plus(y, 0) = y;",
    )
    assert primary(s).cause is CauseClass.INVALID_REWRITE


def test_false_hole_reports_countermodel():
    f = primary(sketch("x >= 1", "node n0 { goal: x >= 1; method: hole; }"))
    assert f.cause is CauseClass.UNSATISFIED_PRECONDITION
    assert f.countermodel == {"x": 0}


def test_bad_binding_is_failed_instantiation():
    s = sketch(
        "x >= 0",
        "node n0 { goal: x >= 0; method: exact(nn, z := x); }",
        ctx="nn: forall y:Int. y >= 0 \\/ true;",
    )
    assert primary(s).cause is CauseClass.FAILED_INSTANTIATION


def test_every_kind_is_classified():
    for kind in ("unresolved-reference", "instantiation-error", "rewrite-mismatch", "countermodel", "resource-limit"):
        assert isinstance(classify(FailureReport(kind, "")), CauseClass)


# ------------------------------------------------------------------ library

LIB = """plus_zero: forall x:Int. plus(x, zero) = x;
mul_one: forall x:Int. mul(x, one) = x;
"""


def _sig():
    sig = Signature()
    sig.add_function("plus", ["Int", "Int"], "Int")
    sig.add_function("mul", ["Int", "Int"], "Int")
    sig.add_constant("zero", "Int")
    sig.add_constant("one", "Int")
    sig.add_constant("a", "Int")
    sig.add_sort("S")
    sig.add_constant("s", "S")
    return sig


def test_retrieval_prefers_overlap():
    lib = LemmaLibrary.parse(LIB).bind(_sig())
    goal = parse_formula("plus(a, zero) = a", _sig())
    # plus_zero: {plus, zero} fully covered -> 1.0; mul_one: {mul, one} -> 0.0
    assert score(frozenset({"plus", "zero", "a"}), lib.symbols("plus_zero")) == 1.0
    assert retrieve_hints(goal, lib, 2) == ["plus_zero", "mul_one"]
    assert retrieve_hints(goal, lib, 0) == []


def test_retrieval_tie_breaks_by_id():
    lib = LemmaLibrary.parse("b: forall x:Int. plus(x, zero) = x;\na: forall x:Int. plus(zero, x) = x;\n").bind(_sig())
    assert retrieve_hints(parse_formula("plus(a, zero) = a", _sig()), lib, 2) == ["a", "b"]


def test_library_errors():
    with pytest.raises(ParseError):
        LemmaLibrary.parse("a: true;\na: false;\n")
    with pytest.raises(LibraryError):
        LemmaLibrary.parse("a: plus(s, zero) = zero;\n").bind(_sig())
    # foreign symbols are skipped, not errors
    assert "mul_one" not in LemmaLibrary.parse(LIB).bind(corpus.sketch("add_zero.psk").signature)


def test_failure_hints_come_from_library():
    s = corpus.sketch("mut_missing_lemma.psk")
    lib = LemmaLibrary.load(corpus.library_path()).bind(s.signature)
    res = Prover(lib).prove(s)
    rec = res.primary_failures()[0]
    assert list(rec.hints) == retrieve_hints(rec.goal, lib, 3)
    assert [h["id"] for h in rec.to_json(lib)["hints"]] == list(rec.hints)


# ------------------------------------------------------------------- prover


@pytest.mark.parametrize("entry", corpus.proofs(), ids=lambda e: e["file"])
def test_corpus_proof_replays_from_text(entry):
    s = corpus.sketch(entry["file"])
    res = prove(s, corpus.library_for(entry["file"]))
    assert res.accepted
    thm = verify(res.proof.to_text(), res.claimed)
    assert thm.sequent.goal == s.theorem


def test_parallel_jobs_give_identical_proofs():
    s = corpus.sketch("parity_split.psk")
    a = Prover(None, jobs=1).prove(s)
    b = Prover(None, jobs=4).prove(s)
    assert a.proof.to_text() == b.proof.to_text()
