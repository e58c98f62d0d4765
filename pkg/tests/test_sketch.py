import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import corpus
from derivations import C, formula, signature
from proofsketch.logic import Bot, IntLit, Pred, subst_many
from proofsketch.sketch import (
    Contradiction,
    Exact,
    Hole,
    Sketch,
    SketchNode,
    Split,
    parse_node,
    parse_sketch,
    render_node,
    render_sketch,
    replace_node,
    validate_sketch,
)
from proofsketch.syntax import ParseError

HEAD = """theorem t: p
signature { pred p; pred q; }
context { f: q -> p; }
proof
"""


def kinds(report):
    return [(i.node_id, i.kind) for i in report.issues]


def test_single_hole():
    s = parse_sketch(HEAD + "node n0 { goal: p; method: hole; }")
    assert isinstance(s.root.method, Hole) and s.root.goal == Pred("p")
    assert validate_sketch(s).ok


def test_duplicate_id_reported_at_second_occurrence():
    text = HEAD + "node n0 { goal: p; method: split(q);\n node n0 { goal: p; method: hole; }\n node b { goal: p; method: hole; } }"
    with pytest.raises(ParseError) as e:
        parse_sketch(text)
    assert "duplicate" in str(e.value) and e.value.line == 6


def test_split_has_two_children():
    s = parse_sketch(HEAD + "node n0 { goal: p; method: split(q); node a { goal: p; method: hole; } node b { goal: p; method: hole; } }")
    assert isinstance(s.root.method, Split) and len(s.root.children) == 2


def test_split_with_one_child_is_a_shape_violation():
    s = parse_sketch(HEAD + "node n0 { goal: p; method: split(q); node a { goal: p; method: hole; } }")
    assert kinds(validate_sketch(s)) == [("n0", "shape-violation")]


def test_unknown_fact_with_library():
    s = parse_sketch(HEAD + "node n0 { goal: p; method: exact(lemX); }")
    assert kinds(validate_sketch(s, {})) == [("n0", "unknown-fact")]
    # without a library the reference is left for discharge
    assert validate_sketch(s).ok


def test_non_int_induction_rejected():
    text = """theorem t: forall x:S. r(x)
signature { sort S; pred r: S; }
context { }
proof
node n0 { goal: forall x:S. r(x); method: induction(x); }"""
    assert not validate_sketch(parse_sketch(text)).ok


def test_add_zero_is_well_formed():
    s = corpus.sketch("add_zero.psk")
    assert validate_sketch(s).ok
    assert [n.id for n in s.nodes()] == ["n0", "base", "step", "close"]


def test_syntax_error_position():
    with pytest.raises(ParseError) as e:
        parse_sketch(HEAD + "node n0 { goal: p; method: hole }")
    assert (e.value.line, e.value.col) == (5, 33)


@pytest.mark.parametrize("entry", corpus.proofs() + corpus.mutations(), ids=lambda e: e["file"])
def test_corpus_round_trip(entry):
    s = corpus.sketch(entry["file"])
    text = render_sketch(s)
    assert parse_sketch(text) == s
    assert render_sketch(parse_sketch(text)) == text


def test_replace_node_and_parse_node():
    s = corpus.sketch("double_chain.psk")
    node = parse_node(render_node(s.node("r1")), s.signature)
    assert node == s.node("r1")
    t = replace_node(s, "r3", SketchNode("r3", s.node("r3").goal, Contradiction(), (), (SketchNode("x", s.node("r3").goal, Hole()),)))
    assert [n.id for n in t.nodes()] == ["r", "r1", "r2", "r3", "x"]


# ------------------------------------------------------------ generated sketches


def _closed(rng):
    return subst_many(formula(rng, 2), {"x": C, "a": IntLit(rng.randint(-2, 2))})


def _node(rng, goal, depth, ids):
    nid = f"n{len(ids)}"
    ids.append(nid)
    k = rng.randrange(4) if depth else 0
    if k == 1:
        cond = _closed(rng)
        kids = (_node(rng, goal, depth - 1, ids), _node(rng, goal, depth - 1, ids))
        return SketchNode(nid, goal, Split(cond), (), kids)
    if k == 2:
        return SketchNode(nid, goal, Contradiction(), (), (_node(rng, Bot(), depth - 1, ids),))
    if k == 3:
        return SketchNode(nid, goal, Exact("ax"), ())
    return SketchNode(nid, goal, Hole(), ())


def random_sketch(seed: int) -> Sketch:
    rng = random.Random(seed)
    sig = signature()
    goal = _closed(rng)
    root = _node(rng, goal, 3, [])
    return Sketch("gen", sig, goal, (("ax", _closed(rng)),), root)


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 10**9))
def test_generated_sketch_round_trip(seed):
    s = random_sketch(seed)
    text = render_sketch(s)
    back = parse_sketch(text)
    assert back == s
    assert render_sketch(back) == text
    assert [n.id for n in back.nodes()] == [n.id for n in s.nodes()]
