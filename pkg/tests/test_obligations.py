import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import corpus
from proofsketch.obligations import ROUTES, extract
from proofsketch.sketch import parse_sketch
from proofsketch.syntax import render
from test_sketch import random_sketch

SPLIT = """theorem t: x >= 0 \\/ x < 0
signature { const x: Int; }
context { }
proof
node n0 {
  goal: x >= 0 \\/ x < 0;
  method: split(x >= 0);
  node a { goal: x >= 0 \\/ x < 0; method: hole; }
  node b { goal: x >= 0 \\/ x < 0; method: hole; }
}
"""


def test_single_hole_gives_one_auto_obligation():
    s = parse_sketch("theorem t: p\nsignature { pred p; }\ncontext { }\nproof\nnode n0 { goal: p; method: hole; }")
    obs = extract(s)
    assert len(obs) == 1 and obs.obligations[0].route == "auto"


def test_split_children_contexts():
    obs = extract(parse_sketch(SPLIT))
    assert [o.id for o in obs] == ["a/goal", "b/goal"]
    assert all(o.route == "auto" for o in obs)
    a, b = obs.obligations
    assert [render(f) for _, f in a.sequent.context] == ["x >= 0"]
    assert [render(f) for _, f in b.sequent.context] == ["~(x >= 0)"]


def test_rewrite_yields_equation_and_child_goal():
    s = corpus.sketch("lib_rewrite.psk")
    lib = corpus.library_for("lib_rewrite.psk")
    obs = extract(s, lib)
    eqs = {o.node_id: render(o.sequent.goal) for o in obs if o.slot == "eq"}
    assert eqs["r1"] == "plus(b, 0) = b"
    assert render(s.node("r2").goal) == "a + b = a + b"


def test_induction_step_context():
    obs = extract(corpus.sketch("add_zero.psk"))
    step = next(o for o in obs if o.node_id == "step")
    base = next(o for o in obs if o.node_id == "base")
    assert render(base.sequent.goal) == "plus(0, 0) = 0"
    ctx = dict(step.sequent.context)
    assert render(ctx["hn0.nonneg"]) == "n >= 0"
    assert render(ctx["hn0.ih"]) == "plus(n, 0) = n"


@pytest.mark.parametrize("entry", corpus.proofs(), ids=lambda e: e["file"])
def test_extraction_is_deterministic(entry):
    s = corpus.sketch(entry["file"])
    lib = corpus.library_for(entry["file"])
    a = extract(s, lib).dumps()
    b = extract(parse_sketch((corpus.ROOT / entry["file"]).read_text()), lib).dumps()
    assert a == b
    assert all(o.route in ROUTES for o in extract(s, lib))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**9))
def test_generated_sketch_obligations(seed):
    s = random_sketch(seed)
    obs = extract(s)
    ids = [o.id for o in obs]
    assert len(ids) == len(set(ids))
    node_ids = {n.id for n in s.nodes()}
    assert {o.node_id for o in obs} <= node_ids
    # every hole is an obligation of its own
    holes = {n.id for n in s.nodes() if n.method.tag == "hole"}
    assert holes <= {o.node_id for o in obs if o.route == "auto"}
    assert extract(s).dumps() == obs.dumps()
