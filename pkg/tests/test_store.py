import hashlib
import json
import logging

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import corpus
from proofsketch.logic import Cmp, IntLit, Fn, INT
from proofsketch.prover import Prover
from proofsketch.sketch import Hole, SketchNode, Split, parse_sketch, replace_node
from proofsketch.store import CacheEntry, ProofStore, StoreLocked, audit, dirty_set, node_key, sketch_keys
from test_obligations import SPLIT
from test_sketch import random_sketch


def test_node_key_stability():
    s = corpus.sketch("add_zero.psk")
    n = s.node("close")
    assert node_key(n, "ctx", ["b", "a"]) == node_key(n, "ctx", ["a", "b"])
    assert node_key(n, "ctx", ["a"]) != node_key(n, "other", ["a"])


def test_alpha_renamed_goal_keeps_key():
    a = parse_sketch("theorem t: forall x:Int. x >= x\nsignature { }\ncontext { }\nproof\nnode n0 { goal: forall x:Int. x >= x; method: hole; }")
    b = parse_sketch("theorem t: forall y:Int. y >= y\nsignature { }\ncontext { }\nproof\nnode n0 { goal: forall y:Int. y >= y; method: hole; }")
    assert sketch_keys(a) == sketch_keys(b)


def test_memory_store_round_trip():
    st_ = ProofStore(None)
    e = CacheEntry("ab" * 32, "n0", "accepted", {"goal": "PROOFOBJ v1 x\n"})
    st_.store(e)
    assert st_.lookup(e.key) is e
    assert st_.lookup("cd" * 32) is None


def test_disk_store_round_trip(tmp_path):
    key = "ab" * 32
    with ProofStore(tmp_path / "s") as s:
        s.store(CacheEntry(key, "n0", "accepted", {"goal": "PROOFOBJ v1 x\n", "eq": "y\n"}))
    with ProofStore(tmp_path / "s", readonly=True) as s:
        e = s.lookup(key)
        assert e.proofs == {"goal": "PROOFOBJ v1 x\n", "eq": "y\n"} and e.origin == "disk"


def test_truncated_entry_is_absent(tmp_path, caplog):
    key = "ab" * 32
    with ProofStore(tmp_path / "s") as s:
        s.store(CacheEntry(key, "n0", "accepted", {"goal": "PROOFOBJ v1 x\n"}))
        p = s.path(key)
    p.write_bytes(p.read_bytes()[:-5])
    with caplog.at_level(logging.WARNING):
        with ProofStore(tmp_path / "s") as s:
            assert s.lookup(key) is None
    assert "corrupt" in caplog.text


def test_single_writer(tmp_path):
    with ProofStore(tmp_path / "s"):
        with pytest.raises(StoreLocked):
            ProofStore(tmp_path / "s")
        # readers are not blocked
        ProofStore(tmp_path / "s", readonly=True).close()


def test_dirty_set_examples():
    s = parse_sketch(SPLIT)
    assert dirty_set(s, s) == set()
    a = s.node("a")
    edited = replace_node(s, "a", SketchNode("a", Cmp(">=", Fn("x", (), INT), IntLit(0)), Hole()))
    assert dirty_set(s, edited) == {"a"}
    cond = replace_node(s, "n0", SketchNode("n0", s.root.goal, Split(Cmp(">=", Fn("x", (), INT), IntLit(1))), (), s.root.children))
    assert dirty_set(s, cond) == {"n0", "a", "b"}
    assert a is s.node("a")


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 10**9), st.integers(0, 100))
def test_dirty_set_covers_edit(seed, pick):
    s = random_sketch(seed)
    nodes = s.nodes()
    target = nodes[pick % len(nodes)]
    edited = replace_node(s, target.id, SketchNode(target.id, target.goal, Hole()))
    d = dirty_set(s, edited)
    if target.method.tag != "hole":
        assert target.id in d
    assert d <= {n.id for n in edited.nodes()}
    assert dirty_set(edited, edited) == set()


def test_warm_store_needs_no_solver(tmp_path):
    s = corpus.sketch("sign_cases.psk")
    with ProofStore(tmp_path / "s") as st_:
        cold = Prover(None, st_).prove(s)
    assert cold.accepted and cold.transcript.solver_calls > 0
    with ProofStore(tmp_path / "s") as st_:
        warm = Prover(None, st_).prove(s)
    assert warm.accepted and warm.transcript.solver_calls == 0
    assert warm.proof.to_text() == cold.proof.to_text()


def test_audit_and_tamper_detection(tmp_path):
    s = corpus.sketch("sign_cases.psk")
    with ProofStore(tmp_path / "s") as st_:
        Prover(None, st_).prove(s)
    with ProofStore(tmp_path / "s", readonly=True) as st_:
        rep = audit(st_)
        assert rep.ok and rep.checked > 0
        victim = next(e for e in st_.entries() if e.verdict == "accepted" and any(" and_i " in t or " imp_i " in t or " CERT " in t for t in e.proofs.values()))
    path = tmp_path / "s" / victim.key[:2] / f"{victim.key}.entry"
    head, _, body = path.read_bytes().partition(b"\n")
    # rewrite a digest inside the body and re-seal the header so only replay can notice
    text = body.decode()
    bad = text.replace("PROOFOBJ v1 ", "PROOFOBJ v1 00", 1)
    h = json.loads(head)
    h["body_sha256"] = hashlib.sha256(bad.encode()).hexdigest()
    slot, n = h["layout"][0]
    h["layout"][0] = [slot, n + 2]
    path.write_bytes(json.dumps(h).encode() + b"\n" + bad.encode())
    with ProofStore(tmp_path / "s", readonly=True) as st_:
        rep = audit(st_)
    assert not rep.ok and rep.failures[0][0] == victim.key


def test_gc_keeps_reachable(tmp_path):
    s = corpus.sketch("sign_cases.psk")
    with ProofStore(tmp_path / "s") as st_:
        Prover(None, st_).prove(s)
        st_.store(CacheEntry("ff" * 32, "zz", "accepted", {}))
        keep = set(sketch_keys(s).values())
        assert st_.gc(keep) == 1
        assert set(st_.keys_on_disk()) <= keep
