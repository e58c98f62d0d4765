"""Discharge obligations and assemble a kernel theorem for a sketch.

Each node is processed independently from its own context (so nodes can be
cached and run concurrently); the root theorem is then assembled bottom-up
using only kernel rules over the per-node theorems.
"""

from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Mapping

from . import checker, kernel, solver
from .failures import FailureRecord, FailureReport, classify
from .kernel import CertRegistry, KernelError, ProofObject, Theorem, apply_rule
from .library import retrieve_hints
from .logic import (
    Eq,
    Forall,
    Formula,
    Not,
    Or,
    Sequent,
    Top,
    Var,
    INT,
    alpha_eq,
)
from .obligations import (
    InstantiationError,
    NodeInfo,
    Obligation,
    RewritePlan,
    _inferred_equation,
    check_rewrite,
    extract_node,
    instantiate,
    node_infos,
    peel_to_goal,
    references,
    rewrite_plan,
)
from .sketch import Contradiction, Exact, Hole, Induction, Rewrite, Sketch, SketchNode, Split, hyp_name
from .store import CacheEntry, ProofStore, node_key

HINT_K = 3


# --------------------------------------------------------------- transcript


@dataclass
class Transcript:
    """Append-only log of obligation verdicts, cache lookups and proposer exchanges."""

    events: list[dict] = field(default_factory=list)
    solver_calls: int = 0
    cache_hits: int = 0
    cache_misses: int = 0

    def add(self, event: dict) -> None:
        self.events.append(event)
        if event.get("event") == "cache":
            if event["hit"]:
                self.cache_hits += 1
            else:
                self.cache_misses += 1
        elif event.get("event") == "obligation" and event.get("how") == "solver":
            self.solver_calls += 1

    def extend(self, events) -> None:
        for e in events:
            self.add(e)

    def discharged(self, since: int = 0) -> list[str]:
        """Obligation ids discharged afresh (not served from the cache)."""
        return [e["id"] for e in self.events[since:] if e.get("event") == "obligation" and e.get("how") != "cached"]

    def to_json(self) -> dict:
        return {
            "solver_calls": self.solver_calls,
            "cache_hits": self.cache_hits,
            "cache_misses": self.cache_misses,
            "events": self.events,
        }


# ------------------------------------------------------------- node results


@dataclass
class ObligationVerdict:
    id: str
    route: str
    accepted: bool
    how: str  # kernel | solver | structural | cached | skipped
    detail: str = ""

    def to_json(self) -> dict:
        return {"id": self.id, "route": self.route, "verdict": "accepted" if self.accepted else "failed", "how": self.how, "detail": self.detail}


@dataclass
class NodeResult:
    node_id: str
    tag: str
    key: str
    accepted: bool
    cached: bool
    verdicts: list[ObligationVerdict]
    theorems: dict[str, Theorem] = field(default_factory=dict)
    bundles: dict[str, str] = field(default_factory=dict)  # digest -> bundle JSON
    failure: FailureRecord | None = None


@dataclass
class ProveResult:
    sketch: Sketch
    accepted: bool
    theorem: Theorem | None
    proof: ProofObject | None
    claimed: Sequent
    nodes: dict[str, NodeResult]
    failures: list[FailureRecord]
    transcript: Transcript
    registry: CertRegistry

    def primary_failures(self) -> list[FailureRecord]:
        """The first failing node of each independent subtree: failures with
        no failing proper ancestor."""
        parents = self.sketch.parents()
        failed = {f.node_id for f in self.failures}
        out = []
        for f in self.failures:
            p = parents.get(f.node_id)
            while p is not None and p not in failed:
                p = parents.get(p)
            if p is None:
                out.append(f)
        return out

    def to_json(self, library=None) -> dict:
        return {
            "theorem": self.sketch.name,
            "verdict": "accepted" if self.accepted else "rejected",
            "nodes": [
                {
                    "node_id": r.node_id,
                    "tag": r.tag,
                    "verdict": "accepted" if r.accepted else "failed",
                    "cached": r.cached,
                    "obligations": [v.to_json() for v in r.verdicts],
                }
                for r in self.nodes.values()
            ],
            "failures": [f.to_json(library) for f in self.failures],
            "solver_calls": self.transcript.solver_calls,
            "cache_hits": self.transcript.cache_hits,
            "cache_misses": self.transcript.cache_misses,
        }


class _NodeFailure(Exception):
    def __init__(self, report: FailureReport, ob: Obligation | None, countermodel=None, goal=None, node_id=None):
        super().__init__(report.detail)
        self.report = report
        self.ob = ob
        self.countermodel = countermodel
        self.goal = goal
        self.node_id = node_id


# ------------------------------------------------------------------ prover


class Prover:
    def __init__(
        self,
        library: Mapping[str, Formula] | None = None,
        store: ProofStore | None = None,
        *,
        jobs: int = 1,
        registry: CertRegistry | None = None,
        conflict_budget: int = solver.CONFLICT_BUDGET,
        node_budget: int = solver.NODE_BUDGET,
    ):
        self.library = library
        self.store = store if store is not None else ProofStore(None)
        self.jobs = max(1, jobs)
        self.registry = registry if registry is not None else CertRegistry()
        self.conflict_budget = conflict_budget
        self.node_budget = node_budget
        self._lock = threading.Lock()

    # -- public ------------------------------------------------------------

    def prove(self, s: Sketch, transcript: Transcript | None = None) -> ProveResult:
        tr = transcript if transcript is not None else Transcript()
        infos = node_infos(s, self.library)
        order = list(infos.values())
        if self.jobs > 1:
            with ThreadPoolExecutor(self.jobs) as ex:
                outs = list(ex.map(self._process, order))
        else:
            outs = [self._process(i) for i in order]
        results: dict[str, NodeResult] = {}
        for info, (res, events) in zip(order, outs):
            tr.extend(events)
            results[info.node.id] = res

        failures = [r.failure for r in results.values() if r.failure is not None]
        claimed = self._claimed(s, infos)
        thm = proof = None
        if not failures:
            try:
                thm = self._assemble(s.root, results, infos)
            except _NodeFailure as nf:
                failures.append(self._record(nf, infos[nf.node_id]))
            else:
                if not thm.sequent.entails(claimed):
                    failures.append(
                        self._record(
                            _NodeFailure(FailureReport("assembly", s.root.method.tag, "assembled theorem does not match the claim"), None),
                            infos[s.root.id],
                        )
                    )
                    thm = None
                else:
                    bundles: dict[str, str] = {}
                    for r in results.values():
                        bundles.update(r.bundles)
                    proof = kernel.record(thm, _used_bundles(thm, bundles))
        accepted = thm is not None and not failures
        tr.add({"event": "verdict", "theorem": s.name, "accepted": accepted})
        return ProveResult(s, accepted, thm if accepted else None, proof if accepted else None, claimed, results, failures, tr, self.registry)

    # -- claimed sequent -----------------------------------------------------

    @staticmethod
    def _claimed(s: Sketch, infos: dict[str, NodeInfo]) -> Sequent:
        ctx = list(s.context_facts)
        names = {n for n, _ in ctx}
        for info in infos.values():
            for lid in info.imports:
                if lid not in names:
                    names.add(lid)
                    ctx.append((lid, info.fact(lid)))
        return Sequent(tuple(ctx), s.theorem)

    # -- per node ------------------------------------------------------------

    def _process(self, info: NodeInfo) -> tuple[NodeResult, list[dict]]:
        n = info.node
        key = node_key(n, info.chain, references(n))
        events: list[dict] = []
        entry = self.store.lookup(key)
        if entry is not None:
            res = self._from_cache(info, key, entry, events)
            if res is not None:
                events.insert(0, {"event": "cache", "node": n.id, "key": key, "hit": True})
                return res, events
            events = []
        events.append({"event": "cache", "node": n.id, "key": key, "hit": False})
        res = self._discharge_node(info, key, events)
        self.store.store(
            CacheEntry(
                key,
                n.id,
                "accepted" if res.accepted else "failed",
                {slot: kernel.record(t, _used_bundles(t, res.bundles)).to_text() for slot, t in res.theorems.items()},
                res.failure.to_json() if res.failure else None,
                tuple(sorted(res.bundles)),
                record=res.failure,
            )
        )
        return res, events

    def _from_cache(self, info: NodeInfo, key: str, entry: CacheEntry, events: list[dict]) -> NodeResult | None:
        n = info.node
        obs = extract_node(info)
        if entry.verdict == "failed":
            # failures are reused only within a session; from disk they are re-attempted
            if entry.origin != "memory" or entry.record is None:
                return None
            for o in obs:
                events.append({"event": "obligation", "id": o.id, "route": o.route, "verdict": "cached", "how": "cached"})
            return NodeResult(n.id, n.method.tag, key, False, True, [ObligationVerdict(o.id, o.route, False, "cached") for o in obs], failure=entry.record)
        theorems: dict[str, Theorem] = {}
        bundles: dict[str, str] = {}
        by_slot = {o.slot: o for o in obs}
        try:
            for slot, text in entry.proofs.items():
                po = ProofObject.from_text(text)
                kernel.admit_bundles(po, self.registry)
                want = by_slot.get(slot)
                if want is None:
                    return None
                theorems[slot] = kernel.replay(po, want.sequent, self.registry)
                bundles.update(po.certs)
        except KernelError:
            return None
        verdicts = []
        for o in obs:
            # a structural verdict is a function of the key (goal, method, child goals, chain),
            # and assembly re-checks the rewrite in the kernel anyway
            if o.route != "kernel-structural" and o.slot not in theorems:
                return None
            verdicts.append(ObligationVerdict(o.id, o.route, True, "cached"))
            events.append({"event": "obligation", "id": o.id, "route": o.route, "verdict": "accepted", "how": "cached"})
        return NodeResult(n.id, n.method.tag, key, True, True, verdicts, theorems, bundles)

    def _discharge_node(self, info: NodeInfo, key: str, events: list[dict]) -> NodeResult:
        n = info.node
        m = n.method
        obs = extract_node(info)
        verdicts: list[ObligationVerdict] = []
        theorems: dict[str, Theorem] = {}
        bundles: dict[str, str] = {}
        failures: list[_NodeFailure] = []

        def note(o: Obligation, ok: bool, how: str, detail: str = "") -> None:
            verdicts.append(ObligationVerdict(o.id, o.route, ok, how, detail))
            events.append({"event": "obligation", "id": o.id, "route": o.route, "verdict": "accepted" if ok else "failed", "how": how, "detail": detail})

        unknown_uses = [r for r in info.unresolved if not (isinstance(m, Rewrite) and r == m.fact)]
        if unknown_uses:
            failures.append(
                _NodeFailure(FailureReport("unresolved-reference", m.tag, f"unknown fact or lemma {', '.join(unknown_uses)}"), None)
            )

        # auto obligations first: kernel-exact steps consume their theorems
        for o in obs:
            if o.route != "auto" or failures:
                continue
            try:
                thm, how, bundle = self._auto(o, unknown_fact=isinstance(m, Rewrite) and o.slot == "eq")
                theorems[o.slot] = thm
                if bundle:
                    bundles[bundle[0]] = bundle[1]
                note(o, True, how)
            except _NodeFailure as nf:
                note(o, False, nf.report.kind, nf.report.detail)
                failures.append(nf)

        for o in obs:
            if o.route == "auto":
                continue
            if failures:
                note(o, False, "skipped", "an earlier obligation of this node failed")
                continue
            try:
                if o.route == "kernel-exact":
                    theorems[o.slot] = self._exact(info, o, theorems)
                    note(o, True, "kernel")
                else:
                    why = self._structural(info)
                    if why is not None:
                        raise _NodeFailure(why, o)
                    note(o, True, "structural")
            except _NodeFailure as nf:
                if nf.ob is None:
                    nf.ob = o
                note(o, False, nf.report.kind, nf.report.detail)
                failures.append(nf)

        if failures:
            return NodeResult(n.id, m.tag, key, False, False, verdicts, failure=self._record(failures[0], info))
        return NodeResult(n.id, m.tag, key, True, False, verdicts, theorems, bundles)

    def _record(self, nf: _NodeFailure, info: NodeInfo) -> FailureRecord:
        goal = nf.goal if nf.goal is not None else (nf.ob.sequent.goal if nf.ob else info.node.goal)
        ctx = nf.ob.sequent.context if nf.ob else info.context
        return FailureRecord(
            node_id=info.node.id,
            cause=classify(nf.report),
            context=ctx,
            goal=goal,
            detail=nf.report.detail,
            countermodel=nf.countermodel,
            hints=tuple(retrieve_hints(goal, self.library, HINT_K)),
            obligation=nf.ob.id if nf.ob else None,
            kind=nf.report.kind,
        )

    # -- discharge routes ----------------------------------------------------

    def _auto(self, o: Obligation, unknown_fact: bool = False) -> tuple[Theorem, str, tuple[str, str] | None]:
        tag = o.slot
        direct = _kernel_direct(o.sequent)
        if direct is not None:
            return direct, "kernel", None
        out = solver.discharge(o.sequent, self.conflict_budget, self.node_budget)
        kind_for = (lambda k: "unresolved-reference") if unknown_fact else (lambda k: k)
        if isinstance(out, solver.Certified):
            try:
                token = checker.certify(o.sequent, out.kind, out.text)
            except checker.Rejection as e:
                raise _NodeFailure(FailureReport(kind_for("certificate-rejected"), tag, str(e)), o) from None
            thm = kernel.admit_certified(o.sequent, token, self.registry)
            return thm, "solver", kernel.make_bundle(o.sequent, out.kind, out.text)
        if isinstance(out, solver.Countermodel):
            detail = solver.describe(out)
            if unknown_fact:
                detail = f"rewrite fact is unknown and its equation is not provable: {detail}"
            raise _NodeFailure(FailureReport(kind_for("countermodel"), tag, detail), o, countermodel=out.assignment)
        if isinstance(out, solver.UnsupportedOutcome):
            raise _NodeFailure(FailureReport(kind_for("unsupported"), tag, solver.describe(out)), o)
        raise _NodeFailure(FailureReport(kind_for("resource-limit"), tag, solver.describe(out)), o)

    def _exact(self, info: NodeInfo, o: Obligation, theorems: dict[str, Theorem]) -> Theorem:
        m = info.node.method
        tag = m.tag
        fact = info.fact(m.fact)
        if fact is None:
            raise _NodeFailure(FailureReport("unresolved-reference", tag, f"unknown fact or lemma {m.fact}"), o)
        try:
            inst = instantiate(fact, dict(m.bindings))
            if isinstance(m, Exact):
                pre = peel_to_goal(inst, info.node.goal)
            else:
                pre = list(rewrite_plan(fact, m).pre)
        except InstantiationError as e:
            raise _NodeFailure(FailureReport(e.kind, tag, str(e)), o) from None
        pre_thms = [theorems[f"pre{i + 1}"] for i in range(len(pre))]
        try:
            t = apply_rule("assume", [], [m.fact, fact])
            bindings = dict(m.bindings)
            while isinstance(t.sequent.goal, Forall):
                t = apply_rule("forall_e", [t], [bindings[t.sequent.goal.var]])
            for p in pre_thms:
                t = apply_rule("imp_e", [t, p])
        except KernelError as e:
            raise _NodeFailure(FailureReport("instance-mismatch", tag, str(e)), o) from None
        return t

    def _structural(self, info: NodeInfo) -> FailureReport | None:
        n = info.node
        m = n.method
        if not n.children:
            return FailureReport("child-goal-mismatch", m.tag, "rewrite has no child")
        child = n.children[0].goal
        fact = info.fact(m.fact)
        if fact is None:
            eq = _inferred_equation(n.goal, child, m)
            if eq is None:
                return FailureReport("unresolved-reference", m.tag, f"unknown fact {m.fact} and no equation can be read off the step")
            src, dst = (eq.lhs, eq.rhs) if m.direction == "ltr" else (eq.rhs, eq.lhs)
            plan = RewritePlan((), eq, src, dst)
        else:
            try:
                plan = rewrite_plan(fact, m)
            except InstantiationError as e:
                return FailureReport(e.kind, m.tag, str(e))
        why = check_rewrite(n.goal, child, m.position, plan)
        if why is None:
            return None
        if why.startswith("child goal"):
            return FailureReport("child-goal-mismatch", m.tag, why)
        if why.startswith("term at"):
            return FailureReport("position-mismatch", m.tag, why)
        return FailureReport("position-invalid", m.tag, why)

    # -- assembly ------------------------------------------------------------

    def _assemble(self, n: SketchNode, results: dict[str, NodeResult], infos: dict[str, NodeInfo]) -> Theorem:
        kids = [self._assemble(c, results, infos) for c in n.children]
        r = results[n.id]
        m = n.method
        try:
            if isinstance(m, Hole):
                return r.theorems["goal"]
            if isinstance(m, Exact):
                return r.theorems["exact"]
            if isinstance(m, Rewrite):
                # the child states the goal after rewriting; substitute back
                return apply_rule("subst_eq", [r.theorems["eq"], kids[0]], [m.position, "rtl" if m.direction == "ltr" else "ltr"])
            if isinstance(m, Split):
                em = excluded_middle(m.condition, n.id)
                return apply_rule("or_e", [em, kids[0], kids[1]], [hyp_name(n.id, "left"), hyp_name(n.id, "right")])
            if isinstance(m, Contradiction):
                return apply_rule("raa", [kids[0]], [hyp_name(n.id, "neg"), n.goal])
            if isinstance(m, Induction):
                return apply_rule(
                    "induction_int",
                    [kids[0], kids[1]],
                    [n.goal, Var(m.var, INT), hyp_name(n.id, "nonneg"), hyp_name(n.id, "ih")],
                )
        except KernelError as e:
            raise _NodeFailure(FailureReport("assembly", m.tag, f"kernel rejected {m.tag} step: {e}"), None, goal=n.goal, node_id=n.id) from None
        raise AssertionError(m)


def _kernel_direct(seq: Sequent) -> Theorem | None:
    """Close trivial obligations with a single kernel rule, without a solver."""
    g = seq.goal
    if isinstance(g, Top):
        return apply_rule("top_i", [], [])
    if isinstance(g, Eq) and alpha_eq(g.lhs, g.rhs):
        return apply_rule("refl", [], [g.lhs])
    for name, f in seq.context:
        if alpha_eq(f, g):
            return apply_rule("assume", [], [name, f])
    return None


def excluded_middle(c: Formula, node_id: str) -> Theorem:
    """``|- c \\/ ~c`` from kernel rules (uses raa)."""
    h_em, h_c = hyp_name(node_id, "em"), hyp_name(node_id, "emc")
    goal = Or(c, Not(c))
    not_goal = apply_rule("assume", [], [h_em, Not(goal)])
    c_thm = apply_rule("assume", [], [h_c, c])
    left = apply_rule("or_i_l", [c_thm], [Not(c)])
    bot1 = apply_rule("not_e", [not_goal, left])
    not_c = apply_rule("not_i", [bot1], [h_c, c])
    right = apply_rule("or_i_r", [not_c], [c])
    bot2 = apply_rule("not_e", [not_goal, right])
    return apply_rule("raa", [bot2], [h_em, goal])


def _used_bundles(thm: Theorem, bundles: Mapping[str, str]) -> list[tuple[str, str]]:
    """Bundles for the certified leaves of ``thm``, in leaf order."""
    out: list[tuple[str, str]] = []
    seen: set[str] = set()
    for step in kernel.record(thm).steps:
        if step.rule == "CERT" and step.cert not in seen and step.cert in bundles:
            seen.add(step.cert)
            out.append((step.cert, bundles[step.cert]))
    return out


def prove(s: Sketch, library=None, store: ProofStore | None = None, **kw: Any) -> ProveResult:
    return Prover(library, store, **kw).prove(s)


def verify(proof_text: str, claimed: Sequent | None = None) -> Theorem:
    """Re-check a serialized proof object from scratch: certificates are
    validated by the checker, then every step is replayed by the kernel."""
    po = ProofObject.from_text(proof_text)
    reg = CertRegistry()
    kernel.admit_bundles(po, reg)
    return kernel.replay(po, claimed, reg)
