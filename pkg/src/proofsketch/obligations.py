"""Deterministic expansion of a sketch into proof obligations.

Every node sees a context built along the path from the root: the sketch's
context facts, library lemmas the node (or an ancestor) refers to, and the
hypotheses that split, contradiction and induction nodes introduce under the
names ``h<node-id>.<slot>``.

Slots per tag, in order:

* hole: ``goal`` (auto)
* exact: ``exact`` (kernel-exact), then ``pre1``.. for conditional facts (auto)
* rewrite: ``eq`` (kernel-exact, or auto when the fact is unknown), ``pre1``..,
  then ``rewrite`` (kernel-structural position check)
* split, contradiction, induction: none; their children carry the work
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping

from .logic import (
    INT,
    Cmp,
    Eq,
    Forall,
    Formula,
    Imp,
    IntLit,
    LogicError,
    Not,
    Sequent,
    Term,
    Var,
    alpha_eq,
    canonical_digest,
    is_term,
    replace_at,
    subst_many,
    subterm_at,
    term_sort,
)
from .sketch import (
    Contradiction,
    Exact,
    Hole,
    Induction,
    Rewrite,
    Sketch,
    SketchNode,
    Split,
    child_scope,
    hyp_name,
    induction_goals,
    induction_schema,
)
from .syntax import render
from .translate import fragment

Context = tuple[tuple[str, Formula], ...]

ROUTES = ("kernel-structural", "kernel-exact", "auto")


@dataclass(frozen=True)
class Obligation:
    node_id: str
    slot: str
    route: str
    sequent: Sequent

    @property
    def id(self) -> str:
        return f"{self.node_id}/{self.slot}"

    @property
    def fragment(self) -> str:
        return fragment(self.sequent)

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "node_id": self.node_id,
            "slot": self.slot,
            "route": self.route,
            "fragment": self.fragment,
            "context": [{"name": n, "formula": render(f)} for n, f in self.sequent.context],
            "goal": render(self.sequent.goal),
        }


@dataclass(frozen=True)
class ObligationSet:
    obligations: tuple[Obligation, ...]

    def __iter__(self):
        return iter(self.obligations)

    def __len__(self) -> int:
        return len(self.obligations)

    def by_node(self, node_id: str) -> list[Obligation]:
        return [o for o in self.obligations if o.node_id == node_id]

    def to_json(self) -> list[dict]:
        return [o.to_json() for o in self.obligations]

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, ensure_ascii=False) + "\n"


# ------------------------------------------------------------ fact instances


class InstantiationError(Exception):
    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind


def instantiate(fact: Formula, bindings: Mapping[str, Term]) -> Formula:
    """Strip the leading universals of ``fact`` using ``bindings``.

    Every leading quantified variable must be bound at its own sort and every
    binding must be used.
    """
    used: set[str] = set()
    f = fact
    while isinstance(f, Forall):
        if f.var not in bindings:
            raise InstantiationError("unbound-variable", f"no binding for quantified variable {f.var}")
        t = bindings[f.var]
        if term_sort(t) != f.sort:
            raise InstantiationError("binding-ill-sorted", f"binding {f.var} := {render(t)} has sort {term_sort(t)}, expected {f.sort}")
        used.add(f.var)
        f = subst_many(f.body, {f.var: t})
    extra = sorted(set(bindings) - used)
    if extra:
        raise InstantiationError("extra-binding", f"bindings for variables the fact does not quantify: {', '.join(extra)}")
    return f


def peel_to_goal(instance: Formula, goal: Formula) -> list[Formula]:
    """Preconditions H1..Hk with ``instance = H1 -> ... -> Hk -> goal``."""
    pre: list[Formula] = []
    cur = instance
    while not alpha_eq(cur, goal):
        if not isinstance(cur, Imp):
            raise InstantiationError("instance-mismatch", f"instance {render(instance)} does not conclude {render(goal)}")
        pre.append(cur.lhs)
        cur = cur.rhs
    return pre


def peel_to_equation(instance: Formula) -> tuple[list[Formula], Eq]:
    pre: list[Formula] = []
    cur = instance
    while isinstance(cur, Imp):
        pre.append(cur.lhs)
        cur = cur.rhs
    if not isinstance(cur, Eq):
        raise InstantiationError("instance-mismatch", f"instance {render(instance)} is not an equation")
    return pre, cur


@dataclass(frozen=True)
class RewritePlan:
    """The pieces of a rewrite step once its fact is instantiated."""

    pre: tuple[Formula, ...]
    equation: Eq  # instance of the fact, oriented as stated
    source: Term  # the term found at the position
    target: Term  # what replaces it


def rewrite_plan(fact: Formula, m: Rewrite) -> RewritePlan:
    pre, eq = peel_to_equation(instantiate(fact, dict(m.bindings)))
    src, dst = (eq.lhs, eq.rhs) if m.direction == "ltr" else (eq.rhs, eq.lhs)
    return RewritePlan(tuple(pre), eq, src, dst)


def check_rewrite(goal: Formula, child_goal: Formula, position: tuple[int, ...], plan: RewritePlan) -> str | None:
    """None when the step is structurally valid, otherwise the reason."""
    try:
        here = subterm_at(goal, position)
    except LogicError as e:
        return f"position {list(position)}: {e}"
    if not alpha_eq(here, plan.source):
        return f"term at {list(position)} is {_show(here)}, not {render(plan.source)}"
    try:
        expected = replace_at(goal, position, plan.target)
    except LogicError as e:
        return f"cannot rewrite at {list(position)}: {e}"
    if not alpha_eq(expected, child_goal):
        return f"child goal should be {render(expected)}"
    return None


def _show(x) -> str:
    try:
        return render(x)
    except Exception:  # pragma: no cover - defensive
        return repr(x)


# ---------------------------------------------------------- context walking


@dataclass(frozen=True)
class NodeInfo:
    node: SketchNode
    context: Context  # the node's own context, library imports included
    chain: str  # hex digest of the context chain from the root
    scope: tuple[tuple[str, str], ...]  # eigenvariables
    unresolved: tuple[str, ...]  # references that are neither facts, hypotheses nor lemmas
    imports: tuple[str, ...]  # lemma ids this node brings into context

    def fact(self, name: str) -> Formula | None:
        for n, f in self.context:
            if n == name:
                return f
        return None


def references(n: SketchNode) -> list[str]:
    refs = list(n.uses)
    if isinstance(n.method, (Rewrite, Exact)) and n.method.fact not in refs:
        refs.append(n.method.fact)
    return refs


def child_extension(n: SketchNode, index: int) -> Context:
    """Hypotheses the ``index``-th child of ``n`` gains."""
    m = n.method
    if isinstance(m, Split):
        return ((hyp_name(n.id, "left"), m.condition),) if index == 0 else ((hyp_name(n.id, "right"), Not(m.condition)),)
    if isinstance(m, Contradiction):
        return ((hyp_name(n.id, "neg"), Not(n.goal)),)
    if isinstance(m, Induction) and index == 1:
        body = induction_schema(n.goal, m.var)
        if body is None:
            return ()
        _, ih, _ = induction_goals(body, m.var)
        return (
            (hyp_name(n.id, "nonneg"), Cmp(">=", Var(m.var, INT), IntLit(0))),
            (hyp_name(n.id, "ih"), ih),
        )
    return ()


def root_chain(s: Sketch) -> str:
    return canonical_digest(["psk-chain/1", s.signature, list(s.context_facts)]).hex()


def _extend_chain(chain: str, tag: str, items: Context) -> str:
    return canonical_digest([chain, tag, [[n, f] for n, f in items]]).hex()


def node_infos(s: Sketch, library: Mapping[str, Formula] | None = None) -> dict[str, NodeInfo]:
    """Context, chain digest and scope for every node, in document order."""
    lib = library or {}
    out: dict[str, NodeInfo] = {}

    def visit(n: SketchNode, ctx: Context, chain: str, scope: dict[str, str]) -> None:
        names = {name for name, _ in ctx}
        imports = []
        unresolved = []
        for r in references(n):
            if r in names:
                continue
            if r in lib:
                imports.append((r, lib[r]))
                names.add(r)
            else:
                unresolved.append(r)
        own = ctx + tuple(imports)
        if imports:
            chain = _extend_chain(chain, "import", tuple(imports))
        out[n.id] = NodeInfo(n, own, chain, tuple(sorted(scope.items())), tuple(unresolved), tuple(r for r, _ in imports))
        for i, c in enumerate(n.children):
            ext = child_extension(n, i)
            child_chain = _extend_chain(chain, f"{n.id}:{i}", ext) if ext else chain
            visit(c, own + ext, child_chain, child_scope(n, i, scope))

    visit(s.root, tuple(s.context_facts), root_chain(s), {})
    return out


# -------------------------------------------------------------- extraction


def extract_node(info: NodeInfo) -> list[Obligation]:
    n, ctx = info.node, info.context
    m = n.method

    def ob(slot: str, route: str, goal: Formula) -> Obligation:
        return Obligation(n.id, slot, route, Sequent(ctx, goal))

    if isinstance(m, Hole):
        return [ob("goal", "auto", n.goal)]
    if isinstance(m, Exact):
        out = [ob("exact", "kernel-exact", n.goal)]
        fact = info.fact(m.fact)
        if fact is not None:
            try:
                pre = peel_to_goal(instantiate(fact, dict(m.bindings)), n.goal)
            except InstantiationError:
                pre = []
            out += [ob(f"pre{i + 1}", "auto", h) for i, h in enumerate(pre)]
        return out
    if isinstance(m, Rewrite):
        out = []
        fact = info.fact(m.fact)
        child = n.children[0].goal if n.children else None
        if fact is None:
            eq = _inferred_equation(n.goal, child, m)
            if eq is not None:
                out.append(ob("eq", "auto", eq))
        else:
            try:
                plan = rewrite_plan(fact, m)
                out.append(ob("eq", "kernel-exact", plan.equation))
                out += [ob(f"pre{i + 1}", "auto", h) for i, h in enumerate(plan.pre)]
            except InstantiationError:
                out.append(ob("eq", "kernel-exact", _inferred_equation(n.goal, child, m) or n.goal))
        out.append(ob("rewrite", "kernel-structural", n.goal))
        return out
    return []


def _inferred_equation(goal: Formula, child: Formula | None, m: Rewrite) -> Eq | None:
    """The equation a rewrite must have meant, read off the parent and child goals."""
    if child is None:
        return None
    try:
        before, after = subterm_at(goal, m.position), subterm_at(child, m.position)
    except LogicError:
        return None
    if not (is_term(before) and is_term(after)) or term_sort(before) != term_sort(after):
        return None
    return Eq(before, after) if m.direction == "ltr" else Eq(after, before)


def extract(s: Sketch, library: Mapping[str, Formula] | None = None) -> ObligationSet:
    infos = node_infos(s, library)
    obs: list[Obligation] = []
    for info in infos.values():
        obs.extend(extract_node(info))
    return ObligationSet(tuple(obs))
