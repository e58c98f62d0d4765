"""Typed proof sketches: AST, parser for ``.psk`` files, validation and rendering."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterator, Mapping, Union

from .logic import (
    INT,
    Arith,
    Bot,
    Cmp,
    Forall,
    Formula,
    Imp,
    IntLit,
    LogicError,
    Signature,
    SortError,
    Term,
    Var,
    alpha_eq,
    check_formula,
    check_term,
    free_vars,
    is_term,
    substitute,
)
from .syntax import Parser, ParseError, render, render_term, resolve

# ------------------------------------------------------------------- methods


@dataclass(frozen=True)
class Rewrite:
    fact: str
    position: tuple[int, ...]
    direction: str  # "ltr" | "rtl"
    bindings: tuple[tuple[str, Term], ...] = ()
    tag = "rewrite"


@dataclass(frozen=True)
class Split:
    condition: Formula
    tag = "split"


@dataclass(frozen=True)
class Induction:
    var: str
    tag = "induction"


@dataclass(frozen=True)
class Contradiction:
    tag = "contradiction"


@dataclass(frozen=True)
class Exact:
    fact: str
    bindings: tuple[tuple[str, Term], ...] = ()
    tag = "exact"


@dataclass(frozen=True)
class Hole:
    tag = "hole"


Method = Union[Rewrite, Split, Induction, Contradiction, Exact, Hole]
METHOD_TAGS = ("rewrite", "split", "induction", "contradiction", "exact", "hole")


@dataclass(frozen=True)
class SketchNode:
    id: str
    goal: Formula
    method: Method
    uses: tuple[str, ...] = ()
    children: tuple["SketchNode", ...] = ()
    line: int = field(default=0, compare=False)
    col: int = field(default=0, compare=False)

    def walk(self) -> Iterator["SketchNode"]:
        yield self
        for c in self.children:
            yield from c.walk()


@dataclass(frozen=True)
class Sketch:
    name: str
    signature: Signature
    theorem: Formula
    context_facts: tuple[tuple[str, Formula], ...]
    root: SketchNode

    def nodes(self) -> list[SketchNode]:
        """All nodes in document (pre-)order."""
        return list(self.root.walk())

    def node(self, node_id: str) -> SketchNode:
        for n in self.root.walk():
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    def parents(self) -> dict[str, str | None]:
        out: dict[str, str | None] = {self.root.id: None}
        for n in self.root.walk():
            for c in n.children:
                out[c.id] = n.id
        return out

    def fact(self, name: str) -> Formula | None:
        for n, f in self.context_facts:
            if n == name:
                return f
        return None


def child_scope(node: SketchNode, index: int, scope: Mapping[str, str]) -> dict[str, str]:
    """Eigenvariables visible in the ``index``-th child of ``node``."""
    out = dict(scope)
    if isinstance(node.method, Induction) and index == 1:
        out[node.method.var] = INT
    return out


def hyp_name(node_id: str, slot: str) -> str:
    return f"h{node_id}.{slot}"


def induction_schema(goal: Formula, var: str) -> Formula | None:
    """Return the body P when goal is ``forall var:Int. var >= 0 -> P``."""
    if (
        isinstance(goal, Forall)
        and goal.sort == INT
        and goal.var == var
        and isinstance(goal.body, Imp)
        and goal.body.lhs == Cmp(">=", Var(var, INT), IntLit(0))
    ):
        return goal.body.rhs
    return None


def induction_goals(body: Formula, var: str) -> tuple[Formula, Formula, Formula]:
    """(base goal, step hypothesis, step goal) with ``var`` as the eigenvariable."""
    v = Var(var, INT)
    return (
        substitute(body, v, IntLit(0)),
        body,
        substitute(body, v, Arith("+", (v, IntLit(1)))),
    )


# -------------------------------------------------------------------- parser


class SketchSyntaxError(ParseError):
    pass


class _SketchParser(Parser):
    def __init__(self, text: str):
        super().__init__(text)
        self.seen: set[str] = set()

    def sketch(self) -> tuple:
        self.expect("theorem")
        name = self.ident("theorem name")
        self.expect(":")
        theorem = self.formula()
        sig = Signature()
        if self.at("signature"):
            self.signature(sig)
        self.expect("context")
        self.expect("{")
        facts = []
        names: set[str] = set()
        while not self.at("}"):
            tok = self.tok
            fname, f = self.fact()
            if fname in names:
                raise SketchSyntaxError(f"duplicate fact {fname!r}", tok.line, tok.col)
            names.add(fname)
            facts.append((fname, f))
        self.expect("}")
        self.expect("proof")
        root = self.node()
        self.eof()
        return name, sig, theorem, tuple(facts), root

    def signature(self, sig: Signature) -> None:
        self.expect("signature")
        self.expect("{")
        while not self.accept("}"):
            tok = self.tok
            try:
                if self.accept("sort"):
                    sig.add_sort(self.ident("sort name"))
                elif self.accept("fun"):
                    fname = self.ident("function name")
                    self.expect(":")
                    args = self.sorts()
                    self.expect("->")
                    sig.add_function(fname, args, self.ident("sort"))
                elif self.accept("pred"):
                    pname = self.ident("predicate name")
                    args: list[str] = []
                    if self.accept(":"):
                        args = self.sorts() if self.tok.kind == "IDENT" else []
                    sig.add_predicate(pname, args)
                elif self.accept("const"):
                    cname = self.ident("constant name")
                    self.expect(":")
                    sig.add_constant(cname, self.ident("sort"))
                else:
                    raise self.error("expected sort, fun, pred or const")
            except SortError as e:
                raise SketchSyntaxError(str(e), tok.line, tok.col) from None
            self.expect(";")

    def sorts(self) -> list[str]:
        out = [self.ident("sort")]
        while self.accept(","):
            out.append(self.ident("sort"))
        return out

    def fact(self) -> tuple[str, Formula]:
        name = self.ident("fact name")
        self.expect(":")
        f = self.formula()
        self.expect(";")
        return name, f

    def node(self) -> SketchNode:
        start = self.expect("node")
        tok = self.tok
        nid = self.ident("node id")
        if nid in self.seen:
            raise SketchSyntaxError(f"duplicate node id {nid!r}", tok.line, tok.col)
        self.seen.add(nid)
        self.expect("{")
        self.expect("goal")
        self.expect(":")
        goal = self.formula()
        self.expect(";")
        self.expect("method")
        self.expect(":")
        method = self.method()
        self.expect(";")
        uses: list[str] = []
        if self.accept("uses"):
            self.expect(":")
            uses.append(self.dotted())
            while self.accept(","):
                uses.append(self.dotted())
            self.expect(";")
        kids = []
        while self.at("node"):
            kids.append(self.node())
        self.expect("}")
        return SketchNode(nid, goal, method, tuple(uses), tuple(kids), start.line, start.col)

    def method(self) -> Method:
        tok = self.tok
        tag = self.ident("method tag")
        if tag == "hole":
            return Hole()
        if tag == "contradiction":
            return Contradiction()
        if tag == "split":
            self.expect("(")
            c = self.formula()
            self.expect(")")
            return Split(c)
        if tag == "induction":
            self.expect("(")
            v = self.ident("induction variable")
            self.expect(")")
            return Induction(v)
        if tag == "exact":
            self.expect("(")
            fact = self.dotted()
            binds = self.bindings() if self.accept(",") else ()
            self.expect(")")
            return Exact(fact, binds)
        if tag == "rewrite":
            self.expect("(")
            fact = self.dotted()
            self.expect(",")
            pos = self.position()
            self.expect(",")
            dtok = self.tok
            direction = self.ident("direction")
            if direction not in ("ltr", "rtl"):
                raise SketchSyntaxError("direction must be ltr or rtl", dtok.line, dtok.col)
            binds = self.bindings() if self.accept(",") else ()
            self.expect(")")
            return Rewrite(fact, pos, direction, binds)
        raise SketchSyntaxError(f"unknown method tag {tag!r}", tok.line, tok.col)

    def position(self) -> tuple[int, ...]:
        self.expect("[")
        out: list[int] = []
        if not self.at("]"):
            out.append(self.integer())
            while self.accept(","):
                out.append(self.integer())
        self.expect("]")
        return tuple(out)

    def bindings(self) -> tuple[tuple[str, Term], ...]:
        out = []
        while True:
            v = self.ident("bound variable")
            self.expect(":=")
            out.append((v, self.term()))
            if not self.accept(","):
                return tuple(out)


def _resolve_method(m: Method, sig: Signature, scope: Mapping[str, str]) -> Method:
    if isinstance(m, (Rewrite, Exact)):
        return replace(m, bindings=tuple((v, resolve(t, sig, scope)) for v, t in m.bindings))
    if isinstance(m, Split):
        return Split(resolve(m.condition, sig, scope))
    return m


def resolve_node(n: SketchNode, sig: Signature, scope: Mapping[str, str] | None = None) -> SketchNode:
    scope = dict(scope or {})
    kids = tuple(resolve_node(c, sig, child_scope(n, i, scope)) for i, c in enumerate(n.children))
    return replace(
        n,
        goal=resolve(n.goal, sig, scope),
        method=_resolve_method(n.method, sig, scope),
        children=kids,
    )


def parse_sketch(text: str) -> Sketch:
    """Parse ``.psk`` text. Raises ParseError (with line/column) on bad syntax."""
    p = _SketchParser(text)
    name, sig, theorem, facts, root = p.sketch()
    return Sketch(
        name,
        sig,
        resolve(theorem, sig),
        tuple((n, resolve(f, sig)) for n, f in facts),
        resolve_node(root, sig),
    )


def parse_node(text: str, sig: Signature, scope: Mapping[str, str] | None = None) -> SketchNode:
    """Parse a single ``node ... { }`` block, e.g. a proposer's replacement."""
    p = _SketchParser(text)
    n = p.node()
    p.eof()
    return resolve_node(n, sig, scope)


def parse_facts(text: str, sig: Signature | None = None) -> list[tuple[str, Formula]]:
    """Parse a sequence of ``name: formula;`` facts (the ``.plib`` format)."""
    p = _SketchParser(text)
    out = []
    seen: set[str] = set()
    while p.tok.kind != "EOF":
        tok = p.tok
        name, f = p.fact()
        if name in seen:
            raise SketchSyntaxError(f"duplicate fact {name!r}", tok.line, tok.col)
        seen.add(name)
        out.append((name, resolve(f, sig)))
    return out


# ----------------------------------------------------------------- rendering


def render_method(m: Method) -> str:
    def binds(bs):
        return "".join(f", {v} := {render_term(t)}" for v, t in bs)

    if isinstance(m, Rewrite):
        pos = "[" + ", ".join(str(i) for i in m.position) + "]"
        return f"rewrite({m.fact}, {pos}, {m.direction}{binds(m.bindings)})"
    if isinstance(m, Exact):
        return f"exact({m.fact}{binds(m.bindings)})"
    if isinstance(m, Split):
        return f"split({render(m.condition)})"
    if isinstance(m, Induction):
        return f"induction({m.var})"
    return m.tag


def render_node(n: SketchNode, indent: int = 0) -> str:
    pad = "  " * indent
    lines = [
        f"{pad}node {n.id} {{",
        f"{pad}  goal: {render(n.goal)};",
        f"{pad}  method: {render_method(n.method)};",
    ]
    if n.uses:
        lines.append(f"{pad}  uses: {', '.join(n.uses)};")
    for c in n.children:
        lines.append(render_node(c, indent + 1))
    lines.append(f"{pad}}}")
    return "\n".join(lines)


def render_signature(sig: Signature) -> list[str]:
    body = [f"  sort {s};" for s in sorted(sig.sorts - {INT})]
    body += [f"  fun {f}: {', '.join(a)} -> {r};" for f, (a, r) in sig.functions.items()]
    for p, a in sig.predicates.items():
        body.append(f"  pred {p}: {', '.join(a)};" if a else f"  pred {p};")
    body += [f"  const {c}: {s};" for c, s in sig.constants.items()]
    if not body:
        return []
    return ["signature {", *body, "}"]


def render_sketch(s: Sketch) -> str:
    lines = [f"theorem {s.name}: {render(s.theorem)}"]
    lines += render_signature(s.signature)
    lines.append("context {")
    lines += [f"  {n}: {render(f)};" for n, f in s.context_facts]
    lines.append("}")
    lines.append("proof")
    lines.append(render_node(s.root))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- validation

ISSUE_KINDS = (
    "unknown-fact",
    "shape-violation",
    "sort-error",
    "duplicate-id",
    "cyclic-dependency",
    "unresolved-hole-type",
)


@dataclass(frozen=True)
class Issue:
    node_id: str
    kind: str
    message: str

    def to_json(self) -> dict:
        return {"node_id": self.node_id, "kind": self.kind, "message": self.message}


@dataclass(frozen=True)
class WellFormedReport:
    issues: tuple[Issue, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.issues

    def to_json(self) -> dict:
        return {"ok": self.ok, "issues": [i.to_json() for i in self.issues]}


_EXPECTED_CHILDREN = {"split": 2, "rewrite": 1, "induction": 2, "contradiction": 1, "exact": 0, "hole": 0}


def _sort_issue(sig: Signature, f, scope: Mapping[str, str]) -> str | None:
    try:
        if is_term(f):
            check_term(f, sig)
        else:
            check_formula(f, sig)
    except LogicError as e:
        return str(e)
    extra = {v.name for v in free_vars(f) if scope.get(v.name) != v.sort}
    if extra:
        return f"free variables {sorted(extra)} are not in scope"
    return None


def validate_sketch(s: Sketch, library: Mapping[str, Formula] | None = None) -> WellFormedReport:
    """Check sorts, per-method shape contracts and references.

    Fact references are checked against context facts, hypotheses introduced
    on the path from the root and, when ``library`` is given, the lemma
    library. Without a library, unknown references are left for discharge to
    report as missing lemmas.
    """
    issues: list[Issue] = []
    sig = s.signature
    for name, f in s.context_facts:
        msg = _sort_issue(sig, f, {})
        if msg:
            issues.append(Issue("<context>", "sort-error", f"fact {name}: {msg}"))
    msg = _sort_issue(sig, s.theorem, {})
    if msg:
        issues.append(Issue("<theorem>", "sort-error", msg))
    elif not alpha_eq(s.root.goal, s.theorem):
        issues.append(Issue(s.root.id, "shape-violation", "root goal differs from the theorem"))

    all_ids = [n.id for n in s.nodes()]
    seen: set[str] = set()
    facts = {n for n, _ in s.context_facts}

    def visit(n: SketchNode, scope: dict[str, str], hyps: set[str], ancestors: tuple[str, ...]) -> None:
        if n.id in seen:
            issues.append(Issue(n.id, "duplicate-id", f"node id {n.id!r} already used"))
        seen.add(n.id)
        m = n.method
        msg = _sort_issue(sig, n.goal, scope)
        if msg:
            kind = "unresolved-hole-type" if isinstance(m, Hole) else "sort-error"
            issues.append(Issue(n.id, kind, f"goal: {msg}"))
        if isinstance(m, Split):
            msg = _sort_issue(sig, m.condition, scope)
            if msg:
                issues.append(Issue(n.id, "sort-error", f"split condition: {msg}"))
        if isinstance(m, (Rewrite, Exact)):
            names = [v for v, _ in m.bindings]
            if len(set(names)) != len(names):
                issues.append(Issue(n.id, "shape-violation", "a variable is bound twice"))
            for v, t in m.bindings:
                msg = _sort_issue(sig, t, scope)
                if msg:
                    issues.append(Issue(n.id, "sort-error", f"binding {v}: {msg}"))

        want = _EXPECTED_CHILDREN[m.tag]
        if len(n.children) != want:
            issues.append(Issue(n.id, "shape-violation", f"{m.tag} needs {want} children, has {len(n.children)}"))
        elif isinstance(m, Split):
            for c in n.children:
                if not alpha_eq(c.goal, n.goal):
                    issues.append(Issue(n.id, "shape-violation", f"split child {c.id} must restate the parent goal"))
        elif isinstance(m, Contradiction):
            if not isinstance(n.children[0].goal, Bot):
                issues.append(Issue(n.id, "shape-violation", "contradiction child must have goal false"))
        elif isinstance(m, Induction):
            body = induction_schema(n.goal, m.var)
            if body is None:
                issues.append(Issue(n.id, "shape-violation", f"goal is not of the form forall {m.var}:Int. {m.var} >= 0 -> P"))
            elif m.var in scope:
                issues.append(Issue(n.id, "shape-violation", f"induction variable {m.var} shadows an eigenvariable"))
            else:
                base, _, step = induction_goals(body, m.var)
                if not alpha_eq(n.children[0].goal, base):
                    issues.append(Issue(n.id, "shape-violation", f"base case must prove {render(base)}"))
                if not alpha_eq(n.children[1].goal, step):
                    issues.append(Issue(n.id, "shape-violation", f"step case must prove {render(step)}"))

        local = set(hyps) | set(n.uses)
        refs = list(n.uses)
        if isinstance(m, (Rewrite, Exact)):
            refs.append(m.fact)
        for r in refs:
            if r in facts or r in hyps or (library is not None and r in library):
                continue
            if r in all_ids:
                kind = "cyclic-dependency" if r in ancestors + (n.id,) else "shape-violation"
                issues.append(Issue(n.id, kind, f"reference to node {r!r} (only facts may be referenced)"))
            elif library is not None:
                issues.append(Issue(n.id, "unknown-fact", f"unknown fact {r!r}"))

        for i, c in enumerate(n.children):
            extra: set[str] = set()
            if isinstance(m, Split):
                extra = {hyp_name(n.id, "left" if i == 0 else "right")}
            elif isinstance(m, Contradiction):
                extra = {hyp_name(n.id, "neg")}
            elif isinstance(m, Induction) and i == 1:
                extra = {hyp_name(n.id, "nonneg"), hyp_name(n.id, "ih")}
            visit(c, child_scope(n, i, scope), local | extra, ancestors + (n.id,))

    visit(s.root, {}, set(), ())
    return WellFormedReport(tuple(issues))


def replace_node(s: Sketch, node_id: str, new: SketchNode) -> Sketch:
    """Return a sketch with the subtree rooted at ``node_id`` replaced."""

    def go(n: SketchNode) -> SketchNode:
        if n.id == node_id:
            return new
        return replace(n, children=tuple(go(c) for c in n.children))

    return replace(s, root=go(s.root))


def node_scope(s: Sketch, node_id: str) -> dict[str, str]:
    """Eigenvariables in scope at ``node_id``."""

    def go(n: SketchNode, scope: dict[str, str]):
        if n.id == node_id:
            return scope
        for i, c in enumerate(n.children):
            r = go(c, child_scope(n, i, scope))
            if r is not None:
                return r
        return None

    r = go(s.root, {})
    if r is None:
        raise KeyError(node_id)
    return r
