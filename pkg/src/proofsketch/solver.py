"""Untrusted automation: built-in SAT and LIA procedures that emit certificates.

Nothing here can mint theorems or acceptance tokens. Every unsatisfiability
verdict comes with a certificate that the checker re-validates against its
own translation of the obligation.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Union

from .logic import Sequent
from .syntax import render
from .translate import (
    CnfProblem,
    LiaBranch,
    LiaCert,
    LiaCut,
    LiaFarkas,
    LiaProblem,
    LiaSplit,
    RupProof,
    SmtCert,
    Unsupported,
    has_quantifier,
    is_arith_atom,
    lia_cert_to_text,
    lia_from_literals,
    tighten,
    translate_cnf,
    translate_lia,
)

CONFLICT_BUDGET = 100_000
NODE_BUDGET = 10_000
MAX_DEPTH = 400
LEMMA_BUDGET = 500
SHRINK_LIMIT = 24


class ResourceLimit(Exception):
    pass


# ------------------------------------------------------------------------ SAT


def solve_sat(p: CnfProblem, conflict_budget: int = CONFLICT_BUDGET) -> dict[int, bool] | RupProof:
    """CDCL with first-UIP learning.

    Returns a total model, or a RUP proof listing every learned clause in
    order and ending with the empty clause. Raises ResourceLimit once the
    conflict budget is spent.
    """
    return _Cdcl(p.num_vars, p.clauses).solve(conflict_budget)


class _Cdcl:
    def __init__(self, n: int, clauses) -> None:
        self.n = n
        self.value = [0] * (n + 1)  # per variable: 1 true, -1 false, 0 unassigned
        self.level = [0] * (n + 1)
        self.reason: list[int | None] = [None] * (n + 1)
        self.activity = [0.0] * (n + 1)
        self.phase = [False] * (n + 1)
        self.bump = 1.0
        self.trail: list[int] = []
        self.trail_lim: list[int] = []
        self.qhead = 0
        self.db: list[list[int]] = []
        self.watches: dict[int, list[int]] = defaultdict(list)
        self.log: list[tuple[int, ...]] = []
        self.trivially_unsat = False
        for c in clauses:
            c = list(dict.fromkeys(c))
            if not c:
                self.trivially_unsat = True
            elif len(c) == 1:
                if self.lit_value(c[0]) == -1:
                    self.trivially_unsat = True
                elif self.lit_value(c[0]) == 0:
                    self.assign(c[0], None)
            else:
                self.attach(c)

    def lit_value(self, l: int) -> int:
        v = self.value[abs(l)]
        return v if l > 0 else -v

    def assign(self, l: int, reason: int | None) -> None:
        v = abs(l)
        self.value[v] = 1 if l > 0 else -1
        self.level[v] = len(self.trail_lim)
        self.reason[v] = reason
        self.trail.append(l)

    def attach(self, c: list[int]) -> int:
        self.db.append(c)
        i = len(self.db) - 1
        self.watches[c[0]].append(i)
        self.watches[c[1]].append(i)
        return i

    def propagate(self) -> int | None:
        while self.qhead < len(self.trail):
            false_lit = -self.trail[self.qhead]
            self.qhead += 1
            ws = self.watches[false_lit]
            keep: list[int] = []
            conflict = None
            for j, ci in enumerate(ws):
                if conflict is not None:
                    keep.extend(ws[j:])
                    break
                c = self.db[ci]
                if c[0] == false_lit:
                    c[0], c[1] = c[1], c[0]
                if self.lit_value(c[0]) == 1:
                    keep.append(ci)
                    continue
                for k in range(2, len(c)):
                    if self.lit_value(c[k]) != -1:
                        c[1], c[k] = c[k], c[1]
                        self.watches[c[1]].append(ci)
                        break
                else:
                    keep.append(ci)
                    if self.lit_value(c[0]) == -1:
                        conflict = ci
                    else:
                        self.assign(c[0], ci)
            self.watches[false_lit] = keep
            if conflict is not None:
                return conflict
        return None

    def analyze(self, confl: int) -> tuple[list[int], int]:
        seen: set[int] = set()
        learnt: list[int] = [0]
        cur = len(self.trail_lim)
        counter = 0
        p = None
        idx = len(self.trail) - 1
        clause = self.db[confl]
        while True:
            for q in clause:
                if q == p:
                    continue
                v = abs(q)
                if v in seen or self.level[v] == 0:
                    continue
                seen.add(v)
                self.activity[v] += self.bump
                if self.level[v] == cur:
                    counter += 1
                else:
                    learnt.append(q)
            while abs(self.trail[idx]) not in seen:
                idx -= 1
            p = self.trail[idx]
            idx -= 1
            counter -= 1
            if counter == 0:
                break
            clause = self.db[self.reason[abs(p)]]
        learnt[0] = -p
        self.bump *= 1.05
        if len(learnt) == 1:
            return learnt, 0
        # second watch goes to the deepest remaining literal
        best = max(range(1, len(learnt)), key=lambda i: self.level[abs(learnt[i])])
        learnt[1], learnt[best] = learnt[best], learnt[1]
        return learnt, self.level[abs(learnt[1])]

    def backtrack(self, lvl: int) -> None:
        if len(self.trail_lim) <= lvl:
            return
        stop = self.trail_lim[lvl]
        for l in self.trail[stop:]:
            v = abs(l)
            self.phase[v] = l > 0
            self.value[v] = 0
            self.reason[v] = None
        del self.trail[stop:]
        del self.trail_lim[lvl:]
        self.qhead = len(self.trail)

    def decide(self) -> int | None:
        best = 0
        for v in range(1, self.n + 1):
            if self.value[v] == 0 and (best == 0 or self.activity[v] > self.activity[best]):
                best = v
        if best == 0:
            return None
        return best if self.phase[best] else -best

    def solve(self, budget: int) -> dict[int, bool] | RupProof:
        if self.trivially_unsat:
            return RupProof(((),))
        conflicts = 0
        while True:
            confl = self.propagate()
            if confl is not None:
                if not self.trail_lim:
                    self.log.append(())
                    return RupProof(tuple(self.log))
                conflicts += 1
                if conflicts > budget:
                    raise ResourceLimit(f"conflict budget {budget} exhausted")
                learnt, lvl = self.analyze(confl)
                self.log.append(tuple(learnt))
                self.backtrack(lvl)
                if len(learnt) == 1:
                    self.assign(learnt[0], None)
                else:
                    self.assign(learnt[0], self.attach(learnt))
                continue
            lit = self.decide()
            if lit is None:
                return {v: self.value[v] == 1 for v in range(1, self.n + 1)}
            self.trail_lim.append(len(self.trail))
            self.assign(lit, None)


# ------------------------------------------------------------------------ LIA

# A row is sum(coeffs) <= bound; ``mult`` records it as a non-negative
# combination of the rows of the current branch.
@dataclass
class _Row:
    coeffs: dict[str, Fraction]
    bound: Fraction
    mult: dict[int, Fraction] = field(default_factory=dict)


def _combine(p: _Row, n: _Row, var: str) -> _Row:
    a, b = p.coeffs[var], -n.coeffs[var]  # both positive
    coeffs: dict[str, Fraction] = {}
    for v in set(p.coeffs) | set(n.coeffs):
        k = b * p.coeffs.get(v, 0) + a * n.coeffs.get(v, 0)
        if k != 0:
            coeffs[v] = k
    coeffs.pop(var, None)
    mult = {i: b * q for i, q in p.mult.items()}
    for i, q in n.mult.items():
        mult[i] = mult.get(i, 0) + a * q
    return _Row(coeffs, b * p.bound + a * n.bound, mult)


def _normalize(r: _Row) -> _Row:
    """Scale so the largest coefficient magnitude is 1 (keeps numbers small)."""
    scale = max((abs(k) for k in r.coeffs.values()), default=None)
    if not scale or scale == 1:
        return r
    return _Row({v: k / scale for v, k in r.coeffs.items()}, r.bound / scale, {i: q / scale for i, q in r.mult.items()})


def _dedupe(rows: list[_Row]) -> list[_Row]:
    best: dict[tuple, _Row] = {}
    for r in rows:
        key = tuple(sorted(r.coeffs.items()))
        if key not in best or r.bound < best[key].bound:
            best[key] = r
    return list(best.values())


def _fourier_motzkin(rows: list[_Row]) -> tuple[dict[str, Fraction] | None, dict[int, Fraction] | None]:
    """Rational feasibility. Returns (point, None) or (None, farkas multipliers)."""
    stages: list[tuple[str, list[_Row]]] = []
    cur = _dedupe([_normalize(r) for r in rows])
    while True:
        for r in cur:
            if not r.coeffs and r.bound < 0:
                return None, r.mult
        live = sorted({v for r in cur for v in r.coeffs})
        if not live:
            break

        def cost(v: str) -> tuple[int, str]:
            pos = sum(1 for r in cur if r.coeffs.get(v, 0) > 0)
            neg = sum(1 for r in cur if r.coeffs.get(v, 0) < 0)
            return pos * neg - pos - neg, v

        var = min(live, key=cost)
        stages.append((var, cur))
        pos = [r for r in cur if r.coeffs.get(var, 0) > 0]
        neg = [r for r in cur if r.coeffs.get(var, 0) < 0]
        nxt = [r for r in cur if var not in r.coeffs]
        nxt += [_normalize(_combine(p, n, var)) for p in pos for n in neg]
        cur = _dedupe([r for r in nxt if r.coeffs or r.bound < 0])
    point: dict[str, Fraction] = {}
    for var, rows_here in reversed(stages):
        lo, hi = None, None
        for r in rows_here:
            k = r.coeffs.get(var, 0)
            if k == 0:
                continue
            rest = r.bound - sum(c * point.get(v, 0) for v, c in r.coeffs.items() if v != var)
            lim = rest / k
            if k > 0:
                hi = lim if hi is None else min(hi, lim)
            else:
                lo = lim if lo is None else max(lo, lim)
        point[var] = _pick(lo, hi)
    return point, None


def _pick(lo: Fraction | None, hi: Fraction | None) -> Fraction:
    """A value in [lo, hi], preferring small integers."""
    if (lo is None or lo <= 0) and (hi is None or hi >= 0):
        return Fraction(0)
    if lo is not None and lo > 0:
        c = Fraction(math.ceil(lo))
        return c if hi is None or c <= hi else lo
    c = Fraction(math.floor(hi))
    return c if lo is None or c >= lo else hi


def solve_lia(p: LiaProblem, node_budget: int = NODE_BUDGET) -> dict[str, int] | LiaCert:
    """Branch and bound over Fourier-Motzkin.

    Returns an integer model or a certificate tree whose leaves carry Farkas
    multipliers over the rows of the branch (problem rows first, then the
    branch rows in order of introduction). Disequalities are split lazily
    when a candidate model violates one.
    """
    base = p.rows()
    diseqs = p.disequalities()
    budget = [node_budget]

    def node(extra: list[tuple[dict[str, int], int]]):
        budget[0] -= 1
        if budget[0] < 0 or len(extra) > MAX_DEPTH:
            raise ResourceLimit(f"node budget {node_budget} exhausted")
        rows = base + extra
        frs = [_Row({v: Fraction(k) for v, k in a.items() if k}, Fraction(b), {i: Fraction(1)}) for i, (a, b) in enumerate(rows)]
        point, mult = _fourier_motzkin(frs)
        if point is None:
            return None, LiaFarkas(_scaled(mult, len(rows)))
        for v in p.variables:
            point.setdefault(v, Fraction(0))
        frac = next((v for v in sorted(point) if point[v].denominator != 1), None)
        if frac is not None:
            b = math.floor(point[frac])
            lm, lc = node(extra + [({frac: 1}, b)])
            if lm is not None:
                return lm, None
            rm, rc = node(extra + [({frac: -1}, -(b + 1))])
            if rm is not None:
                return rm, None
            return None, LiaBranch(frac, b, lc, rc)
        model = {v: int(q) for v, q in point.items()}
        for k, d in enumerate(diseqs):
            if not d.evaluate(model):
                a = dict(d.coeffs)
                lm, lc = node(extra + [tighten(a, d.bound - 1)])
                if lm is not None:
                    return lm, None
                rm, rc = node(extra + [tighten({v: -c for v, c in a.items()}, -(d.bound + 1))])
                if rm is not None:
                    return rm, None
                return None, LiaSplit(k, lc, rc)
        return model, None

    cut = _equality_cut(p, len(base))
    if cut is not None:
        return cut
    model, cert = node([])
    return model if model is not None else cert


def _equality_rows(p: LiaProblem) -> list[tuple[int, int]]:
    """Row indices (le, ge) of each equality constraint within ``p.rows()``."""
    out, i = [], 0
    for c in p.constraints:
        if c.op == "=":
            out.append((i, i + 1))
            i += 2
        elif c.op in ("<=", ">="):
            i += 1
    return out


def _equality_cut(p: LiaProblem, n_rows: int) -> LiaCert | None:
    """Integer elimination over the equalities, pivoting on unit coefficients.

    A derived equality whose coefficient gcd does not divide its constant is
    refuted by two cuts (one per direction) and a Farkas leaf on them.
    """
    rows = p.rows()
    eqs = []  # (coeffs, const, pos-mult, neg-mult); pos proves <=, neg proves >=
    for le, ge in _equality_rows(p):
        a, b = rows[le]
        eqs.append((dict(a), Fraction(b), {le: Fraction(1)}, {ge: Fraction(1)}))

    def add(m1: dict, m2: dict, k: Fraction) -> dict:
        out = dict(m1)
        for i, q in m2.items():
            out[i] = out.get(i, 0) + k * q
        return out

    done: set[int] = set()
    while True:
        pivot = None
        for j, (a, _, _, _) in enumerate(eqs):
            if j in done:
                continue
            v = next((v for v in sorted(a) if abs(a[v]) == 1), None)
            if v is not None:
                pivot = (j, v)
                break
        if pivot is None:
            break
        j, v = pivot
        done.add(j)
        pa, pb, ppos, pneg = eqs[j]
        for i, (a, b, pos, neg) in enumerate(eqs):
            if i == j or v not in a:
                continue
            m = Fraction(a[v]) / pa[v]  # E_i - m E_j eliminates v
            coeffs = {w: a.get(w, 0) - m * pa.get(w, 0) for w in set(a) | set(pa)}
            coeffs = {w: int(k) for w, k in coeffs.items() if k != 0}
            if m > 0:
                pos2, neg2 = add(pos, pneg, m), add(neg, ppos, m)
            else:
                pos2, neg2 = add(pos, ppos, -m), add(neg, pneg, -m)
            eqs[i] = (coeffs, b - m * pb, pos2, neg2)
    for a, b, pos, neg in eqs:
        g = 0
        for k in a.values():
            g = math.gcd(g, abs(k))
        if g > 1 and b % g != 0:
            dense = lambda m: tuple(m.get(i, Fraction(0)) for i in range(n_rows))  # noqa: E731
            farkas = LiaFarkas(tuple([Fraction(0)] * n_rows + [Fraction(1), Fraction(1)]))
            return LiaCut(dense(pos), LiaCut(dense(neg) + (Fraction(0),), farkas))
    return None


def _scaled(mult: dict[int, Fraction], n: int) -> tuple[Fraction, ...]:
    """Dense multiplier vector, scaled to small integers when possible."""
    lams = [mult.get(i, Fraction(0)) for i in range(n)]
    den = 1
    for q in lams:
        den = den * q.denominator // math.gcd(den, q.denominator)
    ints = [int(q * den) for q in lams]
    g = 0
    for k in ints:
        g = math.gcd(g, k)
    g = g or 1
    return tuple(Fraction(k, g) for k in ints)


# ------------------------------------------------------------------ discharge


@dataclass(frozen=True)
class Certified:
    kind: str  # "rup", "lia" or "smt"
    certificate: object
    problem: object

    @property
    def text(self) -> str:
        if self.kind in ("rup", "smt"):
            return self.certificate.to_text()
        return lia_cert_to_text(self.certificate)


@dataclass(frozen=True)
class Countermodel:
    assignment: dict  # rendered atom or term -> bool / int


@dataclass(frozen=True)
class UnsupportedOutcome:
    reason: str


@dataclass(frozen=True)
class ResourceLimited:
    detail: str


DischargeOutcome = Union[Certified, Countermodel, UnsupportedOutcome, ResourceLimited]


def _sequent(ob) -> Sequent:
    return ob if isinstance(ob, Sequent) else ob.sequent


def translate(ob) -> CnfProblem | LiaProblem | UnsupportedOutcome:
    """The problem ``discharge`` starts from: LIA when the obligation is a
    conjunction of linear atoms, otherwise the propositional abstraction."""
    seq = _sequent(ob)
    try:
        lia, complete = translate_lia(seq)
        if complete and lia.constraints:
            return lia
        return translate_cnf(seq)
    except Unsupported as e:
        return UnsupportedOutcome(e.reason)


def discharge(ob, conflict_budget: int = CONFLICT_BUDGET, node_budget: int = NODE_BUDGET) -> DischargeOutcome:
    seq = _sequent(ob)
    if has_quantifier(seq.goal):
        return UnsupportedOutcome("quantified-after-flattening")
    try:
        lia, complete = translate_lia(seq)
        if lia.constraints:
            res = solve_lia(lia, node_budget)
            if not isinstance(res, dict):
                return Certified("lia", res, lia)
            if complete:
                return Countermodel(_lia_assignment(lia, res))
        cnf = translate_cnf(seq)
        res = solve_sat(cnf, conflict_budget)
        if isinstance(res, RupProof):
            return Certified("rup", res, cnf)
        return _lazy(cnf, res, conflict_budget, node_budget)
    except Unsupported as e:
        return UnsupportedOutcome(e.reason)
    except ResourceLimit as e:
        return ResourceLimited(str(e))


def _lazy(cnf: CnfProblem, model: dict[int, bool], conflict_budget: int, node_budget: int) -> DischargeOutcome:
    """Refine the propositional abstraction with theory lemmas until it is
    refuted or a model survives the arithmetic check."""
    atoms = cnf.atom_vars()
    arith = [v for v, a in atoms.items() if is_arith_atom(a)]
    lemmas: list[tuple[tuple[int, ...], object]] = []
    while True:
        lits = [(v, model[v]) for v in arith]
        shown = {render(a): model[v] for v, a in atoms.items()}
        if not lits:
            return Countermodel(shown)
        sub = lia_from_literals([(atoms[v], val) for v, val in lits])
        res = solve_lia(sub, node_budget)
        if isinstance(res, dict):
            shown.update(_lia_assignment(sub, res))
            return Countermodel(shown)
        core, cert = _shrink(atoms, lits, res, node_budget)
        lemmas.append((tuple(-v if val else v for v, val in core), cert))
        if len(lemmas) > LEMMA_BUDGET:
            raise ResourceLimit(f"more than {LEMMA_BUDGET} theory lemmas")
        extended = CnfProblem(cnf.num_vars, cnf.clauses + tuple(c for c, _ in lemmas), cnf.atoms)
        out = solve_sat(extended, conflict_budget)
        if isinstance(out, RupProof):
            return Certified("smt", SmtCert(tuple(lemmas), out), cnf)
        model = out


def _shrink(atoms, lits, cert, node_budget):
    """Deletion-based core minimization of an infeasible literal set."""
    core = list(lits)
    if len(core) > SHRINK_LIMIT:
        return core, cert
    i = 0
    while i < len(core):
        trial = core[:i] + core[i + 1 :]
        res = solve_lia(lia_from_literals([(atoms[v], val) for v, val in trial]), node_budget) if trial else {}
        if isinstance(res, dict):
            i += 1
        else:
            core, cert = trial, res
    return core, cert


def _lia_assignment(p: LiaProblem, model: dict[str, int]) -> dict[str, int]:
    return {term: model.get(v, 0) for v, term in zip(p.variables, p.roster)}


def describe(outcome: DischargeOutcome) -> str:
    if isinstance(outcome, Certified):
        return f"certified ({outcome.kind})"
    if isinstance(outcome, Countermodel):
        return "countermodel " + ", ".join(f"{k} = {v}" for k, v in sorted(outcome.assignment.items(), key=lambda kv: kv[0]))
    if isinstance(outcome, UnsupportedOutcome):
        return f"unsupported ({outcome.reason})"
    return f"resource limit ({outcome.detail})"


__all__ = [
    "Certified",
    "Countermodel",
    "DischargeOutcome",
    "ResourceLimit",
    "ResourceLimited",
    "UnsupportedOutcome",
    "describe",
    "discharge",
    "solve_lia",
    "solve_sat",
    "translate",
]
