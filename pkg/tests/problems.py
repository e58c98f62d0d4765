"""Random solver problems and certificate mutations for the oracle suites."""

from __future__ import annotations

import itertools
import random
from dataclasses import replace
from fractions import Fraction

from proofsketch.logic import INT, And, Arith, Cmp, Eq, Imp, IntLit, Not, Or, Sequent, Var
from proofsketch.translate import (
    CnfProblem,
    Constraint,
    LiaBranch,
    LiaCut,
    LiaFarkas,
    LiaProblem,
    LiaSplit,
    RupProof,
    SmtCert,
)

LIA_VARS = ("x", "y", "z")


def cnf(num_vars: int, clauses) -> CnfProblem:
    return CnfProblem(num_vars, tuple(tuple(c) for c in clauses), (None,) * num_vars)


def small_cnfs():
    """Every CNF over two variables with at most three clauses."""
    lits = [1, -1, 2, -2]
    clauses = [c for k in (1, 2) for c in itertools.combinations(lits, k) if not any(-l in c for l in c)]
    for k in range(4):
        for cs in itertools.combinations(clauses, k):
            yield cnf(2, cs)


def random_cnf(rng: random.Random, max_vars: int) -> CnfProblem:
    n = rng.randint(1, max_vars)
    m = rng.randint(1, int(n * 4.5) + 1)
    clauses = []
    for _ in range(m):
        k = rng.randint(1, min(3, n))
        vs = rng.sample(range(1, n + 1), k)
        clauses.append(tuple(v if rng.random() < 0.5 else -v for v in vs))
    return cnf(n, clauses)


def random_lia(rng: random.Random, box: int = 3) -> LiaProblem:
    """Three variables, all boxed to [-box, box], plus a few random rows."""
    cons = []
    for v in LIA_VARS:
        cons.append(Constraint(((v, 1),), "<=", box))
        cons.append(Constraint(((v, 1),), ">=", -box))
    for _ in range(rng.randint(1, 4)):
        coeffs = tuple((v, k) for v in LIA_VARS if (k := rng.randint(-3, 3)) != 0)
        if not coeffs:
            coeffs = (("x", 1),)
        op = rng.choice(["<=", "<=", ">=", "=", "!="])
        cons.append(Constraint(coeffs, op, rng.randint(-6, 6)))
    return LiaProblem(LIA_VARS, tuple(cons))


# -------------------------------------------------------------- mutations


def mutate_rup(rng: random.Random, p: CnfProblem, proof: RupProof) -> tuple[CnfProblem, RupProof]:
    steps = list(proof.clauses)
    k = rng.randrange(5)
    if k == 0 and p.clauses:
        # weaken the problem: drop one clause
        i = rng.randrange(len(p.clauses))
        return replace(p, clauses=p.clauses[:i] + p.clauses[i + 1 :]), proof
    if k == 1 and len(steps) > 1:
        del steps[rng.randrange(len(steps) - 1)]
    elif k == 2:
        i = rng.randrange(len(steps))
        if steps[i]:
            c = list(steps[i])
            j = rng.randrange(len(c))
            c[j] = -c[j]
            steps[i] = tuple(c)
        else:
            steps[i] = (rng.choice([1, -1]) * rng.randint(1, p.num_vars),)
    elif k == 3:
        steps = [(1,), ()] if rng.random() < 0.5 else [()]
    else:
        # flip a literal of the problem instead
        if p.clauses:
            i = rng.randrange(len(p.clauses))
            c = list(p.clauses[i])
            if c:
                j = rng.randrange(len(c))
                c[j] = -c[j]
            cls = list(p.clauses)
            cls[i] = tuple(c)
            return replace(p, clauses=tuple(cls)), proof
    return p, RupProof(tuple(steps))


def _perturb(rng: random.Random, qs: tuple[Fraction, ...]) -> tuple[Fraction, ...]:
    if not qs:
        return (Fraction(1),)
    qs = list(qs)
    i = rng.randrange(len(qs))
    qs[i] = rng.choice([Fraction(0), qs[i] + 1, qs[i] * 2, qs[i] / 2, -qs[i] - 1, qs[i] + Fraction(1, 3)])
    if rng.random() < 0.2:
        qs.pop(rng.randrange(len(qs)))
    return tuple(qs)


def mutate_lia_cert(rng: random.Random, c):
    """Perturb one randomly chosen node of the tree."""
    nodes = []

    def walk(n, path):
        nodes.append(path)
        if isinstance(n, (LiaBranch, LiaSplit)):
            walk(n.left, path + "L")
            walk(n.right, path + "R")
        elif isinstance(n, LiaCut):
            walk(n.child, path + "C")

    walk(c, "")
    target = rng.choice(nodes)

    def rebuild(n, path):
        if path == target:
            if isinstance(n, LiaFarkas):
                return LiaFarkas(_perturb(rng, n.multipliers))
            if isinstance(n, LiaBranch):
                if rng.random() < 0.5:
                    return LiaBranch(n.var, n.bound + rng.choice([-1, 1]), n.left, n.right)
                return LiaBranch(n.var, n.bound, n.right, n.left)
            if isinstance(n, LiaSplit):
                return LiaSplit(n.index, n.right, n.left) if rng.random() < 0.5 else n.left
            if isinstance(n, LiaCut):
                return LiaCut(_perturb(rng, n.multipliers), n.child) if rng.random() < 0.7 else n.child
        if isinstance(n, LiaBranch):
            return LiaBranch(n.var, n.bound, rebuild(n.left, path + "L"), rebuild(n.right, path + "R"))
        if isinstance(n, LiaSplit):
            return LiaSplit(n.index, rebuild(n.left, path + "L"), rebuild(n.right, path + "R"))
        if isinstance(n, LiaCut):
            return LiaCut(n.multipliers, rebuild(n.child, path + "C"))
        return n

    return rebuild(c, "")


def mutate_lia_problem(rng: random.Random, p: LiaProblem) -> LiaProblem:
    cons = list(p.constraints)
    i = rng.randrange(len(cons))
    c = cons[i]
    k = rng.randrange(3)
    if k == 0:
        del cons[i]
    elif k == 1:
        cons[i] = Constraint(c.coeffs, c.op, c.bound + rng.choice([-1, 1]))
    else:
        cons[i] = Constraint(c.coeffs, rng.choice(["<=", ">=", "=", "!="]), c.bound)
    return replace(p, constraints=tuple(cons))


def mutate_smt(rng: random.Random, cert: SmtCert) -> SmtCert:
    lemmas = list(cert.lemmas)
    k = rng.randrange(4)
    if k == 0 and lemmas:
        i = rng.randrange(len(lemmas))
        clause, lc = lemmas[i]
        lemmas[i] = (clause, mutate_lia_cert(rng, lc))
    elif k == 1 and lemmas:
        i = rng.randrange(len(lemmas))
        clause, lc = lemmas[i]
        if len(clause) > 1:
            clause = clause[:-1]
        else:
            clause = (-clause[0],)
        lemmas[i] = (clause, lc)
    elif k == 2 and lemmas:
        del lemmas[rng.randrange(len(lemmas))]
    else:
        steps = list(cert.proof.clauses)
        if len(steps) > 1:
            del steps[rng.randrange(len(steps) - 1)]
        else:
            steps = [(1,), ()]
        return SmtCert(tuple(lemmas), RupProof(tuple(steps)))
    return SmtCert(tuple(lemmas), cert.proof)


# ------------------------------------------------- mixed propositional/LIA

INT_VARS = (Var("a", INT), Var("b", INT), Var("c", INT))


def _lin(rng: random.Random):
    t = rng.choice(INT_VARS)
    if rng.random() < 0.4:
        t = Arith("+", (t, rng.choice(INT_VARS + (IntLit(rng.randint(-2, 2)),))))
    if rng.random() < 0.2:
        t = Arith("*", (IntLit(rng.choice([2, -1, 3])), t))
    return t


def _atom(rng: random.Random):
    l = _lin(rng)
    r = rng.choice([IntLit(rng.randint(-3, 3)), rng.choice(INT_VARS)])
    if rng.random() < 0.2:
        return Eq(l, r)
    return Cmp(rng.choice(["<=", "<", ">=", ">"]), l, r)


def _prop(rng: random.Random, depth: int):
    if depth == 0 or rng.random() < 0.4:
        return _atom(rng)
    k = rng.randrange(4)
    a, b = _prop(rng, depth - 1), _prop(rng, depth - 1)
    return [And(a, b), Or(a, b), Imp(a, b), Not(a)][k]


def mixed_sequent(rng: random.Random) -> Sequent:
    ctx = tuple((f"h{i}", _prop(rng, 2)) for i in range(rng.randint(0, 3)))
    return Sequent(ctx, _prop(rng, 2))
