"""Trusted certificate checker.

The only issuer of :class:`AcceptanceToken` values, which the kernel consumes
in ``admit_certified``. Certificates are checked against a problem that the
checker translates itself from the obligation's sequent, so a solver cannot
smuggle in an easier problem.
"""

from __future__ import annotations

import hashlib
import threading
import weakref
from fractions import Fraction
from typing import Union

from .logic import Sequent, canonical_digest
from .translate import (
    CnfProblem,
    LiaBranch,
    LiaCut,
    LiaFarkas,
    LiaProblem,
    LiaSplit,
    RupProof,
    SmtCert,
    Unsupported,
    lemma_problem,
    lia_cert_from_text,
    lia_cert_to_text,
    tighten,
    translate_cnf,
    translate_lia,
)

CHECKER_VERSION = "psk-check/1"

_TOKEN_KEY = object()
_issued: "weakref.WeakSet[AcceptanceToken]" = weakref.WeakSet()
_issue_lock = threading.Lock()


class AcceptanceToken:
    """Proof that the checker accepted a certificate for one sequent digest."""

    __slots__ = ("_sequent_digest", "_certificate_digest", "_version", "__weakref__")

    def __init__(self, sequent_digest: str, certificate_digest: str, *, _key=None):
        if _key is not _TOKEN_KEY:
            raise TypeError("acceptance tokens are issued by the certificate checker only")
        object.__setattr__(self, "_sequent_digest", sequent_digest)
        object.__setattr__(self, "_certificate_digest", certificate_digest)
        object.__setattr__(self, "_version", CHECKER_VERSION)

    def __setattr__(self, name, value):
        raise AttributeError("acceptance tokens are immutable")

    @property
    def sequent_digest(self) -> str:
        return self._sequent_digest

    @property
    def certificate_digest(self) -> str:
        return self._certificate_digest

    @property
    def checker_version(self) -> str:
        return self._version

    def __repr__(self) -> str:
        return f"AcceptanceToken({self._sequent_digest[:12]}..., {self._certificate_digest[:12]}...)"


def is_genuine(token: object) -> bool:
    return isinstance(token, AcceptanceToken) and token in _issued


def _issue(sequent_digest: str, cert_text: str) -> AcceptanceToken:
    tok = AcceptanceToken(sequent_digest, hashlib.sha256(cert_text.encode()).hexdigest(), _key=_TOKEN_KEY)
    with _issue_lock:
        _issued.add(tok)
    return tok


class Rejection(Exception):
    """A certificate failed validation.

    ``step`` is the failing proof-clause index (RUP); ``path`` the branch path
    from the root, as a string of ``L``/``R`` with ``C`` for cuts (LIA).
    """

    def __init__(self, reason: str, step: int | None = None, path: str | None = None, detail: str = ""):
        self.reason = reason
        self.step = step
        self.path = path
        where = f" at step {step}" if step is not None else f" at path '{path}'" if path is not None else ""
        super().__init__(f"{reason}{where}" + (f": {detail}" if detail else ""))


def _binding(sequent: Sequent | None, problem, retranslate) -> str:
    if sequent is None:
        return canonical_digest(["problem", repr(problem)]).hex()
    try:
        expected = retranslate(sequent)
    except Unsupported as e:
        raise Rejection("untranslatable-sequent", detail=e.reason) from None
    if expected != problem:
        raise Rejection("problem-mismatch", detail="problem is not the translation of the sequent")
    return canonical_digest(sequent).hex()


# ------------------------------------------------------------------------ RUP


def _propagates_to_conflict(clauses: list[tuple[int, ...]], assumed: set[int]) -> bool:
    value = set(assumed)
    if any(-l in value for l in value):
        return True
    changed = True
    while changed:
        changed = False
        for c in clauses:
            open_lit = None
            n_open = 0
            sat = False
            for l in c:
                if l in value:
                    sat = True
                    break
                if -l not in value:
                    n_open += 1
                    open_lit = l
                    if n_open > 1:
                        break
            if sat or n_open > 1:
                continue
            if n_open == 0:
                return True
            value.add(open_lit)
            changed = True
    return False


def _rup_core(p: CnfProblem, extra: list[tuple[int, ...]], proof: RupProof) -> None:
    db = [tuple(c) for c in p.clauses] + extra
    for c in db:
        if any(l == 0 or abs(l) > p.num_vars for l in c):
            raise Rejection("malformed-problem")
    if not proof.clauses or proof.clauses[-1]:
        raise Rejection("missing-empty-clause", step=len(proof.clauses))
    for i, c in enumerate(proof.clauses):
        if any(l == 0 or abs(l) > p.num_vars for l in c):
            raise Rejection("literal-out-of-range", step=i)
        if not _propagates_to_conflict(db, {-l for l in c}):
            raise Rejection("non-propagating", step=i)
        db.append(tuple(c))


def check_rup(p: CnfProblem, proof: RupProof, sequent: Sequent | None = None) -> AcceptanceToken:
    """Validate a RUP refutation of ``p``; raises :class:`Rejection`.

    With ``sequent`` given, ``p`` must be exactly its translation and the
    token binds the sequent's digest.
    """
    bound = _binding(sequent, p, translate_cnf)
    _rup_core(p, [], proof)
    return _issue(bound, proof.to_text())


# ------------------------------------------------------------------------ LIA

Row = tuple[dict[str, int], int]


def _farkas_ok(rows: list[Row], lams: tuple[Fraction, ...], path: str) -> None:
    if len(lams) != len(rows):
        raise Rejection("malformed-tree", path=path, detail=f"{len(lams)} multipliers for {len(rows)} rows")
    residue: dict[str, Fraction] = {}
    const = Fraction(0)
    for lam, (a, b) in zip(lams, rows):
        if not isinstance(lam, Fraction):
            lam = Fraction(lam)
        if lam < 0:
            raise Rejection("negative-multiplier", path=path)
        if lam == 0:
            continue
        for v, k in a.items():
            residue[v] = residue.get(v, Fraction(0)) + lam * k
        const += lam * b
    # both must hold; the constant is reported first when both fail
    if const >= 0:
        raise Rejection("non-negative-constant-sum", path=path)
    if any(r != 0 for r in residue.values()):
        raise Rejection("nonzero-variable-residue", path=path)


def _cut_row(rows: list[Row], lams: tuple[Fraction, ...], path: str) -> Row:
    if len(lams) != len(rows):
        raise Rejection("malformed-tree", path=path, detail=f"{len(lams)} multipliers for {len(rows)} rows")
    coeffs: dict[str, Fraction] = {}
    const = Fraction(0)
    for lam, (a, b) in zip(lams, rows):
        lam = Fraction(lam)
        if lam < 0:
            raise Rejection("negative-multiplier", path=path)
        for v, k in a.items():
            coeffs[v] = coeffs.get(v, Fraction(0)) + lam * k
        const += lam * b
    if any(k.denominator != 1 for k in coeffs.values()):
        raise Rejection("non-integral-cut", path=path)
    return tighten({v: int(k) for v, k in coeffs.items()}, const)


def check_lia(p: LiaProblem, cert, sequent: Sequent | None = None) -> AcceptanceToken:
    """Validate a branch/split/Farkas infeasibility tree for ``p``.

    Branch ``(x, b)`` checks its left subtree with ``x <= b`` added and its
    right with ``x >= b+1``; split ``k`` does the same for ``s <= c-1`` and
    ``s >= c+1`` where ``s != c`` is the k-th disequality; a cut adds one
    tightened combination of the current rows. Added rows are
    appended after the problem rows in the order they were introduced.
    """
    bound = _binding(sequent, p, lambda s: translate_lia(s)[0])
    _lia_tree(p, cert)
    return _issue(bound, lia_cert_to_text(cert))


def _lia_tree(p: LiaProblem, cert) -> None:
    base = p.rows()
    diseqs = p.disequalities()
    known = set(p.variables)
    stack: list[tuple[object, list[Row], str]] = [(cert, base, "")]
    while stack:
        node, rows, path = stack.pop()
        if isinstance(node, LiaFarkas):
            _farkas_ok(rows, node.multipliers, path)
        elif isinstance(node, LiaBranch):
            if node.var not in known or not isinstance(node.bound, int):
                raise Rejection("malformed-tree", path=path, detail=f"unknown branch variable {node.var!r}")
            stack.append((node.right, rows + [({node.var: -1}, -(node.bound + 1))], path + "R"))
            stack.append((node.left, rows + [({node.var: 1}, node.bound)], path + "L"))
        elif isinstance(node, LiaSplit):
            if not isinstance(node.index, int) or not 0 <= node.index < len(diseqs):
                raise Rejection("malformed-tree", path=path, detail="split index out of range")
            d = diseqs[node.index]
            a = dict(d.coeffs)
            lo = tighten(a, d.bound - 1)
            hi = tighten({v: -k for v, k in a.items()}, -(d.bound + 1))
            stack.append((node.right, rows + [hi], path + "R"))
            stack.append((node.left, rows + [lo], path + "L"))
        elif isinstance(node, LiaCut):
            stack.append((node.child, rows + [_cut_row(rows, node.multipliers, path)], path + "C"))
        else:
            raise Rejection("malformed-tree", path=path, detail=f"unexpected node {type(node).__name__}")


# ----------------------------------------------------------------- combined


def check_smt(p: CnfProblem, cert: SmtCert, sequent: Sequent | None = None) -> AcceptanceToken:
    """Validate theory lemmas by LIA certificates, then the RUP refutation of
    ``p`` extended by the lemmas. Lemma failures report the lemma index as
    ``step``."""
    bound = _binding(sequent, p, translate_cnf)
    extra = []
    for i, (clause, lc) in enumerate(cert.lemmas):
        if not clause:
            raise Rejection("malformed-lemma", step=i, detail="empty lemma clause")
        try:
            sub = lemma_problem(p, clause)
        except ValueError as e:
            raise Rejection("malformed-lemma", step=i, detail=str(e)) from None
        try:
            _lia_tree(sub, lc)
        except Rejection as e:
            raise Rejection("invalid-theory-lemma", step=i, path=e.path, detail=e.reason) from None
        extra.append(tuple(clause))
    _rup_core(p, extra, cert.proof)
    return _issue(bound, cert.to_text())


# ---------------------------------------------------------------- entry point

Certificate = Union[SmtCert, RupProof, LiaBranch, LiaSplit, LiaFarkas, str]


def certify(sequent: Sequent, kind: str, certificate: Certificate) -> AcceptanceToken:
    """Translate ``sequent`` afresh and check ``certificate`` against it.

    ``kind`` is ``"rup"``, ``"lia"`` or ``"smt"``; the certificate may be given in its
    text form.
    """
    try:
        if kind == "rup":
            proof = RupProof.from_text(certificate) if isinstance(certificate, str) else certificate
            return check_rup(translate_cnf(sequent), proof, sequent)
        if kind == "lia":
            cert = lia_cert_from_text(certificate) if isinstance(certificate, str) else certificate
            return check_lia(translate_lia(sequent)[0], cert, sequent)
        if kind == "smt":
            cert = SmtCert.from_text(certificate) if isinstance(certificate, str) else certificate
            return check_smt(translate_cnf(sequent), cert, sequent)
    except Unsupported as e:
        raise Rejection("untranslatable-sequent", detail=e.reason) from None
    except ValueError as e:
        raise Rejection("malformed-certificate", detail=str(e)) from None
    raise Rejection("unknown-certificate-kind", detail=kind)
