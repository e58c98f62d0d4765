"""Failure causes and structured failure records."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Any

from .logic import Formula
from .syntax import render


class CauseClass(str, Enum):
    MISSING_LEMMA = "missing_lemma"
    FAILED_INSTANTIATION = "failed_instantiation"
    INVALID_REWRITE = "invalid_rewrite"
    UNSATISFIED_PRECONDITION = "unsatisfied_precondition"

    def __str__(self) -> str:
        return self.value


_BY_KIND = {
    "unresolved-reference": CauseClass.MISSING_LEMMA,
    "unbound-variable": CauseClass.FAILED_INSTANTIATION,
    "binding-ill-sorted": CauseClass.FAILED_INSTANTIATION,
    "extra-binding": CauseClass.FAILED_INSTANTIATION,
    "instance-mismatch": CauseClass.FAILED_INSTANTIATION,
    "position-invalid": CauseClass.INVALID_REWRITE,
    "position-mismatch": CauseClass.INVALID_REWRITE,
    "child-goal-mismatch": CauseClass.INVALID_REWRITE,
    "countermodel": CauseClass.UNSATISFIED_PRECONDITION,
    "resource-limit": CauseClass.UNSATISFIED_PRECONDITION,
    "unsupported": CauseClass.UNSATISFIED_PRECONDITION,
    "certificate-rejected": CauseClass.UNSATISFIED_PRECONDITION,
}

_ASSEMBLY_BY_TAG = {
    "rewrite": CauseClass.INVALID_REWRITE,
    "exact": CauseClass.FAILED_INSTANTIATION,
}


@dataclass(frozen=True)
class FailureReport:
    """Raw failure as produced by discharge or assembly, before classification.

    ``kind`` is a fine-grained label such as ``countermodel`` or
    ``position-mismatch``; ``tag`` is the method tag of the failing node.
    """

    kind: str
    tag: str
    detail: str = ""


def classify(report: FailureReport) -> CauseClass:
    """Map a raw failure to one of the four causes. Total: unknown kinds are
    treated as unmet preconditions."""
    if report.kind == "assembly":
        return _ASSEMBLY_BY_TAG.get(report.tag, CauseClass.UNSATISFIED_PRECONDITION)
    return _BY_KIND.get(report.kind, CauseClass.UNSATISFIED_PRECONDITION)


@dataclass(frozen=True)
class FailureRecord:
    node_id: str
    cause: CauseClass
    context: tuple[tuple[str, Formula], ...]
    goal: Formula
    detail: str
    countermodel: dict[str, Any] | None = None
    hints: tuple[str, ...] = ()
    obligation: str | None = None
    kind: str = ""

    def to_json(self, library=None) -> dict:
        out: dict[str, Any] = {
            "node_id": self.node_id,
            "cause": self.cause.value,
            "detail": self.detail,
            "context": [{"name": n, "formula": render(f)} for n, f in self.context],
            "goal": render(self.goal),
        }
        if self.obligation is not None:
            out["obligation"] = self.obligation
        if self.countermodel is not None:
            out["countermodel"] = dict(sorted(self.countermodel.items()))
        if library is not None:
            out["hints"] = [{"id": h, "formula": render(library[h])} for h in self.hints if h in library]
        else:
            out["hints"] = list(self.hints)
        return out
