"""Lemma libraries (``.plib`` files) and symbol-overlap hint retrieval.

Hints are advisory: a retrieved lemma only enters a proof when a node names
it, and then as an ordinary hypothesis of the obligations that use it.
"""

from __future__ import annotations

from collections.abc import Mapping
from pathlib import Path
from typing import Iterator, Sequence

from .logic import BUILTIN_SYMBOLS, Formula, LogicError, Signature, check_formula, free_vars, symbols_of
from .sketch import parse_facts
from .syntax import resolve


class LibraryError(ValueError):
    pass


def symbols(f: Formula) -> frozenset[str]:
    """Function, predicate and constant names, including not-yet-resolved constants."""
    return frozenset(symbols_of(f) | {v.name for v in free_vars(f) if v.sort is None})


class LemmaLibrary(Mapping):
    """Named closed formulas, in file order."""

    def __init__(self, lemmas: Sequence[tuple[str, Formula]] = ()):
        self._lemmas: dict[str, Formula] = {}
        for name, f in lemmas:
            if name in self._lemmas:
                raise LibraryError(f"duplicate lemma {name!r}")
            self._lemmas[name] = f
        self._symbols = {n: symbols(f) for n, f in self._lemmas.items()}

    @classmethod
    def parse(cls, text: str) -> "LemmaLibrary":
        return cls(parse_facts(text))

    @classmethod
    def load(cls, path: str | Path) -> "LemmaLibrary":
        return cls.parse(Path(path).read_text(encoding="utf-8"))

    def bind(self, sig: Signature) -> "LemmaLibrary":
        """Resolve constants and sorts against a sketch signature.

        Lemmas mentioning a symbol the signature does not declare cannot
        apply to the sketch and are left out; a lemma over declared symbols
        that is ill-sorted or not closed is an error.
        """
        out = []
        for name, f in self._lemmas.items():
            if not all(sig.declared(x) or x in BUILTIN_SYMBOLS for x in self._symbols[name]):
                continue
            g = resolve(f, sig)
            try:
                check_formula(g, sig)
            except LogicError as e:
                raise LibraryError(f"lemma {name}: {e}") from None
            if free_vars(g):
                raise LibraryError(f"lemma {name} is not closed")
            out.append((name, g))
        return LemmaLibrary(out)

    def symbols(self, name: str) -> frozenset[str]:
        return self._symbols[name]

    def __getitem__(self, name: str) -> Formula:
        return self._lemmas[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._lemmas)

    def __len__(self) -> int:
        return len(self._lemmas)


def score(goal_symbols: frozenset[str], lemma_symbols: frozenset[str]) -> float:
    if not lemma_symbols:
        return 0.0
    return len(goal_symbols & lemma_symbols) / len(lemma_symbols)


def retrieve_hints(goal: Formula, lib: Mapping[str, Formula] | None, k: int) -> list[str]:
    """Top-k lemma ids by the fraction of a lemma's symbols the goal mentions.

    Ties go to the lexicographically smaller id.
    """
    if not lib or k <= 0:
        return []
    g = symbols(goal)
    ranked = sorted(lib, key=lambda n: (-score(g, symbols(lib[n])), n))
    return ranked[:k]
