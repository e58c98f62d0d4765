"""Proof-sketch checking: a typed sketch DSL, an LCF-style kernel, and
certificate-checked solver discharge with node-local repair."""

from .kernel import KernelError, ProofObject, Theorem
from .prover import Prover, ProveResult, prove, verify
from .sketch import Sketch, parse_sketch, validate_sketch

__all__ = [
    "KernelError",
    "ProofObject",
    "ProveResult",
    "Prover",
    "Sketch",
    "Theorem",
    "parse_sketch",
    "prove",
    "validate_sketch",
    "verify",
]
__version__ = "0.1.0"
