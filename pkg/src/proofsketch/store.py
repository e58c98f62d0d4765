"""Content-addressed cache of node verdicts and proof objects.

On disk::

    <root>/VERSION
    <root>/LOCK                      single-writer lock (flock)
    <root>/<2 hex>/<key hex>.entry   JSON header line, then proof-object text

The header records a SHA-256 of the body; an entry whose body does not match,
whose header does not parse, or whose key differs from its file name is
treated as absent and logged.
"""

from __future__ import annotations

import fcntl
import hashlib
import json
import logging
import os
import tempfile
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator, Mapping

from .kernel import CertRegistry, KernelError, ProofObject, admit_bundles, replay
from .logic import Formula, canonical_digest
from .obligations import node_infos, references
from .sketch import Exact, Rewrite, Sketch, SketchNode, Split, Induction

log = logging.getLogger(__name__)

STORE_VERSION = "psk-store/1"
DEFAULT_DIR = ".psk-store"


# ------------------------------------------------------------------ keys


def method_params(n: SketchNode) -> list:
    m = n.method
    if isinstance(m, Rewrite):
        # the child goal is part of a rewrite step: it is what gets justified
        kids = [c.goal for c in n.children]
        return ["rewrite", m.fact, list(m.position), m.direction, sorted(m.bindings, key=lambda b: b[0]), kids]
    if isinstance(m, Exact):
        return ["exact", m.fact, sorted(m.bindings, key=lambda b: b[0])]
    if isinstance(m, Split):
        return ["split", m.condition]
    if isinstance(m, Induction):
        return ["induction", m.var]
    return [m.tag]


def node_key(n: SketchNode, ctx_digest: str, hints) -> str:
    """Digest of (goal, method and parameters, context chain digest, sorted hint ids)."""
    return canonical_digest(["psk-node/1", n.goal, method_params(n), ctx_digest, sorted(set(hints))]).hex()


def sketch_keys(s: Sketch, library: Mapping[str, Formula] | None = None) -> dict[str, str]:
    return {nid: node_key(i.node, i.chain, references(i.node)) for nid, i in node_infos(s, library).items()}


def dirty_set(s_old: Sketch, s_new: Sketch, library: Mapping[str, Formula] | None = None) -> set[str]:
    """Nodes of ``s_new`` whose cache key differs from the same node in ``s_old``."""
    old = sketch_keys(s_old, library)
    return {nid for nid, k in sketch_keys(s_new, library).items() if old.get(nid) != k}


# ---------------------------------------------------------------- entries


@dataclass
class CacheEntry:
    key: str
    node_id: str
    verdict: str  # "accepted" | "failed"
    proofs: dict[str, str] = field(default_factory=dict)  # slot -> proof-object text
    failure: dict | None = None  # FailureRecord JSON
    cert_digests: tuple[str, ...] = ()
    created: float = 0.0
    origin: str = "memory"  # where lookup found it; not persisted
    record: Any = None  # in-memory FailureRecord, not persisted

    def header(self, body_digest: str, layout: list) -> dict:
        return {
            "version": STORE_VERSION,
            "key": self.key,
            "node_id": self.node_id,
            "verdict": self.verdict,
            "failure": self.failure,
            "cert_digests": list(self.cert_digests),
            "created": self.created,
            "layout": layout,
            "body_sha256": body_digest,
        }


def _encode_entry(e: CacheEntry) -> bytes:
    layout = []
    body = ""
    for slot, text in e.proofs.items():
        layout.append([slot, len(text.encode())])
        body += text
    raw = body.encode()
    head = json.dumps(e.header(hashlib.sha256(raw).hexdigest(), layout), sort_keys=True, separators=(",", ":"))
    return head.encode() + b"\n" + raw


def _decode_entry(data: bytes, key: str) -> CacheEntry:
    head, sep, raw = data.partition(b"\n")
    if not sep:
        raise ValueError("missing header terminator")
    h = json.loads(head)
    if h.get("version") != STORE_VERSION or h.get("key") != key:
        raise ValueError("header does not match entry")
    if hashlib.sha256(raw).hexdigest() != h["body_sha256"]:
        raise ValueError("body digest mismatch")
    proofs = {}
    pos = 0
    for slot, n in h["layout"]:
        proofs[slot] = raw[pos : pos + n].decode()
        pos += n
    if pos != len(raw):
        raise ValueError("body length mismatch")
    return CacheEntry(
        key, h["node_id"], h["verdict"], proofs, h.get("failure"), tuple(h.get("cert_digests", ())), h.get("created", 0.0), "disk"
    )


class StoreLocked(RuntimeError):
    pass


class ProofStore:
    """Node-verdict cache; memory only when ``root`` is None.

    Lookups are concurrent; insertions are serialized. Opening a directory
    takes an exclusive lock on ``LOCK`` that is held until :meth:`close`.
    """

    def __init__(self, root: str | Path | None = None, *, readonly: bool = False):
        self.root = Path(root) if root is not None else None
        self._mem: dict[str, CacheEntry] = {}
        self._lock = threading.Lock()
        self._lockfile = None
        self.readonly = readonly
        if self.root is not None:
            self.root.mkdir(parents=True, exist_ok=True)
            vf = self.root / "VERSION"
            if vf.exists():
                if vf.read_text().strip() != STORE_VERSION:
                    raise ValueError(f"{self.root} holds an incompatible store version")
            elif not readonly:
                vf.write_text(STORE_VERSION + "\n")
            if not readonly:
                self._lockfile = open(self.root / "LOCK", "a+")
                try:
                    fcntl.flock(self._lockfile, fcntl.LOCK_EX | fcntl.LOCK_NB)
                except OSError:
                    self._lockfile.close()
                    self._lockfile = None
                    raise StoreLocked(f"{self.root} is locked by another writer") from None

    def close(self) -> None:
        if self._lockfile is not None:
            fcntl.flock(self._lockfile, fcntl.LOCK_UN)
            self._lockfile.close()
            self._lockfile = None

    def __enter__(self) -> "ProofStore":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def path(self, key: str) -> Path:
        assert self.root is not None
        return self.root / key[:2] / f"{key}.entry"

    def lookup(self, key: str) -> CacheEntry | None:
        e = self._mem.get(key)
        if e is not None:
            e.origin = "memory"
            return e
        if self.root is None:
            return None
        p = self.path(key)
        if not p.exists():
            return None
        try:
            e = _decode_entry(p.read_bytes(), key)
        except (ValueError, KeyError, TypeError, UnicodeDecodeError) as err:
            log.warning("ignoring corrupt store entry %s: %s", p, err)
            return None
        return e

    def store(self, e: CacheEntry) -> None:
        if not e.created:
            e.created = time.time()
        with self._lock:
            self._mem[e.key] = e
            if self.root is None or self.readonly:
                return
            p = self.path(e.key)
            p.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=p.parent, prefix=".tmp-")
            with os.fdopen(fd, "wb") as fh:
                fh.write(_encode_entry(e))
            os.replace(tmp, p)

    def keys_on_disk(self) -> Iterator[str]:
        if self.root is None:
            return
        for p in sorted(self.root.glob("??/*.entry")):
            yield p.stem

    def entries(self) -> Iterator[CacheEntry]:
        seen = set()
        for k in self.keys_on_disk():
            seen.add(k)
            e = self.lookup(k)
            if e is not None:
                yield e
        for k, e in list(self._mem.items()):
            if k not in seen:
                yield e

    def gc(self, keep: set[str]) -> int:
        """Delete disk entries whose key is not in ``keep``; returns the count."""
        removed = 0
        with self._lock:
            for k in list(self.keys_on_disk()):
                if k not in keep:
                    self.path(k).unlink()
                    removed += 1
            for k in [k for k in self._mem if k not in keep]:
                del self._mem[k]
        return removed


@dataclass
class AuditReport:
    checked: int = 0
    failures: list[tuple[str, str]] = field(default_factory=list)  # (key, reason)

    @property
    def ok(self) -> bool:
        return not self.failures

    def to_json(self) -> dict:
        return {"ok": self.ok, "checked": self.checked, "failures": [{"key": k, "reason": r} for k, r in self.failures]}


def audit(store: ProofStore) -> AuditReport:
    """Replay every accepted entry through the kernel in a fresh registry."""
    rep = AuditReport()
    for e in store.entries():
        if e.verdict != "accepted":
            continue
        rep.checked += 1
        reg = CertRegistry()
        try:
            for text in e.proofs.values():
                po = ProofObject.from_text(text)
                admit_bundles(po, reg)
                replay(po, None, reg)
        except KernelError as err:
            rep.failures.append((e.key, str(err)))
    return rep
