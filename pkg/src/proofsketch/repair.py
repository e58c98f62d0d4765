"""Bounded, node-local repair driven by an external proposer.

Each round proves the current sketch (reusing cached node verdicts), sends
one failure record per independent failing subtree to the proposer, and
splices the returned node back in. The proposer is untrusted: whatever it
returns is parsed, validated and re-checked like any other sketch text.

Wire protocol (subprocess stdin/stdout or one HTTP POST endpoint)::

    request:  PROPOSE <byte-length>\\n<json payload>
    reply:    NODE <byte-length>\\n<node text>   |   GIVEUP\\n
"""

from __future__ import annotations

import json
import os
import select
import shlex
import subprocess
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from typing import Callable, Mapping, Protocol

from .failures import CauseClass, FailureRecord, FailureReport, classify
from .kernel import ProofObject
from .library import LemmaLibrary, retrieve_hints
from .logic import Formula
from .prover import Prover, ProveResult, Transcript
from .sketch import Sketch, node_scope, parse_node, render_node, replace_node, validate_sketch
from .store import ProofStore, dirty_set
from .syntax import ParseError

PROTOCOL = "psk-repair/1"

__all__ = [
    "CauseClass",
    "FailureRecord",
    "FailureReport",
    "LemmaLibrary",
    "RepairConfig",
    "Verdict",
    "classify",
    "retrieve_hints",
    "run",
]


class ProtocolError(Exception):
    pass


@dataclass(frozen=True)
class RepairConfig:
    max_rounds: int = 3
    round_timeout: float = 30.0
    proposer: str | None = None  # command line or http(s) URL

    def __post_init__(self) -> None:
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be at least 1")


# ------------------------------------------------------------------ framing


def frame_request(payload: dict) -> bytes:
    body = json.dumps(payload, ensure_ascii=False, sort_keys=True).encode()
    return b"PROPOSE %d\n" % len(body) + body


def parse_request(data: bytes) -> dict:
    head, sep, body = data.partition(b"\n")
    parts = head.split()
    if not sep or len(parts) != 2 or parts[0] != b"PROPOSE" or not parts[1].isdigit() or int(parts[1]) != len(body):
        raise ProtocolError("malformed request frame")
    return json.loads(body)


def frame_reply(node_text: str | None) -> bytes:
    if node_text is None:
        return b"GIVEUP\n"
    body = node_text.encode()
    return b"NODE %d\n" % len(body) + body


def parse_reply(data: bytes) -> str | None:
    if data == b"GIVEUP\n":
        return None
    head, sep, body = data.partition(b"\n")
    parts = head.split()
    if not sep or len(parts) != 2 or parts[0] != b"NODE" or not parts[1].isdigit() or int(parts[1]) != len(body):
        raise ProtocolError(f"malformed reply frame {data[:40]!r}")
    try:
        return body.decode()
    except UnicodeDecodeError:
        raise ProtocolError("reply is not UTF-8") from None


# ---------------------------------------------------------------- proposers


class Proposer(Protocol):
    def propose(self, request: dict, timeout: float) -> str | None:
        """Node text, or None to give up. Raises ProtocolError or TimeoutError."""

    def close(self) -> None: ...


class CallableProposer:
    """In-process proposer; the callable gets the request payload."""

    def __init__(self, fn: Callable[[dict], str | None]):
        self.fn = fn
        self.requests: list[dict] = []

    def propose(self, request: dict, timeout: float) -> str | None:
        self.requests.append(request)
        reply = self.fn(request)
        # round-trip through the wire format so framing rules apply here too
        return parse_reply(frame_reply(reply))

    def close(self) -> None:
        pass


class SubprocessProposer:
    """Long-lived child process speaking the protocol on stdin/stdout."""

    def __init__(self, command: str | list[str]):
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        self.proc = subprocess.Popen(argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE, bufsize=0)

    def _read(self, n: int | None, deadline: float) -> bytes:
        """Read n bytes, or one line when n is None."""
        out = bytearray()
        fd = self.proc.stdout.fileno()
        while n is None or len(out) < n:
            left = deadline - time.monotonic()
            if left <= 0:
                raise TimeoutError("proposer timed out")
            ready, _, _ = select.select([fd], [], [], left)
            if not ready:
                continue
            chunk = os.read(fd, 1 if n is None else n - len(out))
            if not chunk:
                raise ProtocolError("proposer closed its output")
            out += chunk
            if n is None and out.endswith(b"\n"):
                break
        return bytes(out)

    def propose(self, request: dict, timeout: float) -> str | None:
        deadline = time.monotonic() + timeout
        try:
            self.proc.stdin.write(frame_request(request))
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as e:
            raise ProtocolError(f"cannot write to proposer: {e}") from None
        head = self._read(None, deadline)
        if head == b"GIVEUP\n":
            return None
        parts = head.split()
        if len(parts) != 2 or parts[0] != b"NODE" or not parts[1].isdigit():
            raise ProtocolError(f"malformed reply header {head[:40]!r}")
        return parse_reply(head + self._read(int(parts[1]), deadline))

    def close(self) -> None:
        if self.proc.poll() is None:
            try:
                self.proc.stdin.close()
                self.proc.wait(timeout=2)
            except (OSError, subprocess.TimeoutExpired):
                self.proc.kill()
                self.proc.wait()


class HttpProposer:
    """Single endpoint; each request is one POST whose bodies use the same framing."""

    def __init__(self, url: str):
        self.url = url

    def propose(self, request: dict, timeout: float) -> str | None:
        req = urllib.request.Request(self.url, data=frame_request(request), method="POST")
        req.add_header("Content-Type", "application/octet-stream")
        try:
            with urllib.request.urlopen(req, timeout=timeout) as resp:
                data = resp.read()
        except TimeoutError:
            raise
        except (urllib.error.URLError, OSError) as e:
            if "timed out" in str(e):
                raise TimeoutError(str(e)) from None
            raise ProtocolError(f"HTTP proposer failed: {e}") from None
        return parse_reply(data)

    def close(self) -> None:
        pass


def make_proposer(descriptor: str) -> Proposer:
    if descriptor.startswith(("http://", "https://")):
        return HttpProposer(descriptor)
    return SubprocessProposer(descriptor)


# --------------------------------------------------------------------- loop


@dataclass
class Verdict:
    accepted: bool
    sketch: Sketch
    proof: ProofObject | None
    failures: list[FailureRecord]
    transcript: Transcript
    exchanges: int
    rounds: list[dict] = field(default_factory=list)  # per re-check instrumentation

    def to_json(self, library=None) -> dict:
        return {
            "verdict": "accepted" if self.accepted else "rejected",
            "exchanges": self.exchanges,
            "failures": [f.to_json(library) for f in self.failures],
            "rechecks": self.rounds,
            "solver_calls": self.transcript.solver_calls,
            "cache_hits": self.transcript.cache_hits,
            "cache_misses": self.transcript.cache_misses,
        }


def build_request(round_no: int, rec: FailureRecord, s: Sketch, library: Mapping[str, Formula] | None) -> dict:
    return {
        "protocol": PROTOCOL,
        "round": round_no,
        "failure": rec.to_json(library if library is not None else {}),
        "node_source": render_node(s.node(rec.node_id)) + "\n",
    }


def run(
    s: Sketch,
    proposer: Proposer,
    cfg: RepairConfig,
    library: Mapping[str, Formula] | None = None,
    store: ProofStore | None = None,
    prover: Prover | None = None,
) -> Verdict:
    """Prove, and on failure ask the proposer for replacement nodes, at most
    ``cfg.max_rounds`` exchanges in total."""
    report = validate_sketch(s, library)
    if not report.ok:
        raise ValueError(f"sketch is not well-formed: {report.issues[0].message}")
    prover = prover or Prover(library, store)
    tr = Transcript()
    current = s
    exchanges = 0
    rechecks: list[dict] = []
    dirty: set[str] | None = None
    while True:
        mark = len(tr.events)
        res = prover.prove(current, tr)
        if dirty is not None:
            rechecks.append(_recheck_stats(res, tr, mark, dirty))
        if res.accepted:
            return Verdict(True, current, res.proof, [], tr, exchanges, rechecks)
        if exchanges >= cfg.max_rounds:
            return Verdict(False, current, None, res.failures, tr, exchanges, rechecks)
        before = current
        for rec in res.primary_failures():
            if exchanges >= cfg.max_rounds:
                break
            exchanges += 1
            current = _exchange(exchanges, rec, current, proposer, cfg, library, tr)
        dirty = dirty_set(before, current, library)


def _exchange(
    round_no: int,
    rec: FailureRecord,
    current: Sketch,
    proposer: Proposer,
    cfg: RepairConfig,
    library: Mapping[str, Formula] | None,
    tr: Transcript,
) -> Sketch:
    request = build_request(round_no, rec, current, library)
    tr.add({"event": "propose", "round": round_no, "node_id": rec.node_id, "cause": rec.cause.value, "node_source": request["node_source"]})
    try:
        reply = proposer.propose(request, cfg.round_timeout)
    except (ProtocolError, TimeoutError) as e:
        tr.add({"event": "reply", "round": round_no, "status": "protocol-error", "detail": str(e)})
        return current
    if reply is None:
        tr.add({"event": "reply", "round": round_no, "status": "giveup"})
        return current
    try:
        node = parse_node(reply, current.signature, node_scope(current, rec.node_id))
    except ParseError as e:
        tr.add({"event": "reply", "round": round_no, "status": "parse-error", "detail": str(e)})
        return current
    if node.id != rec.node_id:
        tr.add({"event": "reply", "round": round_no, "status": "wrong-node", "detail": f"expected node {rec.node_id}, got {node.id}"})
        return current
    candidate = replace_node(current, rec.node_id, node)
    report = validate_sketch(candidate)
    if not report.ok:
        tr.add({"event": "reply", "round": round_no, "status": "invalid", "detail": report.issues[0].message})
        return current
    tr.add({"event": "reply", "round": round_no, "status": "edit", "node_id": rec.node_id})
    return candidate


def _recheck_stats(res: ProveResult, tr: Transcript, mark: int, dirty: set[str]) -> dict:
    fresh = tr.discharged(mark)
    fresh_nodes = {i.split("/", 1)[0] for i in fresh}
    hits = {e["node"]: e["hit"] for e in tr.events[mark:] if e.get("event") == "cache"}
    untouched = [n for n in hits if n not in dirty]
    untouched_hits = sum(1 for n in untouched if hits[n])
    return {
        "dirty": sorted(dirty),
        "redischarged": fresh,
        "local": fresh_nodes <= dirty,
        "untouched": len(untouched),
        "untouched_hits": untouched_hits,
    }
