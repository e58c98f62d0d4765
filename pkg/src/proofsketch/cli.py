"""``psk`` command-line driver.

Exit status: 0 ok/accepted, 1 rejected, 2 input error, 3 internal error or
bad usage.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import traceback
from pathlib import Path

from .kernel import KernelError
from .library import LemmaLibrary, LibraryError, retrieve_hints
from .obligations import extract, node_infos
from .prover import Prover, verify
from .repair import RepairConfig, make_proposer
from .repair import run as repair_run
from .sketch import Sketch, parse_sketch, validate_sketch
from .store import DEFAULT_DIR, ProofStore, StoreLocked, audit, sketch_keys
from .syntax import ParseError, render

OK, REJECTED, INPUT_ERROR, INTERNAL_ERROR = 0, 1, 2, 3


class InputError(Exception):
    def __init__(self, message: str, line: int = 0, col: int = 0, kind: str = "input"):
        super().__init__(message)
        self.line, self.col, self.kind = line, col, kind


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit with 2, which means bad input here
        raise _UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


# ------------------------------------------------------------------- inputs


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise InputError(f"cannot read {path}: {e}") from None


def load_sketch(path: str) -> Sketch:
    try:
        return parse_sketch(_read(path))
    except ParseError as e:
        raise InputError(f"{path}:{e.line}:{e.col}: {e.message}", e.line, e.col, "parse") from None


def load_library(path: str | None, s: Sketch) -> LemmaLibrary | None:
    if path is None:
        return None
    try:
        return LemmaLibrary.parse(_read(path)).bind(s.signature)
    except ParseError as e:
        raise InputError(f"{path}:{e.line}:{e.col}: {e.message}", e.line, e.col, "parse") from None
    except LibraryError as e:
        raise InputError(f"{path}: {e}", kind="library") from None


def _validated(path: str, lib_path: str | None) -> tuple[Sketch, LemmaLibrary | None]:
    s = load_sketch(path)
    lib = load_library(lib_path, s)
    rep = validate_sketch(s, lib)
    if not rep.ok:
        i = rep.issues[0]
        raise InputError(f"{path}: node {i.node_id}: {i.kind}: {i.message}", kind="validate")
    return s, lib


def open_store(arg: str | None, sketch_path: str | None, no_store: bool = False) -> ProofStore:
    if no_store:
        return ProofStore(None)
    root = arg or os.environ.get("PSK_STORE")
    if root is None:
        base = Path(sketch_path).parent if sketch_path else Path.cwd()
        root = base / DEFAULT_DIR
    try:
        return ProofStore(root)
    except StoreLocked as e:
        raise InputError(str(e), kind="store") from None
    except (OSError, ValueError) as e:
        raise InputError(f"cannot open store {root}: {e}", kind="store") from None


# ----------------------------------------------------------------- commands


def cmd_check(a, out) -> tuple[int, dict, str]:
    s = load_sketch(a.file)
    lib = load_library(a.lib, s)
    rep = validate_sketch(s, lib)
    lines = [f"{s.name}: {'well-formed' if rep.ok else 'ill-formed'}"]
    lines += [f"  {i.node_id}: {i.kind}: {i.message}" for i in rep.issues]
    return (OK if rep.ok else INPUT_ERROR), {"status": "ok" if rep.ok else "invalid", "theorem": s.name, **rep.to_json()}, "\n".join(lines)


def cmd_obligations(a, out):
    s, lib = _validated(a.file, a.lib)
    obs = extract(s, lib)
    if a.format == "json":
        out.write(obs.dumps())
        return OK, None, None
    lines = []
    for o in obs.obligations:
        ctx = ", ".join(n for n, _ in o.sequent.context)
        lines.append(f"{o.id}  [{o.route}/{o.fragment}]  {ctx} |- {render(o.sequent.goal)}")
    return OK, None, "\n".join(lines)


def _node_table(res) -> list[str]:
    lines = []
    for r in res.nodes.values():
        mark = "ok" if r.accepted else "FAIL"
        lines.append(f"  {r.node_id:<16} {r.tag:<14} {mark}{' (cached)' if r.cached else ''}")
        for v in r.verdicts:
            lines.append(f"    {v.id:<22} {v.route:<18} {'accepted' if v.accepted else 'failed'} via {v.how}{': ' + v.detail if v.detail else ''}")
    return lines


def _failure_lines(failures, lib) -> list[str]:
    lines = []
    for f in failures:
        lines.append(f"  failure at {f.node_id}: {f.cause.value}: {f.detail}")
        if f.countermodel:
            lines.append("    countermodel: " + ", ".join(f"{k}={v}" for k, v in sorted(f.countermodel.items())))
        if f.hints:
            lines.append("    hints: " + ", ".join(f.hints))
    return lines


def cmd_prove(a, out):
    s, lib = _validated(a.file, a.lib)
    store = open_store(a.store, a.file, a.no_store)
    try:
        res = Prover(lib, store, jobs=a.jobs).prove(s)
    finally:
        store.close()
    if res.accepted and a.out:
        Path(a.out).write_text(res.proof.to_text(), encoding="utf-8")
    doc = {"status": "accepted" if res.accepted else "rejected", **res.to_json(lib)}
    lines = [f"{s.name}: {doc['status']}"] + _node_table(res) + _failure_lines(res.failures, lib)
    lines.append(f"solver calls: {res.transcript.solver_calls}, cache hits: {res.transcript.cache_hits}")
    return (OK if res.accepted else REJECTED), doc, "\n".join(lines)


def cmd_repair(a, out):
    s, lib = _validated(a.file, a.lib)
    try:
        cfg = RepairConfig(a.max_rounds, a.timeout, a.proposer)
    except ValueError as e:
        raise InputError(str(e)) from None
    store = open_store(a.store, a.file, a.no_store)
    proposer = make_proposer(a.proposer)
    try:
        v = repair_run(s, proposer, cfg, lib, store)
    finally:
        proposer.close()
        store.close()
    if v.accepted and a.out:
        Path(a.out).write_text(v.proof.to_text(), encoding="utf-8")
    doc = {"status": "accepted" if v.accepted else "rejected", "theorem": s.name, **v.to_json(lib)}
    lines = [f"{s.name}: {doc['status']} after {v.exchanges} proposer exchange(s)"]
    for e in v.transcript.events:
        if e.get("event") == "propose":
            lines.append(f"  round {e['round']}: sent {e['node_id']} ({e['cause']})")
        elif e.get("event") == "reply":
            lines.append(f"  round {e['round']}: {e['status']}{': ' + e['detail'] if e.get('detail') else ''}")
    lines += _failure_lines(v.failures, lib)
    return (OK if v.accepted else REJECTED), doc, "\n".join(lines)


def cmd_replay(a, out):
    text = _read(a.proofobj)
    claimed = None
    if a.claim:
        s, lib = _validated(a.claim, a.lib)
        claimed = Prover._claimed(s, node_infos(s, lib))
    try:
        thm = verify(text, claimed)
    except KernelError as e:
        return REJECTED, {"status": "rejected", "reason": str(e)}, f"rejected: {e}"
    seq = thm.sequent
    return OK, {"status": "ok", "goal": render(seq.goal), "context": [n for n, _ in seq.context]}, f"ok: {render(seq.goal)}"


def cmd_audit(a, out):
    root = a.store or os.environ.get("PSK_STORE") or DEFAULT_DIR
    if not Path(root).is_dir():
        raise InputError(f"no store at {root}", kind="store")
    try:
        store = ProofStore(root, readonly=True)
    except ValueError as e:
        raise InputError(str(e), kind="store") from None
    rep = audit(store)
    lines = [f"audited {rep.checked} accepted entries: {'ok' if rep.ok else 'FAILURES'}"]
    lines += [f"  {k}: {r}" for k, r in rep.failures]
    return (OK if rep.ok else REJECTED), {"status": "ok" if rep.ok else "rejected", **rep.to_json()}, "\n".join(lines)


def cmd_gc(a, out):
    keep: set[str] = set()
    first = None
    for f in a.files:
        s, lib = _validated(f, a.lib)
        keep |= set(sketch_keys(s, lib).values())
        first = first or f
    store = open_store(a.store, first)
    try:
        n = store.gc(keep)
    finally:
        store.close()
    return OK, {"status": "ok", "removed": n, "kept": len(keep)}, f"removed {n} entries"


def cmd_lemmas(a, out):
    s = load_sketch(a.file)
    lib = load_library(a.lib, s)
    if a.k < 0:
        raise InputError("-k must be non-negative")
    goal = s.theorem if a.node is None else _node_goal(s, a.node)
    ids = retrieve_hints(goal, lib, a.k)
    doc = {"status": "ok", "goal": render(goal), "hints": [{"id": i, "formula": render(lib[i])} for i in ids]}
    return OK, doc, "\n".join(f"{i}: {render(lib[i])}" for i in ids) if ids else "(no lemmas)"


def _node_goal(s: Sketch, nid: str):
    try:
        return s.node(nid).goal
    except KeyError:
        raise InputError(f"no node {nid!r}") from None


# ------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    fmt = _Parser(add_help=False)
    fmt.add_argument("--format", choices=("text", "json"), default="text")
    p = _Parser(prog="psk", description="Check proof sketches against a small trusted kernel.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("check", parents=[fmt], help="parse and validate a sketch")
    c.add_argument("file")
    c.add_argument("--lib")
    c.set_defaults(fn=cmd_check)

    c = sub.add_parser("obligations", help="print the obligation set")
    c.add_argument("file")
    c.add_argument("--lib")
    c.add_argument("--format", choices=("text", "json"), default="json")
    c.set_defaults(fn=cmd_obligations)

    def prover_opts(c):
        c.add_argument("file")
        c.add_argument("--lib")
        c.add_argument("--store")
        c.add_argument("--no-store", action="store_true", help="keep the cache in memory only")
        c.add_argument("--out", help="write the proof object here on acceptance")

    c = sub.add_parser("prove", parents=[fmt], help="discharge and assemble")
    prover_opts(c)
    c.add_argument("--jobs", type=int, default=1)
    c.set_defaults(fn=cmd_prove)

    c = sub.add_parser("repair", parents=[fmt], help="run the repair loop")
    prover_opts(c)
    c.add_argument("--proposer", required=True, help="command line or http(s) URL")
    c.add_argument("--max-rounds", type=int, default=3)
    c.add_argument("--timeout", type=float, default=30.0, help="seconds per proposer exchange")
    c.set_defaults(fn=cmd_repair)

    c = sub.add_parser("replay", parents=[fmt], help="re-check a proof object")
    c.add_argument("proofobj")
    c.add_argument("--claim")
    c.add_argument("--lib")
    c.set_defaults(fn=cmd_replay)

    c = sub.add_parser("audit", parents=[fmt], help="replay every accepted store entry")
    c.add_argument("--store")
    c.set_defaults(fn=cmd_audit)

    c = sub.add_parser("gc", parents=[fmt], help="drop store entries not reachable from the given sketches")
    c.add_argument("files", nargs="+")
    c.add_argument("--lib")
    c.add_argument("--store")
    c.set_defaults(fn=cmd_gc)

    c = sub.add_parser("lemmas", help="lemma library queries")
    lsub = c.add_subparsers(dest="action", required=True, parser_class=_Parser)
    ls = lsub.add_parser("search", parents=[fmt], help="rank lemmas for a goal")
    ls.add_argument("file")
    ls.add_argument("--lib", required=True)
    ls.add_argument("-k", type=int, default=5)
    ls.add_argument("--node", help="use this node's goal instead of the theorem")
    ls.set_defaults(fn=cmd_lemmas)
    return p


def main(argv: list[str] | None = None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    logging.basicConfig(level=logging.WARNING, format="psk: %(levelname)s: %(message)s")
    try:
        a = build_parser().parse_args(argv)
    except _UsageError as e:
        err.write(str(e) + "\n")
        return INTERNAL_ERROR
    except SystemExit as e:  # --help
        return OK if not e.code else INTERNAL_ERROR
    fmt = a.format
    try:
        status, doc, text = a.fn(a, out)
    except InputError as e:
        doc = {"status": "error", "error": {"kind": e.kind, "message": str(e)}}
        if e.line:
            doc["error"].update(line=e.line, col=e.col)
        _emit(fmt, doc, None, out, err, str(e))
        return INPUT_ERROR
    except Exception as e:  # noqa: BLE001  anything else is our bug
        doc = {"status": "error", "error": {"kind": "internal", "message": f"{type(e).__name__}: {e}"}}
        _emit(fmt, doc, None, out, err, traceback.format_exc().rstrip())
        return INTERNAL_ERROR
    _emit(fmt, doc, text, out, err, None)
    return status


def _emit(fmt, doc, text, out, err, errtext) -> None:
    if fmt == "json":
        if doc is not None:
            out.write(json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n")
        return
    if text:
        out.write(text + "\n")
    if errtext:
        err.write(f"psk: error: {errtext}\n")


if __name__ == "__main__":
    sys.exit(main())
