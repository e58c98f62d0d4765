import io
import json
import os
import subprocess
import sys

import pytest

import corpus
from proofsketch import cli
from proofsketch.sketch import render_node

LIB = str(corpus.library_path())


def run(*argv, env=None):
    out, err = io.StringIO(), io.StringIO()
    if env:
        old = {k: os.environ.get(k) for k in env}
        os.environ.update(env)
    try:
        code = cli.main([str(a) for a in argv], out=out, err=err)
    finally:
        if env:
            for k, v in old.items():
                if v is None:
                    os.environ.pop(k, None)
                else:
                    os.environ[k] = v
    return code, out.getvalue(), err.getvalue()


def path(name):
    return corpus.ROOT / name


@pytest.fixture
def bad_file(tmp_path):
    p = tmp_path / "bad.psk"
    p.write_text("theorem t: p\nsignature { pred p; }\ncontext { }\nproof\nnode n0 { goal: p; method: hole }")
    return p


def test_prove_add_zero(tmp_path):
    code, out, _ = run("prove", path("add_zero.psk"), "--store", tmp_path / "s")
    assert code == 0
    assert out.startswith("add_zero: accepted")
    assert "failed" not in out
    assert out.count("accepted via") == 4


def test_check_then_prove_mutation(tmp_path):
    f = path("mut_missing_lemma.psk")
    assert run("check", f)[0] == 0
    code, out, _ = run("prove", f, "--no-store", "--format", "json")
    assert code == 1
    data = json.loads(out)
    assert data["verdict"] == "rejected"
    assert data["failures"][0]["cause"] == "missing_lemma"


def test_syntax_error_exit_2(bad_file):
    code, out, _ = run("obligations", bad_file)
    assert code == 2
    err = json.loads(out)["error"]
    assert (err["line"], err["col"], err["kind"]) == (5, 33, "parse")
    code, _, err_text = run("check", bad_file)
    assert code == 2 and ":5:33:" in err_text


def test_usage_error_exit_3():
    assert run("prove", "--bogus")[0] == 3
    assert run("frobnicate")[0] == 3


def test_missing_file_is_input_error(tmp_path):
    code, out, _ = run("check", tmp_path / "nope.psk", "--format", "json")
    assert code == 2 and json.loads(out)["status"] == "error"


@pytest.mark.parametrize(
    "argv",
    [
        ["check", "add_zero.psk"],
        ["obligations", "add_zero.psk"],
        ["prove", "add_zero.psk", "--no-store"],
        ["prove", "mut_hole_step.psk", "--no-store"],
        ["lemmas", "search", "lib_rewrite.psk", "--lib", LIB],
    ],
)
def test_json_output_everywhere(argv):
    argv = [str(path(a)) if a.endswith(".psk") else a for a in argv]
    if argv[0] != "obligations":
        argv += ["--format", "json"]
    code, out, _ = run(*argv)
    assert code in (0, 1)
    json.loads(out)


def test_warm_store_no_solver_calls(tmp_path):
    store = tmp_path / "s"
    first = json.loads(run("prove", path("sign_cases.psk"), "--store", store, "--format", "json")[1])
    second = json.loads(run("prove", path("sign_cases.psk"), "--store", store, "--format", "json")[1])
    assert first["solver_calls"] > 0
    assert second["solver_calls"] == 0 and second["verdict"] == "accepted"


def test_store_from_environment(tmp_path):
    store = tmp_path / "envstore"
    run("prove", path("sign_cases.psk"), env={"PSK_STORE": str(store)})
    assert (store / "VERSION").exists()
    assert run("audit", "--store", store)[0] == 0


def test_replay_and_claim(tmp_path):
    out = tmp_path / "p.proof"
    assert run("prove", path("lib_exact.psk"), "--lib", LIB, "--no-store", "--out", out)[0] == 0
    assert run("replay", out, "--claim", path("lib_exact.psk"), "--lib", LIB)[0] == 0
    # the proof does not establish a different theorem
    assert run("replay", out, "--claim", path("add_zero.psk"))[0] == 1
    out.write_text(out.read_text().replace("PROOFOBJ v1 ", "PROOFOBJ v1 0"))
    assert run("replay", out)[0] == 1


def test_gc(tmp_path):
    store = tmp_path / "s"
    run("prove", path("sign_cases.psk"), "--store", store)
    run("prove", path("double_chain.psk"), "--store", store)
    code, out, _ = run("gc", path("sign_cases.psk"), "--store", store, "--format", "json")
    assert code == 0 and json.loads(out)["removed"] > 0
    assert run("audit", "--store", store)[0] == 0


def test_lemma_search_text():
    code, out, _ = run("lemmas", "search", path("lib_rewrite.psk"), "--lib", LIB, "-k", "2")
    assert code == 0 and len(out.strip().splitlines()) == 2


def test_repair_with_subprocess_proposer(tmp_path):
    fix = tmp_path / "fix.node"
    fix.write_text(render_node(corpus.sketch("double_chain.psk").node("r")))
    script = tmp_path / "prop.py"
    script.write_text(
        "import sys\n"
        "body = open(sys.argv[1], 'rb').read()\n"
        "while True:\n"
        "    head = sys.stdin.buffer.readline()\n"
        "    if not head:\n"
        "        break\n"
        "    sys.stdin.buffer.read(int(head.split()[1]))\n"
        "    sys.stdout.buffer.write(b'NODE %d\\n' % len(body) + body)\n"
        "    sys.stdout.buffer.flush()\n"
    )
    cmd = f"{sys.executable} {script} {fix}"
    code, out, _ = run("repair", path("mut_rewrite_pos.psk"), "--proposer", cmd, "--no-store", "--format", "json")
    assert code == 0
    data = json.loads(out)
    assert data["verdict"] == "accepted" and data["exchanges"] == 1
    silent = tmp_path / "silent.py"
    silent.write_text("import sys\nfor line in sys.stdin.buffer:\n    pass\n")
    code, _, _ = run("repair", path("mut_rewrite_pos.psk"), "--proposer", f"{sys.executable} {silent}", "--no-store", "--max-rounds", "1", "--timeout", "0.5")
    assert code == 1


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "proofsketch", "check", str(path("add_zero.psk"))], capture_output=True)
    assert res.returncode == 0


def test_console_script():
    import shutil

    exe = shutil.which("psk")
    if exe is None:
        pytest.skip("package not installed with its console script")
    res = subprocess.run([exe, "check", str(path("add_zero.psk"))], capture_output=True)
    assert res.returncode == 0
