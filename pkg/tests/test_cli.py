import json

import pytest

from instances import ALICE, BOB, CARL, GAMMA, S0, S_ALICE_BOB
from muac.cli import main


@pytest.fixture
def fixture_dir(tmp_path):
    pol = tmp_path / "policies"
    pol.mkdir()
    for user, text in (("alice", ALICE), ("bob", BOB), ("carl", CARL)):
        (pol / f"{user}.muac").write_text(text + "\n")
    (tmp_path / "state.json").write_text(json.dumps(S0.to_json()))
    (tmp_path / "context.json").write_text(json.dumps(GAMMA.to_json()))
    return tmp_path


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr().out
    return code, [json.loads(line) for line in out.splitlines()], out


def inputs(d, goal):
    return ["--policies", d / "policies", "--state", d / "state.json", "--context", d / "context.json", "--goal", goal]


def test_check_house_policy(fixture_dir, capsys):
    code, out, _ = run(capsys, "check", fixture_dir / "policies" / "alice.muac")
    assert code == 0
    assert [w["warning"] for w in out] == ["pure-witness"]


def test_check_empty_file(tmp_path, capsys):
    (tmp_path / "empty.muac").write_text("")
    assert run(capsys, "check", tmp_path / "empty.muac") == (0, [], "")


def test_check_malformed(tmp_path, capsys):
    (tmp_path / "bad.muac").write_text("Gives(Me, x, u) :- Gives(u y, Me).\n")
    code, out, _ = run(capsys, "check", tmp_path / "bad.muac")
    assert code == 1
    assert out[0]["error"] == "PolicySyntaxError" and (out[0]["line"], out[0]["col"]) == (1, 28)


def test_check_warnings(tmp_path, capsys):
    (tmp_path / "w.muac").write_text("Gives(Me, x, u).\n")
    code, out, _ = run(capsys, "check", tmp_path / "w.muac")
    assert code == 0 and out[0]["warning"] == "unconditional"


def test_check_missing_file(tmp_path, capsys):
    assert run(capsys, "check", tmp_path / "nope.muac")[0] == 2


def test_solve_swap(fixture_dir, capsys):
    code, out, _ = run(capsys, "solve", *inputs(fixture_dir, "owns:alice:downtown_house:1"))
    assert code == 0
    steps = out[0]["steps"]
    assert {(s["giver"], s["resource"], s["receiver"]) for s in steps} == {
        ("alice", "countryside_house", "bob"),
        ("bob", "downtown_house", "alice"),
    }


def test_solve_already_satisfied(fixture_dir, capsys):
    code, out, _ = run(capsys, "solve", *inputs(fixture_dir, "owns:alice:countryside_house:1"))
    assert code == 0 and out[0]["steps"] == [] and out[0]["matching"] == []


def test_solve_budget(fixture_dir, capsys):
    code, out, _ = run(capsys, "solve", *inputs(fixture_dir, "owns:alice:downtown_flat:1"), "--max", 1)
    assert code == 1 and out[0]["result"] in ("budget_exceeded", "no_solution")


def test_solve_bad_goal(fixture_dir, capsys):
    assert run(capsys, "solve", *inputs(fixture_dir, "wants:alice"))[0] == 2


def test_verify(fixture_dir, capsys):
    _, out, _ = run(capsys, "solve", *inputs(fixture_dir, "owns:alice:downtown_house:1"))
    cert = fixture_dir / "cert.json"
    cert.write_text(json.dumps(out[0]))
    code, out, _ = run(capsys, "verify", "--cert", cert, *inputs(fixture_dir, "owns:alice:downtown_house:1"))
    assert code == 0 and out[0]["valid"] is True

    (fixture_dir / "target.json").write_text(json.dumps(S_ALICE_BOB.to_json()))
    code, out, _ = run(capsys, "verify", "--cert", cert, *inputs(fixture_dir, f"state:{fixture_dir / 'target.json'}"))
    assert code == 0

    data = json.loads(cert.read_text())
    data["steps"][0]["resource"] = "downtown_flat"
    cert.write_text(json.dumps(data))
    code, out, _ = run(capsys, "verify", "--cert", cert, *inputs(fixture_dir, "owns:alice:downtown_house:1"))
    assert code == 1 and out[0]["valid"] is False and out[0]["violation"]


def test_verify_empty_certificate(fixture_dir, capsys):
    cert = fixture_dir / "empty.json"
    cert.write_text(json.dumps({"steps": [], "matching": []}))
    code, out, _ = run(
        capsys, "verify", "--cert", cert, *inputs(fixture_dir, f"state:{fixture_dir / 'state.json'}")
    )
    assert code == 0 and out[0]["valid"] is True


def test_verify_malformed_certificate(fixture_dir, capsys):
    cert = fixture_dir / "junk.json"
    cert.write_text(json.dumps({"steps": [{"giver": 3}]}))
    code, out, _ = run(capsys, "verify", "--cert", cert, *inputs(fixture_dir, "owns:alice:downtown_house"))
    assert code == 1 and out[0]["violation"] == "MalformedCertificate"


def scenario(capsys, d, ledger):
    assert run(capsys, "ledger", "--dir", ledger, "init")[0] == 0
    for user, kind in (("alice", "countryside_house"), ("bob", "downtown_house"), ("carl", "downtown_flat")):
        assert run(capsys, "ledger", "--dir", ledger, "deposit", user, kind)[0] == 0
    for user in ("alice", "bob", "carl"):
        assert run(capsys, "ledger", "--dir", ledger, "policy", user, d / "policies" / f"{user}.muac")[0] == 0
    for other in ("bob", "carl"):
        assert run(capsys, "ledger", "--dir", ledger, "fact", "assert", "bob", "FriendOrSame", "bob", other)[0] == 0


def test_ledger_scenario(fixture_dir, capsys):
    ledger = fixture_dir / "ledger"
    scenario(capsys, fixture_dir, ledger)
    code, out, _ = run(capsys, "ledger", "--dir", ledger, "request", "carl", "countryside_house")
    assert code == 0 and out[0]["status"] == "applied"
    code, out, _ = run(capsys, "ledger", "--dir", ledger, "request", "dave", "downtown_house")
    assert code == 1 and out[0] == {"status": "denied", "reason": "no_solution"}
    code, out, _ = run(capsys, "ledger", "--dir", ledger, "log")
    assert code == 0 and out[0]["valid"] is True and out[0]["events"] == 9


def test_ledger_env_default(fixture_dir, capsys, monkeypatch):
    monkeypatch.setenv("MUAC_LEDGER_DIR", str(fixture_dir / "envledger"))
    assert run(capsys, "ledger", "init")[0] == 0
    assert (fixture_dir / "envledger" / "events.jsonl").exists()


def test_ledger_uninitialized(tmp_path, capsys):
    assert run(capsys, "ledger", "--dir", tmp_path / "missing", "request", "alice", "x")[0] == 2


def test_ledger_log_detects_tampering(fixture_dir, capsys):
    ledger = fixture_dir / "ledger"
    scenario(capsys, fixture_dir, ledger)
    log = ledger / "events.jsonl"
    lines = log.read_text().splitlines()
    ev = json.loads(lines[1])
    ev["payload"]["kind"] = "downtown_flat"
    lines[1] = json.dumps(ev)
    log.write_text("\n".join(lines) + "\n")
    code, out, _ = run(capsys, "ledger", "--dir", ledger, "log")
    assert code == 1 and out[0] == {**out[0], "valid": False, "seq": ev["seq"]}


def test_ledger_submit(fixture_dir, capsys):
    ledger = fixture_dir / "ledger"
    scenario(capsys, fixture_dir, ledger)
    _, out, _ = run(capsys, "solve", *inputs(fixture_dir, "owns:alice:downtown_house:1"))
    cert = fixture_dir / "cert.json"
    cert.write_text(json.dumps(out[0]))
    assert run(capsys, "ledger", "--dir", ledger, "submit", cert, "owns:alice:downtown_house")[0] == 0
    code, out, _ = run(capsys, "ledger", "--dir", ledger, "submit", cert, "owns:alice:downtown_house")
    assert code == 1 and out[0]["status"] == "rejected"


def test_deterministic_output(fixture_dir, capsys):
    a = run(capsys, "solve", *inputs(fixture_dir, "owns:carl:countryside_house"))[2]
    b = run(capsys, "solve", *inputs(fixture_dir, "owns:carl:countryside_house"))[2]
    assert a == b and a.endswith("\n")


def test_no_command_is_usage_error(capsys):
    assert main([]) == 2
