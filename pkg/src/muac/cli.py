"""Command-line entry point.

Machine-readable results go to stdout as JSON; anything meant for humans goes
to stderr.  Exit codes: 0 success, 1 negative verdict (invalid, denied, no
solution), 2 usage or I/O error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .errors import CorruptLog, InvalidName, MuacError, PolicyError, Unsolved
from .ledger import Applied, Ledger, canonical, read_log, replay, serve
from .logic import Certificate, ExactState, OwnsAtLeast, Theory, check_diagnostics
from .model import Context, OwnershipState
from .policy import parse_policy, validate
from .solver import SolveRequest, solve

OK, NEGATIVE, USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def emit(obj) -> None:
    sys.stdout.write(canonical(obj) + "\n")


def say(msg: str) -> None:
    print(msg, file=sys.stderr)


def _read_json(path: str):
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read {path}: {exc}") from None


def load_policies(directory: str) -> dict:
    d = Path(directory)
    if not d.is_dir():
        raise UsageError(f"not a directory: {directory}")
    policies = {}
    for f in sorted(d.glob("*.muac")):
        try:
            policies[f.stem] = parse_policy(f.read_text(), f.stem)
        except PolicyError as exc:
            raise UsageError(f"{f}: {exc}") from None
        except InvalidName as exc:
            raise UsageError(f"{f}: {exc}") from None
    return policies


def load_state(path: str) -> OwnershipState:
    try:
        return OwnershipState.from_json(_read_json(path))
    except (ValueError, InvalidName) as exc:
        raise UsageError(f"{path}: {exc}") from None


def load_context(path: str | None) -> Context:
    if path is None:
        return Context()
    try:
        return Context.from_json(_read_json(path))
    except (ValueError, InvalidName) as exc:
        raise UsageError(f"{path}: {exc}") from None


def parse_goal(spec: str):
    """``owns:USER:KIND[:COUNT]`` or ``state:FILE``."""
    kind, _, rest = spec.partition(":")
    if kind == "owns":
        parts = rest.split(":")
        if len(parts) not in (2, 3):
            raise UsageError(f"bad goal spec {spec!r}")
        try:
            count = int(parts[2]) if len(parts) == 3 else 1
            return OwnsAtLeast(parts[0], parts[1], count)
        except (ValueError, InvalidName) as exc:
            raise UsageError(f"bad goal spec {spec!r}: {exc}") from None
    if kind == "state":
        return ExactState(load_state(rest))
    raise UsageError(f"bad goal spec {spec!r}")


# -- commands ------------------------------------------------------------------


def cmd_check(args) -> int:
    path = Path(args.policy_file)
    try:
        text = path.read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from None
    owner = args.owner or path.stem
    try:
        policy = parse_policy(text, owner)
    except PolicyError as exc:
        emit(exc.to_json())
        say(f"{path}:{exc}")
        return NEGATIVE
    except InvalidName as exc:
        raise UsageError(str(exc)) from None
    for w in validate(policy):
        emit(w.to_json())
    say(f"{path}: {len(policy.rules)} rule(s)")
    return OK


def cmd_solve(args) -> int:
    req = SolveRequest(
        load_policies(args.policies),
        load_context(args.context),
        load_state(args.state),
        parse_goal(args.goal),
        args.max,
    )
    try:
        cert = solve(req)
    except Unsolved as exc:
        emit({"result": exc.reason})
        say(str(exc))
        return NEGATIVE
    emit(cert.to_json())
    return OK


def cmd_verify(args) -> int:
    theory = Theory.build(load_policies(args.policies), load_context(args.context), load_state(args.state))
    goal = parse_goal(args.goal)
    raw = _read_json(args.cert)
    try:
        cert = Certificate.from_json(raw)
    except (ValueError, KeyError, TypeError, InvalidName) as exc:
        emit({"valid": False, "violation": "MalformedCertificate"})
        say(f"malformed certificate: {exc}")
        return NEGATIVE
    verdict = check_diagnostics(theory, cert, goal)
    emit(verdict.to_json())
    return OK if verdict.valid else NEGATIVE


def _ledger_dir(args) -> Path:
    d = args.dir or os.environ.get("MUAC_LEDGER_DIR")
    if not d:
        raise UsageError("no ledger directory (use --dir or MUAC_LEDGER_DIR)")
    return Path(d)


def cmd_ledger(args) -> int:
    path = _ledger_dir(args)
    sub = args.ledger_cmd
    if sub == "init":
        Ledger.init(path)
        emit({"status": "ok", "dir": str(path)})
        return OK
    if sub == "log":
        try:
            events = read_log(path / "events.jsonl")
            state, hashes = replay(events)
        except OSError as exc:
            raise UsageError(str(exc)) from None
        except CorruptLog as exc:
            emit({"valid": False, "seq": exc.seq, "message": str(exc)})
            return NEGATIVE
        emit({"valid": True, "events": len(hashes), "state_hash": hashes[-1] if hashes else None,
              "state": state.to_json()})
        return OK
    ledger = Ledger.open(path)
    if sub == "deposit":
        emit({"status": "ok", "token": ledger.deposit(args.user, args.kind).to_json()})
    elif sub == "withdraw":
        ledger.withdraw(args.user, args.token)
        emit({"status": "ok"})
    elif sub == "policy":
        try:
            text = Path(args.file).read_text()
        except OSError as exc:
            raise UsageError(str(exc)) from None
        try:
            ledger.set_policy(args.user, text)
        except PolicyError as exc:
            emit({"status": "error", **exc.to_json()})
            return NEGATIVE
        emit({"status": "ok"})
    elif sub == "fact":
        op = ledger.assert_fact if args.action == "assert" else ledger.retract_fact
        op(args.user, args.pred, args.args)
        emit({"status": "ok"})
    elif sub == "request":
        result = ledger.request(args.user, args.kind, args.max)
        emit(result.to_json())
        return OK if isinstance(result, Applied) else NEGATIVE
    elif sub == "submit":
        cert = Certificate.from_json(_read_json(args.cert))
        result = ledger.submit_certificate(cert, parse_goal(args.goal))
        emit(result.to_json())
        return OK if isinstance(result, Applied) else NEGATIVE
    elif sub == "serve":
        serve(ledger, sys.stdin, sys.stdout)
    return OK


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="muac", description="Mutual access control exchange engine")
    sp = p.add_subparsers(dest="command", required=True)

    c = sp.add_parser("check", help="parse and validate a policy file")
    c.add_argument("policy_file")
    c.add_argument("--owner", help="policy owner (default: file stem)")
    c.set_defaults(func=cmd_check)

    def inputs(q):
        q.add_argument("--policies", required=True, help="directory of <user>.muac files")
        q.add_argument("--state", required=True, help="ownership state JSON")
        q.add_argument("--context", help="context facts JSON")
        q.add_argument("--goal", required=True, help="owns:USER:KIND[:N] or state:FILE")

    s = sp.add_parser("solve", help="search for a certificate")
    inputs(s)
    s.add_argument("--max", type=int, default=4, help="maximum number of transfers")
    s.set_defaults(func=cmd_solve)

    v = sp.add_parser("verify", help="check a certificate")
    v.add_argument("--cert", required=True)
    inputs(v)
    v.set_defaults(func=cmd_verify)

    lg = sp.add_parser("ledger", help="operate a persistent ledger")
    lg.add_argument("--dir", help="ledger directory (default: $MUAC_LEDGER_DIR)")
    lsp = lg.add_subparsers(dest="ledger_cmd", required=True)
    lsp.add_parser("init")
    d = lsp.add_parser("deposit")
    d.add_argument("user")
    d.add_argument("kind")
    w = lsp.add_parser("withdraw")
    w.add_argument("user")
    w.add_argument("token", type=int)
    pol = lsp.add_parser("policy")
    pol.add_argument("user")
    pol.add_argument("file")
    f = lsp.add_parser("fact")
    f.add_argument("action", choices=["assert", "retract"])
    f.add_argument("user")
    f.add_argument("pred")
    f.add_argument("args", nargs="+")
    r = lsp.add_parser("request")
    r.add_argument("user")
    r.add_argument("kind")
    r.add_argument("--max", type=int, default=4)
    sub = lsp.add_parser("submit")
    sub.add_argument("cert")
    sub.add_argument("goal")
    lsp.add_parser("log")
    lsp.add_parser("serve")
    lg.set_defaults(func=cmd_ledger)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return USAGE if exc.code else OK
    try:
        return args.func(args)
    except UsageError as exc:
        say(f"muac: {exc}")
        return USAGE
    except (MuacError, KeyError, ValueError) as exc:
        say(f"muac: {type(exc).__name__}: {exc}")
        return USAGE


def run() -> None:
    sys.exit(main())
