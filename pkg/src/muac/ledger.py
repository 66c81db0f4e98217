"""Deterministic simulator of the exchange smart contract.

The ledger keeps token wallets, each user's policy and the shared context
facts.  Every mutation goes through one pure transition function
(:func:`apply_event`) and is recorded as an event carrying a chained hash,
so a log can be replayed from genesis and checked event by event.

Exchanges only happen through a kernel-checked certificate.  Certificates
talk about kinds, not tokens; for each step the ledger moves the giver's
lowest-numbered token of that kind.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import IO

from .errors import CorruptLog, LedgerError, MuacError, NotFactOwner, NotInWallet, PolicyError, Unsolved
from .logic import Certificate, Goal, OwnsAtLeast, Theory, Verdict, check_diagnostics, goal_from_json
from .model import Context, ContextFact, OwnershipState, check_kind, check_user
from .policy import Policy, parse_policy, pretty_print
from .solver import SolveRequest, solve

log = logging.getLogger(__name__)

EVENT_KINDS = ("Deposit", "Withdraw", "SetPolicy", "AssertFact", "RetractFact", "Exchange")


@dataclass(frozen=True, order=True)
class Token:
    id: int
    kind: str

    def to_json(self) -> dict:
        return {"id": self.id, "kind": self.kind}


@dataclass(frozen=True)
class LedgerState:
    wallets: Mapping[str, tuple[Token, ...]] = field(default_factory=dict)
    policies: Mapping[str, Policy] = field(default_factory=dict)
    facts: Context = field(default_factory=Context)
    next_token_id: int = 0
    seq: int = 0

    def ownership(self) -> OwnershipState:
        rows: dict[str, dict[str, int]] = {}
        for user, tokens in self.wallets.items():
            for t in tokens:
                rows.setdefault(user, {})
                rows[user][t.kind] = rows[user].get(t.kind, 0) + 1
        return OwnershipState(rows)

    def theory(self) -> Theory:
        return Theory.build(self.policies, self.facts, self.ownership())

    def wallet(self, user: str) -> tuple[Token, ...]:
        return self.wallets.get(user, ())

    def to_json(self) -> dict:
        return {
            "wallets": {u: [t.to_json() for t in ts] for u, ts in sorted(self.wallets.items()) if ts},
            "policies": {u: pretty_print(p) for u, p in sorted(self.policies.items())},
            "facts": self.facts.to_json(),
            "next_token_id": self.next_token_id,
            "seq": self.seq,
        }


GENESIS = LedgerState()


def canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def genesis_hash() -> str:
    return hashlib.sha256(canonical(GENESIS.to_json()).encode()).hexdigest()


def chain_hash(prev: str, kind: str, payload: Mapping, post: LedgerState) -> str:
    """Hash of the post-state, chained to the previous hash and the event body."""
    body = canonical({"prev": prev, "kind": kind, "payload": payload, "state": post.to_json()})
    return hashlib.sha256(body.encode()).hexdigest()


# -- results -------------------------------------------------------------------


@dataclass(frozen=True)
class Applied:
    certificate: Certificate
    seq: int
    tokens: tuple[int, ...] = ()

    def to_json(self) -> dict:
        return {"status": "applied", "seq": self.seq, "tokens": list(self.tokens), "certificate": self.certificate.to_json()}


@dataclass(frozen=True)
class Denied:
    reason: str

    def to_json(self) -> dict:
        return {"status": "denied", "reason": self.reason}


@dataclass(frozen=True)
class Rejected:
    verdict: Verdict

    def to_json(self) -> dict:
        return {"status": "rejected", **self.verdict.to_json()}


# -- transition function -----------------------------------------------------------


def _move_tokens(state: LedgerState, cert: Certificate) -> tuple[dict, tuple[int, ...]]:
    wallets = {u: list(ts) for u, ts in state.wallets.items()}
    moved = []
    for step in cert.steps:
        t = step.transfer
        mine = [tok for tok in wallets.get(t.giver, []) if tok.kind == t.resource]
        if not mine:
            raise LedgerError(f"{t.giver} holds no {t.resource} token")
        tok = min(mine)
        wallets[t.giver].remove(tok)
        wallets.setdefault(t.receiver, []).append(tok)
        moved.append(tok.id)
    return {u: tuple(sorted(ts)) for u, ts in wallets.items() if ts}, tuple(moved)


def apply_event(state: LedgerState, kind: str, payload: Mapping) -> tuple[LedgerState, dict]:
    """Pure transition: returns the post-state and the payload as it should be logged.

    Raises a MuacError subclass when the event is not applicable; ``state``
    is never modified.
    """
    seq = state.seq + 1
    if kind == "Deposit":
        user, k = check_user(payload["user"]), check_kind(payload["kind"])
        tok = Token(state.next_token_id, k)
        wallets = dict(state.wallets)
        wallets[user] = tuple(sorted(wallets.get(user, ()) + (tok,)))
        post = replace(state, wallets=wallets, next_token_id=tok.id + 1, seq=seq)
        return post, {"user": user, "kind": k, "token": tok.id}
    if kind == "Withdraw":
        user, tid = payload["user"], payload["token"]
        mine = state.wallet(user)
        if not any(t.id == tid for t in mine):
            raise NotInWallet(f"token {tid} is not in {user}'s wallet")
        wallets = dict(state.wallets)
        rest = tuple(t for t in mine if t.id != tid)
        if rest:
            wallets[user] = rest
        else:
            wallets.pop(user)
        return replace(state, wallets=wallets, seq=seq), {"user": user, "token": tid}
    if kind == "SetPolicy":
        user = check_user(payload["user"])
        policy = parse_policy(payload["text"], user)
        policies = dict(state.policies)
        policies[user] = policy
        return replace(state, policies=policies, seq=seq), {"user": user, "text": payload["text"]}
    if kind in ("AssertFact", "RetractFact"):
        user = check_user(payload["user"])
        fact = ContextFact(payload["pred"], tuple(payload["args"]))
        if fact.args[0] != user:
            raise NotFactOwner(f"{user} may only manage facts whose first argument is {user}")
        facts = state.facts.add(fact) if kind == "AssertFact" else state.facts.remove(fact)
        return replace(state, facts=facts, seq=seq), {"user": user, "pred": fact.predicate, "args": list(fact.args)}
    if kind == "Exchange":
        cert = Certificate.from_json(payload["certificate"])
        goal = goal_from_json(payload["goal"])
        verdict = check_diagnostics(state.theory(), cert, goal)
        if not verdict.valid:
            raise LedgerError(f"certificate rejected: {verdict.to_json()}")
        wallets, moved = _move_tokens(state, cert)
        if "tokens" in payload and list(payload["tokens"]) != list(moved):
            raise LedgerError("recorded token movements do not match the certificate")
        logged = {"certificate": cert.to_json(), "goal": goal.to_json(), "tokens": list(moved)}
        return replace(state, wallets=wallets, seq=seq), logged
    raise LedgerError(f"unknown event kind {kind!r}")


def replay(events: Iterable[Mapping]) -> tuple[LedgerState, list[str]]:
    """Fold ``events`` from genesis, verifying the hash chain.

    Returns the final state and the recomputed hashes; raises CorruptLog at
    the first event that does not reproduce its recorded hash.
    """
    state, prev = GENESIS, genesis_hash()
    hashes = []
    for expected_seq, ev in enumerate(events, start=1):
        seq = ev.get("seq") if isinstance(ev, Mapping) else None
        if seq != expected_seq:
            raise CorruptLog(expected_seq, f"sequence number {seq!r} out of order")
        try:
            post, logged = apply_event(state, ev["kind"], ev["payload"])
        except (MuacError, KeyError, TypeError, ValueError) as exc:
            raise CorruptLog(seq, f"event does not apply: {exc}") from None
        if canonical(logged) != canonical(ev["payload"]):
            raise CorruptLog(seq, "payload is not in canonical form")
        h = chain_hash(prev, ev["kind"], logged, post)
        if h != ev.get("state_hash"):
            raise CorruptLog(seq, "state hash mismatch")
        state, prev = post, h
        hashes.append(h)
    return state, hashes


# -- the contract ----------------------------------------------------------------


class Ledger:
    """Single-writer ledger; optionally persisted to a directory.

    The directory holds ``events.jsonl`` (the log) and ``snapshot.json``
    (the latest state, for inspection only; opening always replays the log).
    """

    def __init__(self, path: str | os.PathLike | None = None):
        self.path = Path(path) if path is not None else None
        self.state = GENESIS
        self.events: list[dict] = []
        self.head = genesis_hash()

    @classmethod
    def init(cls, path: str | os.PathLike) -> Ledger:
        p = Path(path)
        p.mkdir(parents=True, exist_ok=True)
        if (p / "events.jsonl").exists():
            raise LedgerError(f"ledger already initialised at {p}")
        (p / "events.jsonl").write_text("")
        ledger = cls(p)
        ledger._write_snapshot()
        return ledger

    @classmethod
    def open(cls, path: str | os.PathLike) -> Ledger:
        p = Path(path)
        log_file = p / "events.jsonl"
        if not log_file.exists():
            raise LedgerError(f"no ledger at {p}")
        events = read_log(log_file)
        ledger = cls(p)
        ledger.state, hashes = replay(events)
        ledger.events = events
        if hashes:
            ledger.head = hashes[-1]
        return ledger

    # -- plumbing

    def _commit(self, kind: str, payload: Mapping) -> dict:
        post, logged = apply_event(self.state, kind, payload)
        h = chain_hash(self.head, kind, logged, post)
        event = {"seq": post.seq, "kind": kind, "payload": logged, "state_hash": h}
        if self.path is not None:
            with open(self.path / "events.jsonl", "a") as fh:
                fh.write(canonical(event) + "\n")
        self.events.append(event)
        self.state, self.head = post, h
        if self.path is not None:
            self._write_snapshot()
        log.debug("seq %d %s", post.seq, kind)
        return event

    def _write_snapshot(self) -> None:
        snap = {"state": self.state.to_json(), "state_hash": self.head}
        (self.path / "snapshot.json").write_text(canonical(snap) + "\n")

    # -- wallet

    def deposit(self, user: str, kind: str) -> Token:
        event = self._commit("Deposit", {"user": user, "kind": kind})
        return Token(event["payload"]["token"], kind)

    def withdraw(self, user: str, token_id: int) -> None:
        self._commit("Withdraw", {"user": user, "token": token_id})

    # -- policies and context

    def set_policy(self, user: str, text: str) -> Policy:
        self._commit("SetPolicy", {"user": user, "text": text})
        return self.state.policies[user]

    def assert_fact(self, user: str, predicate: str, args: Iterable[str]) -> None:
        self._commit("AssertFact", {"user": user, "pred": predicate, "args": list(args)})

    def retract_fact(self, user: str, predicate: str, args: Iterable[str]) -> None:
        self._commit("RetractFact", {"user": user, "pred": predicate, "args": list(args)})

    # -- exchanges

    def submit_certificate(self, cert: Certificate, goal: Goal) -> Applied | Rejected:
        verdict = check_diagnostics(self.state.theory(), cert, goal)
        if not verdict.valid:
            return Rejected(verdict)
        event = self._commit("Exchange", {"certificate": cert.to_json(), "goal": goal.to_json()})
        return Applied(cert, event["seq"], tuple(event["payload"]["tokens"]))

    def request(self, user: str, kind: str, max_transfers: int = 4) -> Applied | Denied:
        check_user(user)
        check_kind(kind)
        snapshot = self.state
        owned = snapshot.ownership()
        goal = OwnsAtLeast(user, kind, owned.count(user, kind) + 1)
        req = SolveRequest(dict(snapshot.policies), snapshot.facts, owned, goal, max_transfers)
        try:
            cert = solve(req)
        except Unsolved as exc:
            return Denied(exc.reason)
        result = self.submit_certificate(cert, goal)
        if isinstance(result, Rejected):
            raise LedgerError(f"prover and kernel disagree: {result.verdict.to_json()}")
        return result

    def ownership(self) -> OwnershipState:
        return self.state.ownership()


def read_log(path: str | os.PathLike) -> list[dict]:
    events = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                ev = json.loads(line)
            except json.JSONDecodeError:
                raise CorruptLog(lineno, "unparseable line") from None
            if not isinstance(ev, dict):
                raise CorruptLog(lineno, "event is not an object")
            events.append(ev)
    return events


# -- serve mode ---------------------------------------------------------------------


def handle(ledger: Ledger, req: Mapping) -> dict:
    """Execute one line-protocol request and build its response."""
    op = req.get("op")
    try:
        if op == "deposit":
            return {"status": "ok", "token": ledger.deposit(req["user"], req["kind"]).to_json()}
        if op == "withdraw":
            ledger.withdraw(req["user"], req["token"])
            return {"status": "ok"}
        if op in ("policy", "set_policy"):
            ledger.set_policy(req["user"], req["text"])
            return {"status": "ok"}
        if op in ("assert_fact", "retract_fact"):
            getattr(ledger, op)(req["user"], req["pred"], req["args"])
            return {"status": "ok"}
        if op == "request":
            return ledger.request(req["user"], req["kind"], req.get("max_transfers", 4)).to_json()
        if op == "submit":
            cert = Certificate.from_json(req["certificate"])
            return ledger.submit_certificate(cert, goal_from_json(req["goal"])).to_json()
        if op == "state":
            return {"status": "ok", "state": ledger.state.to_json(), "state_hash": ledger.head}
        return {"status": "error", "error": "UnknownOp", "message": f"unknown op {op!r}"}
    except PolicyError as exc:
        return {"status": "error", **exc.to_json()}
    except (MuacError, KeyError, TypeError, ValueError) as exc:
        return {"status": "error", "error": type(exc).__name__, "message": str(exc)}


def serve(ledger: Ledger, instream: IO[str], outstream: IO[str]) -> None:
    for line in instream:
        if not line.strip():
            continue
        try:
            req = json.loads(line)
        except json.JSONDecodeError as exc:
            resp = {"status": "error", "error": "BadJSON", "message": str(exc)}
        else:
            resp = handle(ledger, req) if isinstance(req, dict) else {"status": "error", "error": "BadRequest"}
        outstream.write(canonical(resp) + "\n")
        outstream.flush()
