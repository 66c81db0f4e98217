"""Shared fixtures data and random instance generators for the test suite."""

from __future__ import annotations

import random

from muac.logic import ExactState, OwnsAtLeast
from muac.model import Context, ContextFact, OwnershipState
from muac.policy import ME, GiveAtom, Policy, PredAtom, Rule, parse_policy
from muac.solver import SolveRequest

ALICE = "Gives(Me, countryside_house, u) :- Gives(u', downtown_house, Me)."
BOB = "Gives(Me, downtown_house, u) :- Gives(u', countryside_house, u'') with FriendOrSame(Me, u'')."
CARL = "Gives(Me, downtown_flat, u) :- Gives(u', countryside_house, Me)."

S0 = OwnershipState(
    {"alice": {"countryside_house": 1}, "bob": {"downtown_house": 1}, "carl": {"downtown_flat": 1}}
)
S_ALICE_BOB = OwnershipState(
    {"alice": {"downtown_house": 1}, "bob": {"countryside_house": 1}, "carl": {"downtown_flat": 1}}
)
GAMMA = Context.of(("FriendOrSame", "bob", "bob"), ("FriendOrSame", "bob", "carl"))


def house_policies() -> dict[str, Policy]:
    return {u: parse_policy(t, u) for u, t in (("alice", ALICE), ("bob", BOB), ("carl", CARL))}


USERS = ["alice", "bob", "carl"]
KINDS = ["x", "y"]
PREDS = ["P", "Q"]


def random_rule(rng: random.Random, kinds=KINDS) -> Rule:
    terms = [ME, "u", "v", "w'"]
    head = GiveAtom(ME, rng.choice(kinds), rng.choice(["u", "v"]))
    body = tuple(
        GiveAtom(rng.choice(terms), rng.choice(kinds), rng.choice(terms)) for _ in range(rng.choice([0, 1, 1, 2]))
    )
    guards = tuple(
        PredAtom(rng.choice(PREDS), tuple(rng.choice(terms) for _ in range(rng.choice([1, 2]))))
        for _ in range(rng.choice([0, 0, 1, 2]))
    )
    return Rule(head, body, guards)


def random_request(rng: random.Random, max_users: int = 3, max_kinds: int = 2, max_steps: int = 3) -> SolveRequest:
    users = USERS[: rng.randint(2, max_users)]
    kinds = KINDS[: rng.randint(1, max_kinds)]
    state = OwnershipState({u: {k: rng.choice([0, 0, 1, 1, 2]) for k in kinds} for u in users})
    policies = {}
    for u in users:
        n = rng.choice([0, 1, 1, 2, 2])
        policies[u] = Policy(u, tuple(random_rule(rng, kinds) for _ in range(n)))
    facts = set()
    for _ in range(rng.randint(0, 5)):
        p = rng.choice(PREDS)
        arity = rng.choice([1, 2])
        facts.add(ContextFact(p, tuple(rng.choice(users) for _ in range(arity))))
    if rng.random() < 0.75 or not state:
        user, kind = rng.choice(users), rng.choice(kinds)
        goal = OwnsAtLeast(user, kind, state.count(user, kind) + 1)
    else:
        tokens = [(u, k) for u in state for k, n in state[u].items() for _ in range(n)]
        rows: dict[str, dict[str, int]] = {}
        for _, k in tokens:
            u = rng.choice(users)
            rows.setdefault(u, {})
            rows[u][k] = rows[u].get(k, 0) + 1
        goal = ExactState(OwnershipState(rows))
    return SolveRequest(policies, Context(frozenset(facts)), state, goal, rng.randint(1, max_steps))


def ring(n: int):
    """n users each trading their own item to the next user around a cycle.

    Returns (theory inputs, certificate, goal).
    """
    from muac.logic import Certificate, Match, Step, Theory
    from muac.model import Transfer
    from muac.policy import RuleInstance

    users = [f"user{i}" for i in range(n)]
    items = [f"item{i}" for i in range(n)]
    policies = {
        u: parse_policy(f"Gives(Me, {items[i]}, u) :- Gives(u', {items[i - 1]}, Me).", u) for i, u in enumerate(users)
    }
    state = OwnershipState({u: {items[i]: 1} for i, u in enumerate(users)})
    target = OwnershipState({users[(i + 1) % n]: {items[i]: 1} for i in range(n)})
    steps = tuple(
        Step(
            Transfer(users[i], items[i], users[(i + 1) % n]),
            RuleInstance(users[i], 0, {"u": users[(i + 1) % n], "u'": users[i - 1]}),
        )
        for i in range(n)
    )
    matching = tuple(Match(i, 0, (i - 1) % n) for i in range(n))
    theory = Theory.build(policies, Context(), state)
    return theory, Certificate(steps, matching), ExactState(target)


def script_house_scenario(ledger, friends=True):
    """Deposit the three homes, install the listed policies and Bob's friendship facts."""
    ledger.deposit("alice", "countryside_house")
    ledger.deposit("bob", "downtown_house")
    ledger.deposit("carl", "downtown_flat")
    for user, text in (("alice", ALICE), ("bob", BOB), ("carl", CARL)):
        ledger.set_policy(user, text)
    ledger.assert_fact("bob", "FriendOrSame", ["bob", "bob"])
    if friends:
        ledger.assert_fact("bob", "FriendOrSame", ["bob", "carl"])
    return ledger
