"""Brute-force fairness semantics, used as the independent test oracle.

A user accepts a computation when each of their outgoing transfers can be
justified by an instance of one of their rules whose guards hold, and the
body atoms of all those instances together can be mapped injectively onto
transfers of the computation.  A computation is fair when every user
accepts it.  None of this goes through the certificate kernel or the
prover's search.
"""

from __future__ import annotations

import itertools
from collections.abc import Mapping, Sequence

from .errors import InfeasibleAt, NoSolution
from .logic import Certificate, Match, Step
from .model import Computation, Context, Transfer, apply_computation, apply_transfer
from .policy import Policy, RuleInstance, instantiate
from .solver import SolveRequest, universe


def _users_of(c: Computation, ctx: Context, owner: str) -> list[str]:
    users = {owner} | set(c.initial) | ctx.users()
    for t in c.steps:
        users.update((t.giver, t.receiver))
    return sorted(users)


def _instances_for(step: Transfer, policy: Policy, ctx: Context, users: list[str]):
    """All guard-satisfied rule instances of ``policy`` whose head is ``step``."""
    for index, rule in enumerate(policy.rules):
        variables = sorted(rule.variables())
        for values in itertools.product(users, repeat=len(variables)):
            subst = dict(zip(variables, values))
            g = instantiate(rule, policy.owner, subst)
            if g.head.triple != step.triple:
                continue
            if all(f in ctx.facts for f in g.guards):
                yield RuleInstance(policy.owner, index, subst), g.body


def _inject(atoms: list[tuple[int, int, tuple]], steps: Sequence[Transfer]) -> list[tuple[int, int, int]] | None:
    """Injective assignment of body atoms to equal transfers, by exhaustive backtracking."""
    out: list[tuple[int, int, int]] = []
    used: set[int] = set()

    def go(i: int) -> bool:
        if i == len(atoms):
            return True
        consumer, pos, triple = atoms[i]
        for w, t in enumerate(steps):
            if w not in used and t.triple == triple:
                used.add(w)
                out.append((consumer, pos, w))
                if go(i + 1):
                    return True
                out.pop()
                used.discard(w)
        return False

    return out if go(0) else None


def acceptance_witness(
    user: str, c: Computation, policy: Policy | None, ctx: Context
) -> tuple[dict[int, RuleInstance], list[tuple[int, int, int]]] | None:
    """Rule instances for ``user``'s steps plus a witness matching, or None if rejected."""
    mine = [i for i, t in enumerate(c.steps) if t.giver == user]
    if not mine:
        return {}, []
    if policy is None:
        return None
    users = _users_of(c, ctx, user)
    options = [list(_instances_for(c.steps[i], policy, ctx, users)) for i in mine]
    if any(not opts for opts in options):
        return None
    for choice in itertools.product(*options):
        atoms = [(step, pos, atom.triple) for step, (_, body) in zip(mine, choice) for pos, atom in enumerate(body)]
        matching = _inject(atoms, c.steps)
        if matching is not None:
            return {step: inst for step, (inst, _) in zip(mine, choice)}, matching
    return None


def accepted_by(user: str, c: Computation, policy: Policy | None, ctx: Context) -> bool:
    return acceptance_witness(user, c, policy, ctx) is not None


def is_fair(c: Computation, policies: Mapping[str, Policy], ctx: Context) -> bool:
    givers = {t.giver for t in c.steps}
    return all(accepted_by(u, c, policies.get(u), ctx) for u in sorted(givers))


def fair_certificate(c: Computation, policies: Mapping[str, Policy], ctx: Context) -> Certificate | None:
    """Certificate for ``c`` assembled from per-user acceptance witnesses, or None if unfair."""
    instances: dict[int, RuleInstance] = {}
    matching: list[tuple[int, int, int]] = []
    for user in sorted({t.giver for t in c.steps}):
        found = acceptance_witness(user, c, policies.get(user), ctx)
        if found is None:
            return None
        instances.update(found[0])
        matching += found[1]
    steps = tuple(Step(t, instances[i]) for i, t in enumerate(c.steps))
    return Certificate(steps, tuple(sorted(Match(*m) for m in matching)))


def is_feasible(c: Computation) -> bool:
    try:
        apply_computation(c)
    except InfeasibleAt:
        return False
    return True


def brute_force_solve(req: SolveRequest) -> Certificate:
    """First fair computation (shortest, then lexicographic) reaching the goal.

    Raises NoSolution if none has at most ``req.max_transfers`` steps.
    """
    users, kinds = universe(req)
    moves = [Transfer(g, k, r) for g in users for k in kinds for r in users if g != r]

    def search(prefix: list[Transfer], state, length: int):
        if len(prefix) == length:
            if req.goal.satisfied_by(state):
                c = Computation(req.state, tuple(prefix))
                return fair_certificate(c, req.policies, req.context)
            return None
        for t in moves:
            if state.count(t.giver, t.resource) < 1:
                continue
            prefix.append(t)
            found = search(prefix, apply_transfer(state, t), length)
            prefix.pop()
            if found is not None:
                return found
        return None

    for length in range(req.max_transfers + 1):
        found = search([], req.state, length)
        if found is not None:
            return found
    raise NoSolution("no fair computation within the bound")
