"""Off-chain prover: goal-directed search for exchange certificates.

The search works on *obligations*, i.e. transfers that must appear in the
computation.  Goal obligations come from the request (what the requester must
receive, or what each user must give away to reach an exact target state);
body obligations come from the rules fired by each step.  An obligation is
discharged by citing an existing step or by creating a new one whose rule
head produces it.  Once nothing is open the step multiset is closed, and we
look for an ownership-feasible order of it.  Closed multisets that fail are
extended with a new root step and the search goes on.

Iterative deepening on the number of steps makes the first certificate found
a shortest one.  A counting relaxation (an integer program over how often
each rule instance fires) supplies the starting depth and, when it is
infeasible, a proof that no certificate of any length exists.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

from .errors import BudgetExceeded, NoSolution
from .logic import Certificate, ExactState, Goal, Match, OwnsAtLeast, Step, Theory, check_diagnostics
from .model import Context, OwnershipState, Transfer
from .policy import Policy, RuleInstance, instantiate


@dataclass(frozen=True)
class SolveRequest:
    policies: Mapping[str, Policy]
    context: Context
    state: OwnershipState
    goal: Goal
    max_transfers: int = 4

    def __post_init__(self):
        if self.max_transfers < 0:
            raise ValueError("max_transfers must be non-negative")

    def theory(self) -> Theory:
        return Theory.build(self.policies, self.context, self.state)


@dataclass(frozen=True)
class Obligation:
    """A transfer that some step must provide.

    ``None`` in ``giver``/``receiver`` leaves that position open (goal
    obligations only).  ``demander`` names the user whose rule body needs the
    witness, or ``"goal:in"``/``"goal:out"`` for request-level obligations.
    """

    giver: str | None
    resource: str
    receiver: str | None
    demander: str
    site: tuple[int, int] | None = field(default=None, compare=False)

    def accepts(self, triple: tuple[str, str, str]) -> bool:
        g, r, v = triple
        return (
            r == self.resource
            and (self.giver is None or self.giver == g)
            and (self.receiver is None or self.receiver == v)
        )


def universe(req: SolveRequest) -> tuple[list[str], list[str]]:
    """Sorted users and kinds the search ranges over."""
    users = set(req.state) | set(req.policies) | req.context.users()
    kinds = set(req.state.kinds())
    if isinstance(req.goal, OwnsAtLeast):
        users.add(req.goal.user)
        kinds.add(req.goal.kind)
    else:
        users.update(req.goal.target)
        kinds.update(req.goal.target.kinds())
    return sorted(users), sorted(kinds)


# -- ordering ------------------------------------------------------------------


def _order_indices(transfers: Sequence[Transfer], initial: OwnershipState) -> list[int] | None:
    counts = Counter({(u, k): n for u in initial for k, n in initial[u].items()})
    remaining = list(range(len(transfers)))
    dead: set[tuple] = set()
    order: list[int] = []

    def key():
        return tuple(sorted(transfers[i].triple for i in remaining))

    def go() -> bool:
        if not remaining:
            return True
        k = key()
        if k in dead:
            return False
        tried = set()
        for i in sorted(remaining, key=lambda j: (transfers[j].triple, j)):
            t = transfers[i]
            if t.triple in tried or counts[(t.giver, t.resource)] < 1:
                continue
            tried.add(t.triple)
            remaining.remove(i)
            counts[(t.giver, t.resource)] -= 1
            counts[(t.receiver, t.resource)] += 1
            order.append(i)
            if go():
                return True
            order.pop()
            counts[(t.receiver, t.resource)] -= 1
            counts[(t.giver, t.resource)] += 1
            remaining.append(i)
            remaining.sort()
        dead.add(k)
        return False

    return list(order) if go() else None


def find_ordering(steps: Iterable[Transfer], initial: OwnershipState) -> list[Transfer] | None:
    """An ownership-feasible permutation of ``steps``, or None."""
    steps = list(steps)
    idx = _order_indices(steps, initial)
    return None if idx is None else [steps[i] for i in idx]


# -- candidates ----------------------------------------------------------------


@dataclass(frozen=True)
class _Candidate:
    instance: RuleInstance
    head: tuple[str, str, str]
    body: tuple[tuple[str, str, str], ...]

    @property
    def owner(self) -> str:
        return self.instance.owner


def _candidates(req: SolveRequest, users: list[str], kinds: list[str]) -> list[_Candidate]:
    """Every guard-satisfied rule instance whose head and body are realizable transfers."""
    facts = req.context.facts
    kindset = set(kinds)
    out = []
    for owner in sorted(req.policies):
        policy = req.policies[owner]
        for index, rule in enumerate(policy.rules):
            if rule.head.resource not in kindset:
                continue
            variables = sorted(rule.variables())
            for values in itertools.product(users, repeat=len(variables)):
                subst = dict(zip(variables, values))
                g = instantiate(rule, owner, subst)
                if g.head.giver == g.head.receiver:
                    continue
                if any(a.giver == a.receiver or a.resource not in kindset for a in g.body):
                    continue
                if not all(f in facts for f in g.guards):
                    continue
                out.append(
                    _Candidate(RuleInstance(owner, index, subst), g.head.triple, tuple(a.triple for a in g.body))
                )
    return out


def _goal_obligations(req: SolveRequest) -> list[Obligation]:
    goal, state = req.goal, req.state
    if isinstance(goal, OwnsAtLeast):
        need = goal.count - state.count(goal.user, goal.kind)
        return [Obligation(None, goal.kind, goal.user, "goal:in")] * max(need, 0)
    obligations = []
    for user in sorted(set(state) | set(goal.target)):
        for kind in sorted(set(state[user]) | set(goal.target[user])):
            diff = state.count(user, kind) - goal.target.count(user, kind)
            if diff > 0:
                obligations += [Obligation(user, kind, None, "goal:out")] * diff
            elif diff < 0:
                obligations += [Obligation(None, kind, user, "goal:in")] * -diff
    return obligations


# -- counting relaxation ---------------------------------------------------------


def relaxation_bound(req: SolveRequest, cands: list[_Candidate] | None = None) -> int | None:
    """Lower bound on certificate length, or None if no certificate of any length exists.

    Each candidate instance fires ``m >= 0`` times.  Necessary conditions:
    each user's body demand for a transfer is covered by how often that
    transfer is produced, final counts are non-negative, and the goal holds.
    """
    users, kinds = universe(req)
    if cands is None:
        cands = _candidates(req, users, kinds)
    triples = sorted({c.head for c in cands})
    tindex = {t: i for i, t in enumerate(triples)}
    n = len(cands)
    rows, lo, hi = [], [], []

    def produced(triple) -> np.ndarray:
        row = np.zeros(n)
        if triple in tindex:
            for j, c in enumerate(cands):
                if c.head == triple:
                    row[j] = 1
        return row

    demand: dict[tuple[str, tuple], np.ndarray] = {}
    for j, c in enumerate(cands):
        for atom in c.body:
            demand.setdefault((c.owner, atom), np.zeros(n))[j] += 1
    for (_, atom), row in sorted(demand.items()):
        rows.append(produced(atom) - row)
        lo.append(0)
        hi.append(np.inf)

    def net(user, kind) -> np.ndarray:
        row = np.zeros(n)
        for j, c in enumerate(cands):
            g, r, v = c.head
            if r == kind:
                row[j] += (v == user) - (g == user)
        return row

    goal = req.goal
    for user in users:
        for kind in kinds:
            init = req.state.count(user, kind)
            row = net(user, kind)
            if isinstance(goal, ExactState):
                target = goal.target.count(user, kind) - init
                rows.append(row)
                lo.append(target)
                hi.append(target)
            else:
                floor = -init
                if (user, kind) == (goal.user, goal.kind):
                    floor = goal.count - init
                rows.append(row)
                lo.append(floor)
                hi.append(np.inf)
    if n == 0:
        ok = all(lb <= 0 <= ub for lb, ub in zip(lo, hi))
        return 0 if ok else None
    res = milp(
        c=np.ones(n),
        constraints=[LinearConstraint(np.array(rows), np.array(lo, float), np.array(hi, float))],
        integrality=np.ones(n),
        bounds=Bounds(0, np.inf),
    )
    if res.status == 2:
        return None
    if res.status != 0:
        return 0
    return int(math.floor(res.fun + 1e-6))


# -- search --------------------------------------------------------------------


@dataclass
class SearchStats:
    nodes: int = 0
    depth: int = 0
    cut: bool = False
    lower_bound: int | None = 0
    memo: set = field(default_factory=set, repr=False)


class _Search:
    def __init__(self, req: SolveRequest):
        self.req = req
        self.users, self.kinds = universe(req)
        self.cands = _candidates(req, self.users, self.kinds)
        self.goal_obls = _goal_obligations(req)
        self.exact = isinstance(req.goal, ExactState)
        self.stats = SearchStats()

    def run(self, depth: int):
        self.stats.memo = set()
        self.stats.depth = depth
        return self._dfs((), (), frozenset(), tuple(self.goal_obls))

    def _key(self, steps, cites, obligations):
        # relabel steps by candidate id so permuted but isomorphic states collide
        perm = sorted(range(len(steps)), key=lambda i: (steps[i], i))
        label = {old: new for new, old in enumerate(perm)}
        return (
            tuple(steps[i] for i in perm),
            frozenset((who, label[w]) for who, w in cites),
            tuple(sorted((o.giver or "", o.resource, o.receiver or "", o.demander) for o in obligations)),
        )

    def _dfs(self, steps: tuple[int, ...], matching: tuple, cites: frozenset, obligations: tuple):
        self.stats.nodes += 1
        key = self._key(steps, cites, obligations)
        if key in self.stats.memo:
            return None
        self.stats.memo.add(key)
        budget_left = len(steps) < self.stats.depth

        if not obligations:
            found = self._close(steps, matching)
            if found is not None:
                return found
            roots = [j for j in range(len(self.cands)) if self._root_ok(j, steps)]
            if roots and not budget_left:
                self.stats.cut = True
                return None
            for j in roots:
                found = self._push(steps, matching, cites, (), j, None)
                if found is not None:
                    return found
            return None

        ob, rest = obligations[0], obligations[1:]
        # cite an existing step
        for w, j in enumerate(steps):
            if ob.accepts(self.cands[j].head) and (ob.demander, w) not in cites:
                entry = () if ob.demander.startswith("goal:") else (self._match_of(ob, w),)
                found = self._dfs(steps, matching + entry, cites | {(ob.demander, w)}, rest)
                if found is not None:
                    return found
        # or create a new one
        producers = [j for j, c in enumerate(self.cands) if ob.accepts(c.head)]
        if producers and not budget_left:
            self.stats.cut = True
            return None
        for j in producers:
            found = self._push(steps, matching, cites, rest, j, ob)
            if found is not None:
                return found
        return None

    @staticmethod
    def _match_of(ob: Obligation, witness: int):
        consumer, pos = ob.site
        return (consumer, pos, witness)

    def _push(self, steps, matching, cites, rest, j, ob):
        w = len(steps)
        cand = self.cands[j]
        new_obls = [Obligation(*atom, cand.owner, site=(w, pos)) for pos, atom in enumerate(cand.body)]
        entry = ()
        new_cites = cites
        if ob is not None:
            new_cites = cites | {(ob.demander, w)}
            if not ob.demander.startswith("goal:"):
                entry = (self._match_of(ob, w),)
        return self._dfs(steps + (j,), matching + entry, new_cites, rest + tuple(new_obls))

    def _root_ok(self, j: int, steps) -> bool:
        if self.exact:
            return True
        g, r, v = self.cands[j].head
        goal = self.req.goal
        if (v, r) == (goal.user, goal.kind):
            return True
        # supply: the receiver passes this kind on somewhere in the bundle
        return any(self.cands[s].head[0] == v and self.cands[s].head[1] == r for s in steps)

    def _close(self, steps, matching) -> Certificate | None:
        transfers = [Transfer(*self.cands[j].head) for j in steps]
        counts = Counter({(u, k): n for u in self.req.state for k, n in self.req.state[u].items()})
        for t in transfers:
            counts[(t.giver, t.resource)] -= 1
            counts[(t.receiver, t.resource)] += 1
        if any(c < 0 for c in counts.values()):
            return None
        rows: dict[str, dict[str, int]] = {}
        for (u, k), c in counts.items():
            if c:
                rows.setdefault(u, {})[k] = c
        if not self.req.goal.satisfied_by(OwnershipState(rows)):
            return None
        order = _order_indices(transfers, self.req.state)
        if order is None:
            return None
        pos = {old: new for new, old in enumerate(order)}
        return Certificate(
            tuple(Step(transfers[i], self.cands[steps[i]].instance) for i in order),
            tuple(sorted(Match(pos[c], p, pos[w]) for c, p, w in matching)),
        )


def solve(req: SolveRequest, stats: SearchStats | None = None) -> Certificate:
    """Shortest certificate for ``req``.

    Raises NoSolution when no certificate exists at any length, and
    BudgetExceeded when none exists within ``req.max_transfers`` but the
    bound cut the search short.
    """
    search = _Search(req)
    if stats is not None:
        search.stats = stats
    bound = relaxation_bound(req, search.cands)
    search.stats.lower_bound = bound
    if bound is None:
        raise NoSolution("no fair exchange reaches the goal")
    cut = False
    for depth in range(bound, req.max_transfers + 1):
        search.stats.cut = False
        cert = search.run(depth)
        if cert is not None:
            verdict = check_diagnostics(req.theory(), cert, req.goal)
            if not verdict.valid:
                raise AssertionError(f"solver produced an invalid certificate: {verdict.to_json()}")
            return cert
        cut = search.stats.cut
        if not cut:
            break
    if cut or bound > req.max_transfers:
        raise BudgetExceeded(f"no certificate within {req.max_transfers} transfers")
    raise NoSolution("no fair exchange reaches the goal")
