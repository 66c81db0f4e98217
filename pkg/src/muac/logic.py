"""Contractual linear logic core: compiled clauses, theories, certificates and
the certificate-checking kernel.

A rule ``Gives(Me, r, u) :- B1, ..., Bn with P1, ..., Pm`` compiles to the
clause ``P1 & ... & Pm -> G(B1 * ... * Bn -o-o Gives(Me, r, u))``.  ``G``
makes the clause reusable; the owned resources of a state are single-use
linear atoms.

A certificate is one n-ary handshake followed by linear rewriting of the
state: every step fires a clause instance whose head is the step's transfer,
and every body atom of every instance is witnessed by some step.  Witnesses
must be distinct among body atoms of rules fired by the same giver; different
givers may cite the same step, and a step may witness its own body.
"""

from __future__ import annotations

from collections import Counter
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field

from .errors import InvalidName, UnboundVariable
from .model import Context, OwnershipState, Transfer, check_kind, check_user
from .policy import ME, GiveAtom, Policy, PredAtom, Rule, RuleInstance, instantiate

# -- formulas ------------------------------------------------------------------


@dataclass(frozen=True, order=True)
class OwnAtom:
    user: str
    resource: str

    def __str__(self) -> str:
        return f"Own({self.user}, {self.resource})"


@dataclass(frozen=True)
class Clause:
    owner: str
    rule_index: int
    guards: tuple[PredAtom, ...]
    body: tuple[GiveAtom, ...]
    head: GiveAtom

    @property
    def rule(self) -> Rule:
        return Rule(self.head, self.body, self.guards)

    @property
    def variables(self) -> frozenset[str]:
        return frozenset(self.rule.variables())

    def __str__(self) -> str:
        psi = " & ".join(str(g) for g in self.guards) or "T"
        phi = " * ".join(str(b) for b in self.body) or "1"
        return f"{psi} -> G({phi} -o-o {self.head})"


@dataclass(frozen=True)
class GroundClause:
    """A clause instance with every term resolved to a user id."""

    owner: str
    body: tuple[GiveAtom, ...]
    head: GiveAtom

    def __post_init__(self):
        object.__setattr__(self, "body", tuple(self.body))


def compile_policy(policy: Policy) -> tuple[Clause, ...]:
    return tuple(
        Clause(policy.owner, i, rule.guards, rule.body, rule.head) for i, rule in enumerate(policy.rules)
    )


def compile_state(state: OwnershipState) -> Counter:
    """Multiset of ``Own(user, kind)`` atoms, one per owned copy."""
    return Counter({OwnAtom(u, k): n for u in state for k, n in state[u].items()})


def read_state(atoms: Iterable[OwnAtom] | Mapping[OwnAtom, int]) -> OwnershipState:
    counts = atoms if isinstance(atoms, Mapping) else Counter(atoms)
    rows: dict[str, dict[str, int]] = {}
    for atom, n in counts.items():
        rows.setdefault(atom.user, {})
        rows[atom.user][atom.resource] = rows[atom.user].get(atom.resource, 0) + n
    return OwnershipState(rows)


@dataclass(frozen=True)
class Theory:
    clauses: tuple[Clause, ...]
    facts: Context = field(default_factory=Context)
    state: OwnershipState = field(default_factory=OwnershipState)

    def __post_init__(self):
        object.__setattr__(self, "clauses", tuple(self.clauses))
        object.__setattr__(self, "_table", {(c.owner, c.rule_index): c for c in self.clauses})

    @classmethod
    def build(cls, policies: Mapping[str, Policy] | Iterable[Policy], facts: Context, state: OwnershipState) -> Theory:
        pols = policies.values() if isinstance(policies, Mapping) else policies
        clauses = tuple(c for p in sorted(pols, key=lambda p: p.owner) for c in compile_policy(p))
        return cls(clauses, facts, state)

    def clause(self, owner: str, index: int) -> Clause | None:
        return self._table.get((owner, index))


# -- goals ---------------------------------------------------------------------


@dataclass(frozen=True)
class ExactState:
    target: OwnershipState

    def satisfied_by(self, state: OwnershipState) -> bool:
        return state == self.target

    def to_json(self) -> dict:
        return {"state": self.target.to_json()}


@dataclass(frozen=True)
class OwnsAtLeast:
    user: str
    kind: str
    count: int = 1

    def __post_init__(self):
        check_user(self.user)
        check_kind(self.kind)
        if not isinstance(self.count, int) or self.count < 1:
            raise ValueError("OwnsAtLeast count must be a positive integer")

    def satisfied_by(self, state: OwnershipState) -> bool:
        return state.count(self.user, self.kind) >= self.count

    def to_json(self) -> dict:
        return {"owns": {"user": self.user, "kind": self.kind, "count": self.count}}


Goal = ExactState | OwnsAtLeast


def goal_from_json(data) -> Goal:
    if isinstance(data, Mapping) and "owns" in data:
        o = data["owns"]
        return OwnsAtLeast(o["user"], o["kind"], o.get("count", 1))
    if isinstance(data, Mapping) and "state" in data:
        return ExactState(OwnershipState.from_json(data["state"]))
    raise ValueError(f"unrecognised goal: {data!r}")


# -- certificates --------------------------------------------------------------


@dataclass(frozen=True)
class Step:
    transfer: Transfer
    instance: RuleInstance

    def to_json(self) -> dict:
        return {**self.transfer.to_json(), **self.instance.to_json()}


@dataclass(frozen=True, order=True)
class Match:
    consumer_step: int
    body_position: int
    witness_step: int

    def to_json(self) -> dict:
        return {
            "consumer_step": self.consumer_step,
            "body_position": self.body_position,
            "witness_step": self.witness_step,
        }


@dataclass(frozen=True)
class Certificate:
    steps: tuple[Step, ...] = ()
    matching: tuple[Match, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        object.__setattr__(self, "matching", tuple(self.matching))

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def transfers(self) -> list[Transfer]:
        return [s.transfer for s in self.steps]

    def to_json(self) -> dict:
        return {
            "steps": [s.to_json() for s in self.steps],
            "matching": [m.to_json() for m in sorted(self.matching)],
        }

    @classmethod
    def from_json(cls, data) -> Certificate:
        """Raises ValueError (or InvalidName) on structurally malformed input."""
        if not isinstance(data, Mapping):
            raise ValueError("certificate must be a JSON object")
        steps = []
        for raw in data.get("steps", []):
            rule = raw["rule"]
            subst = raw.get("subst", {})
            if not isinstance(subst, Mapping) or not all(isinstance(v, str) for v in subst.values()):
                raise ValueError("subst must map variables to user names")
            index = rule["index"]
            if not isinstance(index, int) or isinstance(index, bool):
                raise ValueError("rule index must be an integer")
            steps.append(
                Step(
                    Transfer(raw["giver"], raw["resource"], raw["receiver"]),
                    RuleInstance(rule["owner"], index, subst),
                )
            )
        matching = []
        for raw in data.get("matching", []):
            vals = (raw["consumer_step"], raw["body_position"], raw["witness_step"])
            if not all(isinstance(v, int) and not isinstance(v, bool) for v in vals):
                raise ValueError("matching entries must be integers")
            matching.append(Match(*vals))
        return cls(tuple(steps), tuple(matching))


# -- kernel --------------------------------------------------------------------


@dataclass
class Verdict:
    valid: bool
    violation: str | None = None
    step: int | None = None
    work: int = 0

    def __bool__(self) -> bool:
        return self.valid

    def to_json(self) -> dict:
        out: dict = {"valid": self.valid}
        if not self.valid:
            out["violation"] = self.violation
            if self.step is not None:
                out["step"] = self.step
        return out


class _Reject(Exception):
    def __init__(self, violation: str, step: int | None = None):
        self.violation = violation
        self.step = step


def check_diagnostics(theory: Theory, cert: Certificate, goal: Goal) -> Verdict:
    """Run the kernel and report the first violated condition.

    ``work`` counts elementary condition evaluations; it is linear in the
    number of steps, body positions, guards and matching entries.
    """
    counter = [0]
    try:
        _run_kernel(theory, cert, goal, counter)
    except _Reject as r:
        return Verdict(False, r.violation, r.step, counter[0])
    return Verdict(True, work=counter[0])


def check(theory: Theory, cert: Certificate, goal: Goal) -> bool:
    return check_diagnostics(theory, cert, goal).valid


def _run_kernel(theory: Theory, cert: Certificate, goal: Goal, work: list[int]) -> None:
    steps = cert.steps
    bodies: list[tuple[GiveAtom, ...]] = []

    # instances: rule exists, substitution total, head = transfer, guards hold
    for i, step in enumerate(steps):
        t, inst = step.transfer, step.instance
        work[0] += 1
        if inst.owner != t.giver:
            raise _Reject("InstanceOwnerMismatch", i)
        clause = theory.clause(inst.owner, inst.rule_index)
        if clause is None:
            raise _Reject("UnknownRule", i)
        subst = inst.binding()
        work[0] += 1
        if subst.keys() != clause.variables or ME in subst:
            raise _Reject("SubstitutionMismatch", i)
        try:
            for user in subst.values():
                check_user(user)
            grounded = instantiate(clause.rule, inst.owner, subst)
        except (InvalidName, UnboundVariable):
            raise _Reject("SubstitutionMismatch", i) from None
        work[0] += 1
        if grounded.head.triple != t.triple:
            raise _Reject("HeadMismatch", i)
        for fact in grounded.guards:
            work[0] += 1
            if fact not in theory.facts.facts:
                raise _Reject("GuardNotInContext", i)
        bodies.append(grounded.body)

    # matching: exact cover of body positions, equal witnesses, per-giver injectivity
    n = len(steps)
    covered: set[tuple[int, int]] = set()
    cited: set[tuple[str, int]] = set()
    for m in cert.matching:
        work[0] += 1
        c, p, w = m.consumer_step, m.body_position, m.witness_step
        if not (0 <= c < n and 0 <= w < n and 0 <= p < len(bodies[c])):
            raise _Reject("MatchingOutOfRange", c if 0 <= c < n else None)
        if (c, p) in covered:
            raise _Reject("MatchingDuplicate", c)
        covered.add((c, p))
        if bodies[c][p].triple != steps[w].transfer.triple:
            raise _Reject("WitnessMismatch", c)
        giver = steps[c].transfer.giver
        if (giver, w) in cited:
            raise _Reject("WitnessReused", c)
        cited.add((giver, w))
    for i, body in enumerate(bodies):
        work[0] += 1
        if len(body) and any((i, p) not in covered for p in range(len(body))):
            raise _Reject("MatchingIncomplete", i)

    # linear rewriting of the state
    counts: dict[tuple[str, str], int] = {(u, k): c for u in theory.state for k, c in theory.state[u].items()}
    for i, step in enumerate(steps):
        work[0] += 1
        t = step.transfer
        key = (t.giver, t.resource)
        if counts.get(key, 0) < 1:
            raise _Reject("Infeasible", i)
        counts[key] -= 1
        dest = (t.receiver, t.resource)
        counts[dest] = counts.get(dest, 0) + 1

    final = _state_from_counts(counts)
    work[0] += 1
    if not goal.satisfied_by(final):
        raise _Reject("GoalNotReached")


def _state_from_counts(counts: Mapping[tuple[str, str], int]) -> OwnershipState:
    rows: dict[str, dict[str, int]] = {}
    for (u, k), c in counts.items():
        if c:
            rows.setdefault(u, {})[k] = c
    return OwnershipState(rows)


# -- handshake -----------------------------------------------------------------


def ground_clause(clause: Clause, subst: Mapping[str, str]) -> GroundClause:
    g = instantiate(clause.rule, clause.owner, subst)
    return GroundClause(clause.owner, g.body, g.head)


def handshake_closure(
    clauses: Iterable[GroundClause], available: Iterable[GiveAtom] = ()
) -> tuple[bool, Counter]:
    """Fire all clause instances at once.

    Succeeds iff each owner's body atoms can be matched injectively into the
    heads of all instances plus ``available``; heads are not consumed.
    Returns the produced heads on success.
    """
    clauses = list(clauses)
    pool = Counter(c.head.triple for c in clauses) + Counter(a.triple for a in available)
    demand: dict[str, Counter] = {}
    for c in clauses:
        demand.setdefault(c.owner, Counter()).update(a.triple for a in c.body)
    # witnesses are equal atoms, so per-owner Hall's condition reduces to counting
    for need in demand.values():
        if any(pool[atom] < k for atom, k in need.items()):
            return False, Counter()
    return True, Counter(c.head for c in clauses)


def certificate_from_assignment(
    transfers: list[Transfer],
    instances: list[RuleInstance],
    matching: Iterable[tuple[int, int, int]],
) -> Certificate:
    steps = tuple(Step(t, inst) for t, inst in zip(transfers, instances))
    return Certificate(steps, tuple(sorted(Match(*m) for m in matching)))
