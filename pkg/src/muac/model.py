"""Exchange environment: users, resource kinds, ownership states and transfers.

States are immutable multisets of resource kinds per user.  Absent users and
zero counts are normalized away, so two states compare equal whenever every
(user, kind) count agrees.
"""

from __future__ import annotations

import re
from collections.abc import Iterable, Iterator, Mapping, Sequence
from dataclasses import dataclass, field

from .errors import InfeasibleAt, InvalidName, NotOwned

NAME_RE = re.compile(r"[a-z][a-z0-9_]*\Z")
PRED_RE = re.compile(r"[A-Z][A-Za-z0-9_]*\Z")
RESERVED_USERS = frozenset({"me"})


def check_user(name: str) -> str:
    if not isinstance(name, str) or not NAME_RE.match(name) or name in RESERVED_USERS:
        raise InvalidName(f"invalid user id: {name!r}")
    return name


def check_kind(name: str) -> str:
    if not isinstance(name, str) or not NAME_RE.match(name):
        raise InvalidName(f"invalid resource kind: {name!r}")
    return name


def check_predicate(name: str) -> str:
    if not isinstance(name, str) or not PRED_RE.match(name):
        raise InvalidName(f"invalid predicate name: {name!r}")
    return name


@dataclass(frozen=True, order=True)
class Transfer:
    giver: str
    resource: str
    receiver: str

    def __post_init__(self):
        check_user(self.giver)
        check_kind(self.resource)
        check_user(self.receiver)
        if self.giver == self.receiver:
            raise InvalidName(f"self-transfer by {self.giver!r}")

    @property
    def triple(self) -> tuple[str, str, str]:
        return (self.giver, self.resource, self.receiver)

    def reverse(self) -> Transfer:
        return Transfer(self.receiver, self.resource, self.giver)

    def __str__(self) -> str:
        return f"{self.giver}->{self.receiver}:{self.resource}"

    def to_json(self) -> dict:
        return {"giver": self.giver, "resource": self.resource, "receiver": self.receiver}


class OwnershipState(Mapping):
    """Read-only mapping ``user -> {kind: count}`` with zero normalization.

    Only users holding at least one token appear as keys.
    """

    __slots__ = ("_holdings", "_hash")

    def __init__(self, holdings: Mapping[str, Mapping[str, int]] | None = None):
        norm: dict[str, dict[str, int]] = {}
        for user, kinds in (holdings or {}).items():
            check_user(user)
            row = {}
            for kind, n in kinds.items():
                check_kind(kind)
                if not isinstance(n, int) or isinstance(n, bool) or n < 0:
                    raise ValueError(f"count for {user}/{kind} must be a non-negative int, got {n!r}")
                if n:
                    row[kind] = n
            if row:
                norm[user] = dict(sorted(row.items()))
        self._holdings = dict(sorted(norm.items()))
        self._hash = None

    def __getitem__(self, user: str) -> Mapping[str, int]:
        return dict(self._holdings.get(user, {}))

    def __iter__(self) -> Iterator[str]:
        return iter(self._holdings)

    def __len__(self) -> int:
        return len(self._holdings)

    def __contains__(self, user) -> bool:
        return user in self._holdings

    def __eq__(self, other) -> bool:
        if isinstance(other, OwnershipState):
            return self._holdings == other._holdings
        if isinstance(other, Mapping):
            try:
                return self._holdings == OwnershipState(other)._holdings
            except (ValueError, AttributeError):
                return False
        return NotImplemented

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(tuple((u, tuple(k.items())) for u, k in self._holdings.items()))
        return self._hash

    def __repr__(self) -> str:
        return f"OwnershipState({self._holdings!r})"

    def count(self, user: str, kind: str) -> int:
        return self._holdings.get(user, {}).get(kind, 0)

    def kinds(self) -> list[str]:
        return sorted({k for row in self._holdings.values() for k in row})

    def total(self, kind: str) -> int:
        return sum(row.get(kind, 0) for row in self._holdings.values())

    def totals(self) -> dict[str, int]:
        return {k: self.total(k) for k in self.kinds()}

    def with_delta(self, deltas: Mapping[tuple[str, str], int]) -> OwnershipState:
        """Apply signed count changes; raises ValueError if a count goes negative."""
        rows = {u: dict(k) for u, k in self._holdings.items()}
        for (user, kind), d in deltas.items():
            rows.setdefault(user, {})
            rows[user][kind] = rows[user].get(kind, 0) + d
        return OwnershipState(rows)

    def to_json(self) -> dict:
        return {u: dict(k) for u, k in self._holdings.items()}

    @classmethod
    def from_json(cls, data) -> OwnershipState:
        if not isinstance(data, Mapping):
            raise ValueError("state must be a JSON object")
        for user, kinds in data.items():
            if not isinstance(kinds, Mapping):
                raise ValueError(f"holdings of {user!r} must be an object")
        return cls(data)


@dataclass(frozen=True)
class Computation:
    initial: OwnershipState
    steps: tuple[Transfer, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))


@dataclass(frozen=True, order=True)
class ContextFact:
    predicate: str
    args: tuple[str, ...]

    def __post_init__(self):
        check_predicate(self.predicate)
        object.__setattr__(self, "args", tuple(self.args))
        if not self.args:
            raise InvalidName(f"fact {self.predicate} needs at least one argument")
        for a in self.args:
            check_user(a)

    def __str__(self) -> str:
        return f"{self.predicate}({', '.join(self.args)})"

    def to_json(self) -> dict:
        return {"pred": self.predicate, "args": list(self.args)}


@dataclass(frozen=True)
class Context:
    facts: frozenset[ContextFact] = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "facts", frozenset(self.facts))

    @classmethod
    def of(cls, *facts: tuple) -> Context:
        """``Context.of(("FriendOrSame", "bob", "carl"), ...)``"""
        return cls(frozenset(ContextFact(p, tuple(args)) for p, *args in facts))

    def __contains__(self, fact) -> bool:
        return fact in self.facts

    def __iter__(self):
        return iter(sorted(self.facts))

    def __len__(self) -> int:
        return len(self.facts)

    def users(self) -> set[str]:
        return {a for f in self.facts for a in f.args}

    def add(self, fact: ContextFact) -> Context:
        return Context(self.facts | {fact})

    def remove(self, fact: ContextFact) -> Context:
        return Context(self.facts - {fact})

    def to_json(self) -> list:
        return [f.to_json() for f in sorted(self.facts)]

    @classmethod
    def from_json(cls, data) -> Context:
        if not isinstance(data, list):
            raise ValueError("context must be a JSON array")
        facts = []
        for item in data:
            if not isinstance(item, Mapping) or not isinstance(item.get("args"), list):
                raise ValueError(f"malformed fact: {item!r}")
            facts.append(ContextFact(item.get("pred"), tuple(item["args"])))
        return cls(frozenset(facts))


def apply_transfer(state: OwnershipState, t: Transfer) -> OwnershipState:
    if state.count(t.giver, t.resource) < 1:
        raise NotOwned(t.giver, t.resource)
    return state.with_delta({(t.giver, t.resource): -1, (t.receiver, t.resource): 1})


def apply_computation(c: Computation) -> OwnershipState:
    state = c.initial
    for i, t in enumerate(c.steps):
        try:
            state = apply_transfer(state, t)
        except NotOwned as exc:
            raise InfeasibleAt(i, exc) from None
    return state


def state_equal(a: Mapping, b: Mapping) -> bool:
    return OwnershipState(a) == OwnershipState(b)


def holds(ctx: Context, predicate: str, args: Sequence[str]) -> bool:
    try:
        return ContextFact(predicate, tuple(args)) in ctx.facts
    except InvalidName:
        return False


def net_effect(initial: OwnershipState, steps: Iterable[Transfer]) -> OwnershipState:
    """Final state of ``steps`` ignoring order; raises ValueError on a negative count."""
    deltas: dict[tuple[str, str], int] = {}
    for t in steps:
        deltas[(t.giver, t.resource)] = deltas.get((t.giver, t.resource), 0) - 1
        deltas[(t.receiver, t.resource)] = deltas.get((t.receiver, t.resource), 0) + 1
    return initial.with_delta(deltas)
