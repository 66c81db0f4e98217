"""MuAC policy language: AST, parser, validator, grounding and printer.

Concrete syntax, one rule per ``.``::

    % Alice trades her countryside house for any downtown house
    Gives(Me, countryside_house, u) :- Gives(u', downtown_house, Me).

    Gives(Me, downtown_house, u) :- Gives(u', countryside_house, u'')
        with FriendOrSame(Me, u'').

User positions hold ``Me`` or a variable (lowercase, primes allowed).
Resource positions hold concrete kinds only.  Every variable is universally
quantified over the rule.
"""

from __future__ import annotations

import re
from collections.abc import Mapping
from dataclasses import dataclass, field

from .errors import HeadNotMe, PolicySyntaxError, ResourceVariable, UnboundVariable
from .model import ContextFact, check_user

ME = "Me"


@dataclass(frozen=True)
class GiveAtom:
    """``Gives(giver, resource, receiver)``; terms are variables/``Me`` or, once grounded, user ids."""

    giver: str
    resource: str
    receiver: str

    @property
    def triple(self) -> tuple[str, str, str]:
        return (self.giver, self.resource, self.receiver)

    def terms(self) -> tuple[str, str]:
        return (self.giver, self.receiver)

    def __str__(self) -> str:
        return f"Gives({self.giver}, {self.resource}, {self.receiver})"


@dataclass(frozen=True)
class PredAtom:
    predicate: str
    args: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "args", tuple(self.args))

    def __str__(self) -> str:
        return f"{self.predicate}({', '.join(self.args)})"


@dataclass(frozen=True)
class Rule:
    head: GiveAtom
    body: tuple[GiveAtom, ...] = ()
    guards: tuple[PredAtom, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "body", tuple(self.body))
        object.__setattr__(self, "guards", tuple(self.guards))

    def variables(self) -> list[str]:
        """Variables in order of first occurrence (head, body, guards)."""
        seen: dict[str, None] = {}
        for term in self._terms():
            if term != ME:
                seen.setdefault(term, None)
        return list(seen)

    def _terms(self):
        yield from self.head.terms()
        for atom in self.body:
            yield from atom.terms()
        for g in self.guards:
            yield from g.args

    def __str__(self) -> str:
        return format_rule(self)


@dataclass(frozen=True)
class Policy:
    owner: str
    rules: tuple[Rule, ...] = ()

    def __post_init__(self):
        check_user(self.owner)
        object.__setattr__(self, "rules", tuple(self.rules))

    def __len__(self) -> int:
        return len(self.rules)


@dataclass(frozen=True)
class RuleInstance:
    """A rule of ``owner``'s policy together with a grounding of its variables.

    ``subst`` is accepted as any mapping and stored as sorted pairs so
    instances stay hashable.
    """

    owner: str
    rule_index: int
    subst: tuple[tuple[str, str], ...] = field(default=())

    def __post_init__(self):
        items = self.subst.items() if isinstance(self.subst, Mapping) else self.subst
        object.__setattr__(self, "subst", tuple(sorted((str(k), v) for k, v in items)))

    def binding(self) -> dict[str, str]:
        return dict(self.subst)

    def to_json(self) -> dict:
        return {"rule": {"owner": self.owner, "index": self.rule_index}, "subst": self.binding()}


@dataclass(frozen=True)
class GroundRule:
    head: GiveAtom
    body: tuple[GiveAtom, ...]
    guards: tuple[ContextFact, ...]


@dataclass(frozen=True)
class PolicyWarning:
    code: str
    rule_index: int
    message: str

    def to_json(self) -> dict:
        return {"warning": self.code, "rule": self.rule_index, "message": self.message}


# -- lexer ---------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>%[^\n]*)
  | (?P<lower>[a-z][a-z0-9_']*)
  | (?P<upper>[A-Z][A-Za-z0-9_]*)
  | (?P<punct>:-|[(),.])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str  # lower | upper | punct | eof
    text: str
    line: int
    col: int

    def describe(self) -> str:
        return "end of input" if self.kind == "eof" else repr(self.text)


def tokenize(text: str) -> list[Token]:
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise PolicySyntaxError("a token", repr(text[pos]), line, pos - line_start + 1)
        kind = m.lastgroup
        if kind not in ("ws", "comment"):
            tokens.append(Token(kind, m.group(), line, pos - line_start + 1))
        chunk = m.group()
        newlines = chunk.count("\n")
        if newlines:
            line += newlines
            line_start = pos + chunk.rindex("\n") + 1
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


# -- parser --------------------------------------------------------------------


class _Parser:
    def __init__(self, text: str):
        self.tokens = tokenize(text)
        self.pos = 0

    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def fail(self, expected: str):
        tok = self.tok
        raise PolicySyntaxError(expected, tok.describe(), tok.line, tok.col)

    def expect(self, text: str) -> Token:
        if self.tok.text != text or self.tok.kind == "eof":
            self.fail(repr(text))
        return self.advance()

    def policy(self) -> list[Rule]:
        rules = []
        while self.tok.kind != "eof":
            rules.append(self.rule())
        return rules

    def rule(self) -> Rule:
        resources: list[tuple[str, Token]] = []
        head = self.give_atom(resources, head=True)
        body = []
        if self.tok.text == ":-":
            self.advance()
            body.append(self.give_atom(resources))
            while self.tok.text == ",":
                self.advance()
                body.append(self.give_atom(resources))
        guards = []
        if self.tok.kind == "lower" and self.tok.text == "with":
            self.advance()
            guards.append(self.pred_atom())
            while self.tok.text == ",":
                self.advance()
                guards.append(self.pred_atom())
        if self.tok.text != ".":
            self.fail("',', 'with' or '.'" if body else "':-', 'with' or '.'")
        self.advance()
        rule = Rule(head, tuple(body), tuple(guards))
        variables = set(rule.variables())
        for name, tok in resources:
            if name in variables:
                raise ResourceVariable(f"resource position holds variable {name!r}", tok.line, tok.col)
        return rule

    def give_atom(self, resources: list, head: bool = False) -> GiveAtom:
        if self.tok.text != "Gives" or self.tok.kind != "upper":
            self.fail("'Gives'")
        self.advance()
        self.expect("(")
        giver_tok = self.tok
        giver = self.user_term()
        if head and giver != ME:
            raise HeadNotMe(f"rule head must be given by Me, not {giver!r}", giver_tok.line, giver_tok.col)
        self.expect(",")
        resource = self.resource(resources)
        self.expect(",")
        if head and self.tok.text == ME:
            self.fail("a variable (a rule cannot give to Me)")
        receiver = self.user_term()
        self.expect(")")
        return GiveAtom(giver, resource, receiver)

    def user_term(self) -> str:
        tok = self.tok
        if tok.kind == "upper" and tok.text == ME:
            self.advance()
            return ME
        if tok.kind == "lower":
            self.advance()
            return tok.text
        self.fail("'Me' or a variable")

    def resource(self, resources: list) -> str:
        tok = self.tok
        if tok.kind == "upper" and tok.text == ME:
            raise ResourceVariable("resource position holds Me", tok.line, tok.col)
        if tok.kind != "lower":
            self.fail("a resource kind")
        if "'" in tok.text:
            raise ResourceVariable(f"resource position holds variable {tok.text!r}", tok.line, tok.col)
        self.advance()
        resources.append((tok.text, tok))
        return tok.text

    def pred_atom(self) -> PredAtom:
        tok = self.tok
        if tok.kind != "upper" or tok.text in (ME, "Gives"):
            self.fail("a predicate name")
        self.advance()
        self.expect("(")
        args = [self.user_term()]
        while self.tok.text == ",":
            self.advance()
            args.append(self.user_term())
        self.expect(")")
        return PredAtom(tok.text, tuple(args))


def parse_policy(text: str, owner: str) -> Policy:
    return Policy(owner, tuple(_Parser(text).policy()))


def parse_rule(text: str) -> Rule:
    rules = _Parser(text).policy()
    if len(rules) != 1:
        raise PolicySyntaxError("exactly one rule", f"{len(rules)} rules", 1, 1)
    return rules[0]


# -- checks and grounding ------------------------------------------------------


def validate(policy: Policy) -> list[PolicyWarning]:
    warnings = []
    seen: dict[Rule, int] = {}
    for i, rule in enumerate(policy.rules):
        anchored = set(rule.head.terms())
        for g in rule.guards:
            anchored.update(g.args)
        body_vars = [v for a in rule.body for v in a.terms() if v != ME]
        for v in dict.fromkeys(body_vars):
            if v not in anchored:
                warnings.append(
                    PolicyWarning("pure-witness", i, f"{v} occurs only in the body; any user may act as witness")
                )
        if not rule.body and not rule.guards:
            warnings.append(PolicyWarning("unconditional", i, f"{rule.head.resource} is given away unconditionally"))
        if rule in seen:
            warnings.append(PolicyWarning("duplicate-rule", i, f"duplicate of rule {seen[rule]}"))
        else:
            seen[rule] = i
    return warnings


def _ground(term: str, owner: str, subst: Mapping[str, str]) -> str:
    if term == ME:
        return owner
    try:
        return subst[term]
    except KeyError:
        raise UnboundVariable(term) from None


def instantiate(rule: Rule, owner: str, subst: Mapping[str, str]) -> GroundRule:
    g = lambda t: _ground(t, owner, subst)  # noqa: E731
    head = GiveAtom(g(rule.head.giver), rule.head.resource, g(rule.head.receiver))
    body = tuple(GiveAtom(g(a.giver), a.resource, g(a.receiver)) for a in rule.body)
    guards = tuple(ContextFact(p.predicate, tuple(g(x) for x in p.args)) for p in rule.guards)
    return GroundRule(head, body, guards)


# -- printer -------------------------------------------------------------------


def format_rule(rule: Rule) -> str:
    out = str(rule.head)
    if rule.body:
        out += " :- " + ", ".join(str(a) for a in rule.body)
    if rule.guards:
        out += " with " + ", ".join(str(g) for g in rule.guards)
    return out + "."


def pretty_print(policy: Policy) -> str:
    return "".join(format_rule(r) + "\n" for r in policy.rules)
