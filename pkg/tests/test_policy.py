import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from instances import ALICE, BOB, CARL
from muac.errors import HeadNotMe, PolicyError, PolicySyntaxError, ResourceVariable, UnboundVariable
from muac.model import ContextFact
from muac.policy import ME, GiveAtom, Policy, PredAtom, Rule, instantiate, parse_policy, pretty_print, validate


def test_alice_policy_shape():
    p = parse_policy(ALICE, "alice")
    assert len(p.rules) == 1
    rule = p.rules[0]
    assert rule.head == GiveAtom(ME, "countryside_house", "u")
    assert rule.body == (GiveAtom("u'", "downtown_house", ME),)
    assert rule.guards == ()


def test_bob_policy_guard():
    rule = parse_policy(BOB, "bob").rules[0]
    assert rule.body == (GiveAtom("u'", "countryside_house", "u''"),)
    assert rule.guards == (PredAtom("FriendOrSame", (ME, "u''")),)


def test_house_listing_layout_parses():
    text = """
    % Bob, as laid out in the listing
    Gives(Me, downtown_house, u) :-
        Gives(u', countryside_house, u'')
          with FriendOrSame(Me, u'').
    """
    assert parse_policy(text, "bob") == parse_policy(BOB, "bob")


def test_empty_policy():
    assert parse_policy("", "alice").rules == ()
    assert parse_policy("  % nothing here\n", "alice").rules == ()


def test_head_not_me():
    with pytest.raises(HeadNotMe) as exc:
        parse_policy("Gives(u, x, Me).", "alice")
    assert (exc.value.line, exc.value.col) == (1, 7)


def test_head_receiver_me_is_a_syntax_error():
    with pytest.raises(PolicySyntaxError) as exc:
        parse_policy("Gives(Me, x, Me).", "alice")
    assert "variable" in exc.value.expected


@pytest.mark.parametrize(
    "text",
    [
        "Gives(Me, u', u).",
        "Gives(Me, Me, u).",
        "Gives(Me, u, u).",
        "Gives(Me, x, u) :- Gives(v, v, Me).",
    ],
)
def test_resource_variables_rejected(text):
    with pytest.raises(ResourceVariable):
        parse_policy(text, "alice")


@pytest.mark.parametrize(
    "text, line, col",
    [
        ("Gives(Me, x, u)", 1, 16),
        ("Gives(Me, x, u) :- .", 1, 20),
        ("Gives(Me x, u).", 1, 10),
        ("Give(Me, x, u).", 1, 1),
        ("Gives(Me, x, u) with.", 1, 21),
        ("Gives(Me, x, u).\nGives(Me, y, v) :- Gives(v, x, Me) with p(v).", 2, 41),
        ("Gives(Me, x, u) # comment", 1, 17),
    ],
)
def test_syntax_errors_are_located(text, line, col):
    with pytest.raises(PolicySyntaxError) as exc:
        parse_policy(text, "alice")
    assert (exc.value.line, exc.value.col) == (line, col)


def test_rule_order_and_optional_neck():
    p = parse_policy("Gives(Me, b, u).\nGives(Me, a, u) :- Gives(u, a, Me).", "alice")
    assert [r.head.resource for r in p.rules] == ["b", "a"]
    assert p.rules[0].body == ()


def test_body_is_a_multiset():
    p = parse_policy("Gives(Me, x, u) :- Gives(u, y, Me), Gives(u, y, Me).", "alice")
    assert len(p.rules[0].body) == 2


# -- validate --------------------------------------------------------------------


def test_alice_rule_has_pure_witness():
    ws = validate(parse_policy(ALICE, "alice"))
    assert [(w.code, w.rule_index) for w in ws] == [("pure-witness", 0)]
    assert "u'" in ws[0].message


def test_unconditional_rule_warning():
    ws = validate(parse_policy("Gives(Me, apple, u).", "alice"))
    assert [w.code for w in ws] == ["unconditional"]


def test_duplicate_rule_warning():
    ws = validate(parse_policy("Gives(Me, apple, u).\nGives(Me, apple, u).", "alice"))
    assert [w.code for w in ws] == ["unconditional", "unconditional", "duplicate-rule"]


def test_house_policies_validate():
    for owner, text in (("alice", ALICE), ("bob", BOB), ("carl", CARL)):
        validate(parse_policy(text, owner))
    # Bob's u'' is anchored by the guard, so only u' is a pure witness
    assert [w.message.split()[0] for w in validate(parse_policy(BOB, "bob"))] == ["u'"]


# -- instantiate -------------------------------------------------------------------


def test_instantiate_bob_pays_for_carl():
    rule = parse_policy(BOB, "bob").rules[0]
    g = instantiate(rule, "bob", {"u": "alice", "u'": "alice", "u''": "carl"})
    assert g.head.triple == ("bob", "downtown_house", "alice")
    assert [a.triple for a in g.body] == [("alice", "countryside_house", "carl")]
    assert g.guards == (ContextFact("FriendOrSame", ("bob", "carl")),)


def test_instantiate_ground_rule_with_no_variables():
    rule = Rule(GiveAtom(ME, "x", "u"), (GiveAtom("u", "y", ME),))
    g = instantiate(Rule(GiveAtom(ME, "x", "u")), "alice", {"u": "bob"})
    assert g.head.triple == ("alice", "x", "bob") and g.body == () and g.guards == ()
    assert instantiate(rule, "alice", {"u": "bob"}).body[0].triple == ("bob", "y", "alice")


def test_instantiate_unbound():
    rule = parse_policy(ALICE, "alice").rules[0]
    with pytest.raises(UnboundVariable) as exc:
        instantiate(rule, "alice", {"u": "bob"})
    assert exc.value.variable == "u'"


# -- printer -----------------------------------------------------------------------


def test_pretty_print_alice():
    p = parse_policy(ALICE, "alice")
    text = pretty_print(p)
    assert text == "Gives(Me, countryside_house, u) :- Gives(u', downtown_house, Me).\n"
    assert parse_policy(text, "alice") == p


def test_pretty_print_empty():
    assert pretty_print(Policy("alice")) == ""


variables = st.sampled_from(["u", "u'", "u''", "v", "w2", "with"])
terms = st.one_of(st.just(ME), variables)
resources = st.sampled_from(["apple", "pear", "countryside_house", "x1"])
preds = st.sampled_from(["P", "FriendOrSame", "Q2"])

rules = st.builds(
    Rule,
    st.builds(GiveAtom, st.just(ME), resources, variables),
    st.lists(st.builds(GiveAtom, terms, resources, terms), max_size=3).map(tuple),
    st.lists(st.builds(PredAtom, preds, st.lists(terms, min_size=1, max_size=3).map(tuple)), max_size=3).map(tuple),
)
policies = st.builds(Policy, st.sampled_from(["alice", "bob"]), st.lists(rules, max_size=4).map(tuple))


@given(policies)
def test_round_trip(p):
    assert parse_policy(pretty_print(p), p.owner) == p


@settings(max_examples=300)
@given(st.one_of(st.text(), st.text(alphabet="Gives(Me,u'x):-.with %P\n", max_size=60)))
def test_parser_is_total(text):
    try:
        parse_policy(text, "alice")
    except PolicyError as exc:
        assert exc.line >= 1 and exc.col >= 1


users = st.sampled_from(["alice", "bob", "carl", "dave"])


@given(rules, st.fixed_dictionaries({v: users for v in ["u", "u'", "u''", "v", "w2", "with"]}), users, st.permutations(["alice", "bob", "carl", "dave"]))
def test_instantiate_commutes_with_renaming(rule, subst, owner, perm):
    rename = dict(zip(["alice", "bob", "carl", "dave"], perm))
    g = instantiate(rule, owner, subst)
    h = instantiate(rule, rename[owner], {v: rename[u] for v, u in subst.items()})
    assert h.head.triple == (rename[g.head.giver], g.head.resource, rename[g.head.receiver])
    assert [a.triple for a in h.body] == [(rename[a.giver], a.resource, rename[a.receiver]) for a in g.body]
    assert [f.args for f in h.guards] == [tuple(rename[x] for x in f.args) for f in g.guards]
