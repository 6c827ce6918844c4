from __future__ import annotations

import json
import random
from fractions import Fraction as F

import pytest
from hypothesis import given
from hypothesis import strategies as st

from surfgerm.carrousel import (
    CURVE,
    PLAIN_RULES,
    POLAR,
    WEDGE,
    CarrouselTree,
    MissingPolarRate,
    NonGenericCoordinates,
    Piece,
    TruncationSpec,
    UltrametricViolation,
    amalgamate,
    build_unamalgamated,
    complete_carrousel,
    intermediate_carrousel,
    plain_carrousel,
    plain_truncations,
    reconstruct_from_contacts,
    refines,
    section_tree,
    tree_isomorphic,
    tree_violations,
)
from surfgerm.cli import (
    d5_expected_complete,
    d5_generic_branches,
    fourteen_branch_family,
    random_branch_family,
    shape,
    two_branch_expected_section,
    two_branch_family,
)
from surfgerm.puiseux import ContactMatrix, conjugates, contact_exponent, contact_matrix, series

D5_RATES = {0: F(5, 2), 1: F(2)}  # cusp first, as produced by d5_generic_branches


def d5_rates():
    bs = d5_generic_branches()
    return bs, {i: (F(5, 2) if b.ramification > 1 else F(2)) for i, b in enumerate(bs)}


def leaves(p: Piece) -> list[Piece]:
    return [q for q in p.walk() if not q.children]


# --- construction ----------------------------------------------------------

def test_single_smooth_branch():
    t = plain_carrousel([series([(1, 1)])])
    assert tree_isomorphic(t, shape("CONE", 1, shape("D", 1, flags=[CURVE])))


def test_single_cusp_plain():
    t = plain_carrousel([series([(F(3, 2), 1)])])
    want = shape("CONE", 1, shape("A", (1, F(3, 2)), shape("B", F(3, 2), *[shape("D", F(3, 2), flags=[CURVE])] * 2)))
    assert tree_isomorphic(t, want)


def test_plain_truncations_two_branch():
    assert plain_truncations(two_branch_family()) == {0: F(13, 6), 1: F(7, 4)}


def test_unamalgamated_two_branch_figure_shape():
    t = build_unamalgamated(two_branch_family())
    c = [shape("D", F(13, 6), flags=[CURVE])] * 2
    pair = shape("A", (F(4, 3), F(13, 6)), shape("B", F(13, 6), *c, shape("D", F(13, 6))))
    four = shape("A", (F(4, 3), F(7, 4)),
                 shape("B", F(7, 4), *[shape("D", F(7, 4), flags=[CURVE])] * 4, shape("D", F(7, 4))))
    want = shape("CONE", 1, shape("A", (1, F(4, 3)), shape("B", F(4, 3), pair, pair, pair, four)))
    assert tree_isomorphic(t, want)
    assert t.root.count(lambda p: p.is_empty_disk) == 4


def test_plain_two_branch_section():
    sec = section_tree(plain_carrousel(two_branch_family()))
    assert tree_isomorphic(sec, two_branch_expected_section())


def test_plain_d5():
    t = plain_carrousel(d5_generic_branches())
    sec = section_tree(t)
    want = shape("CONE", 1, shape("D", 1), shape("B", F(3, 2), shape("D", F(3, 2)), shape("D", F(3, 2))))
    assert tree_isomorphic(sec, want)


def test_unamalgamated_d5_complete():
    bs, rates = d5_rates()
    t = build_unamalgamated(bs, TruncationSpec("complete", rates))
    w = [CURVE, WEDGE, POLAR]
    inner = shape("A", (2, F(5, 2)), shape("B", F(5, 2), shape("D", F(5, 2), flags=w), shape("D", F(5, 2))))
    b2 = shape("B", 2, inner, shape("D", 2))
    want = shape("CONE", 1,
                 shape("A", (1, 2), shape("B", 2, shape("D", 2, flags=w))),
                 shape("A", (1, F(3, 2)), shape("B", F(3, 2), shape("A", (F(3, 2), 2), b2),
                                                shape("A", (F(3, 2), 2), b2), shape("D", F(3, 2)))))
    assert tree_isomorphic(_strip_flags(t.root), _strip_flags(want))
    assert t.root.count(lambda p: WEDGE in p.flags) == 3


def test_polar_rate_inside_annulus_keeps_its_circle():
    b = series([(1, F(1, 2)), (F(5, 2), 2), (F(23, 6), F(-1, 3))])
    rates = {0: F(7, 3)}
    comp = complete_carrousel([b], rates)
    (marked,) = [p for p in comp.root.walk() if p.kind == "B" and p.rate == F(7, 3)]
    assert POLAR in marked.flags and len(marked.branches) == 1
    assert refines(comp, intermediate_carrousel([b], rates))
    assert refines(comp, plain_carrousel([b]))


def _strip_flags(p: Piece) -> Piece:
    return Piece(p.kind, p.rates, frozenset(), frozenset(), tuple(_strip_flags(c) for c in p.children))


def test_complete_d5():
    bs, rates = d5_rates()
    comp = complete_carrousel(bs, rates)
    assert tree_isomorphic(comp, d5_expected_complete())


def test_intermediate_equals_complete_d5():
    bs, rates = d5_rates()
    assert tree_isomorphic(intermediate_carrousel(bs, rates), complete_carrousel(bs, rates))


def test_missing_polar_rate():
    with pytest.raises(MissingPolarRate):
        complete_carrousel(d5_generic_branches(), {0: F(5, 2)})


def test_non_generic_coordinates():
    with pytest.raises(NonGenericCoordinates):
        plain_carrousel([series([(F(1, 2), 1)])])


def test_polar_rate_below_first_exponent_rejected():
    with pytest.raises(ValueError):
        complete_carrousel([series([(F(3, 2), 1)])], {0: F(5, 4)})


def test_polar_rate_below_cross_contact_rejected():
    bs = [series([(1, 1), (F(3, 2), 1)]), series([(1, 1), (F(3, 2), 1), (3, 1)])]
    with pytest.raises(ValueError):
        intermediate_carrousel(bs, {0: F(2), 1: F(4)})


def test_empty_branch_set():
    for t in (plain_carrousel([]), intermediate_carrousel([], {}), complete_carrousel([], {})):
        assert t.root.kind == "CONE" and not t.root.children


def test_fourteen_branch_intermediate():
    bs, rates = fourteen_branch_family()
    t = intermediate_carrousel(bs, rates)
    assert {CURVE, POLAR} <= t.root.flags
    wedges = sorted(p.rate for p in t.root.walk() if WEDGE in p.flags)
    # one wedge disk per sheet: five 3/2, ten 7/5 (two branches of five sheets), one 5/4 holding four sheets
    assert wedges == [F(5, 4)] + [F(7, 5)] * 10 + [F(3, 2)] * 5
    assert not tree_violations(t)


def test_fourteen_branch_complete():
    bs, rates = fourteen_branch_family()
    t = complete_carrousel(bs, rates)
    pairs = [p for p in t.root.walk() if p.kind == "B" and p.rate == F(3, 2)]
    assert len(pairs) == 5 and all(len(p.children) == 2 for p in pairs)
    (b54,) = [p for p in t.root.walk() if p.kind == "B" and p.rate == F(5, 4)]
    assert len(b54.children) == 4
    (b65,) = [p for p in t.root.walk() if p.kind == "B" and p.rate == F(6, 5)]
    assert b65.branches == {11, 12, 13}
    assert refines(t, plain_carrousel(bs))
    assert refines(t, intermediate_carrousel(bs, rates))


# --- amalgamation ------------------------------------------------------------

def test_collapse_a_chain():
    t = CarrouselTree(shape("CONE", 1, shape("A", (1, F(3, 2)), shape("A", (F(3, 2), 2), shape("D", 2, flags=[CURVE])))))
    out = amalgamate(t, ["collapse-A-chains"])
    assert tree_isomorphic(out, shape("CONE", 1, shape("A", (1, 2), shape("D", 2, flags=[CURVE]))))


def test_empty_disk_absorbed():
    t = CarrouselTree(shape("CONE", 1, shape("B", 2, shape("D", 2, flags=[CURVE]), shape("D", 2, flags=[CURVE]),
                                             shape("D", 2))))
    out = amalgamate(t, ["merge-empty-D"])
    assert out.root.count(lambda p: p.is_empty_disk) == 0
    assert len(out.pieces()) == 4


def test_amalgamate_fixpoint():
    t = plain_carrousel(two_branch_family())
    assert amalgamate(t, PLAIN_RULES) == t


def test_unknown_rule():
    with pytest.raises(ValueError):
        amalgamate(plain_carrousel([]), ["no-such-rule"])


@given(st.integers(0, 10**6))
def test_confluence_plain(seed):
    rng = random.Random(seed)
    bs = random_branch_family(rng)
    raw = build_unamalgamated(bs)
    ref = amalgamate(raw, PLAIN_RULES)
    for k in range(3):
        assert amalgamate(raw, PLAIN_RULES, rng=random.Random(seed * 7 + k)) == ref


def random_polar_rates(rng, bs):
    """Rates whose wedges separate the branches: at least the first exponent and every cross contact."""
    sheets = [(i, s) for i, b in enumerate(bs) for s in conjugates(b)]
    out = {}
    for i, b in enumerate(bs):
        floor = max([F(1), b.terms[0][0]] + [contact_exponent(s, t) for j, s in sheets if j == i
                                             for k, t in sheets if k != i])
        out[i] = floor + F(rng.randint(0, 8), rng.randint(1, 4))
    return out


@given(st.integers(0, 10**6))
def test_confluence_complete(seed):
    rng = random.Random(seed)
    bs = random_branch_family(rng)
    raw = build_unamalgamated(bs, TruncationSpec("complete", random_polar_rates(rng, bs)))
    ref = amalgamate(raw, PLAIN_RULES)
    for k in range(3):
        assert amalgamate(raw, PLAIN_RULES, rng=random.Random(seed + k)) == ref


# --- reconstruction and comparison ---------------------------------------

def test_reconstruct_two_leaves():
    m = ContactMatrix.from_values(2, lambda j, k: F(3, 2))
    t = reconstruct_from_contacts(m)
    assert tree_isomorphic(t, shape("CONE", 1, shape("B", F(3, 2), shape("D", F(3, 2)), shape("D", F(3, 2)))))


def test_reconstruct_two_leaves_rate_one():
    m = ContactMatrix.from_values(2, lambda j, k: 1)
    assert tree_isomorphic(reconstruct_from_contacts(m), shape("CONE", 1, shape("D", 1), shape("D", 1)))


def test_reconstruct_d5():
    t = reconstruct_from_contacts(contact_matrix(d5_generic_branches()))
    want = shape("CONE", 1, shape("D", 1), shape("B", F(3, 2), shape("D", F(3, 2)), shape("D", F(3, 2))))
    assert tree_isomorphic(t, want)


def test_reconstruct_two_branch_family():
    bs = two_branch_family()
    t = reconstruct_from_contacts(contact_matrix(bs))
    assert tree_isomorphic(t, section_tree(plain_carrousel(bs)))


def test_ultrametric_violation():
    vals = {frozenset((0, 1)): F(2), frozenset((1, 2)): F(3), frozenset((0, 2)): F(1)}
    m = ContactMatrix.from_values(3, lambda j, k: vals[frozenset((j, k))])
    with pytest.raises(UltrametricViolation):
        reconstruct_from_contacts(m)


def test_isomorphism_ignores_child_order():
    a = shape("CONE", 1, shape("D", 1), shape("B", 2, shape("D", 2), shape("D", 2)))
    b = shape("CONE", 1, shape("B", 2, shape("D", 2), shape("D", 2)), shape("D", 1))
    assert tree_isomorphic(a, b)


def test_isomorphism_detects_leaf_count():
    a = shape("B", F(3, 2), *[shape("D", F(3, 2))] * 2)
    b = shape("B", F(3, 2), *[shape("D", F(3, 2))] * 3)
    assert not tree_isomorphic(a, b)


def test_refines_examples():
    bs, rates = d5_rates()
    comp, plain = complete_carrousel(bs, rates), plain_carrousel(bs)
    assert refines(plain, plain)
    assert refines(comp, plain)
    assert not refines(plain, comp)


@given(st.integers(0, 10**6))
def test_oracle_equivalence(seed):
    bs = random_branch_family(random.Random(seed))
    m = contact_matrix(bs)
    rec = reconstruct_from_contacts(m)
    assert tree_isomorphic(rec, section_tree(plain_carrousel(bs)))
    assert len(leaves(rec.root)) == sum(b.ramification for b in bs)


@given(st.integers(0, 10**6))
def test_refinement_and_invariants(seed):
    rng = random.Random(seed)
    bs = random_branch_family(rng)
    rates = random_polar_rates(rng, bs)
    plain = plain_carrousel(bs)
    inter = intermediate_carrousel(bs, rates)
    comp = complete_carrousel(bs, rates)
    assert refines(comp, plain)
    assert refines(comp, inter)
    for t in (build_unamalgamated(bs), plain, inter, comp):
        assert tree_violations(t) == []


@given(st.integers(0, 10**6))
def test_json_round_trip(seed):
    rng = random.Random(seed)
    bs = random_branch_family(rng)
    t = complete_carrousel(bs, random_polar_rates(rng, bs))
    back = CarrouselTree.from_json(json.loads(t.dumps(sheets=True)), t.mode)
    assert back.root == t.root
    assert CarrouselTree.from_json(t.to_json()).to_json() == t.to_json()


def test_serialized_equality_is_isomorphism():
    a = shape("CONE", 1, shape("D", 1), shape("B", 2, shape("D", 2), shape("D", 2)))
    b = shape("CONE", 1, shape("B", 2, shape("D", 2), shape("D", 2)), shape("D", 1))
    assert CarrouselTree(a).dumps() == CarrouselTree(b).dumps()
