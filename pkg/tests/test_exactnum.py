from __future__ import annotations

import cmath
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from surfgerm.exactnum import (
    CyclotomicNumber,
    DivisionByZero,
    cyclo_add,
    cyclo_inv,
    cyclo_is_zero,
    cyclo_make,
    cyclo_mul,
    cyclo_neg,
    cyclo_rational,
)

ORDERS = [1, 2, 3, 4, 5, 6, 8, 9, 12, 15]
fractions = st.fractions(min_value=-20, max_value=20, max_denominator=12)


@st.composite
def elements(draw, order=None):
    L = order if order is not None else draw(st.sampled_from(ORDERS))
    n = len(CyclotomicNumber.zero(L).coeffs)
    return CyclotomicNumber(L, draw(st.lists(fractions, min_size=n, max_size=n)))


@st.composite
def same_order_triples(draw):
    L = draw(st.sampled_from(ORDERS))
    return draw(elements(L)), draw(elements(L)), draw(elements(L))


def test_make_identity():
    assert cyclo_make(1, 0) == cyclo_rational(1)


def test_i_squared():
    i = cyclo_make(4, 1)
    assert cyclo_mul(i, i) == cyclo_rational(-1)


def test_zeta6_plus_inverse_is_one():
    assert cyclo_add(cyclo_make(6, 1), cyclo_make(6, 5)) == cyclo_rational(1)


def test_add_neg_is_zero():
    x = cyclo_add(cyclo_make(5, 2), cyclo_rational(Fraction(3, 7)))
    assert cyclo_is_zero(cyclo_add(x, cyclo_neg(x)))


def test_cube_root_of_unity():
    z = cyclo_make(3, 1)
    assert cyclo_mul(z, z, z) == cyclo_rational(1)


def test_inverse_of_i():
    i = cyclo_make(4, 1)
    assert cyclo_inv(i) == cyclo_neg(i)


def test_inverse_of_zero_raises():
    with pytest.raises(DivisionByZero):
        cyclo_inv(CyclotomicNumber.zero(6))


def test_zero_tests():
    assert cyclo_is_zero(CyclotomicNumber.zero())
    i = cyclo_make(4, 1)
    assert cyclo_is_zero(cyclo_add(cyclo_mul(i, i), cyclo_rational(1)))
    assert not cyclo_is_zero(cyclo_add(cyclo_make(6, 1), cyclo_neg(cyclo_make(3, 1))))


def test_mixed_orders_lift_to_lcm():
    # i * zeta_3 lives in Q(zeta_12); compare against the direct root of unity
    assert cyclo_make(4, 1) * cyclo_make(3, 1) == cyclo_make(12, 7)


def test_descend():
    x = cyclo_make(3, 1).lift(12)
    assert x.order == 12
    assert x.descend(3) == cyclo_make(3, 1)
    assert cyclo_make(12, 1).descend(3) is None


def test_json_round_trip():
    x = CyclotomicNumber(5, [Fraction(1, 2), -3, 0, Fraction(7, 9)])
    data = x.to_json()
    assert data == {"order": 5, "coeffs": ["1/2", "-3/1", "0/1", "7/9"]}
    assert CyclotomicNumber.from_json(data) == x


@given(same_order_triples())
def test_field_laws(t):
    a, b, c = t
    assert (a + b) + c == a + (b + c)
    assert (a * b) * c == a * (b * c)
    assert a * (b + c) == a * b + a * c
    assert a + b == b + a and a * b == b * a
    if not a.is_zero():
        assert a * a.inverse() == CyclotomicNumber.one()


@given(elements(), elements())
def test_matches_complex_embedding(a, b):
    """Independent oracle: the standard complex embedding is a ring map."""
    assert cmath.isclose((a * b).to_complex(), a.to_complex() * b.to_complex(), rel_tol=1e-9, abs_tol=1e-9)
    assert cmath.isclose((a + b).to_complex(), a.to_complex() + b.to_complex(), rel_tol=1e-9, abs_tol=1e-9)


@given(elements())
def test_lift_then_descend_is_identity(a):
    up = a.lift(2 * a.order)
    assert up.descend(a.order) == a
    assert up == a and hash(up) == hash(a)


@given(st.sampled_from(ORDERS), st.integers(-50, 50))
def test_make_depends_on_k_mod_L(L, k):
    assert cyclo_make(L, k) == cyclo_make(L, k + L) == cyclo_make(L, k % L)


@given(st.sampled_from(ORDERS), st.integers(0, 40))
def test_root_of_unity_numeric(L, k):
    z = cyclo_make(L, k).to_complex()
    assert cmath.isclose(z, cmath.exp(2j * cmath.pi * k / L), abs_tol=1e-12)
