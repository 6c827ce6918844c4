"""Exact arithmetic in cyclotomic fields Q(zeta_L).

An element of Q(zeta_L) is stored as the canonical residue of a rational
polynomial in ``t`` modulo the L-th cyclotomic polynomial, so it always has
``phi(L)`` coefficients.  Binary operations on elements of different orders
first lift both operands to the lcm of the orders.
"""
from __future__ import annotations

import cmath
import math
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Sequence

import sympy

__all__ = [
    "CyclotomicNumber",
    "DivisionByZero",
    "cyclo_make",
    "cyclo_rational",
    "cyclo_add",
    "cyclo_mul",
    "cyclo_neg",
    "cyclo_inv",
    "cyclo_is_zero",
    "parse_rational",
    "format_rational",
]


class DivisionByZero(ZeroDivisionError):
    """Raised when inverting the zero element."""


def parse_rational(text: str | int | Fraction) -> Fraction:
    if isinstance(text, Fraction):
        return text
    if isinstance(text, int):
        return Fraction(text)
    return Fraction(str(text).strip())


def format_rational(q: Fraction) -> str:
    q = Fraction(q)
    return f"{q.numerator}/{q.denominator}"


@lru_cache(maxsize=None)
def _phi_coeffs(order: int) -> tuple[int, ...]:
    """Coefficients of Phi_order, lowest degree first (monic)."""
    t = sympy.Symbol("t")
    poly = sympy.Poly(sympy.cyclotomic_poly(order, t), t)
    return tuple(int(c) for c in reversed(poly.all_coeffs()))


@lru_cache(maxsize=None)
def _reduction_table(order: int) -> tuple[tuple[int, ...], ...]:
    """Row k holds t^k mod Phi_order for 0 <= k < max(order, 2*phi - 1)."""
    phi = _phi_coeffs(order)
    deg = len(phi) - 1
    size = max(order, 2 * deg - 1, 1)
    rows: list[tuple[int, ...]] = []
    for k in range(size):
        if k < deg:
            row = [0] * deg
            row[k] = 1
            rows.append(tuple(row))
            continue
        # multiply previous row by t and reduce the overflow using the monic Phi
        prev = rows[-1]
        top = prev[-1]
        row = [0] + list(prev[:-1])
        if top:
            for i in range(deg):
                row[i] -= top * phi[i]
        rows.append(tuple(row))
    return tuple(rows)


@lru_cache(maxsize=None)
def _totient(order: int) -> int:
    return len(_phi_coeffs(order)) - 1


@lru_cache(maxsize=None)
def _trace_weights(order: int) -> tuple[Fraction, ...]:
    # normalized trace of zeta_L^k is mu(L/g)/phi(L/g), g = gcd(k, L)
    out = []
    for k in range(_totient(order)):
        d = order // math.gcd(k, order)
        out.append(Fraction(int(sympy.mobius(d)), int(sympy.totient(d))))
    return tuple(out)


def _reduce(order: int, raw: Sequence[Fraction]) -> tuple[Fraction, ...]:
    deg = _totient(order)
    table = _reduction_table(order)
    out = [Fraction(0)] * deg
    for k, c in enumerate(raw):
        if not c:
            continue
        if k < deg:
            out[k] += c
            continue
        if k >= len(table):
            k %= order
        for i, r in enumerate(table[k]):
            if r:
                out[i] += c * r
    return tuple(out)


class CyclotomicNumber:
    """Immutable element of Q(zeta_L)."""

    __slots__ = ("order", "coeffs", "_hash")

    def __init__(self, order: int, coeffs: Iterable[Fraction | int | str]):
        if order < 1:
            raise ValueError("order must be positive")
        raw = [parse_rational(c) for c in coeffs]
        deg = _totient(order)
        if len(raw) != deg:
            raw = list(_reduce(order, raw))
        object.__setattr__(self, "order", order)
        object.__setattr__(self, "coeffs", tuple(raw))
        object.__setattr__(self, "_hash", None)

    def __setattr__(self, name, value):
        raise AttributeError("CyclotomicNumber is immutable")

    def __reduce__(self):
        return (CyclotomicNumber, (self.order, self.coeffs))

    # construction helpers -------------------------------------------------
    @classmethod
    def rational(cls, q: Fraction | int | str, order: int = 1) -> "CyclotomicNumber":
        deg = _totient(order)
        coeffs = [Fraction(0)] * deg
        coeffs[0] = parse_rational(q)
        return cls(order, coeffs)

    @classmethod
    def zero(cls, order: int = 1) -> "CyclotomicNumber":
        return cls.rational(0, order)

    @classmethod
    def one(cls, order: int = 1) -> "CyclotomicNumber":
        return cls.rational(1, order)

    # structure --------------------------------------------------------------
    def lift(self, order: int) -> "CyclotomicNumber":
        """Embed into Q(zeta_order); ``self.order`` must divide ``order``."""
        if order == self.order:
            return self
        if order % self.order:
            raise ValueError(f"cannot embed order {self.order} into {order}")
        step = order // self.order
        raw = [Fraction(0)] * ((len(self.coeffs) - 1) * step + 1)
        for k, c in enumerate(self.coeffs):
            raw[k * step] = c
        return CyclotomicNumber(order, _reduce(order, raw))

    def descend(self, order: int) -> "CyclotomicNumber | None":
        """Return the same element in Q(zeta_order) if it lives there."""
        if self.order % order:
            return None
        if order == self.order:
            return self
        deg = _totient(order)
        # solve via the basis image: zeta_order^k = t^(k*step)
        step = self.order // order
        basis = [CyclotomicNumber.root_of_unity(self.order, k * step) for k in range(deg)]
        n = len(self.coeffs)
        mat = sympy.Matrix(n, deg, lambda i, j: basis[j].coeffs[i])
        rhs = sympy.Matrix(n, 1, lambda i, _j: self.coeffs[i])
        try:
            sol, params = mat.gauss_jordan_solve(rhs)
        except ValueError:
            return None
        if params.shape[0]:
            return None
        return CyclotomicNumber(order, [Fraction(str(v)) for v in sol])

    @classmethod
    def root_of_unity(cls, order: int, k: int) -> "CyclotomicNumber":
        k %= order
        table = _reduction_table(order)
        return cls(order, [Fraction(v) for v in table[k]])

    def is_zero(self) -> bool:
        return not any(self.coeffs)

    def is_rational(self) -> bool:
        return not any(self.coeffs[1:])

    def to_rational(self) -> Fraction:
        if not self.is_rational():
            raise ValueError("not a rational number")
        return self.coeffs[0]

    def normalized_trace(self) -> Fraction:
        """Average of all Galois conjugates; independent of the ambient order."""
        return sum((c * w for c, w in zip(self.coeffs, _trace_weights(self.order))), Fraction(0))

    def to_complex(self) -> complex:
        z = cmath.exp(2j * math.pi / self.order)
        acc = 0j
        p = 1 + 0j
        for c in self.coeffs:
            acc += float(c) * p
            p *= z
        return acc

    # arithmetic -------------------------------------------------------------
    @staticmethod
    def _coerce(other) -> "CyclotomicNumber | None":
        if isinstance(other, CyclotomicNumber):
            return other
        if isinstance(other, (int, Fraction)):
            return CyclotomicNumber.rational(other)
        return None

    @staticmethod
    def _common(a: "CyclotomicNumber", b: "CyclotomicNumber"):
        if a.order == b.order:
            return a, b
        order = a.order * b.order // math.gcd(a.order, b.order)
        return a.lift(order), b.lift(order)

    def __add__(self, other):
        other = self._coerce(other)
        if other is None:
            return NotImplemented
        a, b = self._common(self, other)
        return CyclotomicNumber(a.order, [x + y for x, y in zip(a.coeffs, b.coeffs)])

    __radd__ = __add__

    def __neg__(self):
        return CyclotomicNumber(self.order, [-x for x in self.coeffs])

    def __sub__(self, other):
        other = self._coerce(other)
        if other is None:
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        other = self._coerce(other)
        if other is None:
            return NotImplemented
        return other + (-self)

    def __mul__(self, other):
        if isinstance(other, (int, Fraction)):
            return CyclotomicNumber(self.order, [x * other for x in self.coeffs])
        other = self._coerce(other)
        if other is None:
            return NotImplemented
        a, b = self._common(self, other)
        if a.order <= 2:
            return CyclotomicNumber(a.order, [a.coeffs[0] * b.coeffs[0]])
        raw = [Fraction(0)] * (2 * len(a.coeffs) - 1)
        for i, x in enumerate(a.coeffs):
            if not x:
                continue
            for j, y in enumerate(b.coeffs):
                if y:
                    raw[i + j] += x * y
        return CyclotomicNumber(a.order, _reduce(a.order, raw))

    __rmul__ = __mul__

    def __pow__(self, n: int):
        if n < 0:
            return self.inverse() ** (-n)
        result = CyclotomicNumber.one(self.order)
        base = self
        while n:
            if n & 1:
                result = result * base
            base = base * base
            n >>= 1
        return result

    def inverse(self) -> "CyclotomicNumber":
        if self.is_zero():
            raise DivisionByZero("inverse of zero in a cyclotomic field")
        if self.is_rational():
            return CyclotomicNumber.rational(1 / self.coeffs[0], self.order)
        # extended Euclid in Q[t] between the element and Phi_L
        a = sympy.Poly(list(reversed(self.coeffs)), sympy.Symbol("t"), domain="QQ")
        m = sympy.Poly(list(reversed(_phi_coeffs(self.order))), sympy.Symbol("t"), domain="QQ")
        s, _t, g = sympy.gcdex(a, m)
        inv = s.quo_ground(g.LC())
        coeffs = [Fraction(int(c.p), int(c.q)) for c in reversed(inv.all_coeffs())]
        return CyclotomicNumber(self.order, _reduce(self.order, coeffs))

    def __truediv__(self, other):
        if isinstance(other, (int, Fraction)):
            if not other:
                raise DivisionByZero("division by zero")
            return CyclotomicNumber(self.order, [x / other for x in self.coeffs])
        other = self._coerce(other)
        if other is None:
            return NotImplemented
        return self * other.inverse()

    def __rtruediv__(self, other):
        other = self._coerce(other)
        if other is None:
            return NotImplemented
        return other * self.inverse()

    # comparison -------------------------------------------------------------
    def __eq__(self, other):
        other = self._coerce(other)
        if other is None:
            return NotImplemented
        a, b = self._common(self, other)
        return a.coeffs == b.coeffs

    def __hash__(self):
        h = self._hash
        if h is None:
            h = hash(self.normalized_trace())
            object.__setattr__(self, "_hash", h)
        return h

    def __bool__(self):
        return not self.is_zero()

    # encoding ---------------------------------------------------------------
    def to_json(self) -> dict:
        return {"order": self.order, "coeffs": [format_rational(c) for c in self.coeffs]}

    @classmethod
    def from_json(cls, data) -> "CyclotomicNumber":
        if isinstance(data, (int, str)):
            return cls.rational(parse_rational(data))
        return cls(int(data["order"]), [parse_rational(c) for c in data["coeffs"]])

    def sort_key(self) -> tuple:
        return (self.order, self.coeffs)

    def __repr__(self):
        if self.is_rational():
            return f"Cyclo({self.coeffs[0]})"
        parts = []
        for k, c in enumerate(self.coeffs):
            if c:
                parts.append(f"{c}" if k == 0 else f"{c}*z{self.order}^{k}")
        return "Cyclo(" + " + ".join(parts) + ")"

    def __str__(self):
        if self.is_rational():
            return str(self.coeffs[0])
        parts = []
        for k, c in enumerate(self.coeffs):
            if c:
                parts.append(f"{c}" if k == 0 else f"({c})z{self.order}^{k}")
        return " + ".join(parts)


def cyclo_make(order: int, k: int) -> CyclotomicNumber:
    """zeta_order ** k in canonical form."""
    if order < 1:
        raise ValueError("order must be positive")
    return CyclotomicNumber.root_of_unity(order, k)


def cyclo_rational(q, order: int = 1) -> CyclotomicNumber:
    return CyclotomicNumber.rational(q, order)


def cyclo_add(a: CyclotomicNumber, b: CyclotomicNumber) -> CyclotomicNumber:
    return a + b


def cyclo_mul(a: CyclotomicNumber, *rest: CyclotomicNumber) -> CyclotomicNumber:
    out = a
    for b in rest:
        out = out * b
    return out


def cyclo_neg(a: CyclotomicNumber) -> CyclotomicNumber:
    return -a


def cyclo_inv(a: CyclotomicNumber) -> CyclotomicNumber:
    return a.inverse()


def cyclo_is_zero(a: CyclotomicNumber) -> bool:
    return a.is_zero()
