"""Truncated Puiseux series, Newton-Puiseux branch extraction and contacts."""
from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce
from itertools import combinations
from typing import Iterable, Mapping, Sequence

import mpmath
import sympy

from .exactnum import CyclotomicNumber, format_rational, parse_rational

__all__ = [
    "PuiseuxBranch",
    "BivariatePolynomial",
    "ContactMatrix",
    "FieldExtensionRequired",
    "NotSquarefree",
    "IndistinguishableAtTruncation",
    "TruncationTooShort",
    "GenericityFailed",
    "series",
    "series_add",
    "series_mul",
    "series_pow",
    "poly_eval_on_branch",
    "branch_parametrization",
    "newton_puiseux",
    "conjugates",
    "contact_exponent",
    "contact_matrix",
    "characteristic_exponents",
    "minimal_polynomial",
    "is_generic",
    "linear_change",
    "genericize",
]

Cyclo = CyclotomicNumber
ZERO = Fraction(0)


class FieldExtensionRequired(ArithmeticError):
    """A Newton polygon step needs a root outside (rational) * (root of unity)."""

    def __init__(self, polynomial: Sequence[CyclotomicNumber], message: str = ""):
        self.polynomial = list(polynomial)
        text = " + ".join(f"({c})u^{k}" for k, c in enumerate(self.polynomial) if c)
        super().__init__(message or f"root of {text} is not cyclotomic")


class NotSquarefree(ValueError):
    pass


class IndistinguishableAtTruncation(ValueError):
    pass


class TruncationTooShort(ValueError):
    pass


class GenericityFailed(RuntimeError):
    pass


def _lcm(a: int, b: int) -> int:
    return a * b // math.gcd(a, b)


# ---------------------------------------------------------------------------
# series


@dataclass(frozen=True)
class PuiseuxBranch:
    """Finite fractional power series ``y = sum a_i x^{p_i}`` known below ``trunc_order``.

    ``trunc_order`` is ``None`` for an exact (finite) series.  ``solve_for`` is
    ``"x"`` when the series expresses x as a function of y; only the surface
    module uses that.
    """

    ramification: int
    terms: tuple[tuple[Fraction, CyclotomicNumber], ...]
    trunc_order: Fraction | None = None
    solve_for: str = "y"

    def __post_init__(self):
        terms = tuple((Fraction(p), c) for p, c in self.terms)
        object.__setattr__(self, "terms", terms)
        if self.trunc_order is not None:
            object.__setattr__(self, "trunc_order", Fraction(self.trunc_order))
        if self.ramification < 1:
            raise ValueError("ramification must be positive")
        prev = None
        for p, c in terms:
            if prev is not None and p <= prev:
                raise ValueError("exponents must be strictly increasing")
            if c.is_zero():
                raise ValueError("zero coefficient stored")
            if self.ramification % p.denominator:
                raise ValueError(f"exponent {p} incompatible with ramification {self.ramification}")
            if self.trunc_order is not None and p >= self.trunc_order:
                raise ValueError(f"exponent {p} not below truncation {self.trunc_order}")
            prev = p

    @property
    def exponents(self) -> list[Fraction]:
        return [p for p, _ in self.terms]

    def coeff(self, p: Fraction) -> CyclotomicNumber:
        for q, c in self.terms:
            if q == p:
                return c
        return Cyclo.zero()

    def valuation(self) -> Fraction | None:
        if self.terms:
            return self.terms[0][0]
        return self.trunc_order

    def truncate(self, order: Fraction) -> "PuiseuxBranch":
        order = Fraction(order)
        if self.trunc_order is not None and order > self.trunc_order:
            raise TruncationTooShort(f"series only known below {self.trunc_order}")
        return PuiseuxBranch(self.ramification, tuple(t for t in self.terms if t[0] < order), order, self.solve_for)

    def to_json(self) -> dict:
        out = {
            "ramification": self.ramification,
            "trunc": None if self.trunc_order is None else format_rational(self.trunc_order),
            "terms": [{"exp": format_rational(p), "coeff": c.to_json()} for p, c in self.terms],
        }
        if self.solve_for != "y":
            out["solve_for"] = self.solve_for
        return out

    @classmethod
    def from_json(cls, data: Mapping) -> "PuiseuxBranch":
        terms = tuple(sorted(((parse_rational(t["exp"]), Cyclo.from_json(t["coeff"])) for t in data["terms"]),
                             key=lambda t: t[0]))
        trunc = data.get("trunc")
        n = int(data.get("ramification", 0)) or reduce(_lcm, (p.denominator for p, _ in terms), 1)
        return cls(n, terms, None if trunc is None else parse_rational(trunc), data.get("solve_for", "y"))

    def sort_key(self) -> tuple:
        lead = self.terms[0][0] if self.terms else Fraction(10**9)
        enc = json.dumps(self.to_json(), sort_keys=True)
        return (lead, enc)

    def __str__(self):
        var = "x" if self.solve_for == "y" else "y"
        if not self.terms:
            body = "0"
        else:
            body = " + ".join(f"({c}){var}^{p}" for p, c in self.terms)
        tail = "" if self.trunc_order is None else f" + O({var}^{self.trunc_order})"
        return f"{self.solve_for} = {body}{tail}  [N={self.ramification}]"


def series(terms: Iterable[tuple], trunc: Fraction | None = None) -> PuiseuxBranch:
    """Build a series from (exponent, coefficient) pairs; zero terms and terms past ``trunc`` dropped."""
    acc: dict[Fraction, CyclotomicNumber] = {}
    for p, c in terms:
        p = Fraction(p)
        if not isinstance(c, CyclotomicNumber):
            c = Cyclo.rational(c)
        acc[p] = acc[p] + c if p in acc else c
    if trunc is not None:
        trunc = Fraction(trunc)
    items = tuple(sorted(((p, c) for p, c in acc.items() if not c.is_zero() and (trunc is None or p < trunc)),
                         key=lambda t: t[0]))
    n = reduce(_lcm, (p.denominator for p, _ in items), 1)
    return PuiseuxBranch(n, items, trunc)


def _min_trunc(*values):
    vals = [v for v in values if v is not None]
    return min(vals) if vals else None


def series_add(a: PuiseuxBranch, b: PuiseuxBranch) -> PuiseuxBranch:
    trunc = _min_trunc(a.trunc_order, b.trunc_order)
    return series(list(a.terms) + list(b.terms), trunc)


def series_neg(a: PuiseuxBranch) -> PuiseuxBranch:
    return series([(p, -c) for p, c in a.terms], a.trunc_order)


def series_mul(a: PuiseuxBranch, b: PuiseuxBranch) -> PuiseuxBranch:
    if (not a.terms and a.trunc_order is None) or (not b.terms and b.trunc_order is None):
        return series([])
    va, vb = a.valuation(), b.valuation()
    cands = []
    if a.trunc_order is not None:
        cands.append(a.trunc_order + (vb if vb is not None else ZERO))
    if b.trunc_order is not None:
        cands.append(b.trunc_order + (va if va is not None else ZERO))
    trunc = min(cands) if cands else None
    prods = []
    for p, c in a.terms:
        for q, d in b.terms:
            if trunc is None or p + q < trunc:
                prods.append((p + q, c * d))
    return series(prods, trunc)


def series_pow(a: PuiseuxBranch, n: int) -> PuiseuxBranch:
    out = series([(0, 1)])
    for _ in range(n):
        out = series_mul(out, a)
    return out


def series_scale(a: PuiseuxBranch, c: CyclotomicNumber) -> PuiseuxBranch:
    return series([(p, c * d) for p, d in a.terms], a.trunc_order)


# ---------------------------------------------------------------------------
# polynomials


@dataclass(frozen=True)
class BivariatePolynomial:
    """Polynomial in x, y with cyclotomic coefficients, stored sparsely."""

    terms: Mapping[tuple[int, int], CyclotomicNumber] = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for (dx, dy), c in dict(self.terms).items():
            if not isinstance(c, CyclotomicNumber):
                c = Cyclo.rational(c)
            if dx < 0 or dy < 0:
                raise ValueError("negative degree")
            if not c.is_zero():
                clean[(int(dx), int(dy))] = c
        object.__setattr__(self, "terms", dict(sorted(clean.items())))

    @classmethod
    def from_terms(cls, items: Iterable[tuple[int, int, object]]) -> "BivariatePolynomial":
        acc: dict[tuple[int, int], CyclotomicNumber] = {}
        for dx, dy, c in items:
            c = c if isinstance(c, CyclotomicNumber) else Cyclo.rational(c)
            key = (dx, dy)
            acc[key] = acc[key] + c if key in acc else c
        return cls(acc)

    def is_zero(self) -> bool:
        return not self.terms

    @property
    def degree_y(self) -> int:
        return max((dy for _, dy in self.terms), default=0)

    @property
    def degree_x(self) -> int:
        return max((dx for dx, _ in self.terms), default=0)

    @property
    def total_degree(self) -> int:
        return max((dx + dy for dx, dy in self.terms), default=0)

    def multiplicity(self) -> int:
        return min((dx + dy for dx, dy in self.terms), default=0)

    def __add__(self, other: "BivariatePolynomial") -> "BivariatePolynomial":
        acc = dict(self.terms)
        for k, c in other.terms.items():
            acc[k] = acc[k] + c if k in acc else c
        return BivariatePolynomial(acc)

    def __mul__(self, other: "BivariatePolynomial") -> "BivariatePolynomial":
        acc: dict[tuple[int, int], CyclotomicNumber] = {}
        for (a, b), c in self.terms.items():
            for (d, e), g in other.terms.items():
                k = (a + d, b + e)
                v = c * g
                acc[k] = acc[k] + v if k in acc else v
        return BivariatePolynomial(acc)

    def __neg__(self):
        return BivariatePolynomial({k: -c for k, c in self.terms.items()})

    def partial_y(self) -> "BivariatePolynomial":
        return BivariatePolynomial({(dx, dy - 1): c * dy for (dx, dy), c in self.terms.items() if dy})

    def partial_x(self) -> "BivariatePolynomial":
        return BivariatePolynomial({(dx - 1, dy): c * dx for (dx, dy), c in self.terms.items() if dx})

    def swap(self) -> "BivariatePolynomial":
        return BivariatePolynomial({(dy, dx): c for (dx, dy), c in self.terms.items()})

    def coeffs_in_y(self) -> list[list[CyclotomicNumber]]:
        """a_j(x) as coefficient lists (low to high) for j = 0..deg_y."""
        out = [[] for _ in range(self.degree_y + 1)]
        for (dx, dy), c in self.terms.items():
            row = out[dy]
            while len(row) <= dx:
                row.append(Cyclo.zero())
            row[dx] = row[dx] + c
        return out

    def specialize_x(self, x0: CyclotomicNumber) -> list[CyclotomicNumber]:
        out = [Cyclo.zero() for _ in range(self.degree_y + 1)]
        for (dx, dy), c in self.terms.items():
            out[dy] = out[dy] + c * (x0 ** dx)
        return out

    def to_json(self) -> list[dict]:
        return [{"dx": dx, "dy": dy, "coeff": c.to_json()} for (dx, dy), c in self.terms.items()]

    @classmethod
    def from_json(cls, data) -> "BivariatePolynomial":
        if isinstance(data, Mapping) and "terms" in data:
            data = data["terms"]
        return cls.from_terms((int(t["dx"]), int(t["dy"]), Cyclo.from_json(t["coeff"])) for t in data)

    def __str__(self):
        if not self.terms:
            return "0"
        parts = []
        for (dx, dy), c in self.terms.items():
            mono = "*".join(s for s in (f"x^{dx}" if dx else "", f"y^{dy}" if dy else "") if s)
            parts.append(f"({c})" + (f"*{mono}" if mono else ""))
        return " + ".join(parts)


def poly(text_terms: Iterable[tuple[int, int, object]]) -> BivariatePolynomial:
    return BivariatePolynomial.from_terms(text_terms)


def poly_eval_on_branch(f: BivariatePolynomial, x_of_w: PuiseuxBranch, y_of_w: PuiseuxBranch,
                        certify: bool = True) -> PuiseuxBranch:
    """Substitute the arc (x(w), y(w)) into f.

    The returned series carries the certified truncation order.  With
    ``certify`` set, a result with no term below that order is an error.
    """
    xp = [series([(0, 1)])]
    for _ in range(f.degree_x):
        xp.append(series_mul(xp[-1], x_of_w))
    yp = [series([(0, 1)])]
    for _ in range(f.degree_y):
        yp.append(series_mul(yp[-1], y_of_w))
    total = series([])
    for (dx, dy), c in f.terms.items():
        total = series_add(total, series_scale(series_mul(xp[dx], yp[dy]), c))
    if certify and not total.terms:
        raise TruncationTooShort(f"f(arc) has no certified term below {total.trunc_order}")
    return total


def branch_parametrization(b: PuiseuxBranch) -> tuple[PuiseuxBranch, PuiseuxBranch]:
    """Arc (x(w), y(w)) with the base variable equal to w^N."""
    n = b.ramification
    base = series([(n, 1)])
    dep = series([(p * n, c) for p, c in b.terms], None if b.trunc_order is None else b.trunc_order * n)
    return (base, dep) if b.solve_for == "y" else (dep, base)


# ---------------------------------------------------------------------------
# univariate polynomials over Q(zeta), coefficient lists low -> high


def _trim(p: list[CyclotomicNumber]) -> list[CyclotomicNumber]:
    p = list(p)
    while p and p[-1].is_zero():
        p.pop()
    return p


def _deriv(p):
    return _trim([c * k for k, c in enumerate(p)][1:])


def _divmod(a, b):
    a = _trim(a)
    b = _trim(b)
    if not b:
        raise ZeroDivisionError("polynomial division by zero")
    q = [Cyclo.zero()] * max(len(a) - len(b) + 1, 1)
    inv_lead = b[-1].inverse()
    while a and len(a) >= len(b):
        shift = len(a) - len(b)
        k = a[-1] * inv_lead
        q[shift] = k
        for i, c in enumerate(b):
            a[i + shift] = a[i + shift] - k * c
        a = _trim(a)
    return _trim(q), a


def _gcd(a, b):
    a, b = _trim(a), _trim(b)
    while b:
        _, r = _divmod(a, b)
        a, b = b, r
    if not a:
        return a
    lead = a[-1].inverse()
    return [c * lead for c in a]


def _peval(p, u):
    acc = Cyclo.zero()
    for c in reversed(p):
        acc = acc * u + c
    return acc


# ---------------------------------------------------------------------------
# root recognition


def _mpc(c: CyclotomicNumber):
    z = mpmath.expjpi(mpmath.mpf(2) / c.order)
    acc = mpmath.mpc(0)
    pw = mpmath.mpc(1)
    for q in c.coeffs:
        if q:
            acc += mpmath.mpf(q.numerator) / q.denominator * pw
        pw *= z
    return acc


def _recognize_rational(x, tol) -> Fraction | None:
    cand = Fraction(mpmath.nstr(x, 45, min_fixed=-10**6, max_fixed=10**6)).limit_denominator(10**9)
    if abs(x - mpmath.mpf(cand.numerator) / cand.denominator) < tol:
        return cand
    return None


def _root_candidates(z, order: int, tol) -> list[CyclotomicNumber]:
    out = []
    r = abs(z)
    rq = _recognize_rational(r, tol)
    if rq is not None and rq > 0:
        turn = (mpmath.arg(z) / (2 * mpmath.pi)) % 1
        tq = Fraction(mpmath.nstr(turn, 45, min_fixed=-10**6, max_fixed=10**6)).limit_denominator(10**4)
        if abs(turn - mpmath.mpf(tq.numerator) / tq.denominator) < tol or abs(turn - 1) < tol:
            m = tq.denominator
            out.append(Cyclo.root_of_unity(m, tq.numerator) * rq)
    deg = len(Cyclo.one(order).coeffs)
    if order > 2 and deg == 2:
        zeta = mpmath.expjpi(mpmath.mpf(2) / order)
        b = z.imag / zeta.imag
        a = z.real - b * zeta.real
        aq, bq = _recognize_rational(a, tol), _recognize_rational(b, tol)
        if aq is not None and bq is not None:
            out.append(Cyclo(order, [aq, bq]))
    return out


def _common_order(cs: Iterable[CyclotomicNumber]) -> int:
    return reduce(_lcm, (c.order for c in cs), 1)


def cyclotomic_roots(p: Sequence[CyclotomicNumber]) -> list[tuple[CyclotomicNumber, int]]:
    """Nonzero roots (with multiplicity) of p, all of cyclotomic shape, or raise."""
    p = _trim(list(p))
    if len(p) <= 1:
        return []
    if len(p) == 2:
        return [(-p[0] / p[1], 1)]
    order = _common_order(p)
    g = _gcd(p, _deriv(p))
    sqfree, _ = _divmod(p, g) if len(g) > 1 else (p, [])
    roots: list[CyclotomicNumber] = []
    if len(sqfree) == 2:
        roots.append(-sqfree[0] / sqfree[1])
    else:
        with mpmath.workdps(60):
            coeffs = [_mpc(c) for c in reversed(sqfree)]
            try:
                approx = mpmath.polyroots(coeffs, maxsteps=400, extraprec=200)
            except mpmath.libmp.libhyper.NoConvergence as exc:
                raise FieldExtensionRequired(p, "root isolation failed") from exc
            tol = mpmath.mpf(10) ** -35
            for z in approx:
                found = None
                for cand in _root_candidates(z, order, tol):
                    if _peval(sqfree, cand).is_zero():
                        found = cand
                        break
                if found is None:
                    raise FieldExtensionRequired(sqfree)
                roots.append(found)
    out = []
    rest = p
    for u in roots:
        k = 0
        while True:
            q, r = _divmod(rest, [-u, Cyclo.one()])
            if r:
                break
            rest = q
            k += 1
        out.append((u, k))
    if len(rest) > 1:
        raise FieldExtensionRequired(rest)
    return out


def _nth_root_rational(q: Fraction, n: int) -> Fraction | None:
    num, ok1 = sympy.integer_nthroot(abs(q.numerator), n)
    den, ok2 = sympy.integer_nthroot(q.denominator, n)
    if ok1 and ok2:
        return Fraction(int(num), int(den))
    return None


def cyclotomic_nth_root(u: CyclotomicNumber, n: int) -> CyclotomicNumber:
    """Some c with c**n == u, provided u = (rational) * (root of unity)."""
    if n == 1:
        return u
    with mpmath.workdps(60):
        z = _mpc(u)
        tol = mpmath.mpf(10) ** -35
        r = _recognize_rational(abs(z), tol)
        turn = (mpmath.arg(z) / (2 * mpmath.pi)) % 1
        tq = Fraction(mpmath.nstr(turn, 45, min_fixed=-10**6, max_fixed=10**6)).limit_denominator(10**4)
    poly_ = [-u] + [Cyclo.zero()] * (n - 1) + [Cyclo.one()]
    if r is None or r <= 0:
        raise FieldExtensionRequired(poly_)
    root_r = _nth_root_rational(r, n)
    if root_r is None:
        raise FieldExtensionRequired(poly_)
    # among the n choices prefer the root of unity of smallest order
    turns = [(tq + j) / n for j in range(n)]
    best = min(turns, key=lambda t: (t.denominator, t.numerator))
    c = Cyclo.root_of_unity(best.denominator, best.numerator) * root_r
    if c ** n != u:
        raise FieldExtensionRequired(poly_)
    return c


# ---------------------------------------------------------------------------
# squarefree test


def _is_squarefree_univariate(p) -> bool:
    p = _trim(p)
    if len(p) <= 1:
        return True
    return len(_gcd(p, _deriv(p))) <= 1


def check_squarefree(f: BivariatePolynomial) -> None:
    """Exact test that f has no repeated factor; raises NotSquarefree."""
    rows = [_trim(r) for r in f.coeffs_in_y()]
    content: list[CyclotomicNumber] = []
    for r in rows:
        if r:
            content = _gcd(content, r) if content else _gcd(r, [])
    if not _is_squarefree_univariate(content):
        raise NotSquarefree("repeated factor depending on x only")
    d = f.degree_y
    if d <= 1:
        return
    lead = rows[d]
    budget = (2 * d - 1) * max(f.degree_x, 1) + 1
    tried = 0
    x0 = 0
    while tried < budget:
        xv = Cyclo.rational(x0)
        if not _peval(lead, xv).is_zero():
            tried += 1
            if _is_squarefree_univariate(f.specialize_x(xv)):
                return
        x0 = -x0 if x0 > 0 else -x0 + 1
    raise NotSquarefree("discriminant vanishes identically")


# ---------------------------------------------------------------------------
# Newton-Puiseux


def _shift(F: dict, c: CyclotomicNumber, gamma: Fraction) -> dict:
    """F(x, c x^gamma + y) for F stored as {(e, j): coeff}."""
    dmax = max(j for _, j in F)
    cp = [Cyclo.one()]
    for _ in range(dmax):
        cp.append(cp[-1] * c)
    out: dict = {}
    for (e, j), a in F.items():
        for k in range(j + 1):
            coef = a * cp[j - k] * math.comb(j, k)
            key = (e + (j - k) * gamma, k)
            out[key] = out[key] + coef if key in out else coef
    return {k: v for k, v in out.items() if not v.is_zero()}


def _lower_points(F: dict) -> dict[int, Fraction]:
    low: dict[int, Fraction] = {}
    for e, j in F:
        if j not in low or e < low[j]:
            low[j] = e
    return low


def _np_expand(F: dict, g0: Fraction, n0: int, prefix: tuple, T: Fraction, out: list) -> None:
    while True:
        low = _lower_points(F)
        jmin = min(low)
        wmin = min(e + g0 * j for j, e in low.items())
        m = min(j for j, e in low.items() if e + g0 * j == wmin)
        if m == 0:
            return
        if jmin >= 2:
            raise NotSquarefree("repeated root")
        if m == 1:
            if 0 not in low:
                out.append((prefix, n0, True))
                return
            e1, e0 = low[1], low[0]
            gamma = e0 - e1
            if gamma >= T:
                out.append((prefix, n0, False))
                return
            c = -F[(e0, 0)] / F[(e1, 1)]
            prefix = prefix + ((gamma, c),)
            F = _shift(F, c, gamma)
            g0 = gamma
            continue
        break
    if jmin == 1:
        out.append((prefix, n0, True))
    a = m
    while a > jmin:
        best = None
        for b, eb in low.items():
            if b >= a:
                continue
            slope = (eb - low[a]) / (a - b)
            if best is None or slope < best[0] or (slope == best[0] and b < best[1]):
                best = (slope, b)
        gamma, b = best
        const = low[a] + gamma * a
        q = gamma.denominator
        qq = q // math.gcd(q, n0)
        psi = [Cyclo.zero()] * ((a - b) // qq + 1)
        for j in range(b, a + 1):
            if j in low and low[j] + gamma * j == const:
                if (j - b) % qq:
                    raise AssertionError("edge lattice mismatch")
                psi[(j - b) // qq] = F[(low[j], j)]
        for u, _mult in cyclotomic_roots(psi):
            c = cyclotomic_nth_root(u, qq)
            _np_expand(_shift(F, c, gamma), gamma, n0 * qq, prefix + ((gamma, c),), T, out)
        a = b


def newton_puiseux(f: BivariatePolynomial, T) -> list[PuiseuxBranch]:
    """One representative per branch of f = 0 through the origin, as y(x), truncated at T."""
    T = Fraction(T)
    if T <= 0:
        raise ValueError("truncation order must be positive")
    if f.is_zero():
        raise ValueError("zero polynomial")
    check_squarefree(f)
    if f.degree_y == 0:
        return []
    F = {(Fraction(dx), dy): c for (dx, dy), c in f.terms.items()}
    raw: list = []
    _np_expand(F, ZERO, 1, (), T, raw)
    branches = []
    for prefix, n, exact in raw:
        terms = tuple((p, c) for p, c in prefix if p < T)
        branches.append(PuiseuxBranch(n, terms, T))
    branches.sort(key=PuiseuxBranch.sort_key)
    return branches


# ---------------------------------------------------------------------------
# sheets and contacts


def conjugates(b: PuiseuxBranch) -> list[PuiseuxBranch]:
    n = b.ramification
    out = []
    for k in range(n):
        terms = tuple((p, c * Cyclo.root_of_unity(n, k * int(p * n))) for p, c in b.terms)
        out.append(PuiseuxBranch(n, terms, b.trunc_order, b.solve_for))
    return out


def contact_exponent(s1: PuiseuxBranch, s2: PuiseuxBranch) -> Fraction:
    """First exponent where the two series differ (absent terms count as zero)."""
    trunc = _min_trunc(s1.trunc_order, s2.trunc_order)
    exps = sorted(set(s1.exponents) | set(s2.exponents))
    for p in exps:
        if trunc is not None and p >= trunc:
            break
        if s1.coeff(p) != s2.coeff(p):
            return p
    raise IndistinguishableAtTruncation(f"sheets agree below {trunc}")


@dataclass(frozen=True)
class ContactMatrix:
    entries: tuple[tuple[Fraction | None, ...], ...]
    sheet_labels: tuple[tuple[int, int], ...]

    @property
    def size(self) -> int:
        return len(self.entries)

    def __getitem__(self, jk: tuple[int, int]) -> Fraction:
        j, k = jk
        return self.entries[j][k]

    def values(self) -> list[Fraction]:
        return [self.entries[j][k] for j, k in combinations(range(self.size), 2)]

    def ultrametric_violations(self) -> list[tuple[int, int, int]]:
        bad = []
        for j, k, l in combinations(range(self.size), 3):
            vals = sorted([self[j, k], self[k, l], self[j, l]])
            if vals[0] != vals[1]:
                bad.append((j, k, l))
        return bad

    def is_ultrametric(self) -> bool:
        return not self.ultrametric_violations()

    def to_json(self) -> dict:
        return {
            "size": self.size,
            "labels": [list(l) for l in self.sheet_labels],
            "entries": [[None if v is None else format_rational(v) for v in row] for row in self.entries],
        }

    @classmethod
    def from_json(cls, data) -> "ContactMatrix":
        entries = tuple(tuple(None if v is None else parse_rational(v) for v in row) for row in data["entries"])
        labels = tuple(tuple(l) for l in data.get("labels", [[0, i] for i in range(len(entries))]))
        return cls(entries, labels)

    @classmethod
    def from_values(cls, size: int, value) -> "ContactMatrix":
        rows = [[None if j == k else Fraction(value(j, k)) for k in range(size)] for j in range(size)]
        return cls(tuple(tuple(r) for r in rows), tuple((0, i) for i in range(size)))


def all_sheets(branches: Sequence[PuiseuxBranch]) -> list[tuple[tuple[int, int], PuiseuxBranch]]:
    out = []
    for i, b in enumerate(branches):
        for k, s in enumerate(conjugates(b)):
            out.append(((i, k), s))
    return out


def contact_matrix(branches: Sequence[PuiseuxBranch]) -> ContactMatrix:
    sheets = all_sheets(branches)
    mu = len(sheets)
    rows: list[list[Fraction | None]] = [[None] * mu for _ in range(mu)]
    for j, k in combinations(range(mu), 2):
        q = contact_exponent(sheets[j][1], sheets[k][1])
        rows[j][k] = rows[k][j] = q
    return ContactMatrix(tuple(tuple(r) for r in rows), tuple(l for l, _ in sheets))


def characteristic_exponents(b: PuiseuxBranch) -> list[Fraction]:
    out = []
    n = 1
    for p, _ in b.terms:
        if n % p.denominator:
            out.append(p)
            n = _lcm(n, p.denominator)
    return out


def minimal_polynomial(b: PuiseuxBranch) -> BivariatePolynomial:
    """Product of (y - sheet) over the conjugate sheets, treating the terms as exact."""
    coeffs = [series([(0, 1)])]
    for s in conjugates(PuiseuxBranch(b.ramification, b.terms, None)):
        neg = series([(p, -c) for p, c in s.terms])
        nxt = [series([])] * (len(coeffs) + 1)
        for j, c in enumerate(coeffs):
            nxt[j + 1] = series_add(nxt[j + 1], c)
            nxt[j] = series_add(nxt[j], series_mul(neg, c))
        coeffs = nxt
    out = {}
    for j, c in enumerate(coeffs):
        for p, a in c.terms:
            if p.denominator != 1:
                raise ArithmeticError("conjugate product is not a polynomial")
            out[(int(p), j)] = a
    return BivariatePolynomial(out)


# ---------------------------------------------------------------------------
# coordinates


def is_generic(f: BivariatePolynomial) -> bool:
    """True when no branch of f = 0 is tangent to the y-axis."""
    if f.is_zero():
        return False
    m = f.multiplicity()
    return (0, m) in f.terms


def linear_change(f: BivariatePolynomial, alpha, beta) -> BivariatePolynomial:
    """f(x + alpha*y, y + beta*x)."""
    alpha = Cyclo.rational(alpha) if not isinstance(alpha, CyclotomicNumber) else alpha
    beta = Cyclo.rational(beta) if not isinstance(beta, CyclotomicNumber) else beta
    X = BivariatePolynomial({(1, 0): Cyclo.one(), (0, 1): alpha})
    Y = BivariatePolynomial({(0, 1): Cyclo.one(), (1, 0): beta})
    one = BivariatePolynomial({(0, 0): Cyclo.one()})
    xp, yp = [one], [one]
    for _ in range(f.degree_x):
        xp.append(xp[-1] * X)
    for _ in range(f.degree_y):
        yp.append(yp[-1] * Y)
    total = BivariatePolynomial({})
    for (dx, dy), c in f.terms.items():
        total = total + (xp[dx] * yp[dy]) * BivariatePolynomial({(0, 0): c})
    return total


def genericize(f: BivariatePolynomial, seed: int = 0, retries: int = 64) -> BivariatePolynomial:
    """Compose f with a small rational linear change making the y-axis transverse."""
    if f.is_zero():
        raise ValueError("zero polynomial")
    if is_generic(f):
        return f
    rng = random.Random(seed)
    for _ in range(retries):
        alpha = Fraction(rng.randint(-4, 4), rng.randint(1, 3))
        beta = Fraction(rng.randint(-4, 4), rng.randint(1, 3))
        if alpha * beta == 1:
            continue
        g = linear_change(f, alpha, beta)
        if is_generic(g):
            return g
    raise GenericityFailed(f"no transverse coordinates found in {retries} tries")
