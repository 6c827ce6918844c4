"""Double covers z^2 = f(x, y): discriminant branches, polar rates, Milnor numbers."""
from __future__ import annotations

import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .exactnum import CyclotomicNumber
from .puiseux import (
    BivariatePolynomial,
    PuiseuxBranch,
    TruncationTooShort,
    branch_parametrization,
    check_squarefree,
    conjugates,
    newton_puiseux,
    poly_eval_on_branch,
    series,
    series_add,
)

__all__ = [
    "SurfacePresentation",
    "PolarRateReport",
    "PreconditionViolated",
    "UnstableLeadingTerm",
    "CancellationDetected",
    "ArcInsideDiscriminant",
    "discriminant_branches",
    "polar_rate",
    "polar_rates",
    "q_of_r",
    "polar_rate_from_probe",
    "milnor_spreading",
    "hurwitz_branch_points",
    "hurwitz_branch_points_nested",
]


class PreconditionViolated(ValueError):
    pass


class UnstableLeadingTerm(ArithmeticError):
    pass


class CancellationDetected(ArithmeticError):
    pass


class ArcInsideDiscriminant(ValueError):
    pass


@dataclass(frozen=True)
class SurfacePresentation:
    """The germ z^2 = f(x, y); f must be reduced so the singularity is isolated."""

    f: BivariatePolynomial
    multiplicity_hint: int | None = None

    def __post_init__(self):
        if self.f.is_zero():
            raise ValueError("f must be nonzero")
        check_squarefree(self.f)


@dataclass(frozen=True)
class PolarRateReport:
    branch: int
    m: int
    b_prime: int
    s: Fraction
    r_prime_used: int
    stable: bool

    def as_row(self) -> dict:
        return {"branch": self.branch, "m": self.m, "b'": self.b_prime, "s": str(self.s),
                "r'": self.r_prime_used, "stable": self.stable}


def _has_vertical_component(f: BivariatePolynomial) -> bool:
    return all(dx > 0 for dx, _ in f.terms)


def discriminant_branches(X: SurfacePresentation, T) -> list[PuiseuxBranch]:
    """Branches of f = 0 at the origin; a component x = 0 is appended as an x-series."""
    T = Fraction(T)
    out = newton_puiseux(X.f, T)
    if _has_vertical_component(X.f):
        out.append(PuiseuxBranch(1, (), T, "x"))
    return out


def _arc(branch: PuiseuxBranch):
    """Parametrized arc, the order of the base variable, and which variable to perturb."""
    x, y = branch_parametrization(branch)
    ox = x.terms[0][0] if x.terms else None
    oy = y.terms[0][0] if y.terms else None
    if oy is None or (ox is not None and ox <= oy):
        return x, y, int(ox), "y"
    return x, y, int(oy), "x"


def _max_w_exponent(x: PuiseuxBranch, y: PuiseuxBranch) -> int:
    exps = [p for p, _ in x.terms] + [p for p, _ in y.terms]
    return int(max(exps)) if exps else 0


def _rematch(f: BivariatePolynomial, branch: PuiseuxBranch, T: Fraction) -> PuiseuxBranch:
    """Recompute ``branch`` to a longer truncation."""
    g = f if branch.solve_for == "y" else f.swap()
    cands = newton_puiseux(g, T)
    known = branch.trunc_order
    for c in cands:
        if c.ramification != branch.ramification:
            continue
        for s in conjugates(c):
            head = tuple(t for t in s.terms if known is None or t[0] < known)
            if head == branch.terms:
                return PuiseuxBranch(c.ramification, s.terms, s.trunc_order, branch.solve_for)
    raise ValueError("branch is not a branch of f")


def _leading_order(f, x, y, perturb: str, lam: Fraction, r: int):
    bump = series([(r, lam)])
    if perturb == "y":
        y = series_add(y, bump)
    else:
        x = series_add(x, bump)
    value = poly_eval_on_branch(f, x, y, certify=True)
    return int(value.terms[0][0])


def polar_rate(X: SurfacePresentation, branch: PuiseuxBranch, r_prime: int | None = None,
               branch_id: int = 0, seed: int = 0) -> PolarRateReport:
    """Rate s = b'/m read from f along the branch parametrization perturbed by lambda*w^r'."""
    f = X.f
    x, y, m, perturb = _arc(branch)
    bound = _max_w_exponent(x, y) + f.total_degree * m
    r = bound + 1 if r_prime is None else int(r_prime)
    if r < 1:
        raise PreconditionViolated("r' must be positive")
    rng = random.Random(seed)
    lams = []
    while len(lams) < 2:
        lam = Fraction(rng.randint(1, 9), rng.randint(1, 9)) * rng.choice((1, -1))
        if lam not in lams:
            lams.append(lam)
    work = branch
    for _attempt in range(6):
        x, y, m, perturb = _arc(work)
        try:
            orders = {}
            for rr in (r, r + 1):
                orders[rr] = [_leading_order(f, x, y, perturb, lam, rr) - rr for lam in lams]
            break
        except TruncationTooShort:
            n = work.ramification
            need = Fraction(2 * (r + 2) + f.total_degree * m, n)
            if work.trunc_order is not None and need <= work.trunc_order:
                need = 2 * work.trunc_order
            work = _rematch(f, work, need)
    else:  # pragma: no cover - defensive
        raise TruncationTooShort("could not certify the leading term")
    first = orders[r]
    if first[0] != first[1]:
        raise CancellationDetected(f"leading order depends on lambda: {first}")
    second = orders[r + 1]
    if second[0] != second[1]:
        raise CancellationDetected(f"leading order depends on lambda: {second}")
    if first[0] != second[0]:
        raise UnstableLeadingTerm(f"b' = {first[0]} at r' = {r} but {second[0]} at r' = {r + 1}")
    b = first[0]
    return PolarRateReport(branch_id, m, b, Fraction(b, m), r, True)


def polar_rates(X: SurfacePresentation, T=Fraction(4), seed: int = 0) -> list[PolarRateReport]:
    return [polar_rate(X, b, branch_id=i, seed=seed) for i, b in enumerate(discriminant_branches(X, T))]


def q_of_r(s, r) -> Fraction:
    s, r = Fraction(s), Fraction(r)
    if r < s:
        raise PreconditionViolated(f"need r >= s, got r={r}, s={s}")
    return (s + r) / 2


def polar_rate_from_probe(r0, q_r0) -> Fraction:
    """Invert q(r0) = (s + r0)/2."""
    r0, q_r0 = Fraction(r0), Fraction(q_r0)
    if q_r0 > r0:
        raise PreconditionViolated(f"need q(r0) <= r0, got {q_r0} > {r0}")
    return 2 * q_r0 - r0


def milnor_spreading(X: SurfacePresentation, arc: tuple[PuiseuxBranch, PuiseuxBranch]) -> int:
    """Milnor number of the plane curve z^2 = f(x(w), y(w))."""
    x, y = arc
    for s in (x, y):
        if any(p.denominator != 1 for p, _ in s.terms):
            raise PreconditionViolated("arc exponents must be integers")
    try:
        value = poly_eval_on_branch(X.f, x, y, certify=True)
    except TruncationTooShort as exc:
        raise ArcInsideDiscriminant("f vanishes along the arc") from exc
    order = int(value.terms[0][0])
    mult = 2
    return order - mult + 1


def hurwitz_branch_points(n: int, chi: int) -> int:
    return n - chi


def hurwitz_branch_points_nested(m: int, s: int, chi: int, m_js: Sequence[int]) -> int:
    if len(m_js) != s:
        raise PreconditionViolated(f"expected {s} boundary degrees, got {len(m_js)}")
    if any(mj > m or mj < 1 for mj in m_js):
        raise PreconditionViolated("boundary degrees must lie in 1..m")
    return m * (1 - s) - chi + sum(m - mj for mj in m_js)


def arc(x_terms, y_terms) -> tuple[PuiseuxBranch, PuiseuxBranch]:
    """Exact arc from (exponent, coefficient) lists."""
    return series(x_terms), series(y_terms)
