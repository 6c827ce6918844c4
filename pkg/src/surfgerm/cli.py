"""Command-line front end and the built-in verification corpus."""
from __future__ import annotations

import argparse
import json
import os
import random
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Mapping, Sequence

from .carrousel import (
    CURVE,
    POLAR,
    WEDGE,
    CarrouselTree,
    MissingPolarRate,
    NonGenericCoordinates,
    Piece,
    UltrametricViolation,
    amalgamate,
    build_unamalgamated,
    complete_carrousel,
    intermediate_carrousel,
    plain_carrousel,
    reconstruct_from_contacts,
    refines,
    section_tree,
    tree_isomorphic,
    tree_violations,
)
from .exactnum import CyclotomicNumber, parse_rational
from .puiseux import (
    BivariatePolynomial,
    FieldExtensionRequired,
    GenericityFailed,
    NotSquarefree,
    PuiseuxBranch,
    branch_parametrization,
    conjugates,
    contact_matrix,
    genericize,
    linear_change,
    minimal_polynomial,
    newton_puiseux,
    poly,
    poly_eval_on_branch,
    series,
)
from .render import emit_dot, emit_png, emit_svg, layout_section
from .resolution import (
    MissingRate,
    NonEffectiveSolution,
    NonIntegralSolution,
    NotNegativeDefinite,
    RateConflict,
    ResolutionGraph,
    classify_nodes,
    geometric_decomposition,
    intersection_matrix,
    multiplicity,
    solve_total_transform,
)
from .surface import (
    CancellationDetected,
    PreconditionViolated,
    SurfacePresentation,
    UnstableLeadingTerm,
    arc,
    discriminant_branches,
    hurwitz_branch_points,
    hurwitz_branch_points_nested,
    milnor_spreading,
    polar_rate,
    polar_rate_from_probe,
    q_of_r,
)

EXIT_OK = 0
EXIT_INVARIANT = 1
EXIT_FIELD = 2
EXIT_INPUT = 3

DEFAULT_SEED = 0
SEED_ENV = "CARROUSEL_SEED"


class BadInput(ValueError):
    pass


# ---------------------------------------------------------------------------
# file formats


def _coeff(c) -> CyclotomicNumber:
    if isinstance(c, Mapping):
        return CyclotomicNumber.from_json(c)
    return CyclotomicNumber.rational(parse_rational(c))


def parse_poly(data) -> BivariatePolynomial:
    """Terms as {"dx", "dy", "coeff"} objects or [dx, dy, coeff] triples."""
    if isinstance(data, Mapping):
        data = data.get("terms", data.get("f"))
    if not isinstance(data, list):
        raise BadInput("polynomial must be a list of terms")
    out = []
    for t in data:
        if isinstance(t, Mapping):
            out.append((int(t["dx"]), int(t["dy"]), _coeff(t["coeff"])))
        else:
            dx, dy, c = t
            out.append((int(dx), int(dy), _coeff(c)))
    f = poly(out)
    if f.is_zero():
        raise BadInput("polynomial is zero")
    return f


def poly_to_json(f: BivariatePolynomial) -> dict:
    return {"terms": f.to_json()}


def _branch_from_json(d) -> PuiseuxBranch:
    terms = []
    for t in d["terms"]:
        if isinstance(t, Mapping):
            terms.append({"exp": t["exp"], "coeff": _coeff(t["coeff"]).to_json()})
        else:
            terms.append({"exp": t[0], "coeff": _coeff(t[1]).to_json()})
    return PuiseuxBranch.from_json({**d, "terms": terms})


def parse_branches(data) -> list[PuiseuxBranch]:
    if isinstance(data, Mapping):
        data = data.get("branches")
    if not isinstance(data, list):
        raise BadInput("expected a list of branches")
    return [_branch_from_json(b) for b in data]


def branches_to_json(bs: Sequence[PuiseuxBranch]) -> dict:
    return {"branches": [b.to_json() for b in bs]}


def parse_rates(data) -> dict:
    if not isinstance(data, Mapping):
        raise BadInput("rates must be an object")
    out = {}
    for k, v in data.items():
        key = int(k) if isinstance(k, str) and k.lstrip("-").isdigit() else k
        out[key] = parse_rational(v)
    return out


def _load(path: str):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise BadInput(f"{path}: {exc}") from exc


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


# ---------------------------------------------------------------------------
# fixtures

F = Fraction
D5_POLY = poly([(2, 1, 1), (0, 4, 1)])
A1_POLY = poly([(1, 1, 1)])
CUSP_POLY = poly([(0, 2, 1), (3, 0, -1)])
SQRT2_POLY = poly([(0, 2, 1), (2, 0, -2)])


def two_branch_family() -> list[PuiseuxBranch]:
    return [series([(F(4, 3), 1), (F(13, 6), 1)]), series([(F(7, 4), 1)])]


def d5_generic_branches(T=4) -> list[PuiseuxBranch]:
    return newton_puiseux(linear_change(D5_POLY, 1, 0), T)


def fourteen_branch_family() -> tuple[list[PuiseuxBranch], dict[int, Fraction]]:
    """Tangent lines y = a x; polar rates supplied as data."""
    bs = [series([(1, a)]) for a in range(1, 7)]
    bs += [series([(1, a), (F(3, 2), 1)]) for a in range(7, 12)]
    bs += [series([(1, 12), (F(6, 5), 1)]), series([(1, 12), (F(6, 5), 2)]), series([(1, 12), (F(5, 4), 1)])]
    rates = {i: F(1) for i in range(6)}
    rates.update({i: F(3, 2) for i in range(6, 11)})
    rates.update({11: F(7, 5), 12: F(7, 5), 13: F(5, 4)})
    return bs, rates


def d5_graph() -> ResolutionGraph:
    return ResolutionGraph.build([{"euler": -2}] * 5, [(0, 1), (1, 2), (2, 3), (4, 1)], {"h": {2: 1}})


def d5_resolved_graph() -> ResolutionGraph:
    eul = [-2, -3, -2, -2, -2, -1]
    return ResolutionGraph.build([{"euler": e} for e in eul], [(0, 1), (1, 2), (2, 3), (4, 1), (1, 5)],
                                 {"h": {2: 1}, "polar": {3: 1, 5: 1}})


D5_RESOLVED_RATES = {"v1": F(3, 2), "v2": F(3, 2), "v3": F(1), "v4": F(2), "v5": F(3, 2), "v6": F(5, 2)}

# total transforms on the minimal D5 graph
D5_CYCLES = {
    "h": (1, 2, 2, 1, 1),
    "x": (2, 3, 2, 1, 2),
    "y": (1, 2, 2, 2, 1),
    "z": (2, 4, 3, 2, 2),
    "f_x": (3, 5, 4, 3, 3),
    "f_y": (3, 6, 4, 2, 3),
    "f_z": (2, 4, 3, 2, 2),
}


def fourteen_branch_graph() -> ResolutionGraph:
    names = "a b c d e L R m1 m2 m3 m4 m5".split()
    eul = [-2, -1, -5, -1, -2, -23, -23] + [-1] * 5
    mids = [f"m{i}" for i in range(1, 6)]
    edges = [("a", "b"), ("b", "c"), ("c", "d"), ("d", "e"), ("b", "L"), ("d", "R")]
    edges += [("L", m) for m in mids] + [(m, "R") for m in mids]
    polar = {"a": 1, "c": 1, "e": 1, "L": 3, "R": 3, **{m: 1 for m in mids}}
    return ResolutionGraph.build([{"euler": e, "name": n} for e, n in zip(eul, names)], edges,
                                 {"h": {"L": 3, "R": 3}, "polar": polar})


FOURTEEN_RATES = {"a": F(7, 5), "e": F(7, 5), "b": F(6, 5), "d": F(6, 5), "c": F(5, 4), "L": F(1), "R": F(1),
                  **{f"m{i}": F(3, 2) for i in range(1, 6)}}
FOURTEEN_H_CYCLE = {"a": 5, "b": 10, "c": 4, "d": 10, "e": 5, "L": 1, "R": 1,
                    **{f"m{i}": 2 for i in range(1, 6)}}


def shape(kind: str, rate, *kids: Piece, flags=()) -> Piece:
    """Hand-built tree node for expected shapes."""
    rates = tuple(Fraction(r) for r in (rate if isinstance(rate, tuple) else (rate,)))
    return Piece(kind, rates, frozenset(), frozenset(flags), tuple(kids))


def two_branch_expected_section() -> Piece:
    pair = [shape("B", F(13, 6), shape("D", F(13, 6)), shape("D", F(13, 6))) for _ in range(3)]
    four = shape("B", F(7, 4), *[shape("D", F(7, 4)) for _ in range(4)])
    return shape("CONE", 1, shape("B", F(4, 3), *pair, four))


def d5_expected_complete() -> Piece:
    w = (CURVE, WEDGE, POLAR)
    cusp = shape("A", (F(3, 2), F(5, 2)), shape("D", F(5, 2), flags=w))
    return shape("CONE", 1, shape("A", (1, 2), shape("D", 2, flags=w)),
                 shape("A", (1, F(3, 2)), shape("B", F(3, 2), cusp, cusp)))


# ---------------------------------------------------------------------------
# random generators shared with the test-suite

_COEFFS = (F(1), F(-1), F(2), F(-2), F(1, 2), F(3), F(-1, 3))


def random_branch_family(rng: random.Random, max_branches: int = 4, max_exp: int = 4,
                         max_den: int = 6) -> list[PuiseuxBranch]:
    """Distinct exact branches with exponents in [1, max_exp]; later branches often share a prefix."""
    count = rng.randint(1, max_branches)
    out: list[PuiseuxBranch] = []
    while len(out) < count:
        n = rng.randint(1, max_den)
        pool = sorted({F(k, n) for k in range(n, max_exp * n + 1)})
        terms: list[tuple[Fraction, Fraction]] = []
        floor = F(0)
        if out and rng.random() < 0.6:
            base = rng.choice(out)
            cut = rng.choice(pool)
            terms = [(p, c.to_rational()) for p, c in base.terms if p < cut]
            floor = cut
        extra = [p for p in pool if p >= floor]
        for p in sorted(rng.sample(extra, min(len(extra), rng.randint(1, 3)))):
            if all(p != q for q, _ in terms):
                terms.append((p, rng.choice(_COEFFS)))
        b = series(sorted(terms))
        if not b.terms:
            continue
        if any(c == b for o in out for c in conjugates(o)):
            continue
        out.append(b)
    return out


def random_squarefree_poly(rng: random.Random, max_deg_y: int = 5) -> BivariatePolynomial:
    """Product of minimal polynomials of distinct random branches."""
    i = CyclotomicNumber.root_of_unity(4, 1)
    while True:
        factors, deg, seen = [], 0, []
        while True:
            n = rng.choice((1, 1, 2, 3))
            exps = sorted({F(rng.randint(n, 3 * n), n) for _ in range(rng.randint(1, 2))})
            terms = []
            for e in exps:
                c = CyclotomicNumber.rational(rng.choice(_COEFFS))
                if n == 1 and rng.random() < 0.15:
                    c = c * i
                terms.append((e, c))
            b = series(terms)
            if deg + b.ramification > max_deg_y:
                break
            if any(c == b for o in seen for c in conjugates(o)):
                continue
            seen.append(b)
            factors.append(minimal_polynomial(b))
            deg += b.ramification
        if not factors:
            continue
        f = factors[0]
        for g in factors[1:]:
            f = f * g
        return f


def newton_number(support: Sequence[tuple[int, int]]) -> int:
    """Kouchnirenko's number 2V - a - b + 1 for a convenient nondegenerate germ."""
    pts = sorted(set(support))
    a = min(i for i, j in pts if j == 0)
    b = min(j for i, j in pts if i == 0)
    hull: list[tuple[int, int]] = []
    for p in sorted(pts):
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            if (x2 - x1) * (p[1] - y1) - (y2 - y1) * (p[0] - x1) <= 0:
                hull.pop()
            else:
                break
        hull.append(p)
    lower = [p for p in hull if p[0] <= a]
    lower = [(0, b)] + [p for p in lower if p[0] > 0 and p[1] > 0] + [(a, 0)]
    area2 = 0
    poly_pts = [(0, 0)] + lower[::-1]
    for (x1, y1), (x2, y2) in zip(poly_pts, poly_pts[1:] + poly_pts[:1]):
        area2 += x1 * y2 - x2 * y1
    return abs(area2) - a - b + 1


# ---------------------------------------------------------------------------
# commands


def _polar_row(args) -> dict:
    f_json, b_json, seed, i = args
    X = SurfacePresentation(BivariatePolynomial.from_json(f_json))
    b = PuiseuxBranch.from_json(b_json)
    return polar_rate(X, b, branch_id=i, seed=seed).as_row()


def compute_polar_rates(f: BivariatePolynomial, branches: Sequence[PuiseuxBranch] | None = None,
                        T=3, seed: int = DEFAULT_SEED, jobs: int = 1) -> list[dict]:
    X = SurfacePresentation(f)
    bs = list(branches) if branches is not None else discriminant_branches(X, T)
    if jobs > 1 and len(bs) > 1:
        work = [(f.to_json(), b.to_json(), seed, i) for i, b in enumerate(bs)]
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            rows = list(ex.map(_polar_row, work))
    else:
        rows = [polar_rate(X, b, branch_id=i, seed=seed).as_row() for i, b in enumerate(bs)]
    for row, b in zip(rows, bs):
        row["branch_series"] = str(b)
    return rows


def generic_branches(f: BivariatePolynomial, T, seed: int = DEFAULT_SEED, attempts: int = 32):
    """Branches of f in transverse coordinates, retrying changes whose expansion leaves the field."""
    last: Exception | None = None
    for k in range(attempts):
        g = genericize(f, seed=seed * attempts + k)
        try:
            return g, newton_puiseux(g, T)
        except FieldExtensionRequired as exc:
            last = exc
            if g == f:
                break
    assert last is not None
    raise last


def cmd_branches(args) -> str:
    f = parse_poly(_load(args.poly))
    T = parse_rational(args.trunc)
    if args.genericize:
        g, bs = generic_branches(f, T, args.seed)
        out = branches_to_json(bs)
        out["polynomial"] = poly_to_json(g)
        return _dumps(out)
    return _dumps(branches_to_json(newton_puiseux(f, T)))


def _build_tree(branches, mode: str, rates) -> CarrouselTree:
    if mode == "plain":
        return plain_carrousel(branches)
    if rates is None:
        raise MissingPolarRate(f"{mode} mode needs --polar-rates")
    if mode == "intermediate":
        return intermediate_carrousel(branches, rates)
    return complete_carrousel(branches, rates)


def cmd_carrousel(args) -> str:
    bs = parse_branches(_load(args.branches))
    rates = parse_rates(_load(args.polar_rates)) if args.polar_rates else None
    tree = _build_tree(bs, args.mode, rates)
    bad = tree_violations(tree)
    if bad:
        raise AssertionError("; ".join(bad))
    if args.svg or args.png:
        layout = layout_section(tree)
        if args.svg:
            with open(args.svg, "w", encoding="utf-8") as fh:
                fh.write(emit_svg(layout, fill_delta=args.fill_delta, labels=args.labels))
        if args.png:
            emit_png(layout, args.png, fill_delta=args.fill_delta, labels=args.labels)
    if args.dot:
        with open(args.dot, "w", encoding="utf-8") as fh:
            fh.write(emit_dot(tree))
    return _dumps({"mode": args.mode, "tree": tree.to_json()})


def cmd_contacts(args) -> str:
    bs = parse_branches(_load(args.branches))
    m = contact_matrix(bs)
    if args.reconstruct:
        return _dumps({"tree": reconstruct_from_contacts(m).to_json()})
    return _dumps(m.to_json())


def cmd_polar_rates(args) -> str:
    f = parse_poly(_load(args.poly))
    overrides = parse_branches(_load(args.branches)) if args.branches else None
    rows = compute_polar_rates(f, overrides, parse_rational(args.trunc), args.seed, args.jobs)
    return _dumps({"reports": rows})


def cmd_resolution(args) -> str:
    g = ResolutionGraph.from_json(_load(args.graph))
    out: dict = {}
    if args.solve:
        out["cycle"] = dict(zip(g.names, solve_total_transform(g, args.solve)))
    if args.mult:
        cyc, mu = multiplicity(g)
        out["cycle"] = dict(zip(g.names, cyc))
        out["multiplicity"] = mu
    if args.classify:
        out["classification"] = classify_nodes(g).to_json(g.names)
    rates = None
    if args.decompose:
        rates = parse_rates(_load(args.decompose))
        used, pieces = geometric_decomposition(g, rates)
        out["pieces"] = [p.to_json(used.names) for p in pieces]
        if used.synthetic:
            out["synthetic_vertices"] = [used.names[v] for v in sorted(used.synthetic)]
    if args.dot:
        with open(args.dot, "w", encoding="utf-8") as fh:
            fh.write(emit_dot(g, rates=rates))
    if not out:
        raise BadInput("choose at least one of --solve, --mult, --classify, --decompose")
    return _dumps(out)


# ---------------------------------------------------------------------------
# verification corpus


class CaseFailure(AssertionError):
    pass


def _expect(cond: bool, msg: str) -> None:
    if not cond:
        raise CaseFailure(msg)


@dataclass(frozen=True)
class FixtureCase:
    name: str
    criterion: int | None
    check: str
    expected: Mapping = field(default_factory=dict)
    provenance: str = ""


def _fr(x) -> Fraction:
    return parse_rational(x)


def _chk_d5_polar(case, rng) -> str:
    rows = compute_polar_rates(D5_POLY, seed=rng.randrange(2**31))
    bs = discriminant_branches(SurfacePresentation(D5_POLY), 3)
    got = {}
    for row, b in zip(rows, bs):
        key = "cusp" if b.ramification > 1 else "smooth"
        got[key] = _fr(row["s"])
        _expect(row["stable"], f"branch {row['branch']} unstable")
    want = {k: _fr(v) for k, v in case.expected.items()}
    _expect(got == want, f"rates {got} != {want}")
    return " ".join(f"{k}={v}" for k, v in sorted(got.items()))


def _chk_d5_h(case, rng) -> str:
    cyc, mu = multiplicity(d5_graph())
    _expect(tuple(cyc) == tuple(case.expected["cycle"]), f"cycle {tuple(cyc)}")
    _expect(mu == case.expected["multiplicity"], f"multiplicity {mu}")
    return f"cycle={tuple(cyc)} multiplicity={mu}"


def _chk_d5_cycles(case, rng) -> str:
    g = d5_graph()
    M = intersection_matrix(g)
    for name, m in sorted(case.expected.items()):
        a = [-sum(M[i][j] * m[j] for j in range(g.size)) for i in range(g.size)]
        _expect(all(x >= 0 for x in a), f"{name}: arrow vector {a} has a negative entry")
        got = tuple(solve_total_transform(g, a))
        _expect(got == tuple(m), f"{name}: solved {got} != {tuple(m)}")
    return f"{len(case.expected)} cycles round-trip"


def _count_b_with_leaves(root: Piece, rate: Fraction, leaves: int) -> int:
    return sum(1 for p in root.walk()
               if p.kind == "B" and p.rate == rate and len(p.children) == leaves
               and all(c.kind == "D" and not c.children for c in p.children))


def _chk_two_branch(case, rng) -> str:
    bs = two_branch_family()
    plain = plain_carrousel(bs)
    sec = section_tree(plain)
    exp = case.expected
    _expect(sec.kind == "CONE" and sec.rate == 1, "root is not B(1)")
    _expect(sum(1 for p in sec.walk() if p.kind == "B" and p.rate == F(4, 3)) == exp["B(4/3)"], "B(4/3) count")
    _expect(_count_b_with_leaves(sec, F(13, 6), 2) == exp["B(13/6)x2"], "B(13/6) pairs")
    _expect(_count_b_with_leaves(sec, F(7, 4), 4) == exp["B(7/4)x4"], "B(7/4) quadruple")
    _expect(tree_isomorphic(sec, two_branch_expected_section()), "section differs from the expected tree")
    stripped = amalgamate(build_unamalgamated(bs), ("merge-empty-D",))
    _expect(tree_isomorphic(section_tree(stripped), sec), "empty-disk removal differs from plain section")
    empties = build_unamalgamated(bs).root.count(lambda p: p.is_empty_disk)
    _expect(empties == exp["empty_disks"], f"{empties} empty disks")
    return f"B(4/3)=1 B(13/6)x2=3 B(7/4)x4=1 empty_disks={empties}"


def _families(seed_rng: random.Random, count: int):
    fams = [("two-branch", two_branch_family()), ("d5-generic", d5_generic_branches())]
    for k in range(count):
        fams.append((f"random-{k}", random_branch_family(seed_rng)))
    return fams


def _chk_reconstruct(case, rng) -> str:
    fams = _families(rng, case.expected["random_families"])
    fails = []
    for name, bs in fams:
        if not tree_isomorphic(reconstruct_from_contacts(contact_matrix(bs)), section_tree(plain_carrousel(bs))):
            fails.append(name)
    _expect(len(fails) == case.expected["failures"], f"mismatches: {fails[:5]}")
    return f"{len(fams)} families, {len(fails)} failures"


def _chk_ultrametric(case, rng) -> str:
    fams = _families(rng, case.expected["random_families"])
    bad = [name for name, bs in fams if not contact_matrix(bs).is_ultrametric()]
    _expect(not bad, f"non-ultrametric: {bad[:5]}")
    return f"{len(fams)} matrices ultrametric"


def _chk_d5_carrousels(case, rng) -> str:
    rows = compute_polar_rates(D5_POLY, seed=rng.randrange(2**31))
    by_kind = {}
    for row, b in zip(rows, discriminant_branches(SurfacePresentation(D5_POLY), 3)):
        by_kind["cusp" if b.ramification > 1 else "smooth"] = _fr(row["s"])
    bs = d5_generic_branches()
    rates = {i: by_kind["cusp" if b.ramification > 1 else "smooth"] for i, b in enumerate(bs)}
    inter = intermediate_carrousel(bs, rates)
    comp = complete_carrousel(bs, rates)
    _expect(tree_isomorphic(inter, comp), "intermediate and complete differ")
    _expect(tree_isomorphic(comp, d5_expected_complete()), "complete differs from the expected tree")
    _expect(refines(comp, plain_carrousel(bs)), "complete does not refine plain")
    wedges = {}

    def walk(p: Piece, outer: Fraction):
        for c in p.children:
            if c.kind == "D" and WEDGE in c.flags:
                key = (str(c.rate), str(outer))
                wedges[key] = wedges.get(key, 0) + 1
            walk(c, c.rate if c.kind == "B" else outer)

    walk(comp.root, F(1))
    want = {tuple(k.split("@")): v for k, v in case.expected["wedges"].items()}
    _expect(wedges == want, f"wedges {wedges}")
    return " ".join(f"D({r})x{n} in region {o}" for (r, o), n in sorted(wedges.items()))


def _chk_fourteen(case, rng) -> str:
    bs, rates = fourteen_branch_family()
    comp = complete_carrousel(bs, rates)
    root = comp.root
    exp = case.expected
    _expect(root.kind == "CONE", "root is not conical")
    _expect(_count_b_with_leaves(root, F(3, 2), 2) == exp["B(3/2)x2"], "B(3/2) pairs")
    _expect(_count_b_with_leaves(root, F(5, 4), 4) == exp["B(5/4)x4"], "B(5/4) quadruple")
    w75 = {tuple(sorted(p.branches)) for p in root.walk() if p.kind == "D" and WEDGE in p.flags and p.rate == F(7, 5)}
    _expect(len(w75) == exp["7/5 wedge branches"], f"7/5 wedges on {w75}")
    b65 = [p for p in root.walk() if p.kind == "B" and p.rate == F(6, 5)]
    _expect(len(b65) == 1 and len(b65[0].branches) == exp["6/5 branches"], "B(6/5) structure")
    return f"B(3/2)x2=5 B(5/4)x4=1 7/5-wedge branches={len(w75)} B(6/5) branches={len(b65[0].branches)}"


def _chk_hurwitz(case, rng) -> str:
    _expect(hurwitz_branch_points(2, 1) == case.expected["d5_inner"], "D5 inner disk count")
    for _ in range(case.expected["random_pairs"]):
        m, chi = rng.randint(1, 50), rng.randint(-50, 2)
        _expect(hurwitz_branch_points_nested(m, 0, chi, []) == hurwitz_branch_points(m, chi), f"({m},{chi})")
    return f"inner=1, {case.expected['random_pairs']} nested reductions agree"


def _chk_newton_puiseux(case, rng) -> str:
    n = case.expected["random_polys"]
    total = 0
    for k in range(n):
        f = random_squarefree_poly(rng)
        bs = newton_puiseux(f, 3)
        _expect(sum(b.ramification for b in bs) == f.degree_y, f"poly {k}: sheet count")
        for b in bs:
            x, y = branch_parametrization(b)
            r = poly_eval_on_branch(f, x, y, certify=False)
            _expect(not r.terms, f"poly {k}: residual {r}")
        total += len(bs)
    try:
        newton_puiseux(SQRT2_POLY, 3)
    except FieldExtensionRequired:
        pass
    else:
        raise CaseFailure("sqrt(2) fixture did not raise")
    return f"{n} polynomials, {total} branches verified; sqrt(2) raises"


def _chk_milnor(case, rng) -> str:
    lam = F(rng.randint(1, 9), rng.randint(1, 9))
    X = SurfacePresentation(D5_POLY)
    mu = milnor_spreading(X, arc([(1, 1)], [(2, lam)]))
    # z^2 - f(w, lam w^2) = z^2 - lam w^4 - lam^4 w^8
    oracle = newton_number([(0, 2), (4, 0), (8, 0)])
    _expect(mu == case.expected["mu"] == oracle, f"mu={mu}, oracle={oracle}")
    return f"mu={mu} newton-number={oracle}"


def _chk_probe(case, rng) -> str:
    n = case.expected["pairs"]
    for _ in range(n):
        s = F(rng.randint(1, 40), rng.randint(1, 12)) + 1
        r0 = s + F(rng.randint(0, 40), rng.randint(1, 12))
        _expect(polar_rate_from_probe(r0, q_of_r(s, r0)) == s, f"s={s}, r0={r0}")
    return f"{n} pairs exact"


def _chk_classify(case, rng) -> str:
    g = d5_resolved_graph()
    c = classify_nodes(g)
    got = {"l_nodes": sorted(g.names[v] for v in c.l_nodes), "p_nodes": sorted(g.names[v] for v in c.p_nodes),
           "nodes": sorted(g.names[v] for v in c.nodes)}
    _expect(got == case.expected, f"{got}")
    used, pieces = geometric_decomposition(g, D5_RESOLVED_RATES)
    labels = sorted(p.label(used.names) for p in pieces if p.kind == "B")
    return f"L={got['l_nodes']} P={got['p_nodes']} pieces={len(pieces)} B-pieces: " + "; ".join(labels)


def _chk_fourteen_graph(case, rng) -> str:
    g = fourteen_branch_graph()
    cyc, mu = multiplicity(g)
    got = dict(zip(g.names, cyc))
    _expect(got == dict(case.expected["cycle"]), f"cycle {got}")
    _expect(mu == case.expected["multiplicity"], f"multiplicity {mu}")
    used, pieces = geometric_decomposition(g, FOURTEEN_RATES)
    _expect(len(pieces) == case.expected["pieces"], f"{len(pieces)} pieces")
    return f"multiplicity={mu} pieces={len(pieces)}"


CHECKS: dict[str, Callable] = {
    "d5_polar": _chk_d5_polar,
    "d5_h": _chk_d5_h,
    "d5_cycles": _chk_d5_cycles,
    "two_branch": _chk_two_branch,
    "reconstruct": _chk_reconstruct,
    "ultrametric": _chk_ultrametric,
    "d5_carrousels": _chk_d5_carrousels,
    "fourteen": _chk_fourteen,
    "hurwitz": _chk_hurwitz,
    "newton_puiseux": _chk_newton_puiseux,
    "milnor": _chk_milnor,
    "probe": _chk_probe,
    "classify": _chk_classify,
    "fourteen_graph": _chk_fourteen_graph,
}


def corpus() -> list[FixtureCase]:
    pub = "published worked example"
    return [
        FixtureCase("d5-polar-rates", 1, "d5_polar", {"smooth": "2", "cusp": "5/2"}, pub),
        FixtureCase("d5-hyperplane-cycle", 2, "d5_h", {"cycle": (1, 2, 2, 1, 1), "multiplicity": 2},
                    pub + "; multiplicity derived as m(v3)"),
        FixtureCase("d5-coordinate-cycles", 3, "d5_cycles", {k: v for k, v in D5_CYCLES.items() if k != "h"}, pub),
        FixtureCase("two-branch-plain-section", 4, "two_branch",
                    {"B(4/3)": 1, "B(13/6)x2": 3, "B(7/4)x4": 1, "empty_disks": 4}, pub),
        FixtureCase("contact-reconstruction", 5, "reconstruct", {"random_families": 200, "failures": 0},
                    "oracle: plain carrousel section"),
        FixtureCase("contact-ultrametric", 6, "ultrametric", {"random_families": 200},
                    "oracle: triple-minimum test"),
        FixtureCase("d5-intermediate-complete", 7, "d5_carrousels",
                    {"wedges": {"5/2@3/2": 2, "2@1": 1}}, pub),
        FixtureCase("fourteen-branch-complete", 8, "fourteen",
                    {"B(3/2)x2": 5, "B(5/4)x4": 1, "7/5 wedge branches": 2, "6/5 branches": 3}, pub),
        FixtureCase("hurwitz-counts", 9, "hurwitz", {"d5_inner": 1, "random_pairs": 100}, pub),
        FixtureCase("newton-puiseux-suite", 10, "newton_puiseux", {"random_polys": 100},
                    "oracle: exact back-substitution"),
        FixtureCase("restriction-milnor", 11, "milnor", {"mu": 3}, "oracle: Newton number of z^2 - f(w, lam w^2)"),
        FixtureCase("probe-round-trip", 12, "probe", {"pairs": 100}, "oracle: algebraic inverse"),
        FixtureCase("d5-resolved-classify", None, "classify",
                    {"l_nodes": ["v3"], "p_nodes": ["v4", "v6"], "nodes": ["v2", "v3", "v4", "v6"]}, pub),
        FixtureCase("fourteen-branch-graph", None, "fourteen_graph",
                    {"cycle": FOURTEEN_H_CYCLE, "multiplicity": 6, "pieces": 28},
                    pub + "; piece count derived after subdivision"),
    ]


def run_case(case: FixtureCase, seed: int) -> tuple[bool, str]:
    rng = random.Random(f"{seed}:{case.name}")
    try:
        detail = CHECKS[case.check](case, rng)
        return True, detail
    except (CaseFailure, AssertionError) as exc:
        return False, f"mismatch: {exc}"
    except Exception as exc:  # a crash is reported as a named failure
        return False, f"error: {type(exc).__name__}: {exc}"


def _run_case_args(args):
    return run_case(*args)


def run_verify(seed: int = DEFAULT_SEED, cases: Sequence[FixtureCase] | None = None,
               jobs: int = 1) -> tuple[str, bool]:
    cases = list(corpus() if cases is None else cases)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_run_case_args, [(c, seed) for c in cases]))
    else:
        results = [run_case(c, seed) for c in cases]
    lines = []
    for c, (ok, detail) in zip(cases, results):
        tag = f"[{c.criterion:>2}]" if c.criterion is not None else "[  ]"
        lines.append(f"{'PASS' if ok else 'FAIL'} {tag} {c.name}: {detail}")
    passed = sum(ok for ok, _ in results)
    lines.append(f"summary: {passed}/{len(cases)} passed (seed={seed})")
    return "\n".join(lines) + "\n", passed == len(cases)


def cmd_verify(args) -> tuple[str, bool]:
    cases = corpus()
    if args.list:
        return "".join(f"{c.name}\t{c.provenance}\n" for c in cases), True
    if args.case:
        wanted = set(args.case)
        unknown = wanted - {c.name for c in cases}
        if unknown:
            raise BadInput(f"unknown case(s): {', '.join(sorted(unknown))}")
        cases = [c for c in cases if c.name in wanted]
    return run_verify(args.seed, cases, args.jobs)


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="surfgerm", description="Carrousel, polar-rate and resolution-graph invariants.")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED, help=f"random seed ({SEED_ENV} overrides)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for per-branch / per-case work")
    p.add_argument("-o", "--output", help="write the report here instead of stdout")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("branches", help="Newton-Puiseux branches of a polynomial file")
    s.add_argument("poly")
    s.add_argument("--trunc", default="3")
    s.add_argument("--genericize", action="store_true",
                   help="first move to coordinates where no branch is tangent to the y-axis (uses --seed)")

    s = sub.add_parser("carrousel", help="carrousel tree of a branch file")
    s.add_argument("branches")
    s.add_argument("--mode", choices=("plain", "intermediate", "complete"), default="plain")
    s.add_argument("--polar-rates")
    s.add_argument("--svg")
    s.add_argument("--png", help="raster figure (matplotlib)")
    s.add_argument("--dot")
    s.add_argument("--fill-delta", action=argparse.BooleanOptionalAction, default=True)
    s.add_argument("--labels", action="store_true")

    s = sub.add_parser("contacts", help="contact matrix, or the tree rebuilt from it")
    s.add_argument("branches")
    s.add_argument("--reconstruct", action="store_true")

    s = sub.add_parser("polar-rates", help="polar rates of z^2 = f")
    s.add_argument("poly")
    s.add_argument("--trunc", default="3")
    s.add_argument("--branches", help="use these discriminant branches instead of computing them")

    s = sub.add_parser("resolution", help="resolution-graph invariants")
    s.add_argument("graph")
    s.add_argument("--solve", metavar="ARROWS")
    s.add_argument("--mult", action="store_true")
    s.add_argument("--classify", action="store_true")
    s.add_argument("--decompose", metavar="RATES_FILE")
    s.add_argument("--dot")

    s = sub.add_parser("verify", help="run the built-in fixture corpus")
    s.add_argument("--list", action="store_true")
    s.add_argument("--case", action="append")
    return p


def resolve_seed(cli_seed: int) -> int:
    env = os.environ.get(SEED_ENV)
    if env is not None and env.strip():
        try:
            return int(env)
        except ValueError as exc:
            raise BadInput(f"{SEED_ENV} must be an integer") from exc
    return cli_seed


_INVARIANT_ERRORS = (UltrametricViolation, UnstableLeadingTerm, CancellationDetected, NonIntegralSolution,
                     NonEffectiveSolution, AssertionError)
_INPUT_ERRORS = (BadInput, GenericityFailed, NotSquarefree, MissingPolarRate, NonGenericCoordinates, MissingRate, RateConflict,
                 NotNegativeDefinite, PreconditionViolated, OSError, KeyError, TypeError, ValueError)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse uses 2 for usage errors; here 2 means an unsupported field
        return EXIT_OK if exc.code in (0, None) else EXIT_INPUT
    ok = True
    try:
        args.seed = resolve_seed(args.seed)
        if args.command == "verify":
            text, ok = cmd_verify(args)
        else:
            handler = {"branches": cmd_branches, "carrousel": cmd_carrousel, "contacts": cmd_contacts,
                       "polar-rates": cmd_polar_rates, "resolution": cmd_resolution}[args.command]
            text = handler(args)
    except FieldExtensionRequired as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FIELD
    except _INVARIANT_ERRORS as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except _INPUT_ERRORS as exc:
        print(f"bad input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK if ok else EXIT_INVARIANT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
