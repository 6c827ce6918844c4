"""Carrousel sections as rate-decorated trees of B/A/D/conical pieces."""
from __future__ import annotations

import json
import random
from dataclasses import dataclass, field, replace
from fractions import Fraction
from itertools import combinations
from typing import Callable, Iterable, Mapping, Sequence

from .exactnum import CyclotomicNumber, format_rational, parse_rational
from .puiseux import (
    ContactMatrix,
    PuiseuxBranch,
    TruncationTooShort,
    all_sheets,
    characteristic_exponents,
    contact_exponent,
)

__all__ = [
    "Piece",
    "CarrouselTree",
    "TruncationSpec",
    "MissingPolarRate",
    "NonGenericCoordinates",
    "UltrametricViolation",
    "RULES",
    "build_unamalgamated",
    "amalgamate",
    "plain_carrousel",
    "intermediate_carrousel",
    "complete_carrousel",
    "reconstruct_from_contacts",
    "section_tree",
    "refines",
    "tree_isomorphic",
    "plain_truncations",
    "tree_violations",
]

CURVE = "contains_curve"
WEDGE = "is_delta_wedge"
POLAR = "is_polar_piece"
FLAG_ORDER = (CURVE, WEDGE, POLAR)

ONE = Fraction(1)

Sheet = tuple[int, int]


class MissingPolarRate(ValueError):
    pass


class NonGenericCoordinates(ValueError):
    pass


class UltrametricViolation(ValueError):
    pass


@dataclass(frozen=True)
class Piece:
    kind: str  # "CONE", "B", "A" or "D"
    rates: tuple[Fraction, ...]
    sheets: frozenset = frozenset()
    flags: frozenset = frozenset()
    children: tuple["Piece", ...] = ()

    @property
    def rate(self) -> Fraction:
        """Outer rate of the piece."""
        return self.rates[0]

    @property
    def inner_rate(self) -> Fraction:
        return self.rates[-1]

    @property
    def branches(self) -> frozenset:
        return frozenset(b for b, _ in self.sheets)

    @property
    def is_empty_disk(self) -> bool:
        return self.kind == "D" and not self.sheets and not self.flags

    def walk(self) -> Iterable["Piece"]:
        yield self
        for c in self.children:
            yield from c.walk()

    def count(self, pred: Callable[["Piece"], bool]) -> int:
        return sum(1 for p in self.walk() if pred(p))

    def label(self) -> str:
        if self.kind == "CONE":
            return "CONE"
        return f"{self.kind}(" + ",".join(str(r) for r in self.rates) + ")"


def _node(kind, rates, sheets=frozenset(), flags=frozenset(), children=()) -> Piece:
    return Piece(kind, tuple(Fraction(r) for r in rates), frozenset(sheets), frozenset(flags), tuple(children))


# ---------------------------------------------------------------------------
# canonical forms and serialization


def _flag_list(flags) -> list[str]:
    return [f for f in FLAG_ORDER if f in flags]


def _shape_key(p: Piece, with_flags: bool = True) -> str:
    kind, rates = p.kind, p.rates
    if kind == "CONE":
        kind, rates = "B", (ONE,)
    kids = sorted(_shape_key(c, with_flags) for c in p.children)
    flags = ",".join(_flag_list(p.flags)) if with_flags else ""
    return f"{kind}[{','.join(map(str, rates))}]{{{flags}}}(" + ";".join(kids) + ")"


def _full_key(p: Piece) -> tuple:
    return (_shape_key(p), sorted(p.branches), sorted(p.sheets))


def canonical(p: Piece) -> Piece:
    kids = tuple(sorted((canonical(c) for c in p.children), key=_full_key))
    return replace(p, children=kids)


def piece_to_json(p: Piece, sheets: bool = False) -> dict:
    out = {
        "kind": p.kind,
        "rates": [format_rational(r) for r in p.rates],
        "branches": sorted(p.branches),
        "flags": _flag_list(p.flags),
        "children": [piece_to_json(c, sheets) for c in sorted(p.children, key=_full_key)],
    }
    if sheets:
        out["sheets"] = [list(s) for s in sorted(p.sheets)]
    return out


def piece_from_json(data: Mapping) -> Piece:
    rates = tuple(parse_rational(r) for r in data["rates"])
    if "sheets" in data:
        sheets = frozenset(tuple(s) for s in data["sheets"])
    else:
        sheets = frozenset((b, -1) for b in data.get("branches", []))
    return _node(data["kind"], rates, sheets, frozenset(data.get("flags", [])),
                 tuple(piece_from_json(c) for c in data.get("children", [])))


@dataclass(frozen=True)
class CarrouselTree:
    root: Piece
    mode: str = "plain"
    polar_rates: Mapping[int, Fraction] | None = None

    def to_json(self, sheets: bool = False) -> dict:
        return piece_to_json(self.root, sheets)

    def dumps(self, sheets: bool = False) -> str:
        return json.dumps(self.to_json(sheets), indent=2, sort_keys=False)

    @classmethod
    def from_json(cls, data: Mapping, mode: str = "plain") -> "CarrouselTree":
        return cls(piece_from_json(data), mode)

    def pieces(self) -> list[Piece]:
        return list(self.root.walk())

    def render_text(self) -> str:
        lines: list[str] = []

        def rec(p: Piece, depth: int):
            extra = []
            if p.branches:
                extra.append("branches=" + ",".join(map(str, sorted(p.branches))))
            if p.flags:
                extra.append("flags=" + ",".join(_flag_list(p.flags)))
            lines.append("  " * depth + p.label() + (" " + " ".join(extra) if extra else ""))
            for c in sorted(p.children, key=_full_key):
                rec(c, depth + 1)

        rec(self.root, 0)
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# truncation


@dataclass(frozen=True)
class TruncationSpec:
    mode: str = "plain"
    polar_rates: Mapping[int, Fraction] = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in ("plain", "intermediate", "complete"):
            raise ValueError(f"unknown mode {self.mode!r}")


def _sheet_table(branches: Sequence[PuiseuxBranch]):
    sheets = all_sheets(branches)
    for (i, _k), s in sheets:
        if s.terms and s.terms[0][0] < 1:
            raise NonGenericCoordinates(f"branch {i} is tangent to the y-axis")
    return sheets


def plain_truncations(branches: Sequence[PuiseuxBranch]) -> dict[int, Fraction]:
    """Per branch: max(last characteristic exponent, largest contact with any other sheet), at least 1."""
    sheets = _sheet_table(branches)
    out = {i: ONE for i in range(len(branches))}
    for i, b in enumerate(branches):
        ch = characteristic_exponents(b)
        if ch:
            out[i] = max(out[i], ch[-1])
    for (a, sa), (b, sb) in combinations(sheets, 2):
        q = contact_exponent(sa, sb)
        out[a[0]] = max(out[a[0]], q)
        out[b[0]] = max(out[b[0]], q)
    return out


def _cross_contacts(branches) -> dict[int, Fraction]:
    """Largest contact of each branch with a sheet of a different branch."""
    sheets = _sheet_table(branches)
    out: dict[int, Fraction] = {}
    for (a, sa), (b, sb) in combinations(sheets, 2):
        if a[0] == b[0]:
            continue
        q = contact_exponent(sa, sb)
        out[a[0]] = max(out.get(a[0], q), q)
        out[b[0]] = max(out.get(b[0], q), q)
    return out


def _truncations(branches, spec: TruncationSpec) -> dict[int, Fraction]:
    if spec.mode == "plain":
        return plain_truncations(branches)
    rates = {int(k): Fraction(v) for k, v in spec.polar_rates.items()}
    missing = [i for i in range(len(branches)) if i not in rates]
    if missing:
        raise MissingPolarRate(f"no polar rate for branches {missing}")
    for i, b in enumerate(branches):
        s = rates[i]
        if s < 1 or (b.terms and s < b.terms[0][0]):
            raise ValueError(f"polar rate {s} of branch {i} is below its first exponent")
    for i, q in _cross_contacts(branches).items():
        if rates[i] < q:
            raise ValueError(f"polar rate {rates[i]} of branch {i} is below its contact {q} with another branch")
    if spec.mode == "intermediate":
        return rates
    plain = plain_truncations(branches)
    return {i: max(rates[i], plain[i]) for i in range(len(branches))}


# ---------------------------------------------------------------------------
# construction


@dataclass
class _Sheet:
    label: Sheet
    terms: dict
    events: list

    def coeff(self, p: Fraction) -> CyclotomicNumber:
        return self.terms.get(p, CyclotomicNumber.zero())

    def next_event(self, q: Fraction):
        for e in self.events:
            if e > q:
                return e
        return None


def _coeff_key(c: CyclotomicNumber) -> tuple:
    return (c.order, c.coeffs)


def _build_node(q0: Fraction, group: list[_Sheet], ctx) -> Piece:
    if not group:
        return _node("D", (q0,))
    nxt = [s.next_event(q0) for s in group]
    pending = [e for e in nxt if e is not None]
    if not pending:
        return _leaf(q0, group, ctx)
    p = min(pending)
    holes: list[tuple[CyclotomicNumber, list[_Sheet]]] = []
    centre: list[_Sheet] = []
    for s in group:
        c = s.coeff(p)
        if c.is_zero():
            centre.append(s)
            continue
        for key, members in holes:
            if key == c:
                members.append(s)
                break
        else:
            holes.append((c, [s]))
    kids = [_build_node(p, members, ctx) for _c, members in holes]
    kids.append(_build_node(p, centre, ctx))
    labels = frozenset(s.label for s in group)
    flags = set()
    mode, rates = ctx
    branch_ids = {b for b, _ in labels}
    if mode == "complete" and len(branch_ids) == 1 and rates.get(next(iter(branch_ids))) == p:
        # polar rate below the topological truncation: keep its circle as a marked B-piece
        if not any(WEDGE in k.flags for k in kids):
            flags.add(POLAR)
    inner = _node("B", (p,), labels, flags, kids)
    return _node("A", (q0, p), labels, (), (inner,))


def _leaf(q: Fraction, group: list[_Sheet], ctx) -> Piece:
    labels = frozenset(s.label for s in group)
    flags = {CURVE}
    mode, rates = ctx
    branch_ids = {b for b, _ in labels}
    if mode != "plain" and len(branch_ids) == 1:
        (b,) = branch_ids
        if rates.get(b) == q:
            flags |= {WEDGE, POLAR}
    return _node("D", (q,), labels, flags)


def build_unamalgamated(branches: Sequence[PuiseuxBranch], spec: TruncationSpec | None = None) -> CarrouselTree:
    spec = spec or TruncationSpec()
    sheets = _sheet_table(branches)
    taus = _truncations(branches, spec)
    rates = {int(k): Fraction(v) for k, v in spec.polar_rates.items()}
    table: list[_Sheet] = []
    for (i, k), s in sheets:
        tau = taus[i]
        if s.trunc_order is not None and s.trunc_order <= tau:
            raise TruncationTooShort(f"branch {i} known below {s.trunc_order}, needs terms up to {tau}")
        terms = {p: c for p, c in s.terms if p <= tau}
        marks = {tau}
        if spec.mode == "complete":
            marks.add(rates[i])
        events = sorted({p for p in terms if p > 1} | {m for m in marks if m > 1})
        table.append(_Sheet((i, k), terms, events))
    ctx = (spec.mode, rates)
    tangents: list[tuple[CyclotomicNumber, list[_Sheet]]] = []
    for s in table:
        c = s.coeff(ONE)
        for key, members in tangents:
            if key == c:
                members.append(s)
                break
        else:
            tangents.append((c, [s]))
    kids = [_build_node(ONE, members, ctx) for _c, members in tangents]
    root = _node("CONE", (ONE,), frozenset(s.label for s in table), (), kids)
    return CarrouselTree(canonical(root), spec.mode, rates if spec.mode != "plain" else None)


# ---------------------------------------------------------------------------
# amalgamation


def _close(p: Piece, is_root: bool, polar_rates) -> Piece:
    """Turn childless A/B pieces into disks."""
    if p.children or is_root or p.kind in ("D", "CONE"):
        return p
    flags = set(p.flags)
    if p.kind == "A":
        return _node("D", (p.rate,), p.sheets, flags)
    if POLAR in flags and polar_rates and len(p.branches) == 1:
        (b,) = p.branches
        if polar_rates.get(b) == p.rate:
            flags.add(WEDGE)
    return _node("D", (p.rate,), p.sheets, flags)


def _rule_merge_empty_d(p: Piece, is_root: bool, ctx):
    for idx, c in enumerate(p.children):
        if c.is_empty_disk and p.kind in ("A", "B", "CONE"):
            kids = p.children[:idx] + p.children[idx + 1:]
            return _close(replace(p, children=kids), is_root, ctx)
    return None


def _rule_collapse_a(p: Piece, is_root: bool, ctx):
    if p.kind == "A" and p.children and p.children[0].kind == "A":
        c = p.children[0]
        return _node("A", (p.rate, c.inner_rate), p.sheets | c.sheets, p.flags | c.flags, c.children)
    if is_root:
        return None
    if p.kind == "A" and p.rate == p.inner_rate and len(p.children) == 1:
        return p.children[0]
    if p.kind == "B" and len(p.children) == 1 and not p.flags:
        return p.children[0]
    return None


def _rule_merge_d_into_outer(p: Piece, is_root: bool, ctx):
    if p.kind not in ("B", "CONE"):
        return None
    for idx, c in enumerate(p.children):
        if c.kind == "D" and WEDGE in c.flags:
            kids = p.children[:idx] + p.children[idx + 1:]
            merged = replace(p, children=kids, flags=p.flags | {POLAR, CURVE}, sheets=p.sheets | c.sheets)
            return _close(merged, is_root, ctx)
    return None


def _rule_merge_conical(p: Piece, is_root: bool, ctx):
    if p.kind != "CONE":
        return None
    for idx, c in enumerate(p.children):
        if c.kind == "CONE" or (c.kind in ("B", "A") and c.inner_rate == ONE and c.rate == ONE):
            kids = p.children[:idx] + c.children + p.children[idx + 1:]
            return replace(p, children=kids, flags=p.flags | c.flags, sheets=p.sheets | c.sheets)
    return None


RULES: dict[str, Callable] = {
    "merge-empty-D": _rule_merge_empty_d,
    "collapse-A-chains": _rule_collapse_a,
    "merge-D-into-outer": _rule_merge_d_into_outer,
    "merge-conical": _rule_merge_conical,
}


def _redexes(p: Piece, rules, ctx, path=()):
    out = []
    for name in rules:
        if RULES[name](p, not path, ctx) is not None:
            out.append((path, name))
    for i, c in enumerate(p.children):
        out.extend(_redexes(c, rules, ctx, path + (i,)))
    return out


def _apply_at(p: Piece, path: tuple, name: str, ctx, depth=0) -> Piece:
    if not path:
        return RULES[name](p, depth == 0, ctx)
    i = path[0]
    kids = list(p.children)
    kids[i] = _apply_at(kids[i], path[1:], name, ctx, depth + 1)
    return replace(p, children=tuple(kids))


def amalgamate(tree: CarrouselTree, rules: Iterable[str], rng: random.Random | None = None) -> CarrouselTree:
    """Rewrite to the fixpoint of the given rule set.

    With ``rng`` the next redex is drawn at random; otherwise the first one in
    preorder is taken.
    """
    unknown = set(rules) - set(RULES)
    if unknown:
        raise ValueError(f"unknown rules {sorted(unknown)}")
    rules = [r for r in RULES if r in set(rules)]
    ctx = tree.polar_rates or {}
    root = tree.root
    while True:
        found = _redexes(root, rules, ctx)
        if not found:
            break
        path, name = rng.choice(found) if rng else found[0]
        root = _apply_at(root, path, name, ctx)
    return CarrouselTree(canonical(root), tree.mode, tree.polar_rates)


PLAIN_RULES = ("merge-empty-D", "collapse-A-chains", "merge-conical")


def plain_carrousel(branches: Sequence[PuiseuxBranch]) -> CarrouselTree:
    return amalgamate(build_unamalgamated(branches, TruncationSpec("plain")), PLAIN_RULES)


def intermediate_carrousel(branches: Sequence[PuiseuxBranch], polar_rates: Mapping[int, Fraction]) -> CarrouselTree:
    tree = build_unamalgamated(branches, TruncationSpec("intermediate", polar_rates))
    tree = amalgamate(tree, ("merge-D-into-outer",))
    return amalgamate(tree, PLAIN_RULES)


def complete_carrousel(branches: Sequence[PuiseuxBranch], polar_rates: Mapping[int, Fraction]) -> CarrouselTree:
    tree = build_unamalgamated(branches, TruncationSpec("complete", polar_rates))
    return amalgamate(tree, PLAIN_RULES)


# ---------------------------------------------------------------------------
# comparison


def tree_isomorphic(a: CarrouselTree | Piece, b: CarrouselTree | Piece) -> bool:
    ra = a.root if isinstance(a, CarrouselTree) else a
    rb = b.root if isinstance(b, CarrouselTree) else b
    return _shape_key(ra) == _shape_key(rb)


def _section(p: Piece, parent_rate: Fraction) -> list[Piece]:
    if p.kind == "A":
        out = []
        for c in p.children:
            out.extend(_section(c, parent_rate))
        return out
    if p.kind == "D":
        return [_node("D", (parent_rate,), {s}) for s in sorted(p.sheets)]
    rate = ONE if p.kind == "CONE" else p.rate
    kids: list[Piece] = []
    covered = set()
    for c in p.children:
        kids.extend(_section(c, rate))
        covered |= c.sheets
    for s in sorted(p.sheets - covered):
        kids.append(_node("D", (rate,), {s}))
    return [_node(p.kind, (rate,), p.sheets, (), kids)]


def section_tree(tree: CarrouselTree | Piece) -> Piece:
    """Only B-pieces and curve points survive; leaves take their parent's rate."""
    root = tree.root if isinstance(tree, CarrouselTree) else tree
    (out,) = _section(root, ONE)
    return canonical(out)


def _circles(p: Piece, is_root=True) -> set:
    out = set()
    if not is_root and p.sheets:
        out.add((p.rate, p.sheets))
        if p.kind == "A":
            out.add((p.inner_rate, p.sheets))
    for c in p.children:
        out |= _circles(c, False)
    return out


def refines(fine: CarrouselTree, coarse: CarrouselTree) -> bool:
    """Every boundary circle of ``coarse`` (enclosing part of the curve) is one of ``fine``."""
    return _circles(coarse.root) <= _circles(fine.root)


def reconstruct_from_contacts(m: ContactMatrix) -> CarrouselTree:
    """Nested-disk tree read off the pairwise contact exponents."""
    bad = m.ultrametric_violations()
    if bad:
        raise UltrametricViolation(f"triples {bad[:3]} violate the ultrametric property")
    labels = list(m.sheet_labels)

    def cluster(idx: list[int], level: Fraction) -> list[Piece]:
        if len(idx) == 1:
            return [_node("D", (level,), {labels[idx[0]]})]
        qmin = min(m[j, k] for j, k in combinations(idx, 2))
        classes: list[list[int]] = []
        for j in idx:
            for cl in classes:
                if m[j, cl[0]] > qmin:
                    cl.append(j)
                    break
            else:
                classes.append([j])
        kids = []
        for cl in classes:
            kids.extend(cluster(cl, qmin))
        return [_node("B", (qmin,), {labels[j] for j in idx}, (), kids)]

    everyone = list(range(m.size))
    if not everyone:
        return CarrouselTree(_node("CONE", (ONE,)))
    kids = cluster(everyone, ONE)
    if kids[0].kind == "B" and kids[0].rate == ONE:
        kids = list(kids[0].children)
    root = _node("CONE", (ONE,), {labels[j] for j in everyone}, (), kids)
    return CarrouselTree(canonical(root))


# ---------------------------------------------------------------------------
# invariants


def tree_violations(tree: CarrouselTree | Piece) -> list[str]:
    root = tree.root if isinstance(tree, CarrouselTree) else tree
    out: list[str] = []
    if root.kind not in ("CONE", "B") or root.rate != ONE:
        out.append("root is not conical")

    def rec(p: Piece, floor: Fraction):
        if any(r < 1 for r in p.rates):
            out.append(f"{p.label()} has rate below 1")
        if p.kind == "D" and p.children:
            out.append(f"{p.label()} is a disk with children")
        if p.kind == "A":
            if len(p.children) != 1:
                out.append(f"{p.label()} has {len(p.children)} children")
            if p.rate > p.inner_rate:
                out.append(f"{p.label()} rates out of order")
        if p.kind == "B" and p is not root and p.rate <= floor:
            out.append(f"{p.label()} not above enclosing rate {floor}")
        if p.kind in ("A", "D") and p.rate < floor:
            out.append(f"{p.label()} below enclosing rate {floor}")
        if WEDGE in p.flags and (p.kind != "D" or len(p.branches) != 1):
            out.append(f"{p.label()} flagged as wedge")
        nxt = p.rate if p.kind in ("B", "CONE") else floor
        for c in p.children:
            rec(c, nxt)

    rec(root, ONE)
    return out
