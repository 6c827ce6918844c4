"""Decorated dual resolution graphs: intersection forms, total transforms, node taxonomy."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping

import networkx as nx
import sympy

__all__ = [
    "ResolutionGraph",
    "Cycle",
    "NodeClassification",
    "DecompositionPiece",
    "NotNegativeDefinite",
    "NonIntegralSolution",
    "NonEffectiveSolution",
    "MissingRate",
    "RateConflict",
    "intersection_matrix",
    "is_negative_definite",
    "solve_total_transform",
    "multiplicity",
    "classify_nodes",
    "subdivide_adjacent_nodes",
    "geometric_decomposition",
]

L_NODE = "L-node"
P_NODE = "P-node"
NODE = "node"
STRING = "string-vertex"
BAMBOO = "bamboo-vertex"


class NotNegativeDefinite(ValueError):
    pass


class NonIntegralSolution(ArithmeticError):
    pass


class NonEffectiveSolution(ArithmeticError):
    pass


class MissingRate(KeyError):
    pass


class RateConflict(ValueError):
    pass


@dataclass(frozen=True)
class ResolutionGraph:
    """Plumbing graph. Vertices are indexed 0..n-1; ``names`` are display labels."""

    eulers: tuple[int, ...]
    genera: tuple[int, ...]
    edges: tuple[tuple[int, int], ...]
    arrow_sets: Mapping[str, Mapping[int, int]] = field(default_factory=dict)
    names: tuple[str, ...] = ()
    synthetic: frozenset[int] = frozenset()

    def __post_init__(self):
        n = len(self.eulers)
        if n == 0:
            raise ValueError("graph has no vertices")
        if len(self.genera) != n or any(g < 0 for g in self.genera):
            raise ValueError("genera must be nonnegative, one per vertex")
        edges = []
        for u, v in self.edges:
            if not (0 <= u < n and 0 <= v < n) or u == v:
                raise ValueError(f"bad edge {(u, v)}")
            edges.append((min(u, v), max(u, v)))
        object.__setattr__(self, "edges", tuple(sorted(edges)))
        arrows = {}
        for name, amap in self.arrow_sets.items():
            clean = {}
            for v, c in amap.items():
                v, c = int(v), int(c)
                if not 0 <= v < n or c < 0:
                    raise ValueError(f"bad arrow entry {name}:{v}={c}")
                if c:
                    clean[v] = c
            arrows[name] = clean
        object.__setattr__(self, "arrow_sets", arrows)
        if not self.names:
            object.__setattr__(self, "names", tuple(f"v{i + 1}" for i in range(n)))
        elif len(self.names) != n or len(set(self.names)) != n:
            raise ValueError("names must be distinct, one per vertex")
        if not nx.is_connected(self.graph()):
            raise ValueError("resolution graph must be connected")
        if not is_negative_definite(intersection_matrix(self)):
            raise NotNegativeDefinite("intersection matrix is not negative definite")

    @classmethod
    def build(cls, vertices: Iterable, edges: Iterable, arrows: Mapping | None = None,
              synthetic: Iterable[int] = ()) -> "ResolutionGraph":
        """Vertices as dicts {"euler", "genus", optional "name"}; arrows keyed by index or name."""
        vs = list(vertices)
        names = tuple(v.get("name", f"v{i + 1}") for i, v in enumerate(vs))
        index = {nm: i for i, nm in enumerate(names)}

        def key(v):
            if isinstance(v, str) and v in index:
                return index[v]
            return int(v)

        arrow_sets = {k: {key(v): c for v, c in amap.items()} for k, amap in (arrows or {}).items()}
        return cls(tuple(int(v["euler"]) for v in vs), tuple(int(v.get("genus", 0)) for v in vs),
                   tuple((key(a), key(b)) for a, b in edges), arrow_sets, names, frozenset(synthetic))

    @property
    def size(self) -> int:
        return len(self.eulers)

    def index(self, v) -> int:
        if isinstance(v, str) and v in self.names:
            return self.names.index(v)
        return int(v)

    def graph(self) -> nx.MultiGraph:
        g = nx.MultiGraph()
        g.add_nodes_from(range(len(self.eulers)))
        g.add_edges_from(self.edges)
        return g

    def valency(self, v: int) -> int:
        return sum((a == v) + (b == v) for a, b in self.edges)

    def neighbours(self, v: int) -> list[int]:
        out = []
        for a, b in self.edges:
            if a == v:
                out.append(b)
            elif b == v:
                out.append(a)
        return out

    def arrows(self, name: str) -> dict[int, int]:
        return dict(self.arrow_sets.get(name, {}))

    def to_json(self) -> dict:
        d = {
            "vertices": [{"euler": e, "genus": g, "name": nm}
                         for e, g, nm in zip(self.eulers, self.genera, self.names)],
            "edges": [list(e) for e in self.edges],
            "arrows": {k: {str(v): c for v, c in sorted(a.items())} for k, a in sorted(self.arrow_sets.items())},
        }
        if self.synthetic:
            d["synthetic"] = sorted(self.synthetic)
        return d

    @classmethod
    def from_json(cls, d) -> "ResolutionGraph":
        if isinstance(d, str):
            d = json.loads(d)
        return cls.build(d["vertices"], d["edges"], d.get("arrows", {}), d.get("synthetic", ()))


@dataclass(frozen=True)
class Cycle:
    multiplicities: tuple[int, ...]

    def __getitem__(self, i):
        return self.multiplicities[i]

    def __len__(self):
        return len(self.multiplicities)

    def __iter__(self):
        return iter(self.multiplicities)

    @property
    def is_effective(self) -> bool:
        return all(m >= 0 for m in self.multiplicities)

    def __add__(self, other: "Cycle") -> "Cycle":
        return Cycle(tuple(a + b for a, b in zip(self, other)))

    def minimum(self, other: "Cycle") -> "Cycle":
        return Cycle(tuple(min(a, b) for a, b in zip(self, other)))


def intersection_matrix(g: ResolutionGraph) -> list[list[int]]:
    n = len(g.eulers)
    M = [[0] * n for _ in range(n)]
    for i, e in enumerate(g.eulers):
        M[i][i] = e
    for a, b in g.edges:
        M[a][b] += 1
        M[b][a] += 1
    return M


def is_negative_definite(M) -> bool:
    """Sylvester's criterion on -M, exactly."""
    A = -sympy.Matrix(M)
    if A != A.T:
        return False
    return all(A[:k, :k].det() > 0 for k in range(1, A.rows + 1))


def _arrow_vector(g: ResolutionGraph, arrows) -> list[int]:
    if isinstance(arrows, str):
        arrows = g.arrows(arrows)
    if isinstance(arrows, Mapping):
        a = [0] * g.size
        for v, c in arrows.items():
            a[g.index(v)] += int(c)
        return a
    a = [int(c) for c in arrows]
    if len(a) != g.size:
        raise ValueError("arrow vector has the wrong length")
    return a


def solve_total_transform(g: ResolutionGraph, arrows) -> Cycle:
    """The cycle m with (m + strict transform) . E_v = 0 for every v, i.e. M m = -a."""
    a = _arrow_vector(g, arrows)
    M = sympy.Matrix(intersection_matrix(g))
    sol = M.LUsolve(-sympy.Matrix(a))
    vals = [Fraction(int(x.p), int(x.q)) for x in sol]
    if any(v.denominator != 1 for v in vals):
        raise NonIntegralSolution(f"solution {[str(v) for v in vals]} is not integral")
    m = tuple(int(v) for v in vals)
    if any(x < 0 for x in m):
        raise NonEffectiveSolution(f"solution {m} is not effective")
    check = M * sympy.Matrix(m)
    assert list(check) == [-x for x in a]
    if any(a) and not all(x > 0 for x in m):
        raise AssertionError(f"positivity violated: {m}")
    return Cycle(m)


def multiplicity(g: ResolutionGraph, h_arrows="h") -> tuple[Cycle, int]:
    a = _arrow_vector(g, h_arrows)
    cyc = solve_total_transform(g, a)
    mult = sum(c * m for c, m in zip(a, cyc))
    if mult <= 0:
        raise ValueError("no hyperplane-section arrows")
    return cyc, mult


@dataclass(frozen=True)
class NodeClassification:
    tags: dict[int, str]
    l_nodes: frozenset[int]
    p_nodes: frozenset[int]
    nodes: frozenset[int]
    strings: tuple[tuple[int, ...], ...]
    string_ends: tuple[tuple[int, int], ...]
    bamboos: tuple[tuple[int, ...], ...]
    bamboo_roots: tuple[int, ...]

    def to_json(self, names: tuple[str, ...] | None = None) -> dict:
        nm = (lambda v: names[v]) if names else (lambda v: v)
        return {
            "tags": {str(nm(v)): t for v, t in sorted(self.tags.items())},
            "l_nodes": sorted(nm(v) for v in self.l_nodes),
            "p_nodes": sorted(nm(v) for v in self.p_nodes),
            "nodes": sorted(nm(v) for v in self.nodes),
            "strings": [[nm(v) for v in s] for s in self.strings],
            "bamboos": [[nm(v) for v in b] for b in self.bamboos],
        }


def _ordered_path(g: ResolutionGraph, comp: set[int]) -> list[int]:
    ends = [v for v in comp if sum(1 for u in g.neighbours(v) if u in comp) <= 1]
    start = min(ends) if ends else min(comp)
    path, prev = [start], None
    while True:
        nxt = [u for u in g.neighbours(path[-1]) if u in comp and u != prev and u not in path]
        if not nxt:
            return path
        prev = path[-1]
        path.append(nxt[0])


def classify_nodes(g: ResolutionGraph, l_arrows: str = "h", p_arrows: str = "polar") -> NodeClassification:
    """Tags by priority L-node > P-node > node > bamboo > string."""
    L = frozenset(g.arrows(l_arrows))
    P = frozenset(g.arrows(p_arrows))
    nodes = frozenset(v for v in range(g.size)
                      if v in L or v in P or g.valency(v) >= 3 or g.genera[v] > 0)
    tags = {}
    for v in nodes:
        tags[v] = L_NODE if v in L else P_NODE if v in P else NODE
    rest = nx.Graph(g.graph().subgraph([v for v in range(g.size) if v not in nodes]))
    strings, ends, bamboos, roots = [], [], [], []
    for comp in sorted(nx.connected_components(rest), key=min):
        path = _ordered_path(g, set(comp))
        attach = [u for v in (path[0], path[-1]) for u in g.neighbours(v) if u in nodes]
        if path[0] == path[-1]:
            attach = [u for u in g.neighbours(path[0]) if u in nodes]
        leaf = any(g.valency(v) == 1 for v in (path[0], path[-1]))
        if leaf and len(attach) <= 1:
            if attach:
                # orient from the attaching node outward
                if not any(u in nodes for u in g.neighbours(path[0])):
                    path.reverse()
            bamboos.append(tuple(path))
            roots.append(attach[0] if attach else -1)
            for v in path:
                tags[v] = BAMBOO
        else:
            strings.append(tuple(path))
            first = [u for u in g.neighbours(path[0]) if u in nodes]
            last = [u for u in g.neighbours(path[-1]) if u in nodes]
            if len(path) == 1:
                first, last = attach[:1], attach[1:2] or attach[:1]
            ends.append((first[0] if first else -1, last[0] if last else -1))
            for v in path:
                tags[v] = STRING
    return NodeClassification(tags, L, P, nodes, tuple(strings), tuple(ends), tuple(bamboos), tuple(roots))


def subdivide_adjacent_nodes(g: ResolutionGraph, l_arrows: str = "h",
                             p_arrows: str = "polar") -> ResolutionGraph:
    """Blow up the intersection point of every pair of adjacent nodes.

    The new vertex has Euler weight -1 and both neighbours lose 1; arrows are unchanged,
    so total transforms extend with the sum of the two neighbouring multiplicities.
    """
    cls = classify_nodes(g, l_arrows, p_arrows)
    eulers = list(g.eulers)
    genera = list(g.genera)
    names = list(g.names)
    edges = []
    synthetic = set(g.synthetic)
    for a, b in g.edges:
        if a in cls.nodes and b in cls.nodes:
            new = len(eulers)
            eulers.append(-1)
            genera.append(0)
            names.append(f"{names[a]}|{names[b]}")
            eulers[a] -= 1
            eulers[b] -= 1
            edges += [(a, new), (new, b)]
            synthetic.add(new)
        else:
            edges.append((a, b))
    return ResolutionGraph(tuple(eulers), tuple(genera), tuple(edges), g.arrow_sets,
                           tuple(names), frozenset(synthetic))


@dataclass(frozen=True)
class DecompositionPiece:
    kind: str  # "B" or "A"
    vertices: tuple[int, ...]
    rates: tuple[Fraction, ...]
    polar: bool = False
    conical: bool = False

    def label(self, names=None) -> str:
        r = ",".join(str(q) for q in self.rates)
        tag = " polar" if self.polar else ""
        tag += " conical" if self.conical else ""
        vs = " ".join(names[v] if names else str(v) for v in self.vertices)
        return f"{self.kind}({r}){tag} [{vs}]"

    def to_json(self, names=None) -> dict:
        return {"kind": self.kind, "rates": [str(q) for q in self.rates],
                "vertices": [names[v] if names else v for v in self.vertices],
                "polar": self.polar, "conical": self.conical}


def geometric_decomposition(g: ResolutionGraph, rates: Mapping, l_arrows: str = "h",
                            p_arrows: str = "polar") -> tuple[ResolutionGraph, list[DecompositionPiece]]:
    """One B-piece per node (bamboos absorbed), one A-piece per maximal string.

    Returns the graph actually used (adjacent nodes subdivided) with the pieces.
    """
    q = {g.index(v): Fraction(r) for v, r in rates.items()}
    h = subdivide_adjacent_nodes(g, l_arrows, p_arrows)
    cls = classify_nodes(h, l_arrows, p_arrows)
    for v in sorted(cls.nodes):
        if v not in q:
            raise MissingRate(f"no rate for node {h.names[v]}")
        if v in cls.l_nodes and q[v] != 1:
            raise RateConflict(f"L-node {h.names[v]} must have rate 1, got {q[v]}")
    absorbed: dict[int, list[int]] = {v: [v] for v in cls.nodes}
    for bam, root in zip(cls.bamboos, cls.bamboo_roots):
        if root >= 0:
            absorbed[root].extend(bam)
    pieces = []
    for v in sorted(cls.nodes):
        pieces.append(DecompositionPiece("B", tuple(absorbed[v]), (q[v],),
                                         polar=v in cls.p_nodes, conical=v in cls.l_nodes))
    for path, (a, b) in zip(cls.strings, cls.string_ends):
        ra = q.get(a, Fraction(1))
        rb = q.get(b, Fraction(1))
        pieces.append(DecompositionPiece("A", path, tuple(sorted((ra, rb)))))
    return h, pieces
