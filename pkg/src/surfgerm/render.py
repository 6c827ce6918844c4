"""Static diagrams: carrousel sections as SVG (optionally PNG), trees and graphs as DOT.

Floating point lives only here.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

from .carrousel import CURVE, POLAR, WEDGE, CarrouselTree, Piece, _full_key
from .resolution import ResolutionGraph

__all__ = ["Disk", "SectionLayout", "layout_section", "emit_svg", "emit_png", "emit_dot"]

CANVAS = 400.0
RING = 0.9


@dataclass(frozen=True)
class Disk:
    center: tuple[float, float]
    radius: float
    stroke_class: str
    fill: str  # "none", "delta" or "wedge"
    label: str
    depth: int
    parent: int  # index into SectionLayout.disks, -1 for the root


@dataclass(frozen=True)
class SectionLayout:
    disks: tuple[Disk, ...]

    def contains(self, i: int, j: int) -> bool:
        """Disk j lies strictly inside disk i."""
        a, b = self.disks[i], self.disks[j]
        d = math.dist(a.center, b.center)
        return d + b.radius < a.radius

    def disjoint(self, i: int, j: int) -> bool:
        a, b = self.disks[i], self.disks[j]
        return math.dist(a.center, b.center) > a.radius + b.radius

    def ancestors(self, j: int) -> list[int]:
        out = []
        p = self.disks[j].parent
        while p >= 0:
            out.append(p)
            p = self.disks[p].parent
        return out


def _fill(p: Piece) -> str:
    if WEDGE in p.flags or POLAR in p.flags:
        return "wedge"
    if p.kind == "D" and (CURVE in p.flags or p.sheets):
        return "delta"
    return "none"


def layout_section(t: CarrouselTree | Piece) -> SectionLayout:
    root = t.root if isinstance(t, CarrouselTree) else t
    disks: list[Disk] = []

    def place(p: Piece, cx: float, cy: float, r: float, depth: int, parent: int):
        idx = len(disks)
        disks.append(Disk((cx, cy), r, f"piece-{p.kind}", _fill(p), p.label(), depth, parent))
        kids = sorted(p.children, key=_full_key)
        k = len(kids)
        if not k:
            return
        cr = r / (1 + k)
        if k == 1:
            place(kids[0], cx, cy, cr, depth + 1, idx)
            return
        ring = RING * (r - cr)
        for i, c in enumerate(kids):
            ang = 2 * math.pi * i / k - math.pi / 2
            place(c, cx + ring * math.cos(ang), cy + ring * math.sin(ang), cr, depth + 1, idx)

    half = CANVAS / 2
    place(root, half, half, half - 10, 0, -1)
    return SectionLayout(tuple(disks))


_FILLS = {"none": "none", "delta": "#b0b0b0", "wedge": "#303030"}


def emit_svg(layout: SectionLayout, fill_delta: bool = True, labels: bool = False) -> str:
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{CANVAS:.0f}" '
        f'height="{CANVAS:.0f}" viewBox="0 0 {CANVAS:.0f} {CANVAS:.0f}">',
    ]
    for d in layout.disks:
        fill = _FILLS[d.fill] if (fill_delta or d.fill == "wedge") else "none"
        out.append(
            f'<circle class="{d.stroke_class}" cx="{d.center[0]:.3f}" cy="{d.center[1]:.3f}" '
            f'r="{d.radius:.3f}" fill="{fill}" stroke="black" stroke-width="1"/>'
        )
    if labels:
        for d in layout.disks:
            y = d.center[1] - d.radius + 12
            out.append(f'<text x="{d.center[0]:.3f}" y="{y:.3f}" font-size="9" '
                       f'text-anchor="middle">{d.label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_png(layout: SectionLayout, path: str, fill_delta: bool = True, labels: bool = False) -> None:
    """Raster rendering of the same layout; needs matplotlib."""
    import matplotlib

    matplotlib.use("Agg")
    from matplotlib import pyplot as plt
    from matplotlib.patches import Circle

    fig, ax = plt.subplots(figsize=(5, 5), dpi=100)
    for d in layout.disks:
        fill = _FILLS[d.fill] if (fill_delta or d.fill == "wedge") else "none"
        ax.add_patch(Circle(d.center, d.radius, facecolor=fill, edgecolor="black", linewidth=0.8))
        if labels:
            ax.text(d.center[0], d.center[1] - d.radius + 12, d.label, fontsize=6, ha="center")
    ax.set_xlim(0, CANVAS)
    ax.set_ylim(CANVAS, 0)
    ax.set_aspect("equal")
    ax.axis("off")
    fig.savefig(path, bbox_inches="tight", metadata={"Software": None})
    plt.close(fig)


def _dot_escape(s: str) -> str:
    return s.replace("\\", "\\\\").replace('"', '\\"')


def _dot_tree(t: CarrouselTree | Piece) -> str:
    root = t.root if isinstance(t, CarrouselTree) else t
    lines = ["digraph carrousel {", "  node [shape=box];"]
    counter = [0]

    def rec(p: Piece) -> str:
        name = f"p{counter[0]}"
        counter[0] += 1
        label = p.label()
        if p.branches:
            label += "\\nbranches " + ",".join(map(str, sorted(p.branches)))
        if p.flags:
            label += "\\n" + ",".join(sorted(p.flags))
        lines.append(f'  {name} [label="{label}"];')
        for c in sorted(p.children, key=_full_key):
            lines.append(f"  {name} -> {rec(c)};")
        return name

    rec(root)
    lines.append("}")
    return "\n".join(lines) + "\n"


def _dot_graph(g: ResolutionGraph, rates: Mapping | None, arrow_sets: Sequence[str] | None) -> str:
    q = {g.index(v): Fraction(r) for v, r in (rates or {}).items()}
    lines = ["graph resolution {", "  node [shape=circle];"]
    for i, (e, gen, nm) in enumerate(zip(g.eulers, g.genera, g.names)):
        label = f"{nm}\\n{e}"
        if gen:
            label += f" [g={gen}]"
        if i in q:
            label += f"\\nq={q[i]}"
        style = ", style=dashed" if i in g.synthetic else ""
        lines.append(f'  v{i} [label="{_dot_escape(label)}"{style}];')
    for a, b in g.edges:
        lines.append(f"  v{a} -- v{b};")
    names = sorted(g.arrow_sets) if arrow_sets is None else list(arrow_sets)
    for s in names:
        for v, c in sorted(g.arrows(s).items()):
            tip = f"{s}_{v}"
            lines.append(f'  {tip} [shape=point, label=""];')
            lab = s if c == 1 else f"{s} x{c}"
            lines.append(f'  v{v} -- {tip} [dir=forward, arrowhead=normal, label="{_dot_escape(lab)}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def emit_dot(obj, rates: Mapping | None = None, arrow_sets: Sequence[str] | None = None) -> str:
    """DOT for a ResolutionGraph (one arrowhead edge per arrow-carrying vertex and set) or a tree."""
    if isinstance(obj, ResolutionGraph):
        return _dot_graph(obj, rates, arrow_sets)
    return _dot_tree(obj)
