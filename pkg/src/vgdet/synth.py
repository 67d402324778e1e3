"""Seeded synthetic symbol-spotting datasets.

Each document scatters a few symbol instances (random scale and rotation,
never overlapping) plus some background clutter polylines over a canvas,
and records each symbol's exact bounding box.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .annotations import ManifestEntry, annotation_json, manifest_text
from .autograd import atomic_write_text
from .document import Annotation, GroundTruthBox, VectorDocument
from .svg import parse_svg

_BASES = {
    "box": [("polygon", [(0, 0), (1, 0), (1, 1), (0, 1)])],
    "triangle": [("polygon", [(0, 1), (1, 1), (0.5, 0)])],
    "circle": [("circle", (0.5, 0.5), 0.5)],
    "diamond": [("polygon", [(0.5, 0), (1, 0.5), (0.5, 1), (0, 0.5)])],
}
_FEATURES = {
    "plain": [],
    "cross": [("line", (0, 0), (1, 1)), ("line", (1, 0), (0, 1))],
    "plus": [("line", (0.5, 0), (0.5, 1)), ("line", (0, 0.5), (1, 0.5))],
    "ring": [("circle", (0.5, 0.5), 0.25)],
    "bar": [("line", (0, 0.5), (1, 0.5))],
    "stem": [("line", (0.5, 0), (0.5, 1))],
    "dot": [("circle", (0.5, 0.5), 0.08)],
    "wave": [("cubic", [(0.15, 0.55), (0.35, 0.25), (0.65, 0.85), (0.85, 0.55)])],
}
# Ordered so that small libraries already differ strongly in topology.
_ORDER = [
    ("box", "cross"), ("triangle", "stem"), ("box", "ring"), ("circle", "plus"),
    ("diamond", "plain"), ("circle", "dot"), ("triangle", "plain"), ("box", "bar"),
    ("diamond", "cross"), ("circle", "ring"), ("triangle", "ring"), ("box", "plain"),
    ("diamond", "dot"), ("circle", "wave"), ("triangle", "dot"), ("box", "plus"),
    ("diamond", "ring"), ("circle", "bar"), ("triangle", "wave"), ("box", "dot"),
    ("diamond", "wave"), ("circle", "plain"), ("triangle", "bar"), ("box", "wave"),
    ("diamond", "bar"), ("circle", "cross"),
]


@dataclass(frozen=True)
class SymbolTemplate:
    name: str
    primitives: tuple
    class_id: int


def make_library(num_classes: int) -> list[SymbolTemplate]:
    if not 2 <= num_classes <= len(_ORDER):
        raise ValueError(f"num_classes must be in [2, {len(_ORDER)}]")
    return [
        SymbolTemplate(f"{base}_{feat}", tuple(_BASES[base] + _FEATURES[feat]), i)
        for i, (base, feat) in enumerate(_ORDER[:num_classes])
    ]


def _fmt(v: float) -> str:
    s = f"{v:.3f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


def _place(pts, scale, theta, offset):
    pts = np.asarray(pts, dtype=float) - 0.5
    c, s = math.cos(theta), math.sin(theta)
    R = np.array([[c, -s], [s, c]])
    return (pts * scale) @ R.T + offset


def primitive_svg(prim, scale: float, theta: float, offset, stroke: str = "black") -> str:
    kind = prim[0]
    style = f'fill="none" stroke="{stroke}" stroke-width="1"'
    if kind == "line":
        a, b = _place([prim[1], prim[2]], scale, theta, offset)
        return f'<line x1="{_fmt(a[0])}" y1="{_fmt(a[1])}" x2="{_fmt(b[0])}" y2="{_fmt(b[1])}" {style}/>'
    if kind == "polygon":
        pts = _place(prim[1], scale, theta, offset)
        return f'<polygon points="{" ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in pts)}" {style}/>'
    if kind == "circle":
        (cx, cy), = _place([prim[1]], scale, theta, offset)
        return f'<circle cx="{_fmt(cx)}" cy="{_fmt(cy)}" r="{_fmt(prim[2] * scale)}" {style}/>'
    if kind == "cubic":
        p = _place(prim[1], scale, theta, offset)
        d = f"M{_fmt(p[0, 0])},{_fmt(p[0, 1])} C" + " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in p[1:])
        return f'<path d="{d}" {style}/>'
    raise ValueError(f"unknown primitive {kind!r}")


def _wrap(body: list[str], width: float, height: float) -> str:
    head = f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(width)}" height="{_fmt(height)}">'
    return "\n".join([head, *body, "</svg>"]) + "\n"


def _elements_box(elements: list[str]) -> np.ndarray:
    doc = parse_svg(_wrap(elements, 1, 1))
    pts = np.concatenate([c.points for c in doc.curves])
    return np.concatenate([pts.min(axis=0), pts.max(axis=0)])


def _fits(box, placed, gap, width, height) -> bool:
    if box[0] < gap or box[1] < gap or box[2] > width - gap or box[3] > height - gap:
        return False
    for other in placed:
        if not (box[2] + gap < other[0] or other[2] + gap < box[0] or box[3] + gap < other[1] or other[3] + gap < box[1]):
            return False
    return True


class PlacementError(RuntimeError):
    pass


def make_document(rng: np.random.Generator, library: list[SymbolTemplate], num_symbols: int,
                  canvas=(600.0, 600.0), scale_range=(40.0, 80.0), clutter: int = 0,
                  gap_frac: float = 0.05, max_tries: int = 500) -> tuple[str, list[Annotation]]:
    """SVG text and ground truth for one random document.

    Items keep a gap of ``gap_frac`` of the canvas diagonal from each other
    and from the border, wider than twice the default cluster expansion, so
    every symbol and every clutter stroke forms its own regional cluster.
    """
    width, height = canvas
    gap = gap_frac * math.hypot(width, height)
    placed: list[np.ndarray] = []
    body: list[str] = []
    anns: list[Annotation] = []
    for _ in range(num_symbols):
        tpl = library[int(rng.integers(len(library)))]
        for _attempt in range(max_tries):
            scale = rng.uniform(*scale_range)
            theta = rng.uniform(0, 2 * math.pi)
            offset = rng.uniform([0, 0], [width, height])
            elems = [primitive_svg(p, scale, theta, offset) for p in tpl.primitives]
            box = _elements_box(elems)
            if _fits(box, placed, gap, width, height):
                break
        else:
            raise PlacementError(f"could not place {num_symbols} symbols; try fewer symbols or a larger canvas")
        placed.append(box)
        body.append(f'<g class="{tpl.name}">')
        body.extend(elems)
        body.append("</g>")
        anns.append(Annotation(GroundTruthBox(*box), tpl.class_id))
    for _ in range(clutter):
        for _attempt in range(max_tries):
            size = rng.uniform(0.5 * scale_range[0], scale_range[1])
            offset = rng.uniform([0, 0], [width, height])
            n = int(rng.integers(2, 5))
            pts = rng.uniform(0, 1, size=(n + 1, 2))
            pts = (pts - 0.5) * size + offset
            elem = f'<polyline points="{" ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in pts)}" fill="none" stroke="black" stroke-width="1"/>'
            box = _elements_box([elem])
            if _fits(box, placed, gap, width, height):
                break
        else:
            raise PlacementError("could not place clutter; try fewer clutter strokes")
        placed.append(box)
        body.append(elem)
    return _wrap(body, width, height), anns


@dataclass
class SynthDoc:
    name: str
    split: str
    svg: str
    annotations: list[Annotation]

    def document(self, class_names) -> VectorDocument:
        return parse_svg(self.svg).with_annotations(self.annotations, class_names)


def split_tags(doc_count: int, fractions=(0.6, 0.2, 0.2)) -> list[str]:
    n_train = int(round(fractions[0] * doc_count))
    n_val = int(round(fractions[1] * doc_count))
    n_val = min(n_val, doc_count - n_train)
    return ["train"] * n_train + ["val"] * n_val + ["test"] * (doc_count - n_train - n_val)


def generate(doc_count: int, num_classes: int = 4, symbols_per_doc=(3, 6), canvas=(600.0, 600.0),
             seed: int = 0, clutter=(2, 5), fractions=(0.6, 0.2, 0.2),
             scale_range=(40.0, 80.0)) -> tuple[list[SynthDoc], list[str]]:
    """In-memory dataset; document ``i`` uses generator ``(seed, i)``.

    ``clutter=None`` disables background strokes.
    """
    library = make_library(num_classes)
    tags = split_tags(doc_count, fractions)
    docs = []
    for i in range(doc_count):
        rng = np.random.default_rng([seed, i])
        k = int(rng.integers(symbols_per_doc[0], symbols_per_doc[1] + 1))
        n_clutter = int(rng.integers(clutter[0], clutter[1] + 1)) if clutter else 0
        svg, anns = make_document(rng, library, k, canvas, scale_range, n_clutter)
        docs.append(SynthDoc(f"{i:04d}", tags[i], svg, anns))
    return docs, [t.name for t in library]


def write_dataset(out_dir, docs: list[SynthDoc], class_names) -> Path:
    """Write ``docs/NNNN.svg``, ``docs/NNNN.json`` and ``manifest.txt``."""
    out = Path(out_dir)
    entries = []
    for d in docs:
        svg_path = out / "docs" / f"{d.name}.svg"
        ann_path = out / "docs" / f"{d.name}.json"
        atomic_write_text(svg_path, d.svg)
        atomic_write_text(ann_path, annotation_json(d.annotations, class_names))
        entries.append(ManifestEntry(d.split, svg_path, ann_path))
    manifest = out / "manifest.txt"
    atomic_write_text(manifest, manifest_text(entries, class_names, out))
    return manifest
