"""SVG subset reader producing cubic Bézier curves.

Supported elements: line, polyline, polygon, rect, circle, ellipse and path
(M/L/H/V/C/S/Q/T/A/Z plus relative forms). Groups propagate stroke style and
translate/scale/rotate/matrix transforms.
"""

from __future__ import annotations

import logging
import math
import re
import xml.etree.ElementTree as ET

import numpy as np
import webcolors

from .document import VectorDocument, curves_bbox
from .geometry import (
    CubicBezier,
    InvalidPrimitiveError,
    arc_to_beziers,
    ellipse_to_beziers,
    line_to_cubic,
    quad_to_cubic,
    transform_curve,
)

log = logging.getLogger(__name__)

SHAPES = {"line", "polyline", "polygon", "rect", "circle", "ellipse", "path"}
CONTAINERS = {"svg", "g", "a", "switch"}
SILENT = {"title", "desc", "metadata", "defs", "style", "namedview"}

_NUMBER = re.compile(r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?")
_LENGTH = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*(px|pt|mm|cm|in)?\s*$")
_UNIT = {None: 1.0, "px": 1.0, "pt": 4.0 / 3.0, "mm": 96 / 25.4, "cm": 96 / 2.54, "in": 96.0}


class SVGParseError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class ElementError(ValueError):
    pass


def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1] if isinstance(tag, str) else ""


def parse_length(value: str | None, default: float | None = None) -> float | None:
    if value is None:
        return default
    m = _LENGTH.match(value)
    if not m:
        raise ElementError(f"bad length {value!r}")
    return float(m.group(1)) * _UNIT[m.group(2)]


def parse_color(value: str | None) -> tuple[float, float, float] | None:
    """RGB in [0, 1] for a CSS color, or None for ``none``/``transparent``."""
    v = value.strip().lower()
    if v in ("none", "transparent"):
        return None
    if v.startswith("rgb(") and v.endswith(")"):
        parts = [p.strip() for p in v[4:-1].split(",")]
        if len(parts) != 3:
            raise ElementError(f"bad color {value!r}")
        chans = []
        for p in parts:
            if p.endswith("%"):
                chans.append(float(p[:-1]) / 100.0)
            else:
                chans.append(float(p) / 255.0)
        return tuple(min(1.0, max(0.0, c)) for c in chans)
    try:
        rgb = webcolors.html5_parse_legacy_color(v) if not v.startswith("#") else webcolors.hex_to_rgb(v)
    except ValueError as exc:
        raise ElementError(f"bad color {value!r}") from exc
    return (rgb.red / 255.0, rgb.green / 255.0, rgb.blue / 255.0)


def parse_transform(text: str | None) -> tuple[np.ndarray, list[str]]:
    """2x3 affine matrix for an SVG transform list; unsupported parts reported."""
    m = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    ignored = []
    if not text:
        return m, ignored
    for name, args in re.findall(r"(\w+)\s*\(([^)]*)\)", text):
        vals = [float(v) for v in _NUMBER.findall(args)]
        if name == "translate":
            t = np.array([[1, 0, vals[0]], [0, 1, vals[1] if len(vals) > 1 else 0.0]])
        elif name == "scale":
            sx = vals[0]
            sy = vals[1] if len(vals) > 1 else sx
            t = np.array([[sx, 0, 0], [0, sy, 0]])
        elif name == "rotate":
            a = math.radians(vals[0])
            c, s = math.cos(a), math.sin(a)
            cx, cy = (vals[1], vals[2]) if len(vals) >= 3 else (0.0, 0.0)
            t = np.array([[c, -s, cx - c * cx + s * cy], [s, c, cy - s * cx - c * cy]])
        elif name == "matrix" and len(vals) == 6:
            a, b, c, d, e, f = vals
            t = np.array([[a, c, e], [b, d, f]])
        else:
            ignored.append(name)
            continue
        m = _compose(m, t)
    return m, ignored


def _compose(outer: np.ndarray, inner: np.ndarray) -> np.ndarray:
    o = np.vstack([outer, [0, 0, 1]])
    i = np.vstack([inner, [0, 0, 1]])
    return (o @ i)[:2]


def _style(elem: ET.Element, inherited: dict) -> dict:
    style = dict(inherited)
    for key in ("stroke", "fill", "stroke-width"):
        if key in elem.attrib:
            style[key] = elem.attrib[key]
    for decl in elem.attrib.get("style", "").split(";"):
        if ":" in decl:
            k, v = decl.split(":", 1)
            k = k.strip()
            if k in ("stroke", "fill", "stroke-width"):
                style[k] = v.strip()
    return style


def _resolve_style(style: dict) -> dict:
    stroke, fill = style.get("stroke"), style.get("fill")
    color = parse_color(stroke) if stroke is not None else None
    if color is None and fill is not None:
        color = parse_color(fill)
    if color is None:
        color = (0.0, 0.0, 0.0)
    width = parse_length(style.get("stroke-width"), 1.0)
    if width < 0:
        raise ElementError(f"negative stroke-width {width}")
    return {"color": color, "stroke_width": width}


def _attr(elem: ET.Element, name: str, default: float | None = None) -> float:
    value = elem.attrib.get(name)
    if value is None:
        if default is None:
            raise ElementError(f"<{_local(elem.tag)}> missing attribute {name!r}")
        return default
    out = parse_length(value)
    if not math.isfinite(out):
        raise ElementError(f"non-finite attribute {name}={value!r}")
    return out


def _points_attr(elem: ET.Element) -> list[tuple[float, float]]:
    text = elem.attrib.get("points", "")
    nums = [float(v) for v in _NUMBER.findall(text)]
    if len(nums) % 2 or len(nums) < 4:
        raise ElementError(f"bad points attribute {text!r}")
    return list(zip(nums[::2], nums[1::2]))


def _polyline(points, closed: bool, style) -> list[CubicBezier]:
    pts = list(points)
    if closed and pts[0] != pts[-1]:
        pts.append(pts[0])
    return [line_to_cubic(a, b, **style) for a, b in zip(pts, pts[1:]) if a != b]


class _PathLexer:
    def __init__(self, d: str):
        self.d = d
        self.i = 0

    def _skip(self):
        while self.i < len(self.d) and (self.d[self.i].isspace() or self.d[self.i] == ","):
            self.i += 1

    def at_end(self) -> bool:
        self._skip()
        return self.i >= len(self.d)

    def peek_command(self) -> str | None:
        self._skip()
        if self.i < len(self.d) and self.d[self.i].isalpha() and self.d[self.i] not in "eE":
            return self.d[self.i]
        return None

    def command(self) -> str:
        c = self.peek_command()
        if c is None:
            raise ElementError(f"expected path command at offset {self.i} in {self.d!r}")
        self.i += 1
        return c

    def number(self) -> float:
        self._skip()
        m = _NUMBER.match(self.d, self.i)
        if not m:
            raise ElementError(f"expected number at offset {self.i} in {self.d!r}")
        self.i = m.end()
        return float(m.group())

    def flag(self) -> bool:
        self._skip()
        if self.i < len(self.d) and self.d[self.i] in "01":
            self.i += 1
            return self.d[self.i - 1] == "1"
        raise ElementError(f"expected arc flag at offset {self.i} in {self.d!r}")

    def has_number(self) -> bool:
        self._skip()
        return self.i < len(self.d) and _NUMBER.match(self.d, self.i) is not None


def parse_path(d: str, style: dict) -> list[CubicBezier]:
    lex = _PathLexer(d)
    out: list[CubicBezier] = []
    cur = np.zeros(2)
    start = np.zeros(2)
    last_ctrl = None  # reflected control for S/T
    last_cmd = ""
    cmd = None
    while not lex.at_end():
        c = lex.peek_command()
        if c is not None:
            cmd = lex.command()
        elif cmd is None:
            raise ElementError(f"expected path command at offset {lex.i} in {d!r}")
        elif cmd in "Mm":
            cmd = "L" if cmd == "M" else "l"  # implicit lineto after moveto
        rel = cmd.islower()
        base = cur if rel else np.zeros(2)
        up = cmd.upper()

        def pt():
            x = lex.number()
            y = lex.number()
            return base + np.array([x, y])

        if up == "Z":
            if np.any(cur != start):
                out.append(line_to_cubic(cur, start, **style))
            cur = start.copy()
            last_ctrl = None
            last_cmd = up
            cmd = None
            continue
        if up == "M":
            cur = pt()
            start = cur.copy()
            last_ctrl = None
        elif up == "L":
            p = pt()
            if np.any(p != cur):
                out.append(line_to_cubic(cur, p, **style))
            cur = p
            last_ctrl = None
        elif up in "HV":
            v = lex.number()
            p = cur.copy()
            idx = 0 if up == "H" else 1
            p[idx] = v + (cur[idx] if rel else 0.0)
            if np.any(p != cur):
                out.append(line_to_cubic(cur, p, **style))
            cur = p
            last_ctrl = None
        elif up == "C":
            c1, c2, p = pt(), pt(), pt()
            out.append(CubicBezier(cur, c1, c2, p, **style))
            last_ctrl, cur = c2, p
        elif up == "S":
            c1 = 2 * cur - last_ctrl if last_cmd in "CS" and last_ctrl is not None else cur.copy()
            c2, p = pt(), pt()
            out.append(CubicBezier(cur, c1, c2, p, **style))
            last_ctrl, cur = c2, p
        elif up == "Q":
            q1, p = pt(), pt()
            out.append(quad_to_cubic(cur, q1, p, **style))
            last_ctrl, cur = q1, p
        elif up == "T":
            q1 = 2 * cur - last_ctrl if last_cmd in "QT" and last_ctrl is not None else cur.copy()
            p = pt()
            out.append(quad_to_cubic(cur, q1, p, **style))
            last_ctrl, cur = q1, p
        elif up == "A":
            rx, ry, phi = lex.number(), lex.number(), lex.number()
            large, sweep = lex.flag(), lex.flag()
            p = pt()
            out.extend(arc_to_beziers(cur, rx, ry, phi, large, sweep, p, **style))
            cur = p
            last_ctrl = None
        else:
            raise ElementError(f"unsupported path command {cmd!r}")
        last_cmd = up
    return out


def element_curves(elem: ET.Element, style: dict) -> list[CubicBezier]:
    """Cubic curves for one supported shape element (untransformed)."""
    tag = _local(elem.tag)
    if tag == "line":
        a = (_attr(elem, "x1", 0.0), _attr(elem, "y1", 0.0))
        b = (_attr(elem, "x2", 0.0), _attr(elem, "y2", 0.0))
        return [line_to_cubic(a, b, **style)] if a != b else []
    if tag in ("polyline", "polygon"):
        return _polyline(_points_attr(elem), tag == "polygon", style)
    if tag == "rect":
        x, y = _attr(elem, "x", 0.0), _attr(elem, "y", 0.0)
        w, h = _attr(elem, "width"), _attr(elem, "height")
        if w <= 0 or h <= 0:
            raise ElementError(f"rect with non-positive size {w}x{h}")
        return _polyline([(x, y), (x + w, y), (x + w, y + h), (x, y + h)], True, style)
    if tag == "circle":
        r = _attr(elem, "r")
        try:
            return ellipse_to_beziers((_attr(elem, "cx", 0.0), _attr(elem, "cy", 0.0)), r, r, **style)
        except InvalidPrimitiveError as exc:
            raise ElementError(str(exc)) from exc
    if tag == "ellipse":
        try:
            return ellipse_to_beziers(
                (_attr(elem, "cx", 0.0), _attr(elem, "cy", 0.0)), _attr(elem, "rx"), _attr(elem, "ry"), **style
            )
        except InvalidPrimitiveError as exc:
            raise ElementError(str(exc)) from exc
    if tag == "path":
        return parse_path(elem.attrib.get("d", ""), style)
    raise ElementError(f"unsupported element <{tag}>")


def parse_svg(text: str) -> VectorDocument:
    """Parse SVG text into a :class:`VectorDocument` of cubic curves.

    Malformed XML raises :class:`SVGParseError` carrying the line number.
    Unsupported elements are skipped and listed in ``warnings``; elements with
    unparseable attributes are dropped and listed in ``errors``.
    """
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        line, col = exc.position
        msg = re.sub(r":\s*line \d+, column \d+$", "", str(exc))
        raise SVGParseError(f"{msg} (column {col})", line=line) from exc
    if _local(root.tag) != "svg":
        raise SVGParseError(f"root element is <{_local(root.tag)}>, expected <svg>", line=1)

    curves: list[CubicBezier] = []
    warnings: list[str] = []
    errors: list[str] = []

    def walk(elem, matrix, style):
        tag = _local(elem.tag)
        try:
            local, ignored = parse_transform(elem.attrib.get("transform"))
        except (ValueError, IndexError):
            errors.append(f"<{tag}>: bad transform {elem.attrib.get('transform')!r}")
            return
        for name in ignored:
            warnings.append(f"<{tag}>: ignored transform {name}")
        m = _compose(matrix, local)
        st = _style(elem, style)
        if tag in CONTAINERS:
            for child in elem:
                walk(child, m, st)
            return
        if tag in SILENT or not tag:
            return
        if tag not in SHAPES:
            warnings.append(f"unsupported element <{tag}> skipped")
            return
        try:
            resolved = _resolve_style(st)
            shape = element_curves(elem, resolved)
        except (ElementError, ValueError) as exc:
            errors.append(f"<{tag}>: {exc}")
            log.debug("skipping <%s>: %s", tag, exc)
            return
        width_scale = math.sqrt(abs(np.linalg.det(m[:, :2])))
        identity = np.array_equal(m, np.array([[1.0, 0, 0], [0, 1.0, 0]]))
        for c in shape:
            curves.append(c if identity else transform_curve(c, m, width_scale))

    root_style: dict = {}
    for child in root:
        walk(child, np.array([[1.0, 0, 0], [0, 1.0, 0]]), _style(root, root_style))

    width = height = None
    try:
        width = parse_length(root.attrib.get("width"))
        height = parse_length(root.attrib.get("height"))
    except ElementError:
        width = height = None
    if (width is None or height is None) and "viewBox" in root.attrib:
        vb = [float(v) for v in _NUMBER.findall(root.attrib["viewBox"])]
        if len(vb) == 4:
            width, height = vb[2], vb[3]
    if width is None or height is None:
        if curves:
            x0, y0, x1, y1 = curves_bbox(curves)
            width, height = x1 - x0, y1 - y0
        else:
            width = height = 0.0
    return VectorDocument(
        curves=tuple(curves),
        width=float(width),
        height=float(height),
        warnings=tuple(warnings),
        errors=tuple(errors),
    )


def read_svg(path) -> VectorDocument:
    with open(path, encoding="utf-8") as fh:
        return parse_svg(fh.read())
