"""Cubic Bézier primitives: evaluation, conversion from other primitives,
De Casteljau subdivision and pairwise intersection splitting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

# Offset of the inner control points for a quarter of the unit circle.
CIRCLE_CONST = 0.551915024494

ENDPOINT_EPS = 1e-4
PARAM_TOL = 1e-6


class InvalidPrimitiveError(ValueError):
    pass


class DomainError(ValueError):
    pass


Point = tuple[float, float]


def _pt(p) -> Point:
    x, y = float(p[0]), float(p[1])
    if not (math.isfinite(x) and math.isfinite(y)):
        raise InvalidPrimitiveError(f"non-finite coordinate {p!r}")
    return (x, y)


@dataclass(frozen=True)
class CubicBezier:
    """Cubic Bézier curve with stroke style.

    ``color`` is an RGB triple with channels in [0, 1].
    """

    p0: Point
    p1: Point
    p2: Point
    p3: Point
    color: tuple[float, float, float] = (0.0, 0.0, 0.0)
    stroke_width: float = 1.0

    def __post_init__(self):
        for name in ("p0", "p1", "p2", "p3"):
            object.__setattr__(self, name, _pt(getattr(self, name)))
        color = tuple(float(c) for c in self.color)
        if len(color) != 3 or not all(0.0 <= c <= 1.0 for c in color):
            raise InvalidPrimitiveError(f"color channels must lie in [0, 1]: {self.color!r}")
        object.__setattr__(self, "color", color)
        w = float(self.stroke_width)
        if not (math.isfinite(w) and w >= 0):
            raise InvalidPrimitiveError(f"invalid stroke width {self.stroke_width!r}")
        object.__setattr__(self, "stroke_width", w)

    @property
    def points(self) -> np.ndarray:
        return np.array([self.p0, self.p1, self.p2, self.p3], dtype=float)

    def with_points(self, pts) -> CubicBezier:
        return replace(self, p0=tuple(pts[0]), p1=tuple(pts[1]), p2=tuple(pts[2]), p3=tuple(pts[3]))

    def bbox(self) -> tuple[float, float, float, float]:
        """Bounding box of the control polygon (contains the curve)."""
        pts = self.points
        return (pts[:, 0].min(), pts[:, 1].min(), pts[:, 0].max(), pts[:, 1].max())

    def is_line(self, tol: float = 1e-12) -> bool:
        """True when the curve is a degree-elevated segment (linear in t)."""
        pts = self.points
        scale = max(1.0, float(np.abs(pts).max()))
        d = pts[3] - pts[0]
        return (
            np.abs(pts[1] - (pts[0] + d / 3.0)).max() <= tol * scale
            and np.abs(pts[2] - (pts[0] + 2.0 * d / 3.0)).max() <= tol * scale
        )


def bezier_points(ctrl: np.ndarray, t) -> np.ndarray:
    """Vectorised Bernstein evaluation of a (4, 2) control array at params ``t``."""
    t = np.asarray(t, dtype=float)[..., None]
    s = 1.0 - t
    return (
        s**3 * ctrl[0]
        + 3.0 * s**2 * t * ctrl[1]
        + 3.0 * s * t**2 * ctrl[2]
        + t**3 * ctrl[3]
    )


def eval_bezier(curve: CubicBezier, t: float) -> np.ndarray:
    if not 0.0 <= t <= 1.0:
        raise DomainError(f"t={t} outside [0, 1]")
    return bezier_points(curve.points, t)


def sample(curve: CubicBezier, n: int = 1001) -> np.ndarray:
    return bezier_points(curve.points, np.linspace(0.0, 1.0, n))


def line_to_cubic(a, b, **style) -> CubicBezier:
    a, b = np.asarray(_pt(a)), np.asarray(_pt(b))
    d = b - a
    return CubicBezier(a, a + d / 3.0, a + 2.0 * d / 3.0, b, **style)


def quad_to_cubic(q0, q1, q2, **style) -> CubicBezier:
    q0, q1, q2 = (np.asarray(_pt(q)) for q in (q0, q1, q2))
    return CubicBezier(q0, q0 + 2.0 / 3.0 * (q1 - q0), q2 + 2.0 / 3.0 * (q1 - q2), q2, **style)


def elevate_to_cubic(primitive: Sequence, **style) -> CubicBezier:
    """Degree-elevate a segment (2 points) or a quadratic (3 points)."""
    if len(primitive) == 2:
        return line_to_cubic(*primitive, **style)
    if len(primitive) == 3:
        return quad_to_cubic(*primitive, **style)
    raise InvalidPrimitiveError(f"expected 2 or 3 control points, got {len(primitive)}")


_UNIT_QUARTERS = np.array(
    [
        [(0, 1), (CIRCLE_CONST, 1), (1, CIRCLE_CONST), (1, 0)],
        [(1, 0), (1, -CIRCLE_CONST), (CIRCLE_CONST, -1), (0, -1)],
        [(0, -1), (-CIRCLE_CONST, -1), (-1, -CIRCLE_CONST), (-1, 0)],
        [(-1, 0), (-1, CIRCLE_CONST), (-CIRCLE_CONST, 1), (0, 1)],
    ],
    dtype=float,
)


def ellipse_to_beziers(center, rx: float, ry: float, **style) -> list[CubicBezier]:
    if not (rx > 0 and ry > 0):
        raise InvalidPrimitiveError(f"ellipse radii must be positive, got rx={rx}, ry={ry}")
    c = np.asarray(_pt(center))
    scale = np.array([rx, ry], dtype=float)
    return [CubicBezier(*(q * scale + c), **style) for q in _UNIT_QUARTERS]


def circle_to_beziers(center, radius: float, **style) -> list[CubicBezier]:
    """Four quarter cubics whose endpoints are the circle's axis extremes."""
    if not radius > 0:
        raise InvalidPrimitiveError(f"circle radius must be positive, got {radius}")
    return ellipse_to_beziers(center, radius, radius, **style)


def arc_to_beziers(p_start, rx, ry, phi_deg, large_arc, sweep, p_end, **style) -> list[CubicBezier]:
    """SVG elliptical arc (endpoint parameterisation) as cubics of at most 90° each."""
    x1, y1 = _pt(p_start)
    x2, y2 = _pt(p_end)
    if (x1, y1) == (x2, y2):
        return []
    rx, ry = abs(float(rx)), abs(float(ry))
    if rx == 0 or ry == 0:
        return [line_to_cubic((x1, y1), (x2, y2), **style)]
    phi = math.radians(float(phi_deg) % 360.0)
    cos_phi, sin_phi = math.cos(phi), math.sin(phi)
    dx, dy = (x1 - x2) / 2.0, (y1 - y2) / 2.0
    x1p = cos_phi * dx + sin_phi * dy
    y1p = -sin_phi * dx + cos_phi * dy
    lam = (x1p / rx) ** 2 + (y1p / ry) ** 2
    if lam > 1:
        s = math.sqrt(lam)
        rx, ry = rx * s, ry * s
    num = rx**2 * ry**2 - rx**2 * y1p**2 - ry**2 * x1p**2
    den = rx**2 * y1p**2 + ry**2 * x1p**2
    coef = math.sqrt(max(0.0, num / den)) if den > 0 else 0.0
    if bool(large_arc) == bool(sweep):
        coef = -coef
    cxp = coef * rx * y1p / ry
    cyp = -coef * ry * x1p / rx
    cx = cos_phi * cxp - sin_phi * cyp + (x1 + x2) / 2.0
    cy = sin_phi * cxp + cos_phi * cyp + (y1 + y2) / 2.0

    def angle(ux, uy, vx, vy):
        return math.atan2(ux * vy - uy * vx, ux * vx + uy * vy)

    theta1 = angle(1.0, 0.0, (x1p - cxp) / rx, (y1p - cyp) / ry)
    dtheta = angle((x1p - cxp) / rx, (y1p - cyp) / ry, (-x1p - cxp) / rx, (-y1p - cyp) / ry)
    if not sweep and dtheta > 0:
        dtheta -= 2 * math.pi
    elif sweep and dtheta < 0:
        dtheta += 2 * math.pi

    n = max(1, int(math.ceil(abs(dtheta) / (math.pi / 2) - 1e-9)))
    delta = dtheta / n
    k = 4.0 / 3.0 * math.tan(delta / 4.0)
    rot = np.array([[cos_phi, -sin_phi], [sin_phi, cos_phi]])
    centre = np.array([cx, cy])

    def on_ellipse(a):
        return rot @ np.array([rx * math.cos(a), ry * math.sin(a)]) + centre

    def tangent(a):
        return rot @ np.array([-rx * math.sin(a), ry * math.cos(a)])

    out = []
    a0 = theta1
    for i in range(n):
        a1 = a0 + delta
        q0, q3 = on_ellipse(a0), on_ellipse(a1)
        if i == 0:
            q0 = np.array([x1, y1])
        if i == n - 1:
            q3 = np.array([x2, y2])
        out.append(CubicBezier(q0, q0 + k * tangent(a0), q3 - k * tangent(a1), q3, **style))
        a0 = a1
    return out


def subdivide(ctrl: np.ndarray, t: float) -> tuple[np.ndarray, np.ndarray]:
    """De Casteljau split of a (4, 2) control array at ``t``."""
    p01 = (1 - t) * ctrl[0] + t * ctrl[1]
    p12 = (1 - t) * ctrl[1] + t * ctrl[2]
    p23 = (1 - t) * ctrl[2] + t * ctrl[3]
    p012 = (1 - t) * p01 + t * p12
    p123 = (1 - t) * p12 + t * p23
    mid = (1 - t) * p012 + t * p123
    left = np.array([ctrl[0], p01, p012, mid])
    right = np.array([mid, p123, p23, ctrl[3]])
    return left, right


def split_curve(curve: CubicBezier, params: Iterable[tuple[float, Point]]) -> list[CubicBezier]:
    """Split ``curve`` at sorted parameters; each split endpoint is snapped to the given point."""
    params = sorted(params)
    pieces = []
    rest = curve.points
    consumed = 0.0
    for t, pt in params:
        local = (t - consumed) / (1.0 - consumed)
        left, rest = subdivide(rest, local)
        left[3] = pt
        rest[0] = pt
        pieces.append(curve.with_points(left))
        consumed = t
    pieces.append(curve.with_points(rest))
    return pieces


def _boxes_overlap(a: np.ndarray, b: np.ndarray, pad: float) -> bool:
    return not (
        a[:, 0].max() + pad < b[:, 0].min()
        or b[:, 0].max() + pad < a[:, 0].min()
        or a[:, 1].max() + pad < b[:, 1].min()
        or b[:, 1].max() + pad < a[:, 1].min()
    )


# Subdivision below runs on flat 8-tuples (x0, y0, ..., x3, y3); numpy
# overhead on 4x2 arrays dominates otherwise.

def _half(c):
    x0, y0, x1, y1, x2, y2, x3, y3 = c
    ax, ay = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
    bx, by = 0.5 * (x1 + x2), 0.5 * (y1 + y2)
    cx, cy = 0.5 * (x2 + x3), 0.5 * (y2 + y3)
    dx, dy = 0.5 * (ax + bx), 0.5 * (ay + by)
    ex, ey = 0.5 * (bx + cx), 0.5 * (by + cy)
    mx, my = 0.5 * (dx + ex), 0.5 * (dy + ey)
    return (x0, y0, ax, ay, dx, dy, mx, my), (mx, my, ex, ey, cx, cy, x3, y3)


def _tbox(c):
    xs, ys = c[0::2], c[1::2]
    return min(xs), min(ys), max(xs), max(ys)


def _flatness(c) -> float:
    """Squared bound on the distance between the curve and its chord."""
    ux = 3.0 * c[2] - 2.0 * c[0] - c[6]
    uy = 3.0 * c[3] - 2.0 * c[1] - c[7]
    vx = 3.0 * c[4] - c[0] - 2.0 * c[6]
    vy = 3.0 * c[5] - c[1] - 2.0 * c[7]
    return max(ux * ux + uy * uy, vx * vx + vy * vy) / 16.0


def _polish(a: np.ndarray, b: np.ndarray, ta: float, tb: float, iters: int = 8):
    """Newton refinement of A(ta) = B(tb); returns the start values if it diverges."""
    ta0, tb0 = ta, tb
    for _ in range(iters):
        f = bezier_points(a, ta) - bezier_points(b, tb)
        da = _derivative(a, ta)
        db = _derivative(b, tb)
        J = np.array([[da[0], -db[0]], [da[1], -db[1]]])
        det = J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
        if abs(det) < 1e-300:
            break
        step_a = (J[1, 1] * f[0] - J[0, 1] * f[1]) / det
        step_b = (-J[1, 0] * f[0] + J[0, 0] * f[1]) / det
        ta, tb = ta - step_a, tb - step_b
        if abs(step_a) < 1e-15 and abs(step_b) < 1e-15:
            break
    if not (abs(ta - ta0) < 1e-4 and abs(tb - tb0) < 1e-4):
        return ta0, tb0
    return min(max(ta, 0.0), 1.0), min(max(tb, 0.0), 1.0)


def _derivative(ctrl: np.ndarray, t: float) -> np.ndarray:
    s = 1.0 - t
    return 3.0 * (s * s * (ctrl[1] - ctrl[0]) + 2.0 * s * t * (ctrl[2] - ctrl[1]) + t * t * (ctrl[3] - ctrl[2]))


def _segment_intersection(a0, a1, b0, b1):
    """Params (s, u) where segments a0a1 and b0b1 meet, ``'overlap'``, or None."""
    r = a1 - a0
    q = b1 - b0
    denom = r[0] * q[1] - r[1] * q[0]
    w = b0 - a0
    scale = max(float(np.abs(r).max()), float(np.abs(q).max()), 1e-300)
    if abs(denom) <= 1e-14 * scale * scale:
        if abs(w[0] * r[1] - w[1] * r[0]) > 1e-12 * scale * max(scale, float(np.abs(w).max())):
            return None
        rr = float(r @ r)
        if rr == 0:
            return None
        t0 = float(w @ r) / rr
        t1 = float((b1 - a0) @ r) / rr
        lo, hi = max(0.0, min(t0, t1)), min(1.0, max(t0, t1))
        if hi - lo > PARAM_TOL:
            return "overlap"
        return None
    s = (w[0] * q[1] - w[1] * q[0]) / denom
    u = (w[0] * r[1] - w[1] * r[0]) / denom
    return s, u


def _curve_hits(a: np.ndarray, b: np.ndarray, scale: float, max_hits: int = 9):
    """Intersection parameter pairs of two cubics by recursive subdivision.

    Pieces are halved until their control polygons are within a small
    tolerance of their chords; chord crossings are then refined by Newton
    iterations on the original curves.
    """
    flat_tol = (1e-7 * scale) ** 2
    pad = 1e-12 * scale
    raw: list[tuple[float, float]] = []
    stack = [(tuple(a.ravel()), 0.0, 1.0, tuple(b.ravel()), 0.0, 1.0)]
    while stack:
        ca, a_lo, a_hi, cb, b_lo, b_hi = stack.pop()
        ba, bb = _tbox(ca), _tbox(cb)
        if ba[2] + pad < bb[0] or bb[2] + pad < ba[0] or ba[3] + pad < bb[1] or bb[3] + pad < ba[1]:
            continue
        a_done = a_hi - a_lo < PARAM_TOL or _flatness(ca) <= flat_tol
        b_done = b_hi - b_lo < PARAM_TOL or _flatness(cb) <= flat_tol
        if a_done and b_done:
            res = _segment_intersection(
                np.array(ca[0:2]), np.array(ca[6:8]), np.array(cb[0:2]), np.array(cb[6:8])
            )
            if res is None:
                continue
            if res == "overlap":
                return "overlap"
            s, u = res
            slack = 1e-9
            if -slack <= s <= 1 + slack and -slack <= u <= 1 + slack:
                s = min(max(s, 0.0), 1.0)
                u = min(max(u, 0.0), 1.0)
                raw.append((a_lo + s * (a_hi - a_lo), b_lo + u * (b_hi - b_lo)))
                if len(raw) > 4 * max_hits:
                    return "overlap"
            continue
        if len(stack) > 4096:
            return "overlap"
        a_parts = [(ca, a_lo, a_hi)]
        if not a_done:
            mid = 0.5 * (a_lo + a_hi)
            l, r = _half(ca)
            a_parts = [(l, a_lo, mid), (r, mid, a_hi)]
        b_parts = [(cb, b_lo, b_hi)]
        if not b_done:
            mid = 0.5 * (b_lo + b_hi)
            l, r = _half(cb)
            b_parts = [(l, b_lo, mid), (r, mid, b_hi)]
        for pa in a_parts:
            for pb in b_parts:
                stack.append((pa[0], pa[1], pa[2], pb[0], pb[1], pb[2]))
    hits: list[tuple[float, float]] = []
    for ta, tb in raw:
        ta, tb = _polish(a, b, ta, tb)
        if not any(abs(ta - x) < 1e-5 and abs(tb - y) < 1e-5 for x, y in hits):
            hits.append((ta, tb))
    if len(hits) > max_hits:
        return "overlap"
    return hits


def intersect(a: CubicBezier, b: CubicBezier):
    """All intersection parameters ``[(ta, tb), ...]`` of two curves, or ``'overlap'``."""
    pa, pb = a.points, b.points
    scale = max(1.0, float(np.abs(np.vstack([pa, pb])).max()))
    if not _boxes_overlap(pa, pb, 1e-12 * scale):
        return []
    if a.is_line() and b.is_line():
        res = _segment_intersection(pa[0], pa[3], pb[0], pb[3])
        if res is None:
            return []
        if res == "overlap":
            return "overlap"
        s, u = res
        slack = 1e-12
        if -slack <= s <= 1 + slack and -slack <= u <= 1 + slack:
            return [(min(max(s, 0.0), 1.0), min(max(u, 0.0), 1.0))]
        return []
    return _curve_hits(pa, pb, scale)


@dataclass
class SplitResult:
    curves: list[CubicBezier]
    overlaps: list[tuple[int, int]] = field(default_factory=list)


def _interior(t: float) -> bool:
    return ENDPOINT_EPS <= t <= 1.0 - ENDPOINT_EPS


def split_at_intersections(curves: Sequence[CubicBezier], t_junctions: bool = True) -> SplitResult:
    """Subdivide every curve at its interior intersections with the others.

    An intersection splits a curve only where it is interior to that curve
    (parameter at least 1e-4 away from both ends). With ``t_junctions=False``
    any intersection touching an endpoint of either curve is ignored entirely.
    Coincident/overlapping pairs are left unsplit and reported in ``overlaps``.
    """
    curves = list(curves)
    cuts: list[list[tuple[float, Point]]] = [[] for _ in curves]
    overlaps = []
    boxes = np.array([c.bbox() for c in curves]) if curves else np.zeros((0, 4))
    for i in range(len(curves)):
        if i + 1 >= len(curves):
            break
        cand = np.nonzero(
            (boxes[i + 1 :, 0] <= boxes[i, 2])
            & (boxes[i + 1 :, 2] >= boxes[i, 0])
            & (boxes[i + 1 :, 1] <= boxes[i, 3])
            & (boxes[i + 1 :, 3] >= boxes[i, 1])
        )[0] + i + 1
        for j in cand:
            hits = intersect(curves[i], curves[j])
            if hits == "overlap":
                overlaps.append((i, int(j)))
                continue
            for ta, tb in hits:
                ia, ib = _interior(ta), _interior(tb)
                if not (ia or ib):
                    continue
                if not t_junctions and not (ia and ib):
                    continue
                pa = eval_bezier(curves[i], ta)
                pb = eval_bezier(curves[j], tb)
                if ia and ib:
                    pt = tuple(0.5 * (pa + pb))
                elif ia:
                    pt = tuple(curves[j].points[0 if tb < 0.5 else 3])
                else:
                    pt = tuple(curves[i].points[0 if ta < 0.5 else 3])
                if ia:
                    cuts[i].append((ta, pt))
                if ib:
                    cuts[j].append((tb, pt))
    out = []
    for curve, cs in zip(curves, cuts):
        if not cs:
            out.append(curve)
            continue
        cs.sort()
        merged = [cs[0]]
        for t, p in cs[1:]:
            if t - merged[-1][0] > PARAM_TOL:
                merged.append((t, p))
        out.extend(split_curve(curve, merged))
    return SplitResult(out, overlaps)


def chord_length(curve: CubicBezier, n: int = 1001) -> float:
    pts = sample(curve, n)
    return float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum())


def transform_curve(curve: CubicBezier, matrix: np.ndarray, width_scale: float = 1.0) -> CubicBezier:
    """Apply a 2x3 affine matrix to the control points."""
    pts = curve.points @ matrix[:, :2].T + matrix[:, 2]
    return replace(
        curve,
        p0=tuple(pts[0]),
        p1=tuple(pts[1]),
        p2=tuple(pts[2]),
        p3=tuple(pts[3]),
        stroke_width=curve.stroke_width * width_scale,
    )
