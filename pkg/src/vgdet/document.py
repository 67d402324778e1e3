from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import CubicBezier, split_at_intersections, transform_curve


class AnnotationError(ValueError):
    pass


@dataclass(frozen=True)
class GroundTruthBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        vals = (self.x_min, self.y_min, self.x_max, self.y_max)
        if not all(math.isfinite(v) for v in vals):
            raise AnnotationError(f"non-finite box {vals}")
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise AnnotationError(f"box must have positive area: {vals}")

    def as_array(self) -> np.ndarray:
        return np.array([self.x_min, self.y_min, self.x_max, self.y_max])


@dataclass(frozen=True)
class Annotation:
    box: GroundTruthBox
    class_id: int


@dataclass(frozen=True)
class VectorDocument:
    """Curves of one vector graphic plus canvas extent and ground truth.

    ``warnings`` counts skipped unsupported elements; ``errors`` lists
    elements that failed to parse and were dropped.
    """

    curves: tuple[CubicBezier, ...] = ()
    width: float = 0.0
    height: float = 0.0
    annotations: tuple[Annotation, ...] = ()
    class_names: tuple[str, ...] = ()
    warnings: tuple[str, ...] = ()
    errors: tuple[str, ...] = ()
    overlaps: tuple[tuple[int, int], ...] = field(default=(), compare=False)

    @property
    def diagonal(self) -> float:
        return math.hypot(self.width, self.height)

    @property
    def num_warnings(self) -> int:
        return len(self.warnings)

    def gt_boxes(self) -> np.ndarray:
        if not self.annotations:
            return np.zeros((0, 4))
        return np.array([a.box.as_array() for a in self.annotations])

    def gt_labels(self) -> np.ndarray:
        return np.array([a.class_id for a in self.annotations], dtype=int)

    def with_annotations(self, annotations, class_names=None) -> VectorDocument:
        return replace(
            self,
            annotations=tuple(annotations),
            class_names=tuple(class_names) if class_names is not None else self.class_names,
        )

    def split(self, t_junctions: bool = True) -> VectorDocument:
        res = split_at_intersections(self.curves, t_junctions=t_junctions)
        return replace(self, curves=tuple(res.curves), overlaps=tuple(res.overlaps))

    def transformed(self, matrix: np.ndarray) -> VectorDocument:
        """Apply an affine map to every curve and every ground-truth box.

        Boxes become the axis-aligned bounding rectangle of their mapped corners.
        Canvas extent is left unchanged.
        """
        matrix = np.asarray(matrix, dtype=float)
        width_scale = math.sqrt(abs(np.linalg.det(matrix[:, :2])))
        curves = tuple(transform_curve(c, matrix, width_scale) for c in self.curves)
        anns = []
        for a in self.annotations:
            b = a.box
            corners = np.array(
                [[b.x_min, b.y_min], [b.x_max, b.y_min], [b.x_max, b.y_max], [b.x_min, b.y_max]]
            )
            mapped = corners @ matrix[:, :2].T + matrix[:, 2]
            lo, hi = mapped.min(axis=0), mapped.max(axis=0)
            anns.append(Annotation(GroundTruthBox(lo[0], lo[1], hi[0], hi[1]), a.class_id))
        return replace(self, curves=curves, annotations=tuple(anns))


def curves_bbox(curves) -> tuple[float, float, float, float]:
    pts = np.concatenate([c.points for c in curves])
    return (pts[:, 0].min(), pts[:, 1].min(), pts[:, 0].max(), pts[:, 1].max())
