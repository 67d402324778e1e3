"""Symbol detection in vector graphics with a dual-stream graph neural network."""

from .config import RunConfig
from .document import Annotation, GroundTruthBox, VectorDocument
from .geometry import CubicBezier
from .graph import DetectionGraph, build_graph
from .metrics import Detection, EvalReport, evaluate, iou, nms
from .model import DualStreamGNN, ModelConfig
from .pipeline import detect, train
from .proposals import Proposal, generate_proposals
from .svg import parse_svg, read_svg

__version__ = "0.1.0"

__all__ = [
    "Annotation",
    "CubicBezier",
    "Detection",
    "DetectionGraph",
    "DualStreamGNN",
    "EvalReport",
    "GroundTruthBox",
    "ModelConfig",
    "Proposal",
    "RunConfig",
    "VectorDocument",
    "build_graph",
    "detect",
    "evaluate",
    "generate_proposals",
    "iou",
    "nms",
    "parse_svg",
    "read_svg",
    "train",
]
