"""Canonical annotation files, dataset manifests and the SESYD converter.

Annotation file (JSON)::

    {"classes": ["door", "window"],            # optional per file
     "objects": [{"class": "door", "bbox": [x_min, y_min, x_max, y_max]}]}

Manifest (text, one document per line, paths relative to the manifest)::

    classes door window
    train  docs/0000.svg  docs/0000.json
    test   docs/0001.svg  docs/0001.json
"""

from __future__ import annotations

import json
import os
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from pathlib import Path

from .document import Annotation, AnnotationError, GroundTruthBox, VectorDocument

SPLITS = ("train", "val", "test")


def parse_annotations(data: dict, class_names=None) -> tuple[list[Annotation], list[str]]:
    classes = list(class_names) if class_names is not None else list(data.get("classes") or [])
    if not classes and data.get("objects"):
        raise AnnotationError("no class list given and the annotation file has no 'classes'")
    index = {name: i for i, name in enumerate(classes)}
    out = []
    for obj in data.get("objects", []):
        name = obj.get("class")
        if name not in index:
            raise AnnotationError(f"unknown class {name!r}; known: {classes}")
        bbox = obj.get("bbox")
        if not isinstance(bbox, (list, tuple)) or len(bbox) != 4:
            raise AnnotationError(f"bbox must be [x_min, y_min, x_max, y_max], got {bbox!r}")
        out.append(Annotation(GroundTruthBox(*map(float, bbox)), index[name]))
    return out, classes


def load_annotations(doc: VectorDocument, path, class_names=None) -> VectorDocument:
    """Attach the boxes of an annotation file to ``doc``.

    ``class_names`` is the dataset-level class list; when omitted the file's
    own ``classes`` entry is used.
    """
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    anns, classes = parse_annotations(data, class_names)
    return doc.with_annotations(anns, classes)


def annotation_json(annotations, class_names) -> str:
    objs = [
        {"class": class_names[a.class_id], "bbox": [a.box.x_min, a.box.y_min, a.box.x_max, a.box.y_max]}
        for a in annotations
    ]
    return json.dumps({"classes": list(class_names), "objects": objs}, indent=1) + "\n"


@dataclass(frozen=True)
class ManifestEntry:
    split: str
    svg: Path
    annotation: Path | None


@dataclass
class Manifest:
    entries: list[ManifestEntry]
    class_names: list[str]
    root: Path

    def split(self, name: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == name]


def read_manifest(path) -> Manifest:
    path = Path(path)
    root = path.parent
    entries = []
    classes: list[str] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if parts[0] == "classes":
                classes = parts[1:]
                continue
            if parts[0] not in SPLITS or len(parts) not in (2, 3):
                raise AnnotationError(f"{path}:{lineno}: expected '<split> <svg> [<annotation>]'")
            ann = root / parts[2] if len(parts) == 3 else None
            entries.append(ManifestEntry(parts[0], root / parts[1], ann))
    if not classes:
        for e in entries:
            if e.annotation is not None and e.annotation.exists():
                with open(e.annotation, encoding="utf-8") as fh:
                    classes = list(json.load(fh).get("classes") or [])
                if classes:
                    break
    return Manifest(entries, classes, root)


def manifest_text(entries, class_names, root) -> str:
    lines = ["classes " + " ".join(class_names)] if class_names else []
    for e in entries:
        ann = os.path.relpath(e.annotation, root) if e.annotation is not None else ""
        lines.append(f"{e.split} {os.path.relpath(e.svg, root)} {ann}".rstrip())
    return "\n".join(lines) + "\n"


def load_document(entry: ManifestEntry, class_names) -> VectorDocument:
    from .svg import read_svg

    doc = read_svg(entry.svg)
    if entry.annotation is None:
        return doc.with_annotations([], class_names)
    return load_annotations(doc, entry.annotation, class_names)


_BOX_KEYS = (
    ("x0", "y0", "x1", "y1"),
    ("xmin", "ymin", "xmax", "ymax"),
    ("x_min", "y_min", "x_max", "y_max"),
    ("left", "top", "right", "bottom"),
)
_LABEL_KEYS = ("label", "class", "name", "type", "category")


def sesyd_to_canonical(xml_text: str, class_names=None) -> dict:
    """Best-effort conversion of a SESYD-like ground-truth XML file.

    Any element carrying a label attribute and a box (corner pairs or
    x/y/width/height) becomes one object; other elements are ignored.
    """
    try:
        root = ET.fromstring(xml_text)
    except ET.ParseError as exc:
        raise AnnotationError(f"ground-truth XML: {exc}") from None
    objects = []
    for elem in root.iter():
        attrs = {k.lower(): v for k, v in elem.attrib.items()}
        label = next((attrs[k] for k in _LABEL_KEYS if k in attrs), None)
        if label is None:
            continue
        box = None
        for keys in _BOX_KEYS:
            if all(k in attrs for k in keys):
                box = [float(attrs[k]) for k in keys]
                break
        if box is None and all(k in attrs for k in ("x", "y", "width", "height")):
            x, y = float(attrs["x"]), float(attrs["y"])
            box = [x, y, x + float(attrs["width"]), y + float(attrs["height"])]
        if box is None:
            continue
        box = [min(box[0], box[2]), min(box[1], box[3]), max(box[0], box[2]), max(box[1], box[3])]
        objects.append({"class": label, "bbox": box})
    classes = list(class_names) if class_names else sorted({o["class"] for o in objects})
    return {"classes": classes, "objects": objects}
