"""Command-line entry point: ``vgdet <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from html import escape
from pathlib import Path

from . import synth
from .annotations import load_document, read_manifest, sesyd_to_canonical
from .autograd import atomic_write_text
from .config import RunConfig, config_text, parse_value, read_config
from .document import AnnotationError
from .graph import build_graph, dump_graph
from .model import DualStreamGNN
from .pipeline import (
    checkpoint_classes,
    detect,
    evaluate_model,
    run_config_from_meta,
    sweep,
    sweep_table,
    train,
)
from .svg import ElementError, SVGParseError, read_svg

log = logging.getLogger("vgdet")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 0, 1, 2, 3

PALETTE = [
    "#e6194b", "#3cb44b", "#4363d8", "#f58231", "#911eb4", "#46f0f0", "#f032e6", "#bcf60c",
    "#008080", "#9a6324", "#800000", "#808000", "#000075", "#808080", "#ffe119", "#fabebe",
]


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _path(args, p) -> Path:
    p = Path(p)
    return p if p.is_absolute() else Path(args.root) / p


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text: str, n: int) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise UsageError(f"expected {n} comma-separated numbers, got {text!r}") from None
    if len(vals) != n:
        raise UsageError(f"expected {n} comma-separated numbers, got {text!r}")
    return vals


def _run_config(args) -> RunConfig:
    cfg = read_config(_path(args, args.config)) if getattr(args, "config", None) else RunConfig()
    overrides = {}
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key, value = (s.strip() for s in item.split("=", 1))
        if not hasattr(cfg, key):
            raise UsageError(f"unknown config key {key!r}")
        try:
            overrides[key] = parse_value(key, value)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    if getattr(args, "epochs", None) is not None:
        overrides["epochs"] = args.epochs
    if args.seed is not None:
        overrides["seed"] = args.seed
    return cfg.replace(**overrides)


def _load_split(args, manifest_path, split: str):
    path = _path(args, manifest_path)
    if not path.exists():
        raise DataError(f"manifest not found: {path}")
    manifest = read_manifest(path)
    if not manifest.class_names:
        raise DataError(f"{path}: no class list (add a 'classes ...' line)")
    docs = [load_document(e, manifest.class_names) for e in manifest.split(split)]
    return docs, manifest.class_names


def _load_model(args):
    path = _path(args, args.model)
    if not path.exists():
        raise DataError(f"checkpoint not found: {path}")
    try:
        return DualStreamGNN.load(path)
    except (ValueError, KeyError, OSError) as exc:
        raise DataError(f"{path}: not a readable checkpoint ({exc})") from None


# -- subcommands ------------------------------------------------------------

def cmd_convert(args) -> int:
    doc = read_svg(_path(args, args.svg))
    for w in doc.warnings:
        print(f"warning: {w}", file=sys.stderr)
    for e in doc.errors:
        print(f"error: {e}", file=sys.stderr)
    split = doc.split(not args.no_t_junctions)
    graph = build_graph(split)
    print(f"curves {len(split.curves)} (before split {len(doc.curves)})")
    print(f"nodes {graph.num_nodes}")
    print(f"edges {graph.num_edges}")
    print(f"clusters {graph.num_clusters}")
    if split.overlaps:
        print(f"overlapping curve pairs {len(split.overlaps)}")
    if args.dump_graph:
        text = dump_graph(graph)
        if args.dump_graph == "-":
            sys.stdout.write(text)
        else:
            atomic_write_text(_path(args, args.dump_graph), text)
    return EXIT_OK


def cmd_synth(args) -> int:
    lo_hi = _int_list(args.symbols)
    if len(lo_hi) != 2 or lo_hi[0] < 1 or lo_hi[0] > lo_hi[1]:
        raise UsageError("--symbols expects MIN,MAX with 1 <= MIN <= MAX")
    fractions = _float_list(args.split, 3)
    if any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise UsageError("--split fractions must be non-negative and sum to 1")
    clutter = None if args.no_clutter else tuple(_int_list(args.clutter))
    if clutter is not None and len(clutter) != 2:
        raise UsageError("--clutter expects MIN,MAX")
    try:
        docs, names = synth.generate(
            args.docs, args.classes, tuple(lo_hi), tuple(_float_list(args.canvas, 2)),
            seed=args.seed or 0, clutter=clutter, fractions=tuple(fractions),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    manifest = synth.write_dataset(_path(args, args.out), docs, names)
    print(f"wrote {len(docs)} documents, manifest {manifest}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _run_config(args)
    train_docs, names = _load_split(args, args.data, "train")
    if not train_docs:
        raise DataError("manifest has no training documents")
    val_docs, _ = _load_split(args, args.data, "val")
    resume = _path(args, args.resume) if args.resume else None
    if resume is not None and not resume.exists():
        raise DataError(f"checkpoint not found: {resume}")

    def progress(r):
        val = "" if r.val_ap50 is None else f" val_ap50 {r.val_ap50:.4f}"
        print(f"epoch {r.epoch:4d} loss {r.loss:.6f}{val}", flush=True)

    train(train_docs, names, cfg, val_docs=val_docs, run_dir=_path(args, args.out), resume=resume,
          workers=args.workers, progress=None if args.quiet else progress)
    print(f"run directory {_path(args, args.out)}")
    return EXIT_OK


def overlay_svg(svg_text: str, detections, class_names) -> str:
    """The input SVG with one extra layer holding a rectangle and label per detection."""
    end = svg_text.rfind("</svg>")
    if end < 0:
        raise DataError("input has no closing </svg> tag")
    parts = ['<g id="detections" fill="none">']
    for d in detections:
        x0, y0, x1, y1 = (float(v) for v in d.box)
        color = PALETTE[d.class_id % len(PALETTE)]
        name = escape(class_names[d.class_id] if d.class_id < len(class_names) else str(d.class_id))
        tags = f'stroke="{color}" stroke-width="1" data-class="{name}" data-confidence="{d.confidence:.4f}"'
        if x1 > x0 and y1 > y0:
            parts.append(f'<rect x="{x0!r}" y="{y0!r}" width="{x1 - x0!r}" height="{y1 - y0!r}" {tags}/>')
        else:
            # zero-area box of a straight stroke; a rect would not render
            parts.append(f'<line x1="{x0!r}" y1="{y0!r}" x2="{x1!r}" y2="{y1!r}" {tags}/>')
        parts.append(f'<text x="{x0!r}" y="{y0!r}" fill="{color}" font-size="10">{name} {d.confidence:.2f}</text>')
    parts.append("</g>")
    return svg_text[:end] + "\n".join(parts) + "\n" + svg_text[end:]


def cmd_detect(args) -> int:
    model, meta = _load_model(args)
    cfg = run_config_from_meta(meta).replace(conf_threshold=args.conf)
    if args.nms_iou is not None:
        cfg = cfg.replace(nms_iou=args.nms_iou)
    names = checkpoint_classes(meta) or [str(i) for i in range(model.config.num_classes)]
    in_path = _path(args, args.input)
    text = in_path.read_text(encoding="utf-8")
    doc = read_svg(in_path)
    dets = detect(doc, model, cfg)
    atomic_write_text(_path(args, args.out), overlay_svg(text, dets, names))
    for d in dets:
        box = " ".join(f"{v:.3f}" for v in d.box)
        print(f"{names[d.class_id]} {d.confidence:.4f} {box}")
    print(f"{len(dets)} detections")
    return EXIT_OK


def cmd_eval(args) -> int:
    model, meta = _load_model(args)
    cfg = run_config_from_meta(meta)
    if args.conf is not None:
        cfg = cfg.replace(conf_threshold=args.conf)
    docs, names = _load_split(args, args.data, args.split)
    if not docs:
        raise DataError(f"manifest has no '{args.split}' documents")
    report = evaluate_model(docs, model, cfg, names, workers=args.workers)
    table = report.to_table()
    sys.stdout.write(table)
    if args.out:
        out = _path(args, args.out)
        atomic_write_text(out / "report.csv", report.to_csv())
        atomic_write_text(out / "report.txt", table)
    return EXIT_OK


def cmd_sweep(args) -> int:
    values = _int_list(args.values)
    if not values:
        raise UsageError("--values is empty")
    cfg = _run_config(args)
    test_docs, names = _load_split(args, args.data, args.split)
    if not test_docs:
        raise DataError(f"manifest has no '{args.split}' documents")
    model = None
    if args.model:
        model, meta = _load_model(args)
        cfg = run_config_from_meta(meta)
    train_docs = None
    if model is None:
        train_docs, _ = _load_split(args, args.data, "train")
        if not train_docs:
            raise DataError("sweeping without --model needs training documents")
    try:
        rows = sweep(args.param, values, test_docs, names, cfg, train_docs=train_docs, model=model,
                     workers=args.workers)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    table = sweep_table(args.param, rows)
    sys.stdout.write(table)
    if args.out:
        atomic_write_text(_path(args, args.out), table)
    return EXIT_OK


def cmd_config_init(args) -> int:
    text = config_text(RunConfig())
    if args.out:
        atomic_write_text(_path(args, args.out), text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_sesyd(args) -> int:
    src = _path(args, args.input)
    classes = args.classes.split(",") if args.classes else None
    data = sesyd_to_canonical(src.read_text(encoding="utf-8"), classes)
    atomic_write_text(_path(args, args.out), json.dumps(data, indent=1) + "\n")
    print(f"{len(data['objects'])} objects")
    return EXIT_OK


# -- argument parsing -------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--root", default=".", help="base directory for relative paths")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--workers", type=int, default=1, help="processes for document preparation")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="vgdet", description="Symbol detection in vector graphics.", parents=[common])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("convert", parents=[common], help="parse, normalize and split one SVG")
    s.add_argument("svg")
    s.add_argument("--dump-graph", nargs="?", const="-", metavar="FILE",
                   help="write the graph tables to FILE (stdout when omitted)")
    s.add_argument("--no-t-junctions", action="store_true", help="do not split curves at T-junctions")
    s.set_defaults(func=cmd_convert)

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic dataset")
    s.add_argument("--classes", type=int, default=4)
    s.add_argument("--docs", type=int, required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--symbols", default="3,6", help="MIN,MAX symbols per document")
    s.add_argument("--canvas", default="600,600", help="WIDTH,HEIGHT")
    s.add_argument("--split", default="0.6,0.2,0.2", help="train,val,test fractions")
    s.add_argument("--clutter", default="2,5", help="MIN,MAX clutter strokes per document")
    s.add_argument("--no-clutter", action="store_true")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("train", parents=[common], help="train a detector")
    s.add_argument("--data", required=True, help="dataset manifest")
    s.add_argument("--config", help="configuration file (see 'config init')")
    s.add_argument("--out", required=True, help="run directory")
    s.add_argument("--resume", help="checkpoint to continue from")
    s.add_argument("--epochs", type=int)
    s.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config value")
    s.add_argument("--quiet", action="store_true")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("detect", parents=[common], help="detect symbols and write an overlay SVG")
    s.add_argument("--model", required=True)
    s.add_argument("--input", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--conf", type=float, default=0.5)
    s.add_argument("--nms-iou", type=float)
    s.set_defaults(func=cmd_detect)

    s = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint on a manifest split")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--split", default="test", choices=["train", "val", "test"])
    s.add_argument("--out", help="directory for report.csv and report.txt")
    s.add_argument("--conf", type=float)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("sweep", parents=[common], help="AP and proposal counts across one setting")
    s.add_argument("--param", required=True, choices=["strides", "num_layers"])
    s.add_argument("--values", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--split", default="test", choices=["train", "val", "test"])
    s.add_argument("--model", help="evaluate this checkpoint instead of training per value")
    s.add_argument("--config")
    s.add_argument("--epochs", type=int)
    s.add_argument("--set", action="append", metavar="KEY=VALUE")
    s.add_argument("--out", help="CSV file for the table")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("config", parents=[common], help="configuration helpers")
    csub = s.add_subparsers(dest="config_command", required=True, parser_class=_Parser)
    ci = csub.add_parser("init", parents=[common], help="write the default configuration")
    ci.add_argument("--out")
    ci.set_defaults(func=cmd_config_init)

    s = sub.add_parser("sesyd", parents=[common], help="convert SESYD-style XML ground truth")
    s.add_argument("--input", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--classes", help="comma-separated class list")
    s.set_defaults(func=cmd_sesyd)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"vgdet: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, SVGParseError, ElementError, AnnotationError, FileNotFoundError,
            json.JSONDecodeError, UnicodeDecodeError) as exc:
        print(f"vgdet: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except synth.PlacementError as exc:
        print(f"vgdet: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        log.debug("unhandled", exc_info=True)
        print(f"vgdet: runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
