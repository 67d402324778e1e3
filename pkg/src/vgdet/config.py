"""Run configuration and its flat ``key = value`` text format."""

from __future__ import annotations

from dataclasses import dataclass, fields

from .model import ModelConfig


@dataclass
class RunConfig:
    # model
    num_layers: int = 2
    hidden_dim: int = 64
    mlp_dims: tuple[int, ...] = (512, 256)
    no_stroke_edges: bool = False
    no_position_edges: bool = False
    no_edge_attrs: bool = False
    early_position_aggregation: bool = False
    position_with_difference: bool = False
    dedupe_input_features: bool = False
    # graph and proposals
    expand_frac: float = 0.02
    strides: int = 10
    max_size_frac: float = 0.5
    t_junctions: bool = True
    coord_frame: str = "cluster"  # or "document": coordinates relative to the canvas
    # training
    lr: float = 0.0025
    batch_size: int = 16
    epochs: int = 200
    fg_iou: float = 0.5
    augment: bool = True
    label_frame: str = "augmented"  # or "source": labels from the un-augmented geometry
    background_ratio: float = 0.0  # 0 keeps every background proposal
    checkpoint_every: int = 10
    eval_every: int = 10
    seed: int = 0
    # inference
    conf_threshold: float = 0.5
    nms_iou: float = 0.5
    use_nms: bool = True

    def __post_init__(self):
        if self.label_frame not in ("augmented", "source"):
            raise ValueError(f"label_frame must be 'augmented' or 'source', got {self.label_frame!r}")
        if self.coord_frame not in ("document", "cluster"):
            raise ValueError(f"coord_frame must be 'document' or 'cluster', got {self.coord_frame!r}")

    def model_config(self, num_classes: int) -> ModelConfig:
        return ModelConfig(
            num_classes=num_classes,
            num_layers=self.num_layers,
            hidden_dim=self.hidden_dim,
            mlp_dims=self.mlp_dims,
            no_stroke_edges=self.no_stroke_edges,
            no_position_edges=self.no_position_edges,
            no_edge_attrs=self.no_edge_attrs,
            early_position_aggregation=self.early_position_aggregation,
            position_with_difference=self.position_with_difference,
            dedupe_input_features=self.dedupe_input_features,
            seed=self.seed,
        )

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["mlp_dims"] = list(self.mlp_dims)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> RunConfig:
        kw = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        if "mlp_dims" in kw:
            kw["mlp_dims"] = tuple(kw["mlp_dims"])
        return cls(**kw)

    def replace(self, **overrides) -> RunConfig:
        d = self.to_dict()
        for k, v in overrides.items():
            if k not in d:
                raise KeyError(f"unknown config key {k!r}")
            d[k] = v
        return RunConfig.from_dict(d)


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, tuple)):
        return ",".join(str(v) for v in value)
    return repr(value) if isinstance(value, float) else str(value)


def parse_value(key: str, text: str):
    default = getattr(RunConfig(), key)
    text = text.strip()
    if isinstance(default, bool):
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{key}: expected a boolean, got {text!r}")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    if isinstance(default, tuple):
        return tuple(int(v) for v in text.split(",") if v.strip())
    return text


def config_text(cfg: RunConfig) -> str:
    return "".join(f"{k} = {_format(v)}\n" for k, v in cfg.to_dict().items())


def parse_config_text(text: str, base: RunConfig | None = None) -> RunConfig:
    cfg = (base or RunConfig()).to_dict()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in cfg:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        cfg[key] = parse_value(key, value)
    return RunConfig.from_dict(cfg)


def read_config(path, base: RunConfig | None = None) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read(), base)
