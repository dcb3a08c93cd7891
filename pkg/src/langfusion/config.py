"""Training configuration, YAML loading and ``key=value`` overrides."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .network import NetworkConfig

PROMPT_MODES = ("default", "swapped", "content")


@dataclass
class TrainConfig:
    lr: float = 0.001
    epochs: int = 70
    warmup_epochs: int = 1
    decay_start_epoch: int = 50
    decay_interval: int = 10
    decay_factor: float = 0.5
    batch_size: int = 16
    crop_size: int = 224
    lambda_weight: float = 0.5
    alpha_weight: float = 1.0
    sigma: float = 6.0
    patches_per_image: int = 8
    keep_rule: str = "max"
    distortion: float = 0.5
    fidelity_norm: str = "l1"
    prompt_mode: str = "default"
    objective_text_override: str | None = None
    content_prompts: str | None = None
    disable_ldl: bool = False
    disable_phi: bool = False
    max_steps: int | None = None
    seed: int = 0
    device: str = "cpu"
    clip_variant: str = "ViT-B-32"
    clip_weights: str | None = None
    vgg_weights: str | None = None
    dump_patches: str | None = None
    network: NetworkConfig = field(default_factory=NetworkConfig)

    def __post_init__(self):
        if isinstance(self.network, dict):
            self.network = NetworkConfig(**self.network)
        positive = ("lr", "epochs", "warmup_epochs", "decay_start_epoch", "decay_interval",
                    "decay_factor", "batch_size", "crop_size", "patches_per_image")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("lambda_weight", "alpha_weight", "sigma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.decay_start_epoch >= self.epochs:
            raise ValueError("decay_start_epoch must be < epochs")
        if self.prompt_mode not in PROMPT_MODES:
            raise ValueError(f"prompt_mode must be one of {PROMPT_MODES}")
        if self.prompt_mode == "content" and not self.content_prompts:
            raise ValueError("prompt_mode 'content' needs content_prompts (a JSON file)")

    @property
    def effective_lambda(self) -> float:
        return 0.0 if self.disable_phi else self.lambda_weight

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["network"] = self.network.to_dict()
        return d


def _field_names(cls) -> set[str]:
    return {f.name for f in dataclasses.fields(cls)}


def _check_keys(d: dict, cls, prefix=""):
    unknown = set(d) - _field_names(cls)
    if unknown:
        raise KeyError(f"unknown config key(s): {', '.join(prefix + k for k in sorted(unknown))}")


def config_from_dict(d: dict[str, Any]) -> TrainConfig:
    d = dict(d or {})
    _check_keys(d, TrainConfig)
    net = d.pop("network", None) or {}
    _check_keys(net, NetworkConfig, "network.")
    return TrainConfig(network=NetworkConfig(**net), **d)


def parse_override(item: str) -> tuple[list[str], Any]:
    if "=" not in item:
        raise ValueError(f"override must look like key=value, got {item!r}")
    key, raw = item.split("=", 1)
    return key.strip().split("."), yaml.safe_load(raw)


def apply_overrides(d: dict, overrides: list[str]) -> dict:
    d = {k: (dict(v) if isinstance(v, dict) else v) for k, v in (d or {}).items()}
    for item in overrides or []:
        path, value = parse_override(item)
        node = d
        for p in path[:-1]:
            node = node.setdefault(p, {})
        node[path[-1]] = value
    return d


def load_config(path: str | Path | None = None, overrides: list[str] | None = None) -> TrainConfig:
    """Read a YAML file (optional), apply overrides, validate keys."""
    d = {}
    if path:
        d = yaml.safe_load(Path(path).read_text()) or {}
        if not isinstance(d, dict):
            raise ValueError(f"{path}: expected a mapping at top level")
    return config_from_dict(apply_overrides(d, overrides or []))


def dump_config(cfg: TrainConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)
