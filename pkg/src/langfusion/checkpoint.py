"""Checkpoint format (version 1).

A checkpoint is a ``torch.save`` dict:

    format          "langfusion-checkpoint"
    version         1
    network_config  NetworkConfig as a plain dict
    state_dict      FusionNet weights
    encoder         embedding-encoder tag used for training, e.g. "ViT-B-32/openai"
    epoch, step     training counters at save time
    train_config    TrainConfig as a plain dict (may be empty)
    loss_history    list of per-step loss records

Loading needs only the fusion network; no vision-language code is imported.
"""
from __future__ import annotations

from pathlib import Path

import torch

from .network import FusionNet, NetworkConfig

FORMAT = "langfusion-checkpoint"
VERSION = 1


def save_checkpoint(path, net: FusionNet, *, epoch: int = 0, step: int = 0, encoder: str = "",
                    train_config: dict | None = None, loss_history: list | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save({
        "format": FORMAT,
        "version": VERSION,
        "network_config": net.cfg.to_dict(),
        "state_dict": {k: v.detach().cpu() for k, v in net.state_dict().items()},
        "encoder": encoder,
        "epoch": epoch,
        "step": step,
        "train_config": train_config or {},
        "loss_history": loss_history or [],
    }, path)
    return path


def load_checkpoint(path, device="cpu") -> tuple[FusionNet, dict]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    ckpt = torch.load(path, map_location=device, weights_only=True)
    if ckpt.get("format") != FORMAT:
        raise ValueError(f"{path} is not a {FORMAT} file")
    if ckpt.get("version") != VERSION:
        raise ValueError(f"unsupported checkpoint version {ckpt.get('version')}")
    net = FusionNet(NetworkConfig(**ckpt["network_config"]))
    net.load_state_dict(ckpt["state_dict"])
    net.to(device).eval()
    meta = {k: v for k, v in ckpt.items() if k != "state_dict"}
    return net, meta
