"""Inference: fuse image pairs with a trained checkpoint.

Only the fusion network is involved here; this module must never import
the embedding code (inference works without any vision-language weights).
"""
from __future__ import annotations

import logging
from pathlib import Path

import torch

from .checkpoint import load_checkpoint
from .data import match_stems, read_gray, save_fused
from .network import FusionNet, unit_to_signed

log = logging.getLogger(__name__)


@torch.no_grad()
def fuse_arrays(net: FusionNet, ir, vs) -> torch.Tensor:
    """Fuse one [0, 1] pair; returns the signed-domain (H, W) output."""
    net.eval()
    p = next(net.parameters())
    t_ir = unit_to_signed(torch.as_tensor(ir, dtype=p.dtype, device=p.device))[None, None]
    t_vs = unit_to_signed(torch.as_tensor(vs, dtype=p.dtype, device=p.device))[None, None]
    return net(t_ir, t_vs)[0, 0]


def fuse_directory(checkpoint, ir_dir, vi_dir, out_dir, device="cpu") -> list[Path]:
    """Fuse every stem-matched pair; writes ``<out_dir>/<stem>.png``."""
    net, _ = load_checkpoint(checkpoint, device)
    entries, orphans = match_stems(ir_dir, vi_dir)
    if orphans:
        log.warning("skipping %d unmatched file(s): %s", len(orphans), ", ".join(orphans))
    out = []
    for stem, pi, pv in entries:
        ir, vs = read_gray(pi), read_gray(pv)
        if ir.shape != vs.shape:
            log.warning("skipping %s: shapes %s and %s differ", stem, ir.shape, vs.shape)
            continue
        fused = fuse_arrays(net, ir, vs)
        out.append(save_fused(fused, Path(out_dir) / f"{stem}.png"))
    return out
