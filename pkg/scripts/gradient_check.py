"""Finite-difference check of the full objective on a 64x64 toy pair.

Float64, randomly initialized encoders, one warped patch, 10 random pixels. Prints the
relative error for a range of step sizes: with ReLU and max-pool kinks in
the fidelity trunk the error shrinks as the step does.

    python scripts/gradient_check.py
"""
import sys
from pathlib import Path

import numpy as np
import torch

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))

from conftest import synthetic_pair  # noqa: E402
from langfusion.embedding import ClipSpace, TransitionPair  # noqa: E402
from langfusion.losses import PatchViews, VGGFeatures, total_loss  # noqa: E402
from langfusion.patches import warp  # noqa: E402


def main():
    torch.manual_seed(0)
    clip = ClipSpace(weights="random").to(torch.float64)
    vgg = VGGFeatures(weights="random").double()
    rng = np.random.default_rng(0)
    a, b = synthetic_pair(rng, 64, 64)
    ir = torch.from_numpy(a.astype(np.float64))[None, None]
    vs = torch.from_numpy(b.astype(np.float64))[None, None]
    f0 = (0.5 * (ir + vs)).clamp(0.02, 0.98)
    text = clip.build_fusion_model()
    text = TransitionPair(text.delta_vs.double(), text.delta_ir.double())

    corners = np.array([[-0.8, -0.9], [0.85, -0.7], [0.9, 0.95], [-0.75, 0.8]])

    def loss(f):
        crop = lambda x: warp(x[:, :, 4:60, 4:60], corners, (64, 64))
        views = PatchViews(crop(f), crop(ir), crop(vs), torch.tensor([0]))
        return total_loss(ir, vs, f, clip=clip, text_deltas=text, vgg=vgg, patches=views).l_total

    f = f0.clone().requires_grad_()
    loss(f).backward()
    idx = rng.choice(64 * 64, 10, replace=False)
    analytic = np.array([float(f.grad.view(-1)[i]) for i in idx])
    for h in (1e-3, 1e-5, 1e-7):
        num = []
        with torch.no_grad():
            for i in idx:
                fp, fm = f0.clone(), f0.clone()
                fp.view(-1)[i] += h
                fm.view(-1)[i] -= h
                num.append((float(loss(fp)) - float(loss(fm))) / (2 * h))
        num = np.array(num)
        rel = np.linalg.norm(analytic - num) / max(np.linalg.norm(analytic), np.linalg.norm(num))
        print(f"step {h:.0e}: relative error {rel:.2e}")


if __name__ == "__main__":
    main()
