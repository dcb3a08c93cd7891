"""Language-driven fusion loss and feature-fidelity loss.

All image inputs here are in the unit domain [0, 1]; callers convert the
generator output with :func:`langfusion.network.signed_to_unit`.
"""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .embedding import ClipSpace, EncoderWeightsError, TransitionPair

log = logging.getLogger(__name__)

_EPS = 1e-8

# 1-based indices counting conv layers only
FIDELITY_LAYERS = (3, 5, 10)
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


def _cos(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    na, nb = a.norm(dim=-1), b.norm(dim=-1)
    if torch.any(na < _EPS) or torch.any(nb < _EPS):
        log.warning("near-zero vector in cosine; epsilon-stabilized")
    return (a * b).sum(-1) / (na.clamp_min(_EPS) * nb.clamp_min(_EPS))


def direction_loss(img_deltas: TransitionPair, text_deltas: TransitionPair) -> torch.Tensor:
    """1 - mean of the two cosines between image-side and text-side transitions.

    Broadcasts over leading dims, so a (N, D) batch gives N values.
    """
    return 1.0 - 0.5 * (_cos(img_deltas.delta_vs, text_deltas.delta_vs)
                        + _cos(img_deltas.delta_ir, text_deltas.delta_ir))


def direction_regularization(v_f: torch.Tensor, v_vs: torch.Tensor, v_ir: torch.Tensor) -> torch.Tensor:
    """|1 - cos(f, vs)| + |1 - cos(f, ir)|; keeps the fused embedding off both sources."""
    return (1.0 - _cos(v_f, v_vs)).abs() + (1.0 - _cos(v_f, v_ir)).abs()


# ---------------------------------------------------------------------------
# feature fidelity
# ---------------------------------------------------------------------------

class VGGFeatures(nn.Module):
    """Frozen VGG-19 trunk returning the outputs of selected conv layers.

    ``weights``: a state-dict path, ``"imagenet"`` (torchvision cache) or
    ``"random"``. Defaults to ``$LANGFUSION_VGG_WEIGHTS`` then ``"imagenet"``.
    """

    def __init__(self, layers=FIDELITY_LAYERS, weights: str | None = None):
        super().__init__()
        import torchvision

        weights = weights or os.environ.get("LANGFUSION_VGG_WEIGHTS") or "imagenet"
        self.weights = weights
        net = torchvision.models.vgg19(weights=None)
        if weights == "imagenet":
            if os.environ.get("LANGFUSION_CACHE"):
                torch.hub.set_dir(os.environ["LANGFUSION_CACHE"])
            try:
                state = torchvision.models.VGG19_Weights.IMAGENET1K_V1.get_state_dict(progress=False)
            except Exception as exc:
                raise _vgg_error(exc) from exc
            net.load_state_dict(state)
        elif weights != "random":
            try:
                net.load_state_dict(torch.load(weights, map_location="cpu", weights_only=True))
            except Exception as exc:
                raise _vgg_error(exc) from exc
        else:
            log.warning("using randomly initialized VGG-19; only for tests and plumbing checks")

        convs = [i for i, m in enumerate(net.features) if isinstance(m, nn.Conv2d)]
        self.taps = [convs[k - 1] for k in layers]
        trunk = net.features[: max(self.taps) + 1]
        for m in trunk:
            if isinstance(m, nn.ReLU):
                m.inplace = False  # tapped conv outputs must survive the next ReLU
        self.trunk = trunk.eval().requires_grad_(False)
        self.register_buffer("mean", torch.tensor(IMAGENET_MEAN).view(1, 3, 1, 1))
        self.register_buffer("std", torch.tensor(IMAGENET_STD).view(1, 3, 1, 1))

    def train(self, mode: bool = True):
        return super().train(False)

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        x = (x.expand(-1, 3, -1, -1) - self.mean) / self.std
        out = []
        taps = set(self.taps)
        for i, m in enumerate(self.trunk):
            x = m(x)
            if i in taps:
                out.append(x)
        return out


def _vgg_error(exc: Exception) -> EncoderWeightsError:
    return EncoderWeightsError(
        f"VGG-19 weights unavailable ({exc}); place torchvision's vgg19-dcbb9e9d.pth in the torch hub "
        "cache (or $LANGFUSION_CACHE/checkpoints) or set LANGFUSION_VGG_WEIGHTS to a state-dict file"
    )


def _distance(a, b, norm: str):
    if norm == "l1":
        return (a - b).abs().mean()
    if norm == "l2":
        return ((a - b) ** 2).mean()
    raise ValueError(f"norm must be 'l1' or 'l2', got {norm!r}")


def feature_fidelity_loss(fused, ir, vs, vgg: VGGFeatures, norm: str = "l1") -> torch.Tensor:
    """Sum over tapped layers of the distance to the elementwise max of source features."""
    if not (fused.shape == ir.shape == vs.shape):
        raise ValueError("fused, ir and vs must share a shape")
    with torch.no_grad():
        src = vgg(torch.cat([ir, vs]).to(fused))
    feats = vgg(fused)
    n = fused.shape[0]
    total = fused.new_zeros(())
    for pf, ps in zip(feats, src):
        total = total + _distance(pf, torch.maximum(ps[:n], ps[n:]), norm)
    return total


# ---------------------------------------------------------------------------
# total objective
# ---------------------------------------------------------------------------

@dataclass
class PatchViews:
    """Augmented patch views stacked as (K, 1, h, w) plus the owning batch index."""

    fused: torch.Tensor
    ir: torch.Tensor
    vs: torch.Tensor
    owner: torch.Tensor


@dataclass
class LossTerms:
    l_d: torch.Tensor
    phi: torch.Tensor
    l_d_dagger: torch.Tensor
    l_v: torch.Tensor
    l_total: torch.Tensor
    lambda_weight: float = 0.5
    alpha_weight: float = 1.0
    n_items: int = 0
    n_patches: int = 0
    direction_cos: float = float("nan")

    def as_dict(self) -> dict:
        d = {k: float(getattr(self, k).detach()) for k in ("l_d", "phi", "l_d_dagger", "l_v", "l_total")}
        d.update(n_items=self.n_items, n_patches=self.n_patches, direction_cos=self.direction_cos)
        return d


def _expand(deltas: TransitionPair, owner: torch.Tensor) -> TransitionPair:
    if deltas.delta_vs.dim() == 1:
        return deltas
    return TransitionPair(deltas.delta_vs[owner], deltas.delta_ir[owner])


def language_terms(clip: ClipSpace, fused, ir, vs, text_deltas: TransitionPair, owner=None):
    """Per-item direction loss and regularization over a stack of views."""
    e_f = clip.encode_image(fused)
    with torch.no_grad():
        e_ir = clip.encode_image(ir)
        e_vs = clip.encode_image(vs)
    if owner is None:
        owner = torch.arange(fused.shape[0])
    td = _expand(text_deltas, owner.to(e_f.device))
    td = TransitionPair(td.delta_vs.to(e_f), td.delta_ir.to(e_f))
    img = TransitionPair(e_f - e_vs, e_f - e_ir)
    l_d = direction_loss(img, td)
    phi = direction_regularization(e_f, e_vs, e_ir)
    return l_d, phi


def total_loss(ir, vs, fused, *, clip: ClipSpace | None, text_deltas: TransitionPair | None,
               vgg: VGGFeatures, patches: PatchViews | None = None,
               lambda_weight: float = 0.5, alpha_weight: float = 1.0,
               norm: str = "l1", disable_ldl: bool = False) -> LossTerms:
    """Full training objective for one batch.

    ``ir``, ``vs``, ``fused``: (B, 1, H, W) in [0, 1]. The language term is
    the uniform mean over whole images and surviving patches of
    ``l_d + lambda * phi``; the fidelity term uses whole images only.
    """
    zero = fused.new_zeros(())
    l_v = feature_fidelity_loss(fused, ir, vs, vgg, norm)
    n_items = n_patches = 0
    cos = float("nan")
    if disable_ldl:
        l_d = phi = zero
    else:
        if clip is None or text_deltas is None:
            raise ValueError("clip and text_deltas are required unless disable_ldl is set")
        l_d_items, phi_items = language_terms(clip, fused, ir, vs, text_deltas)
        if patches is not None and patches.fused.shape[0] > 0:
            pl, pp = language_terms(clip, patches.fused, patches.ir, patches.vs, text_deltas, patches.owner)
            l_d_items = torch.cat([l_d_items, pl])
            phi_items = torch.cat([phi_items, pp])
            n_patches = int(pl.shape[0])
        else:
            log.warning("no surviving patches; using whole-image language term only")
        n_items = int(l_d_items.shape[0])
        l_d = l_d_items.mean()
        phi = phi_items.mean()
        cos = float(1.0 - l_d.detach())
    l_d_dagger = l_d + lambda_weight * phi
    l_total = l_d_dagger + alpha_weight * l_v
    return LossTerms(l_d, phi, l_d_dagger, l_v, l_total, lambda_weight, alpha_weight,
                     n_items, n_patches, cos)
