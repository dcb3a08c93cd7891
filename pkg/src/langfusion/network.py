"""Fusion generator: two-branch encoder, AdaIN feature fusion module, decoder.

The network works in the signed domain [-1, 1]. Everything that reads or
writes 8-bit pixels goes through :func:`to_uint8` / :func:`signed_to_unit`
so there is exactly one place that owns the value convention.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, asdict

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# value convention
# ---------------------------------------------------------------------------

def signed_to_unit(x):
    """[-1, 1] -> [0, 1]. Works on tensors and arrays."""
    return (x + 1.0) * 0.5


def unit_to_signed(x):
    """[0, 1] -> [-1, 1]."""
    return x * 2.0 - 1.0


def to_uint8(x) -> np.ndarray:
    """Map a signed-domain image to 8-bit.

    -1 -> 0, +1 -> 255, values clipped first. Rounding is half-to-even
    (numpy default), so 0.0 -> 127.5 -> 128.
    """
    if isinstance(x, torch.Tensor):
        x = x.detach().cpu().double().numpy()
    x = np.clip(np.asarray(x, dtype=np.float64), -1.0, 1.0)
    return np.round(signed_to_unit(x) * 255.0).astype(np.uint8)


# ---------------------------------------------------------------------------
# config
# ---------------------------------------------------------------------------

@dataclass
class NetworkConfig:
    base_channels: int = 32
    num_conv_blocks: int = 3
    num_residual_blocks: int = 2
    decoder_deconv_layers: int = 3
    encoder_norm: str = "instance"
    param_net_channels: tuple[int, ...] = (32, 64, 128)
    num_adain_layers: int = 2
    output_activation: str = "tanh"
    strict_shapes: bool = False

    def __post_init__(self):
        if self.base_channels <= 0:
            raise ValueError("base_channels must be positive")
        if self.num_conv_blocks != 3 or self.num_residual_blocks != 2:
            raise ValueError("encoder is fixed at 3 conv blocks + 2 residual blocks")
        if self.decoder_deconv_layers != 3:
            raise ValueError("decoder is fixed at 3 transposed-conv layers")
        if self.output_activation != "tanh":
            raise ValueError("output activation is fixed to tanh")
        self.param_net_channels = tuple(self.param_net_channels)

    @property
    def fused_channels(self) -> int:
        return self.base_channels * 4

    @property
    def stride(self) -> int:
        # blocks 2 and 3 downsample by 2
        return 2 ** (self.num_conv_blocks - 1)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["param_net_channels"] = list(self.param_net_channels)
        return d


# ---------------------------------------------------------------------------
# building blocks
# ---------------------------------------------------------------------------

def adain(x: torch.Tensor, gamma: torch.Tensor, beta: torch.Tensor, eps: float = 1e-5) -> torch.Tensor:
    """Adaptive instance normalization.

    Normalizes each (sample, channel) plane over its spatial dims, then
    applies per-sample, per-channel ``gamma`` and ``beta`` of shape (B, C).
    """
    if gamma.shape != x.shape[:2] or beta.shape != x.shape[:2]:
        raise ValueError(f"gamma/beta must be {tuple(x.shape[:2])}, got {tuple(gamma.shape)}/{tuple(beta.shape)}")
    mean = x.mean(dim=(2, 3), keepdim=True)
    var = x.var(dim=(2, 3), keepdim=True, unbiased=False)
    x_hat = (x - mean) / torch.sqrt(var + eps)
    return gamma[..., None, None] * x_hat + beta[..., None, None]


def _norm(kind: str, channels: int) -> nn.Module:
    if kind == "instance":
        return nn.InstanceNorm2d(channels, affine=True)
    if kind == "batch":
        return nn.BatchNorm2d(channels)
    if kind == "layer":
        return nn.GroupNorm(1, channels)
    raise ValueError(f"unknown norm {kind!r}")


class ConvBlock(nn.Sequential):
    def __init__(self, cin, cout, stride, norm):
        super().__init__(
            nn.Conv2d(cin, cout, 3, stride=stride, padding=1, padding_mode="reflect"),
            _norm(norm, cout),
            nn.ReLU(inplace=True),
        )


class ResBlock(nn.Module):
    def __init__(self, channels, norm):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv2d(channels, channels, 3, padding=1, padding_mode="reflect"),
            _norm(norm, channels),
            nn.ReLU(inplace=True),
            nn.Conv2d(channels, channels, 3, padding=1, padding_mode="reflect"),
            _norm(norm, channels),
        )

    def forward(self, x):
        return x + self.body(x)


class Encoder(nn.Module):
    """One branch: 3 conv blocks (stride 1, 2, 2) then 2 residual blocks."""

    def __init__(self, cfg: NetworkConfig):
        super().__init__()
        c = cfg.base_channels
        widths = [c, 2 * c, 4 * c]
        layers = []
        cin = 1
        for i, w in enumerate(widths):
            layers.append(ConvBlock(cin, w, stride=1 if i == 0 else 2, norm=cfg.encoder_norm))
            cin = w
        for _ in range(cfg.num_residual_blocks):
            layers.append(ResBlock(cin, cfg.encoder_norm))
        self.net = nn.Sequential(*layers)

    def forward(self, x):
        return self.net(x)


class AdaINParamNet(nn.Module):
    """Predicts (gamma, beta) for every AdaIN layer from the source pair.

    conv+ReLU stack over the channel-concatenated pair, global average
    pooling, then one linear head per AdaIN layer. gamma is parameterized
    as ``1 + head`` so an untrained head starts near plain instance norm.
    """

    def __init__(self, cfg: NetworkConfig):
        super().__init__()
        layers = []
        cin = 2
        for w in cfg.param_net_channels:
            layers += [nn.Conv2d(cin, w, 3, stride=2, padding=1), nn.ReLU(inplace=True)]
            cin = w
        self.features = nn.Sequential(*layers)
        self.channels = cfg.fused_channels
        self.heads = nn.ModuleList(nn.Linear(cin, 2 * self.channels) for _ in range(cfg.num_adain_layers))

    def forward(self, ir, vi) -> list[tuple[torch.Tensor, torch.Tensor]]:
        if ir.shape != vi.shape:
            raise ValueError(f"source shapes differ: {tuple(ir.shape)} vs {tuple(vi.shape)}")
        h = self.features(torch.cat([ir, vi], dim=1))
        h = h.mean(dim=(2, 3))
        out = []
        for head in self.heads:
            g, b = head(h).chunk(2, dim=1)
            out.append((1.0 + g, b))
        return out


class FeatureFusion(nn.Module):
    """concat(F_ir, F_vi) -> [conv -> AdaIN -> ReLU] x num_adain_layers."""

    def __init__(self, cfg: NetworkConfig):
        super().__init__()
        c = cfg.fused_channels
        self.convs = nn.ModuleList(
            nn.Conv2d(2 * c if i == 0 else c, c, 3, padding=1, padding_mode="reflect")
            for i in range(cfg.num_adain_layers)
        )

    def forward(self, f_ir, f_vi, params):
        x = torch.cat([f_ir, f_vi], dim=1)
        for conv, (gamma, beta) in zip(self.convs, params):
            x = F.relu(adain(conv(x), gamma, beta))
        return x


class Decoder(nn.Module):
    """3 transposed convs (x2, x2, x1) with layer norm + ReLU, then conv + tanh."""

    def __init__(self, cfg: NetworkConfig):
        super().__init__()
        c = cfg.base_channels
        widths = [4 * c, 2 * c, c, c]
        layers = []
        for i in range(3):
            up = i < 2
            layers += [
                nn.ConvTranspose2d(widths[i], widths[i + 1], 4 if up else 3,
                                   stride=2 if up else 1, padding=1),
                nn.GroupNorm(1, widths[i + 1]),
                nn.ReLU(inplace=True),
            ]
        layers += [nn.Conv2d(c, 1, 3, padding=1, padding_mode="reflect"), nn.Tanh()]
        self.net = nn.Sequential(*layers)

    def forward(self, x):
        return self.net(x)


class FusionNet(nn.Module):
    """The trainable fusion generator.

    >>> net = FusionNet()
    >>> net(torch.zeros(1, 1, 32, 32), torch.zeros(1, 1, 32, 32)).shape
    torch.Size([1, 1, 32, 32])
    """

    def __init__(self, cfg: NetworkConfig | None = None):
        super().__init__()
        self.cfg = cfg or NetworkConfig()
        self.enc_ir = Encoder(self.cfg)
        self.enc_vi = Encoder(self.cfg)
        self.param_net = AdaINParamNet(self.cfg)
        self.fusion = FeatureFusion(self.cfg)
        self.decoder = Decoder(self.cfg)
        self.last_padding: tuple[int, int] = (0, 0)

    def encode_branch(self, img: torch.Tensor, branch: str) -> torch.Tensor:
        if branch == "ir":
            return self.enc_ir(img)
        if branch == "vi":
            return self.enc_vi(img)
        raise ValueError(f"branch must be 'ir' or 'vi', got {branch!r}")

    def generate_adain_params(self, ir, vi):
        return self.param_net(ir, vi)

    def _pad(self, x):
        s = self.cfg.stride
        h, w = x.shape[-2:]
        ph, pw = (-h) % s, (-w) % s
        if ph or pw:
            if self.cfg.strict_shapes:
                raise ValueError(f"spatial dims {h}x{w} not divisible by stride {s}")
            x = F.pad(x, (0, pw, 0, ph), mode="reflect")
        return x, (ph, pw)

    def forward(self, ir: torch.Tensor, vi: torch.Tensor) -> torch.Tensor:
        if ir.shape != vi.shape:
            raise ValueError(f"infrared {tuple(ir.shape)} and visible {tuple(vi.shape)} shapes differ")
        if ir.dim() != 4 or ir.shape[1] != 1:
            raise ValueError(f"expected (B, 1, H, W) batches, got {tuple(ir.shape)}")
        h, w = ir.shape[-2:]
        ir_p, pad = self._pad(ir)
        vi_p, _ = self._pad(vi)
        self.last_padding = pad
        if pad != (0, 0):
            log.debug("padded input by %s to a multiple of %d", pad, self.cfg.stride)
        f_ir = self.encode_branch(ir_p, "ir")
        f_vi = self.encode_branch(vi_p, "vi")
        params = self.generate_adain_params(ir_p, vi_p)
        f_f = self.fusion(f_ir, f_vi, params)
        out = self.decoder(f_f)
        return out[..., :h, :w]
