"""Multi-scale patch sampling, entropy filtering and joint augmentation.

Patches are cut at identical coordinates from the infrared, visible and
fused images. Low-information regions (both sources flat) are dropped
before they reach the language loss; survivors get one random
perspective warp shared by all three crops.
"""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F

log = logging.getLogger(__name__)

MIN_PATCH = 112
MAX_PATCH = 180
DEFAULT_SIGMA = 6.0


@dataclass
class PatchRecord:
    x: int
    y: int
    size: int
    ir_patch: torch.Tensor
    vs_patch: torch.Tensor
    fused_patch: torch.Tensor
    entropy_ir: float = float("nan")
    entropy_vs: float = float("nan")
    kept: bool = False

    @property
    def location(self) -> tuple[int, int, int]:
        return self.x, self.y, self.size


@dataclass
class PatchBatch:
    records: list[PatchRecord]
    sigma: float = DEFAULT_SIGMA
    augmented_views: list[np.ndarray] = field(default_factory=list)

    @property
    def kept(self) -> list[PatchRecord]:
        return [r for r in self.records if r.kept]


def _as_plane(img) -> torch.Tensor:
    t = torch.as_tensor(img)
    while t.dim() > 2:
        if t.shape[0] != 1:
            raise ValueError(f"expected a single image plane, got {tuple(t.shape)}")
        t = t[0]
    return t


def sample_patches(ir, vs, fused, n: int = 8, rng_seed: int | np.random.Generator = 0,
                   min_size: int = MIN_PATCH, max_size: int = MAX_PATCH) -> PatchBatch:
    """Cut ``n`` square crops of random size and position.

    ``ir``/``vs`` are source planes in [0, 1]; ``fused`` is whatever the
    caller wants cropped alongside (kept differentiable). Sizes are
    uniform integers in ``[min_size, max_size]``, clamped to the image.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    ir, vs, fused = _as_plane(ir), _as_plane(vs), _as_plane(fused)
    if not (ir.shape == vs.shape == fused.shape):
        raise ValueError("ir, vs and fused must share spatial dims")
    h, w = ir.shape
    hi = min(max_size, h, w)
    lo = min(min_size, hi)
    if hi < max_size:
        log.warning("image %dx%d smaller than the %d px max patch; sizes clamped to [%d, %d]",
                    h, w, max_size, lo, hi)
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    records = []
    for _ in range(n):
        s = int(rng.integers(lo, hi + 1))
        y = int(rng.integers(0, h - s + 1))
        x = int(rng.integers(0, w - s + 1))
        sl = (slice(y, y + s), slice(x, x + s))
        records.append(PatchRecord(x, y, s, ir[sl], vs[sl], fused[sl]))
    return PatchBatch(records)


def quantize(patch) -> np.ndarray:
    """[0, 1] floats -> 8-bit levels. uint8 input passes through."""
    if isinstance(patch, torch.Tensor):
        patch = patch.detach().cpu().numpy()
    a = np.asarray(patch)
    if a.dtype == np.uint8:
        return a
    return np.round(np.clip(a.astype(np.float64), 0.0, 1.0) * 255.0).astype(np.uint8)


def patch_entropy(patch) -> float:
    """Shannon entropy (bits) of the 256-level intensity histogram."""
    q = quantize(patch).ravel()
    if q.size == 0:
        raise ValueError("empty patch")
    counts = np.bincount(q, minlength=256)
    p = counts[counts > 0] / q.size
    return float(max(0.0, -(p * np.log2(p)).sum()))


_KEEP_RULES = {"max": max, "min": min, "mean": lambda a, b: 0.5 * (a + b)}


def filter_patches(batch: PatchBatch, sigma: float = DEFAULT_SIGMA, rule: str = "max") -> PatchBatch:
    """Mark records kept when the combined source entropy reaches ``sigma``.

    ``rule`` picks how the two source entropies combine; ``max`` drops a
    patch only when both modalities are flat.
    """
    combine = _KEEP_RULES[rule]
    for r in batch.records:
        if np.isnan(r.entropy_ir):
            r.entropy_ir = patch_entropy(r.ir_patch)
        if np.isnan(r.entropy_vs):
            r.entropy_vs = patch_entropy(r.vs_patch)
        r.kept = bool(combine(r.entropy_ir, r.entropy_vs) >= sigma)
    batch.sigma = sigma
    return batch


# ---------------------------------------------------------------------------
# augmentation
# ---------------------------------------------------------------------------

def _homography(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """3x3 H with H @ [src, 1] ~ [dst, 1] from four point pairs."""
    a, b = [], []
    for (x, y), (u, v) in zip(src, dst):
        a.append([x, y, 1, 0, 0, 0, -u * x, -u * y])
        a.append([0, 0, 0, x, y, 1, -v * x, -v * y])
        b += [u, v]
    h = np.linalg.solve(np.asarray(a, float), np.asarray(b, float))
    return np.append(h, 1.0).reshape(3, 3)


def perspective_corners(rng: np.random.Generator, distortion: float = 0.5) -> np.ndarray:
    """Random corner targets in normalized [-1, 1] coordinates.

    Same sampling scheme as torchvision's RandomPerspective: each corner
    moves inward by up to ``distortion`` times half the side length.
    """
    d = distortion
    tl = [-1 + rng.uniform(0, d), -1 + rng.uniform(0, d)]
    tr = [1 - rng.uniform(0, d), -1 + rng.uniform(0, d)]
    br = [1 - rng.uniform(0, d), 1 - rng.uniform(0, d)]
    bl = [-1 + rng.uniform(0, d), 1 - rng.uniform(0, d)]
    return np.array([tl, tr, br, bl])


_UNIT_CORNERS = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])


def warp(crops: torch.Tensor, corners: np.ndarray, out_size: tuple[int, int]) -> torch.Tensor:
    """Perspective warp + bilinear resample of a (N, C, h, w) stack to ``out_size``.

    The input's corners land on ``corners`` (normalized output
    coordinates); the area outside that quad is zero. Identity corners
    reduce this to a bilinear resize.
    """
    hmat = _homography(corners, _UNIT_CORNERS)  # output -> input
    oh, ow = out_size
    ys = (torch.arange(oh, dtype=torch.float64) * 2 + 1) / oh - 1
    xs = (torch.arange(ow, dtype=torch.float64) * 2 + 1) / ow - 1
    gy, gx = torch.meshgrid(ys, xs, indexing="ij")
    pts = torch.stack([gx, gy, torch.ones_like(gx)], dim=-1) @ torch.from_numpy(hmat).T
    grid = pts[..., :2] / pts[..., 2:]
    # one replicated pixel of margin: edges resample like a plain resize, beyond is zero
    h, w = crops.shape[-2:]
    grid = grid * torch.tensor([w / (w + 2), h / (h + 2)], dtype=grid.dtype)
    padded = F.pad(crops, (1, 1, 1, 1), mode="replicate")
    grid = grid.to(crops.dtype)[None].expand(crops.shape[0], -1, -1, -1)
    return F.grid_sample(padded, grid, mode="bilinear", padding_mode="zeros", align_corners=False)


def augment_patch(record: PatchRecord, rng_seed: int | np.random.Generator = 0,
                  out_size: tuple[int, int] = (224, 224), distortion: float = 0.5,
                  identity: bool = False):
    """Warp the fused/ir/vs crops of one record with one shared transform.

    Returns ``(fused, ir, vs, corners)``; each view is (1, out_h, out_w).
    """
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    corners = _UNIT_CORNERS.copy() if identity else perspective_corners(rng, distortion)
    fused = record.fused_patch
    stack = torch.stack([fused, record.ir_patch.to(fused), record.vs_patch.to(fused)])[:, None]
    out = warp(stack, corners, out_size)
    return out[0], out[1], out[2], corners


def augment_batch(batch: PatchBatch, rng: np.random.Generator, out_size=(224, 224),
                  distortion: float = 0.5):
    """Augment every kept record. Returns stacked (K, 1, H, W) views."""
    fused, ir, vs = [], [], []
    batch.augmented_views = []
    for r in batch.kept:
        f, i, v, corners = augment_patch(r, rng, out_size, distortion)
        fused.append(f)
        ir.append(i)
        vs.append(v)
        batch.augmented_views.append(corners)
    if not fused:
        return None
    return torch.stack(fused), torch.stack(ir), torch.stack(vs)


def dump_patches(batch: PatchBatch, directory: str | os.PathLike, prefix: str = "patch") -> None:
    """Write kept/dropped thumbnails named with their entropies, for inspection."""
    from PIL import Image

    os.makedirs(directory, exist_ok=True)
    for i, r in enumerate(batch.records):
        tag = "kept" if r.kept else "dropped"
        row = np.concatenate([quantize(r.ir_patch), quantize(r.vs_patch)], axis=1)
        name = f"{prefix}_{i:02d}_{tag}_Hir{r.entropy_ir:.2f}_Hvs{r.entropy_vs:.2f}.png"
        Image.fromarray(row).save(os.path.join(directory, name))
