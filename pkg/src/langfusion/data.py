"""Paired-corpus loading, resizing and fused-image persistence.

Corpus layout: ``<root>/ir/`` and ``<root>/vi/`` with shared file stems,
or a manifest with one ``id<TAB>ir_path<TAB>vs_path`` line per pair.
"""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .network import to_uint8

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"}
# ITU-R BT.601 luma weights
LUMA = np.array([0.299, 0.587, 0.114])


@dataclass
class ImagePair:
    id: str
    ir: np.ndarray
    vs: np.ndarray
    range_tag: str = "unit"
    source_path_ir: str | None = None
    source_path_vs: str | None = None

    def __post_init__(self):
        if self.ir.shape != self.vs.shape or self.ir.ndim != 2:
            raise ValueError(f"pair {self.id}: ir {self.ir.shape} and vs {self.vs.shape} must be equal 2-D planes")
        lo, hi = {"unit": (0.0, 1.0), "signed": (-1.0, 1.0)}[self.range_tag]
        for name, a in (("ir", self.ir), ("vs", self.vs)):
            if a.size and (a.min() < lo - 1e-6 or a.max() > hi + 1e-6):
                raise ValueError(f"pair {self.id}: {name} values outside {self.range_tag} range")

    @property
    def shape(self) -> tuple[int, int]:
        return self.ir.shape


def read_gray(path: str | os.PathLike) -> np.ndarray:
    """Read an image as a float32 luminance plane in [0, 1].

    Integer images are scaled by their bit depth; color inputs are reduced
    to luma with BT.601 weights.
    """
    with Image.open(path) as im:
        if im.mode in ("P", "PA"):
            im = im.convert("RGBA" if "A" in im.mode or "transparency" in im.info else "RGB")
        a = np.asarray(im)
    if a.dtype == np.uint8:
        scale = 255.0
    elif a.dtype in (np.uint16, np.dtype(">u2"), np.dtype("<u2")):
        scale = 65535.0
    elif a.dtype == np.int32:  # PIL "I" mode; treat as 16-bit content
        scale = 65535.0
    elif a.dtype == bool:
        scale = 1.0
    elif np.issubdtype(a.dtype, np.floating):
        scale = 1.0
    else:
        raise ValueError(f"{path}: unsupported pixel type {a.dtype}")
    a = a.astype(np.float64) / scale
    if a.ndim == 3:
        a = a[..., :3] @ LUMA if a.shape[2] >= 3 else a[..., 0]
    return np.clip(a, 0.0, 1.0).astype(np.float32)


def _index(directory: Path) -> dict[str, Path]:
    return {p.stem: p for p in sorted(directory.iterdir()) if p.suffix.lower() in IMAGE_SUFFIXES}


def match_stems(ir_dir, vi_dir) -> tuple[list[tuple[str, Path, Path]], list[str]]:
    """Pair files by stem. Returns (matches, unmatched stems)."""
    ir, vi = _index(Path(ir_dir)), _index(Path(vi_dir))
    common = sorted(ir.keys() & vi.keys())
    orphans = sorted(ir.keys() ^ vi.keys())
    return [(s, ir[s], vi[s]) for s in common], orphans


def _load_pairs(entries) -> list[ImagePair]:
    pairs = []
    for stem, pi, pv in entries:
        ir, vs = read_gray(pi), read_gray(pv)
        if ir.shape != vs.shape:
            log.warning("rejecting pair %s: ir %s vs visible %s", stem, ir.shape, vs.shape)
            continue
        pairs.append(ImagePair(stem, ir, vs, "unit", str(pi), str(pv)))
    return pairs


def load_corpus(root: str | os.PathLike, ir_subdir: str = "ir", vi_subdir: str = "vi") -> list[ImagePair]:
    root = Path(root)
    return load_dirs(root / ir_subdir, root / vi_subdir)


def load_dirs(ir_dir, vi_dir) -> list[ImagePair]:
    entries, orphans = match_stems(ir_dir, vi_dir)
    if orphans:
        log.warning("%d unmatched stem(s) skipped: %s", len(orphans), ", ".join(orphans))
    return _load_pairs(entries)


def load_manifest(path: str | os.PathLike) -> list[ImagePair]:
    """Manifest lines: ``id  ir_path  vs_path`` (tab separated, # comments).

    Relative paths resolve against the manifest's directory.
    """
    base = Path(path).parent
    entries = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t") if "\t" in line else line.split()
        if len(parts) != 3:
            raise ValueError(f"bad manifest line: {line!r}")
        pid, pi, pv = parts
        entries.append((pid, base / pi, base / pv))
    return _load_pairs(entries)


def resize_short_side(img: np.ndarray, target: int = 768) -> np.ndarray:
    """Scale so the short side equals ``target``; long side is rounded."""
    h, w = img.shape[:2]
    short = min(h, w)
    if short == target:
        return img.copy()
    s = target / short
    nh, nw = (target, round(w * s)) if h <= w else (round(h * s), target)
    out = Image.fromarray(np.asarray(img, dtype=np.float32)).resize((nw, nh), Image.BICUBIC)
    return np.asarray(out, dtype=img.dtype if np.issubdtype(img.dtype, np.floating) else np.float32)


def save_fused(img, path: str | os.PathLike) -> Path:
    """Write a signed-domain image as a lossless 8-bit PNG."""
    a = np.asarray(img.detach().cpu() if hasattr(img, "detach") else img, dtype=np.float64)
    while a.ndim > 2 and a.shape[0] == 1:
        a = a[0]
    if a.ndim != 2:
        raise ValueError(f"expected a single image plane, got shape {a.shape}")
    if not np.isfinite(a).all():
        raise ValueError("fused image contains non-finite values")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(to_uint8(a)).save(path)
    return path


def read_uint8(path: str | os.PathLike) -> np.ndarray:
    """8-bit gray view used by the metrics."""
    return np.round(read_gray(path).astype(np.float64) * 255.0).astype(np.uint8)
