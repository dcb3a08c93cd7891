"""Fusion quality metrics on 8-bit single-channel views.

EN   histogram entropy (bits)
CC   mean Pearson correlation of the fused image with each source
SD   population standard deviation of pixel values
EI   mean Sobel gradient magnitude, reflect-padded borders
VIFF multi-scale visual information fidelity for fusion (Han et al. 2013)

VIFF parameters: 4 scales, Gaussian windows of size 2**(5 - s) + 1 with
sigma = size / 5, 'valid' filtering, dyadic subsampling, noise variance
0.005 * 255**2, per-scale weights (1, 0, 0.15, 1) / 2.15. At each
location the source whose gain to the fused image is larger supplies the
information terms.
"""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage
from scipy.signal import convolve2d

log = logging.getLogger(__name__)

METRICS = ("en", "cc", "sd", "ei", "viff")

VIFF_SCALES = 4
VIFF_NOISE_VAR = 0.005 * 255 * 255
VIFF_WEIGHTS = np.array([1.0, 0.0, 0.15, 1.0]) / 2.15
VIFF_EPS = 1e-10
VIFF_STAB = 1e-7


def _view(img) -> np.ndarray:
    a = np.asarray(img)
    if a.ndim != 2:
        a = np.squeeze(a)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D image, got shape {np.shape(img)}")
    return a.astype(np.float64)


def metric_en(fused) -> float:
    a = np.asarray(fused)
    if a.dtype != np.uint8:
        a = np.clip(np.round(a), 0, 255).astype(np.uint8)
    counts = np.bincount(a.ravel(), minlength=256)
    p = counts[counts > 0] / a.size
    return float(max(0.0, -(p * np.log2(p)).sum()))


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    x = x - x.mean()
    y = y - y.mean()
    den = np.sqrt((x * x).sum() * (y * y).sum())
    if den == 0:
        log.warning("zero-variance image in CC; correlation taken as 0")
        return 0.0
    return float((x * y).sum() / den)


def metric_cc(fused, ir, vs) -> float:
    f, a, b = _view(fused), _view(ir), _view(vs)
    if not (f.shape == a.shape == b.shape):
        raise ValueError("fused, ir and vs must share a shape")
    return 0.5 * (_pearson(f, a) + _pearson(f, b))


def metric_sd(fused) -> float:
    return float(np.std(_view(fused)))


def metric_ei(fused) -> float:
    f = _view(fused)
    gx = ndimage.sobel(f, axis=1, mode="reflect")
    gy = ndimage.sobel(f, axis=0, mode="reflect")
    return float(np.mean(np.hypot(gx, gy)))


def _gaussian_window(n: int) -> np.ndarray:
    # MATLAB fspecial('gaussian', n, n/5)
    sd = n / 5.0
    r = (n - 1) / 2.0
    y, x = np.ogrid[-r:r + 1, -r:r + 1]
    h = np.exp(-(x * x + y * y) / (2.0 * sd * sd))
    h[h < np.finfo(h.dtype).eps * h.max()] = 0
    return h / h.sum()


def _vif_maps(ref: np.ndarray, dist: np.ndarray):
    """Per-scale (VID, VIND, gain) maps of ``dist`` against ``ref``."""
    vid, vind, gain = [], [], []
    for scale in range(1, VIFF_SCALES + 1):
        n = 2 ** (VIFF_SCALES - scale + 1) + 1
        win = _gaussian_window(n)
        if scale > 1:
            ref = convolve2d(ref, win, mode="valid")[::2, ::2]
            dist = convolve2d(dist, win, mode="valid")[::2, ::2]
        if min(ref.shape) < n:
            raise ValueError("image too small for the 4-scale VIFF decomposition")
        mu1 = convolve2d(ref, win, mode="valid")
        mu2 = convolve2d(dist, win, mode="valid")
        s1 = convolve2d(ref * ref, win, mode="valid") - mu1 * mu1
        s2 = convolve2d(dist * dist, win, mode="valid") - mu2 * mu2
        s12 = convolve2d(ref * dist, win, mode="valid") - mu1 * mu2
        s1 = np.maximum(s1, 0)
        s2 = np.maximum(s2, 0)

        g = s12 / (s1 + VIFF_EPS)
        sv = s2 - g * s12
        flat1 = s1 < VIFF_EPS
        g[flat1] = 0
        sv[flat1] = s2[flat1]
        s1[flat1] = 0
        flat2 = s2 < VIFF_EPS
        g[flat2] = 0
        sv[flat2] = 0
        neg = g < 0
        sv[neg] = s2[neg]
        g[neg] = 0
        sv = np.maximum(sv, VIFF_EPS)

        vid.append(np.log2(1 + g * g * s1 / (sv + VIFF_NOISE_VAR)))
        vind.append(np.log2(1 + s1 / VIFF_NOISE_VAR))
        gain.append(g)
    return vid, vind, gain


def metric_viff(fused, ir, vs) -> float:
    f, a, b = _view(fused), _view(ir), _view(vs)
    if not (f.shape == a.shape == b.shape):
        raise ValueError("fused, ir and vs must share a shape")
    n1, d1, g1 = _vif_maps(a, f)
    n2, d2, g2 = _vif_maps(b, f)
    per_scale = np.empty(VIFF_SCALES)
    for k in range(VIFF_SCALES):
        from_a = g1[k] < g2[k]  # same selection rule as the reference MATLAB code
        num = np.where(from_a, n1[k], n2[k]).sum()
        den = np.where(from_a, d1[k], d2[k]).sum()
        per_scale[k] = (num + VIFF_STAB) / (den + VIFF_STAB)
    return float((VIFF_WEIGHTS * per_scale).sum())


def compute_all(fused, ir, vs) -> dict[str, float]:
    return {
        "en": metric_en(fused),
        "cc": metric_cc(fused, ir, vs),
        "sd": metric_sd(fused),
        "ei": metric_ei(fused),
        "viff": metric_viff(fused, ir, vs),
    }


@dataclass
class MetricsReport:
    per_image: dict[str, dict[str, float]] = field(default_factory=dict)

    @property
    def aggregate(self) -> dict[str, float]:
        if not self.per_image:
            return {m: float("nan") for m in METRICS}
        return {m: float(np.mean([v[m] for v in self.per_image.values()])) for m in METRICS}

    def to_table(self, delimiter: str = "\t", digits: int = 3) -> str:
        rows = [delimiter.join(["image"] + [m.upper() for m in METRICS])]
        for name, vals in self.per_image.items():
            rows.append(delimiter.join([name] + [f"{vals[m]:.{digits}f}" for m in METRICS]))
        agg = self.aggregate
        rows.append(delimiter.join(["mean"] + [f"{agg[m]:.{digits}f}" for m in METRICS]))
        return "\n".join(rows)


def evaluate_dirs(fused_dir, ir_dir, vi_dir) -> MetricsReport:
    """Score every fused image that has matching ir/vi sources by stem."""
    from .data import IMAGE_SUFFIXES, read_uint8

    def index(d):
        return {p.stem: p for p in sorted(Path(d).iterdir()) if p.suffix.lower() in IMAGE_SUFFIXES}

    fused, ir, vi = index(fused_dir), index(ir_dir), index(vi_dir)
    report = MetricsReport()
    for stem, path in fused.items():
        if stem not in ir or stem not in vi:
            log.warning("no sources for fused image %s; skipped", stem)
            continue
        f, a, b = read_uint8(path), read_uint8(ir[stem]), read_uint8(vi[stem])
        if not (f.shape == a.shape == b.shape):
            log.warning("shape mismatch for %s; skipped", stem)
            continue
        report.per_image[stem] = compute_all(f, a, b)
    return report


def write_report(report: MetricsReport, path: str | os.PathLike, delimiter: str = "\t") -> None:
    Path(path).write_text(report.to_table(delimiter) + "\n")
