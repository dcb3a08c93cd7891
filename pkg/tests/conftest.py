import logging
import os
from pathlib import Path

import hypothesis
import numpy as np
import pytest
import torch
from scipy import ndimage

# Tests use only locally cached weights; export HF_HUB_OFFLINE=0 to allow downloads.
os.environ.setdefault("HF_HUB_OFFLINE", "1")

hypothesis.settings.register_profile("ci", max_examples=50, deadline=None)
hypothesis.settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "ci"))

# open_clip logs a warning through the root logger for random init
logging.getLogger().setLevel(logging.ERROR)


def synthetic_pair(rng: np.random.Generator, h: int = 256, w: int = 256):
    """A registered ir/vs pair in [0, 1] with some structure.

    Infrared: a few warm blobs on a smooth cold background. Visible:
    textured background with edges. Both carry sensor noise.
    """
    yy, xx = np.mgrid[0:h, 0:w]
    ir = 0.2 + 0.1 * ndimage.gaussian_filter(rng.standard_normal((h, w)), 12) * 8
    for _ in range(rng.integers(2, 5)):
        cy, cx = rng.uniform(0, h), rng.uniform(0, w)
        r = rng.uniform(8, 30)
        ir += 0.6 * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * r * r))
    vs = 0.45 + 0.2 * np.sin(xx / rng.uniform(3, 9)) * np.cos(yy / rng.uniform(4, 11))
    vs += 0.25 * ndimage.gaussian_filter(rng.standard_normal((h, w)), 2) * 3
    vs[:, : w // 3] *= 0.6
    ir += 0.02 * rng.standard_normal((h, w))
    vs += 0.02 * rng.standard_normal((h, w))
    return np.clip(ir, 0, 1).astype(np.float32), np.clip(vs, 0, 1).astype(np.float32)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def clip_random():
    from langfusion.embedding import ClipSpace

    torch.manual_seed(0)
    return ClipSpace(weights="random")


@pytest.fixture(scope="session")
def vgg_random():
    from langfusion.losses import VGGFeatures

    torch.manual_seed(0)
    return VGGFeatures(weights="random")


@pytest.fixture(scope="session")
def synthetic_pairs():
    from langfusion.data import ImagePair

    r = np.random.default_rng(7)
    return [ImagePair(f"syn{i:02d}", *synthetic_pair(r)) for i in range(16)]


def tno_root() -> Path | None:
    """``$LANGFUSION_TNO_DIR`` with ir/ and vi/ subdirectories, if present."""
    p = os.environ.get("LANGFUSION_TNO_DIR")
    if p and (Path(p) / "ir").is_dir() and (Path(p) / "vi").is_dir():
        return Path(p)
    return None


def write_pair_dirs(root: Path, pairs):
    from PIL import Image

    (root / "ir").mkdir(parents=True, exist_ok=True)
    (root / "vi").mkdir(parents=True, exist_ok=True)
    for p in pairs:
        Image.fromarray(np.round(p.ir * 255).astype(np.uint8)).save(root / "ir" / f"{p.id}.png")
        Image.fromarray(np.round(p.vs * 255).astype(np.uint8)).save(root / "vi" / f"{p.id}.png")
    return root / "ir", root / "vi"


# -- acceptance report -------------------------------------------------------

ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
