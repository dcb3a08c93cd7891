"""Copy an ir/ + vi/ corpus with every image resized to a fixed short side.

    python scripts/resize_corpus.py RoadScene runs/roadscene_768 --short-side 768
"""
import argparse
from pathlib import Path

import numpy as np
from PIL import Image

from langfusion.data import IMAGE_SUFFIXES, read_gray, resize_short_side


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("src")
    ap.add_argument("dst")
    ap.add_argument("--short-side", type=int, default=768)
    args = ap.parse_args()
    for sub in ("ir", "vi"):
        out = Path(args.dst) / sub
        out.mkdir(parents=True, exist_ok=True)
        for p in sorted((Path(args.src) / sub).iterdir()):
            if p.suffix.lower() not in IMAGE_SUFFIXES:
                continue
            img = resize_short_side(read_gray(p), args.short_side)
            Image.fromarray(np.round(np.clip(img, 0, 1) * 255).astype(np.uint8)).save(out / f"{p.stem}.png")


if __name__ == "__main__":
    main()
