"""Ask the frozen encoder which modality prompt fits each image.

Expects ``<root>/ir`` and ``<root>/vi``; prints per-image scores and the
top-1 rate of the matching prompt.

    python scripts/probe_modalities.py $LANGFUSION_TNO_DIR --limit 10
"""
import argparse
from pathlib import Path

import torch

from langfusion.data import read_gray
from langfusion.embedding import ClipSpace

PROMPTS = ["an infrared image", "a visible image", "a photo of a dog"]
EXPECTED = {"ir": "an infrared image", "vi": "a visible image"}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("root")
    ap.add_argument("--limit", type=int, default=10)
    ap.add_argument("--weights")
    ap.add_argument("--prompts", nargs="+", default=PROMPTS)
    args = ap.parse_args()

    clip = ClipSpace(weights=args.weights)
    hits = total = 0
    print("image\tmodality\t" + "\t".join(args.prompts))
    for sub, want in EXPECTED.items():
        files = sorted(p for p in (Path(args.root) / sub).iterdir() if p.is_file())[: args.limit]
        for path in files:
            scores = dict(clip.probe(torch.from_numpy(read_gray(path)), args.prompts))
            print(f"{path.name}\t{sub}\t" + "\t".join(f"{scores[p]:.3f}" for p in args.prompts))
            hits += max(scores, key=scores.get) == want
            total += 1
    print(f"matching prompt ranked first: {hits}/{total} ({hits / max(total, 1):.0%})")


if __name__ == "__main__":
    main()
