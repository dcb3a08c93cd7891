"""Desk-scale training run; prints how the loss terms move.

With no data directory it trains on generated structured pairs. Pass
``--weights random`` to use untrained encoders (plumbing check only).

    python scripts/toy_train.py --steps 50 --weights random
    python scripts/toy_train.py --data $LANGFUSION_TNO_DIR --steps 50
"""
import argparse
import logging
import sys
from pathlib import Path

import numpy as np
import torch

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))

from langfusion.config import load_config  # noqa: E402
from langfusion.data import ImagePair, load_corpus  # noqa: E402
from langfusion.train import Trainer  # noqa: E402


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--data", help="root with ir/ and vi/; synthetic pairs if omitted")
    ap.add_argument("--pairs", type=int, default=16)
    ap.add_argument("--steps", type=int, default=50)
    ap.add_argument("--weights", help="'random' for untrained CLIP and VGG")
    ap.add_argument("--config", default=str(Path(__file__).resolve().parents[1] / "configs" / "toy.yaml"))
    ap.add_argument("--out", default="runs/toy")
    args = ap.parse_args()
    logging.basicConfig(level=logging.WARNING)

    overrides = [f"max_steps={args.steps}", f"epochs={args.steps + 2}", f"decay_start_epoch={args.steps + 1}"]
    if args.weights == "random":
        overrides += ["clip_weights=random", "vgg_weights=random"]
    cfg = load_config(args.config, overrides)

    if args.data:
        pairs = load_corpus(args.data)[: args.pairs]
    else:
        from conftest import synthetic_pair

        rng = np.random.default_rng(cfg.seed)
        pairs = [ImagePair(f"syn{i:02d}", *synthetic_pair(rng)) for i in range(args.pairs)]

    torch.manual_seed(cfg.seed)
    t = Trainer(cfg, args.out)
    t.fit(pairs)
    h = t.history
    keys = ["l_total", "l_d", "phi", "l_v", "direction_cos"]
    print("window   " + "  ".join(f"{k:>13}" for k in keys))
    for name, sl in (("first10", slice(0, 10)), ("last10", slice(-10, None))):
        print(f"{name:8} " + "  ".join(f"{np.mean([r[k] for r in h[sl]]):13.4f}" for k in keys))
    print(f"step0 direction_cos {h[0]['direction_cos']:.4f}; checkpoint {Path(args.out) / 'last.pt'}")


if __name__ == "__main__":
    main()
