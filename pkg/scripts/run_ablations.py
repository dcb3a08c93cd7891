"""Train and evaluate the ablation grid with shared settings.

Variants: full objective, no language term, no regularization, the
lambda sweep {0, 0.5, 2}, the alpha sweep {0.5, 1, 2} and the two prompt
variants. Each variant trains into ``<out>/<name>``, fuses the test
pairs and writes ``metrics.tsv``; a summary table is printed at the end.

    python scripts/run_ablations.py --train-root M3FD/train --test-root TNO --out runs/ablations
"""
import argparse
import subprocess
import sys
from pathlib import Path

VARIANTS = {
    "full": [],
    "no_ldl": ["disable_ldl=true"],
    "no_phi": ["disable_phi=true"],
    "lambda_0": ["lambda_weight=0"],
    "lambda_2": ["lambda_weight=2"],
    "alpha_0.5": ["alpha_weight=0.5"],
    "alpha_2": ["alpha_weight=2"],
    "swapped_prompt": ["prompt_mode=swapped"],
}


def run(cmd):
    print("+", " ".join(cmd), flush=True)
    subprocess.run(cmd, check=True)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--train-root", required=True, help="root with ir/ and vi/ training pairs")
    ap.add_argument("--test-root", required=True, help="root with ir/ and vi/ test pairs")
    ap.add_argument("--config", default="configs/default.yaml")
    ap.add_argument("--out", default="runs/ablations")
    ap.add_argument("--only", nargs="*", help="subset of variant names")
    ap.add_argument("--set", dest="extra", action="append", default=[], help="extra overrides for every run")
    args = ap.parse_args()

    cli = [sys.executable, "-m", "langfusion"]
    train, test = Path(args.train_root), Path(args.test_root)
    rows = []
    for name, overrides in VARIANTS.items():
        if args.only and name not in args.only:
            continue
        out = Path(args.out) / name
        sets = [x for o in overrides + args.extra for x in ("--set", o)]
        run(cli + ["train", "--config", args.config, *sets, "--ir-dir", str(train / "ir"),
                   "--vi-dir", str(train / "vi"), "--out", str(out)])
        run(cli + ["eval", "--ckpt", str(out / "last.pt"), "--fused-dir", str(out / "fused"),
                   "--ir-dir", str(test / "ir"), "--vi-dir", str(test / "vi"), "--out", str(out / "metrics.tsv")])
        mean = (out / "metrics.tsv").read_text().strip().splitlines()[-1].split("\t")[1:]
        rows.append((name, mean))
    print("\nvariant\tEN\tCC\tSD\tEI\tVIFF")
    for name, mean in rows:
        print(name + "\t" + "\t".join(mean))


if __name__ == "__main__":
    main()
