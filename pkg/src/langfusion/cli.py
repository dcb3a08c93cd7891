"""``langfusion`` command line: train, fuse, eval, probe.

Heavy modules are imported inside each subcommand so that ``fuse`` and
``eval`` never load the vision-language encoder.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

log = logging.getLogger("langfusion")


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="YAML config file")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config value (repeatable, dotted keys for nested sections)")
    p.add_argument("--seed", type=int, help="random seed (overrides config)")
    p.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="langfusion", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="language-driven training")
    _common(p)
    p.add_argument("--ir-dir", help="infrared images")
    p.add_argument("--vi-dir", help="visible images (matched by file stem)")
    p.add_argument("--manifest", help="tab-separated id/ir/vs manifest instead of directories")

    p = sub.add_parser("fuse", help="fuse image pairs with a checkpoint")
    _common(p)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--ir-dir", required=True)
    p.add_argument("--vi-dir", required=True)

    p = sub.add_parser("eval", help="EN/CC/SD/EI/VIFF table for fused images")
    _common(p)
    p.add_argument("--fused-dir", required=True)
    p.add_argument("--ir-dir", required=True)
    p.add_argument("--vi-dir", required=True)
    p.add_argument("--ckpt", help="fuse with this checkpoint into --fused-dir first")
    p.add_argument("--delimiter", default="\t")

    p = sub.add_parser("probe", help="prompt similarity scores per image")
    _common(p)
    p.add_argument("images", nargs="+")
    p.add_argument("--prompts", nargs="+", default=["an infrared image", "a visible image"])
    p.add_argument("--weights", help="encoder weights (path or tag)")
    return parser


def _config(args):
    from .config import dump_config, load_config

    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    cfg = load_config(args.config, overrides)
    log.info("effective config:\n%s", dump_config(cfg))
    return cfg


def cmd_train(args) -> int:
    from .data import load_dirs, load_manifest
    from .train import train

    cfg = _config(args)
    if args.manifest:
        pairs = load_manifest(args.manifest)
    elif args.ir_dir and args.vi_dir:
        pairs = load_dirs(args.ir_dir, args.vi_dir)
    else:
        raise ValueError("train needs --ir-dir/--vi-dir or --manifest")
    ckpt = train(pairs, cfg, args.out or "runs/train")
    print(ckpt)
    return 0


def cmd_fuse(args) -> int:
    from .infer import fuse_directory

    if args.config or args.overrides:
        _config(args)
    paths = fuse_directory(args.ckpt, args.ir_dir, args.vi_dir, args.out or "fused")
    print(f"wrote {len(paths)} fused image(s) to {args.out or 'fused'}")
    return 0


def cmd_eval(args) -> int:
    from .metrics import evaluate_dirs

    if args.ckpt:
        from .infer import fuse_directory

        fuse_directory(args.ckpt, args.ir_dir, args.vi_dir, args.fused_dir)
    report = evaluate_dirs(args.fused_dir, args.ir_dir, args.vi_dir)
    table = report.to_table(args.delimiter.encode().decode("unicode_escape"))
    print(table)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(table + "\n")
    return 0


def cmd_probe(args) -> int:
    import torch

    from .data import read_gray
    from .embedding import ClipSpace

    clip = ClipSpace(weights=args.weights)
    lines = ["image\tprompt\tscore"]
    for path in args.images:
        img = torch.from_numpy(read_gray(path))
        for prompt, score in clip.probe(img, args.prompts):
            lines.append(f"{Path(path).name}\t{prompt}\t{score:.4f}")
    out = "\n".join(lines)
    print(out)
    if args.out:
        Path(args.out).write_text(out + "\n")
    return 0


COMMANDS = {"train": cmd_train, "fuse": cmd_fuse, "eval": cmd_eval, "probe": cmd_probe}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except Exception as exc:  # one-line cause, nonzero exit
        if args.verbose:
            raise
        print(f"langfusion {args.command}: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
