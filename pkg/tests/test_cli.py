import logging
import subprocess
import sys

import numpy as np
import pytest
import torch
from PIL import Image

from langfusion.checkpoint import save_checkpoint
from langfusion.cli import main
from langfusion.infer import fuse_directory
from langfusion.network import FusionNet

from conftest import synthetic_pair, write_pair_dirs

BLOCK_ENCODER = (
    "import sys\n"
    "sys.modules['open_clip'] = None\n"
    "sys.modules['langfusion.embedding'] = None\n"
    "sys.modules['langfusion.losses'] = None\n"
    "sys.modules['langfusion.train'] = None\n"
    "from langfusion.cli import main\n"
    "sys.exit(main(sys.argv[1:]))\n"
)


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    from langfusion.data import ImagePair

    root = tmp_path_factory.mktemp("corpus")
    rng = np.random.default_rng(0)
    shapes = [(64, 64), (72, 96), (65, 70)]
    pairs = [ImagePair(f"p{i}", *synthetic_pair(rng, *s)) for i, s in enumerate(shapes)]
    ir_dir, vi_dir = write_pair_dirs(root, pairs)
    Image.fromarray(np.zeros((8, 8), np.uint8)).save(ir_dir / "orphan.png")
    torch.manual_seed(0)
    ckpt = save_checkpoint(root / "net.pt", FusionNet(), encoder="ViT-B-32/random")
    return root, ir_dir, vi_dir, ckpt, shapes


def test_fuse_directory_cardinality_and_shapes(corpus, tmp_path, caplog):
    root, ir_dir, vi_dir, ckpt, shapes = corpus
    with caplog.at_level(logging.WARNING, logger="langfusion.infer"):
        out = fuse_directory(ckpt, ir_dir, vi_dir, tmp_path)
    assert len(out) == 3
    for path, shape in zip(sorted(out), shapes):
        assert np.asarray(Image.open(path)).shape == shape
    assert "orphan" in caplog.text


def test_fuse_runs_with_encoder_unimportable(corpus, tmp_path):
    root, ir_dir, vi_dir, ckpt, shapes = corpus
    res = subprocess.run([sys.executable, "-c", BLOCK_ENCODER, "fuse", "--ckpt", str(ckpt),
                          "--ir-dir", str(ir_dir), "--vi-dir", str(vi_dir), "--out", str(tmp_path)],
                         capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    outs = sorted(tmp_path.glob("*.png"))
    assert [np.asarray(Image.open(p)).shape for p in outs] == shapes


def test_eval_table_has_n_plus_one_rows(corpus, tmp_path, capsys):
    root, ir_dir, vi_dir, ckpt, _ = corpus
    fused = tmp_path / "fused"
    assert main(["eval", "--ckpt", str(ckpt), "--fused-dir", str(fused), "--ir-dir", str(ir_dir),
                 "--vi-dir", str(vi_dir), "--out", str(tmp_path / "t.tsv")]) == 0
    rows = capsys.readouterr().out.strip().splitlines()
    assert rows[0].split("\t") == ["image", "EN", "CC", "SD", "EI", "VIFF"]
    assert len(rows[1:]) == 3 + 1 and rows[-1].startswith("mean")
    assert (tmp_path / "t.tsv").read_text().strip() == "\n".join(rows)


def test_eval_runs_with_encoder_unimportable(corpus, tmp_path):
    root, ir_dir, vi_dir, ckpt, _ = corpus
    res = subprocess.run([sys.executable, "-c", BLOCK_ENCODER, "eval", "--ckpt", str(ckpt),
                          "--fused-dir", str(tmp_path), "--ir-dir", str(ir_dir), "--vi-dir", str(vi_dir)],
                         capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert len(res.stdout.strip().splitlines()) == 1 + 3 + 1


def test_probe_three_prompts_sum_to_one(corpus, capsys):
    _, ir_dir, _, _, _ = corpus
    assert main(["probe", str(ir_dir / "p0.png"), "--weights", "random",
                 "--prompts", "an infrared image", "a visible image", "a photo of a dog"]) == 0
    rows = capsys.readouterr().out.strip().splitlines()[1:]
    assert len(rows) == 3
    assert sum(float(r.split("\t")[2]) for r in rows) == pytest.approx(1.0, abs=1e-3)


def test_train_cli_writes_checkpoint_and_log(corpus, tmp_path, caplog, capsys):
    root, ir_dir, vi_dir, _, _ = corpus
    out = tmp_path / "run"
    with caplog.at_level(logging.INFO, logger="langfusion"):
        code = main(["train", "--ir-dir", str(ir_dir), "--vi-dir", str(vi_dir), "--out", str(out), "--seed", "3",
                     "--set", "disable_ldl=true", "--set", "vgg_weights=random", "--set", "epochs=2",
                     "--set", "decay_start_epoch=1", "--set", "batch_size=3", "--set", "crop_size=64"])
    assert code == 0
    assert (out / "last.pt").is_file() and (out / "train_log.jsonl").is_file()
    assert "seed: 3" in caplog.text  # effective config echoed


def test_missing_checkpoint_is_one_line_error(corpus, tmp_path, capsys):
    _, ir_dir, vi_dir, _, _ = corpus
    code = main(["fuse", "--ckpt", str(tmp_path / "nope.pt"), "--ir-dir", str(ir_dir), "--vi-dir", str(vi_dir),
                 "--out", str(tmp_path)])
    err = capsys.readouterr().err.strip()
    assert code != 0 and len(err.splitlines()) == 1 and "checkpoint not found" in err


def test_bad_config_key_is_error(corpus, tmp_path, capsys):
    _, ir_dir, vi_dir, _, _ = corpus
    code = main(["train", "--ir-dir", str(ir_dir), "--vi-dir", str(vi_dir), "--set", "nonsense=1"])
    assert code != 0 and "unknown config key" in capsys.readouterr().err


def test_missing_encoder_weights_is_error(corpus, tmp_path, capsys):
    _, ir_dir, _, _, _ = corpus
    code = main(["probe", str(ir_dir / "p0.png"), "--weights", str(tmp_path / "absent.bin")])
    assert code != 0 and "EncoderWeightsError" in capsys.readouterr().err


def test_identical_invocations_identical_outputs(corpus, tmp_path):
    root, ir_dir, vi_dir, ckpt, _ = corpus
    for d in ("a", "b"):
        assert main(["fuse", "--ckpt", str(ckpt), "--ir-dir", str(ir_dir), "--vi-dir", str(vi_dir),
                     "--out", str(tmp_path / d)]) == 0
    for p in sorted((tmp_path / "a").glob("*.png")):
        assert np.array_equal(np.asarray(Image.open(p)), np.asarray(Image.open(tmp_path / "b" / p.name)))
