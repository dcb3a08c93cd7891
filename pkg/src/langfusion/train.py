"""Language-driven training loop and learning-rate schedule."""
from __future__ import annotations

import json
import logging
import math
from pathlib import Path

import numpy as np
import torch

from .checkpoint import save_checkpoint
from .config import TrainConfig
from .data import ImagePair
from .embedding import ClipSpace, PromptSet, TransitionPair
from .losses import LossTerms, PatchViews, VGGFeatures, total_loss
from .network import FusionNet, signed_to_unit, unit_to_signed
from .patches import augment_batch, dump_patches, filter_patches, sample_patches

log = logging.getLogger(__name__)


def lr_at(epoch: int, config: TrainConfig, frac: float = 1.0) -> float:
    """Learning rate for ``epoch`` (1-based).

    Warmup epochs ramp linearly, ``frac`` being the fraction of the
    current epoch completed. After ``decay_start_epoch`` the rate is
    multiplied by ``decay_factor`` once per ``decay_interval`` epochs,
    the first cut landing on ``decay_start_epoch + 1``.
    """
    if not 1 <= epoch <= config.epochs:
        raise ValueError(f"epoch {epoch} outside [1, {config.epochs}]")
    if epoch <= config.warmup_epochs:
        done = (epoch - 1 + min(max(frac, 0.0), 1.0)) / config.warmup_epochs
        return config.lr * done
    if epoch <= config.decay_start_epoch:
        return config.lr
    cuts = (epoch - config.decay_start_epoch - 1) // config.decay_interval + 1
    return config.lr * config.decay_factor ** cuts


def random_crop(pair: ImagePair, size: int, rng: np.random.Generator):
    h, w = pair.shape
    y = int(rng.integers(0, h - size + 1))
    x = int(rng.integers(0, w - size + 1))
    return pair.ir[y:y + size, x:x + size], pair.vs[y:y + size, x:x + size]


def load_content_prompts(path) -> dict[str, tuple[str, str]]:
    """JSON mapping ``id -> {"infrared": text, "visible": text}``."""
    raw = json.loads(Path(path).read_text())
    return {k: (v["infrared"], v["visible"]) for k, v in raw.items()}


class Trainer:
    """Holds the model, frozen encoders and optimizer for one run.

    ``clip``/``vgg`` may be injected (tests use randomly initialized
    encoders); otherwise they are built from the config's weight settings.
    """

    def __init__(self, config: TrainConfig, out_dir, clip: ClipSpace | None = None,
                 vgg: VGGFeatures | None = None):
        self.cfg = config
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        torch.manual_seed(config.seed)
        self.rng = np.random.default_rng(config.seed)
        self.device = torch.device(config.device)
        self.net = FusionNet(config.network).to(self.device)
        self.opt = torch.optim.Adam(self.net.parameters(), lr=config.lr)
        if config.disable_ldl:
            self.clip = clip
        else:
            self.clip = clip or ClipSpace(config.clip_variant, config.clip_weights, self.device)
        self.vgg = (vgg or VGGFeatures(weights=config.vgg_weights)).to(self.device)
        self.history: list[dict] = []
        self.step = 0
        self._content = load_content_prompts(config.content_prompts) if config.prompt_mode == "content" else {}

    @property
    def encoder_tag(self) -> str:
        return self.clip.tag if self.clip is not None else ""

    def text_deltas(self, ids: list[str]) -> TransitionPair | None:
        if self.cfg.disable_ldl:
            return None
        obj = self.cfg.objective_text_override
        if self.cfg.prompt_mode != "content":
            return self.clip.build_fusion_model(PromptSet.for_mode(self.cfg.prompt_mode, obj))
        pairs = []
        for i in ids:
            ir_text, vs_text = self._content[i]
            pairs.append(self.clip.build_fusion_model(PromptSet(obj or PromptSet().objective_text, ir_text, vs_text)))
        return TransitionPair(torch.stack([p.delta_vs for p in pairs]), torch.stack([p.delta_ir for p in pairs]))

    def patch_views(self, ir: torch.Tensor, vs: torch.Tensor, fused: torch.Tensor) -> PatchViews | None:
        cfg = self.cfg
        if cfg.disable_ldl:
            return None
        size = self.clip.image_size
        f_all, i_all, v_all, owner = [], [], [], []
        for b in range(fused.shape[0]):
            batch = sample_patches(ir[b], vs[b], fused[b], cfg.patches_per_image, self.rng)
            filter_patches(batch, cfg.sigma, cfg.keep_rule)
            if cfg.dump_patches and self.step == 0:
                dump_patches(batch, cfg.dump_patches, prefix=f"step0_item{b}")
            views = augment_batch(batch, self.rng, size, cfg.distortion)
            if views is None:
                continue
            f_all.append(views[0])
            i_all.append(views[1])
            v_all.append(views[2])
            owner += [b] * views[0].shape[0]
        if not f_all:
            return None
        return PatchViews(torch.cat(f_all), torch.cat(i_all), torch.cat(v_all), torch.tensor(owner))

    def compute_terms(self, ir_u: torch.Tensor, vs_u: torch.Tensor, ids: list[str]) -> tuple[LossTerms, torch.Tensor]:
        """Forward pass and loss for a batch of [0, 1] crops shaped (B, 1, H, W)."""
        fused = self.net(unit_to_signed(ir_u), unit_to_signed(vs_u))
        fused_u = signed_to_unit(fused)
        patches = self.patch_views(ir_u[:, 0], vs_u[:, 0], fused_u[:, 0])
        terms = total_loss(
            ir_u, vs_u, fused_u,
            clip=self.clip, text_deltas=self.text_deltas(ids), vgg=self.vgg, patches=patches,
            lambda_weight=self.cfg.effective_lambda, alpha_weight=self.cfg.alpha_weight,
            norm=self.cfg.fidelity_norm, disable_ldl=self.cfg.disable_ldl,
        )
        return terms, fused

    def _batch(self, pairs: list[ImagePair], crop: int):
        irs, vss = zip(*(random_crop(p, crop, self.rng) for p in pairs))
        to_t = lambda xs: torch.from_numpy(np.stack(xs)[:, None].astype(np.float32)).to(self.device)
        return to_t(irs), to_t(vss)

    def train_step(self, pairs: list[ImagePair], lr: float, epoch: int, crop: int) -> dict:
        for g in self.opt.param_groups:
            g["lr"] = lr
        self.net.train()
        ir, vs = self._batch(pairs, crop)
        terms, fused = self.compute_terms(ir, vs, [p.id for p in pairs])
        if not torch.isfinite(terms.l_total):
            dump = self.out_dir / f"nonfinite_step{self.step}.pt"
            torch.save({"ids": [p.id for p in pairs], "ir": ir, "vs": vs, "fused": fused.detach(),
                        "terms": terms.as_dict()}, dump)
            raise FloatingPointError(f"non-finite loss at step {self.step}; batch dumped to {dump}")
        self.opt.zero_grad(set_to_none=True)
        terms.l_total.backward()
        self.opt.step()
        rec = {"step": self.step, "epoch": epoch, "lr": lr, **terms.as_dict()}
        self.history.append(rec)
        self.step += 1
        return rec

    def fit(self, pairs: list[ImagePair]) -> Path:
        if not pairs:
            raise ValueError("training needs at least one image pair")
        cfg = self.cfg
        crop = min(cfg.crop_size, *(min(p.shape) for p in pairs))
        if crop < cfg.crop_size:
            log.warning("smallest image side is %d; crop size reduced from %d", crop, cfg.crop_size)
        steps_per_epoch = math.ceil(len(pairs) / cfg.batch_size)
        log_path = self.out_dir / "train_log.jsonl"
        ckpt = self.out_dir / "last.pt"
        with open(log_path, "w") as logf:
            for epoch in range(1, cfg.epochs + 1):
                order = self.rng.permutation(len(pairs))
                for i in range(steps_per_epoch):
                    idx = order[i * cfg.batch_size:(i + 1) * cfg.batch_size]
                    lr = lr_at(epoch, cfg, (i + 1) / steps_per_epoch)
                    rec = self.train_step([pairs[j] for j in idx], lr, epoch, crop)
                    logf.write(json.dumps(rec) + "\n")
                    logf.flush()
                    log.info("step %d epoch %d lr %.2e l_total %.4f", rec["step"], epoch, lr, rec["l_total"])
                    if cfg.max_steps and self.step >= cfg.max_steps:
                        return self.save(ckpt, epoch)
                self.save(self.out_dir / f"epoch_{epoch:03d}.pt", epoch)
                self.save(ckpt, epoch)
        return ckpt

    def save(self, path, epoch: int) -> Path:
        return save_checkpoint(path, self.net, epoch=epoch, step=self.step, encoder=self.encoder_tag,
                               train_config=self.cfg.to_dict(), loss_history=self.history)


def train(pairs: list[ImagePair], config: TrainConfig, out_dir, clip=None, vgg=None) -> Path:
    """Run training; returns the path of the final checkpoint."""
    return Trainer(config, out_dir, clip, vgg).fit(pairs)
