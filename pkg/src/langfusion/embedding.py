"""Frozen vision-language embedding space.

Wraps an open_clip model. Text prompts become the language-side fusion
model (two transition vectors); images and patches are encoded into the
same space for the loss.

Weights are resolved in this order:

1. an explicit ``weights`` argument (file path, pretrained tag, or
   ``"random"`` for an untrained encoder of the same architecture);
2. ``$LANGFUSION_CLIP_WEIGHTS`` (file path or tag);
3. the ``openai`` tag through the open_clip cache, with
   ``$LANGFUSION_CACHE`` overriding the cache directory.
"""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass

import torch
import torch.nn.functional as F

log = logging.getLogger(__name__)

DEFAULT_VARIANT = "ViT-B-32"
DEFAULT_TAG = "openai"
RANDOM_WEIGHTS = "random"

OBJECTIVE_TEXT = "a clear image with detailed background and salient objects"
INFRARED_TEXT = "an infrared image"
VISIBLE_TEXT = "a visible gray image"

_DOWNLOAD_HINT = (
    "download the {variant} '{tag}' checkpoint on a connected machine "
    "(e.g. open_clip.create_model('{variant}', pretrained='{tag}', cache_dir=...)) "
    "and point LANGFUSION_CLIP_WEIGHTS at the file or LANGFUSION_CACHE at the cache dir"
)


class EncoderWeightsError(RuntimeError):
    """Raised when pretrained encoder weights cannot be loaded."""


class TokenLimitError(ValueError):
    pass


@dataclass(frozen=True)
class PromptSet:
    objective_text: str = OBJECTIVE_TEXT
    infrared_text: str = INFRARED_TEXT
    visible_text: str = VISIBLE_TEXT

    def __post_init__(self):
        for name in ("objective_text", "infrared_text", "visible_text"):
            if not getattr(self, name).strip():
                raise ValueError(f"{name} must be non-empty")

    @classmethod
    def for_mode(cls, mode: str = "default", objective_text: str | None = None) -> PromptSet:
        """Prompt presets. ``swapped`` exchanges the two modality texts."""
        obj = objective_text or OBJECTIVE_TEXT
        if mode == "default":
            return cls(obj, INFRARED_TEXT, VISIBLE_TEXT)
        if mode == "swapped":
            return cls(obj, VISIBLE_TEXT, INFRARED_TEXT)
        raise ValueError(f"prompt mode {mode!r} has no fixed preset (content prompts are per image)")


@dataclass(frozen=True)
class TransitionPair:
    """Fusion direction in embedding space: objective minus each modality."""

    delta_vs: torch.Tensor
    delta_ir: torch.Tensor

    @classmethod
    def from_embeddings(cls, v_f, v_vs, v_ir, check: bool = True) -> TransitionPair:
        pair = cls(v_f - v_vs, v_f - v_ir)
        if check:
            for name, d in (("delta_vs", pair.delta_vs), ("delta_ir", pair.delta_ir)):
                if torch.any(d.norm(dim=-1) < 1e-8):
                    raise ValueError(f"degenerate transition: {name} has zero norm "
                                     "(objective text embeds identically to a modality text)")
        return pair


def _resolve_weights(weights: str | None) -> str:
    if weights:
        return weights
    return os.environ.get("LANGFUSION_CLIP_WEIGHTS") or DEFAULT_TAG


def weights_available(weights: str | None = None, variant: str = DEFAULT_VARIANT) -> bool:
    """True when pretrained weights resolve locally without network access."""
    w = _resolve_weights(weights)
    if w == RANDOM_WEIGHTS or os.path.isfile(w):
        return True
    key = (variant, w)
    if key not in _AVAILABLE:
        try:
            ClipSpace(variant, w)
            _AVAILABLE[key] = True
        except (EncoderWeightsError, ImportError):
            _AVAILABLE[key] = False
    return _AVAILABLE[key]


_AVAILABLE: dict[tuple[str, str], bool] = {}


class ClipSpace:
    """Frozen CLIP encoders plus the cached language-side fusion model."""

    def __init__(self, variant: str = DEFAULT_VARIANT, weights: str | None = None,
                 device: str | torch.device = "cpu", dtype: torch.dtype = torch.float32):
        import open_clip

        self.variant = variant
        self.weights = _resolve_weights(weights)
        self.device = torch.device(device)
        pretrained = None if self.weights == RANDOM_WEIGHTS else self.weights
        try:
            model = open_clip.create_model(
                variant,
                pretrained=pretrained,
                force_quick_gelu=True,  # the openai variants use QuickGELU
                cache_dir=os.environ.get("LANGFUSION_CACHE"),
                require_pretrained=pretrained is not None,
            )
        except Exception as exc:
            hint = _DOWNLOAD_HINT.format(variant=variant, tag=DEFAULT_TAG)
            raise EncoderWeightsError(f"could not load {variant} weights {self.weights!r}: {exc}; {hint}") from exc
        if pretrained is None:
            log.warning("using randomly initialized %s encoder; only for tests and plumbing checks", variant)
        model.eval().requires_grad_(False)
        self.model = model.to(self.device, dtype)
        self.tokenizer = open_clip.get_tokenizer(variant)
        self.context_length = self.tokenizer.context_length
        size = model.visual.image_size
        self.image_size = tuple(size) if isinstance(size, (tuple, list)) else (size, size)
        self.embed_dim = model.visual.output_dim
        self.mean = torch.tensor(open_clip.OPENAI_DATASET_MEAN).view(1, 3, 1, 1)
        self.std = torch.tensor(open_clip.OPENAI_DATASET_STD).view(1, 3, 1, 1)
        self._fusion_cache: dict[PromptSet, TransitionPair] = {}
        self._text_cache: dict[str, torch.Tensor] = {}

    @property
    def tag(self) -> str:
        """Variant/weights descriptor recorded in checkpoints."""
        return f"{self.variant}/{os.path.basename(self.weights)}"

    @property
    def dtype(self) -> torch.dtype:
        return self.model.logit_scale.dtype

    def to(self, dtype: torch.dtype) -> ClipSpace:
        self.model = self.model.to(dtype=dtype)
        self._fusion_cache.clear()
        self._text_cache.clear()
        return self

    # -- text side ---------------------------------------------------------

    def _tokenize(self, text: str) -> torch.Tensor:
        if not text or not text.strip():
            raise ValueError("text must be non-empty")
        n = len(self.tokenizer.encode(text)) + 2  # start/end tokens
        if n > self.context_length:
            raise TokenLimitError(f"prompt needs {n} tokens; the encoder limit is {self.context_length}")
        return self.tokenizer([text]).to(self.device)

    @torch.no_grad()
    def encode_text(self, text: str) -> torch.Tensor:
        """Unit-norm embedding of ``text``, shape (D,)."""
        if text not in self._text_cache:
            z = self.model.encode_text(self._tokenize(text))[0]
            self._text_cache[text] = F.normalize(z, dim=-1)
        return self._text_cache[text].clone()

    def build_fusion_model(self, prompts: PromptSet | None = None) -> TransitionPair:
        prompts = prompts or PromptSet()
        if prompts not in self._fusion_cache:
            v_f = self.encode_text(prompts.objective_text)
            v_vs = self.encode_text(prompts.visible_text)
            v_ir = self.encode_text(prompts.infrared_text)
            self._fusion_cache[prompts] = TransitionPair.from_embeddings(v_f, v_vs, v_ir)
        return self._fusion_cache[prompts]

    # -- image side --------------------------------------------------------

    def preprocess(self, img: torch.Tensor) -> torch.Tensor:
        """Gray [0, 1] batch -> normalized 3-channel encoder input."""
        if img.dim() == 2:
            img = img[None, None]
        elif img.dim() == 3:
            img = img[:, None]
        if img.shape[1] != 1:
            raise ValueError(f"expected single-channel images, got {tuple(img.shape)}")
        if not torch.isfinite(img).all():
            raise ValueError("image contains non-finite pixels")
        img = img.to(self.device, self.dtype)
        if tuple(img.shape[-2:]) != self.image_size:
            img = F.interpolate(img, size=self.image_size, mode="bicubic", align_corners=False, antialias=True)
        img = img.expand(-1, 3, -1, -1)
        mean = self.mean.to(img)
        std = self.std.to(img)
        return (img - mean) / std

    def encode_image(self, img: torch.Tensor) -> torch.Tensor:
        """Unit-norm embeddings, shape (B, D) (or (D,) for a single 2-D image).

        Differentiable with respect to ``img``.
        """
        single = img.dim() == 2
        if min(img.shape[-2:]) < 32:
            raise ValueError(f"images must be at least 32x32, got {tuple(img.shape[-2:])}")
        z = F.normalize(self.model.encode_image(self.preprocess(img)), dim=-1)
        return z[0] if single else z

    @torch.no_grad()
    def probe(self, img: torch.Tensor, prompts: list[str]) -> list[tuple[str, float]]:
        """Softmax over logit-scaled cosines between an image and prompts.

        Returns ``(prompt, score)`` sorted by descending score.
        """
        if len(prompts) < 2:
            raise ValueError("probe needs at least two prompts")
        v = self.encode_image(img.reshape(1, 1, *img.shape[-2:]))[0]
        t = torch.stack([self.encode_text(p) for p in prompts])
        logits = self.model.logit_scale.exp().double() * (t.double() @ v.double())
        scores = torch.softmax(logits, dim=0).tolist()
        return sorted(zip(prompts, scores), key=lambda kv: -kv[1])
