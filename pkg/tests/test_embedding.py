import os

import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

from langfusion.embedding import (INFRARED_TEXT, OBJECTIVE_TEXT, VISIBLE_TEXT, ClipSpace,
                                  EncoderWeightsError, PromptSet, TokenLimitError,
                                  TransitionPair, weights_available)

from conftest import synthetic_pair, tno_root

# Cosine between the infrared and visible prompt embeddings under the
# seeded random-init encoder of the ``clip_random`` fixture. Regression value.
RANDOM_INIT_PROMPT_COSINE = 0.7073283791542053


def unit(v):
    return float(torch.linalg.vector_norm(v))


def test_prompt_defaults_exact():
    p = PromptSet()
    assert p.objective_text == "a clear image with detailed background and salient objects"
    assert p.infrared_text == "an infrared image"
    assert p.visible_text == "a visible gray image"


@pytest.mark.parametrize("field", ["objective_text", "infrared_text", "visible_text"])
def test_prompt_rejects_empty(field):
    with pytest.raises(ValueError):
        PromptSet(**{field: "  "})


def test_swapped_mode_exchanges_modalities():
    p = PromptSet.for_mode("swapped")
    assert (p.infrared_text, p.visible_text) == (VISIBLE_TEXT, INFRARED_TEXT)
    assert p.objective_text == OBJECTIVE_TEXT


def test_encode_text_deterministic_unit(clip_random):
    a = clip_random.encode_text("an infrared image")
    b = clip_random.encode_text("an infrared image")
    assert torch.equal(a, b)
    assert a.shape == (clip_random.embed_dim,)
    assert abs(unit(a) - 1) < 1e-5
    assert abs(float(a @ b) - 1) < 1e-6


def test_distinct_prompts_not_parallel(clip_random):
    c = float(clip_random.encode_text(INFRARED_TEXT) @ clip_random.encode_text(VISIBLE_TEXT))
    assert -1 < c < 1
    assert c == pytest.approx(RANDOM_INIT_PROMPT_COSINE, abs=1e-4)


def test_token_limit_error_names_limit(clip_random):
    with pytest.raises(TokenLimitError, match="77"):
        clip_random.encode_text("word " * 100)


def test_empty_text_rejected(clip_random):
    with pytest.raises(ValueError):
        clip_random.encode_text("")


def test_build_fusion_model_reconstructs_objective(clip_random):
    tp = clip_random.build_fusion_model(PromptSet())
    v_f = clip_random.encode_text(OBJECTIVE_TEXT)
    assert torch.allclose(tp.delta_vs + clip_random.encode_text(VISIBLE_TEXT), v_f, atol=1e-6)
    assert torch.allclose(tp.delta_ir + clip_random.encode_text(INFRARED_TEXT), v_f, atol=1e-6)


def test_default_transitions_nonzero_and_not_parallel(clip_random):
    tp = clip_random.build_fusion_model()
    assert unit(tp.delta_vs) > 1e-8 and unit(tp.delta_ir) > 1e-8
    cos = float(tp.delta_vs @ tp.delta_ir) / (unit(tp.delta_vs) * unit(tp.delta_ir))
    assert cos < 1 - 1e-4


def test_build_fusion_model_cached(clip_random):
    assert clip_random.build_fusion_model() is clip_random.build_fusion_model()


def test_objective_equal_to_visible_is_degenerate(clip_random):
    with pytest.raises(ValueError, match="delta_vs"):
        clip_random.build_fusion_model(PromptSet(VISIBLE_TEXT, INFRARED_TEXT, VISIBLE_TEXT))


def test_transition_pair_zero_vector_rejected():
    v = torch.ones(4) / 2
    with pytest.raises(ValueError):
        TransitionPair.from_embeddings(v, v, -v)


def test_encode_image_shape_any_size(clip_random):
    for hw in [(32, 32), (64, 100), (224, 224)]:
        z = clip_random.encode_image(torch.rand(*hw))
        assert z.shape == (clip_random.embed_dim,)
        assert abs(unit(z) - 1) < 1e-5


def test_encode_image_deterministic(clip_random):
    img = torch.rand(2, 1, 48, 48)
    a, b = clip_random.encode_image(img), clip_random.encode_image(img)
    assert torch.allclose((a * b).sum(-1), torch.ones(2), atol=1e-6)


def test_encode_image_differentiable(clip_random):
    img = torch.rand(1, 1, 64, 64, requires_grad=True)
    clip_random.encode_image(img).sum().backward()
    assert img.grad is not None and img.grad.abs().sum() > 0


def test_encode_image_rejects_nonfinite(clip_random):
    img = torch.rand(64, 64)
    img[3, 3] = float("nan")
    with pytest.raises(ValueError):
        clip_random.encode_image(img)


def test_encode_image_rejects_tiny(clip_random):
    with pytest.raises(ValueError):
        clip_random.encode_image(torch.rand(16, 64))


def test_probe_identical_prompts_split_evenly(clip_random):
    scores = clip_random.probe(torch.rand(64, 64), ["a photo", "a photo"])
    assert [s for _, s in scores] == pytest.approx([0.5, 0.5], abs=1e-9)


def test_probe_needs_two_prompts(clip_random):
    with pytest.raises(ValueError):
        clip_random.probe(torch.rand(64, 64), [])
    with pytest.raises(ValueError):
        clip_random.probe(torch.rand(64, 64), ["only one"])


PROMPT_POOL = ["an infrared image", "a visible image", "a photo of a dog", "a thermal scan",
               "a street at night", "a gray picture"]


@settings(max_examples=10, deadline=None)
@given(st.lists(st.sampled_from(PROMPT_POOL), min_size=2, max_size=5, unique=True), st.randoms())
def test_probe_sums_to_one_sorted_and_order_invariant(clip_random, prompts, rnd):
    img = torch.from_numpy(synthetic_pair(np.random.default_rng(0), 64, 64)[0])
    a = clip_random.probe(img, prompts)
    assert sum(s for _, s in a) == pytest.approx(1.0, abs=1e-6)
    assert all(a[i][1] >= a[i + 1][1] for i in range(len(a) - 1))
    shuffled = prompts[:]
    rnd.shuffle(shuffled)
    b = clip_random.probe(img, shuffled)
    assert dict(a) == pytest.approx(dict(b), abs=1e-9)


def test_missing_weights_give_load_error_with_hint(tmp_path, monkeypatch):
    monkeypatch.setenv("HF_HUB_OFFLINE", "1")
    missing = tmp_path / "nope.bin"
    with pytest.raises(EncoderWeightsError, match="LANGFUSION_CLIP_WEIGHTS"):
        ClipSpace(weights=str(missing))


def test_random_weights_always_available():
    assert weights_available("random")


# -- assets ----------------------------------------------------------------

@pytest.mark.assets
def test_pretrained_default_transitions_not_parallel():
    if not weights_available():
        pytest.skip("pretrained encoder weights not available")
    clip = ClipSpace()
    tp = clip.build_fusion_model()
    cos = float(tp.delta_vs @ tp.delta_ir) / (unit(tp.delta_vs) * unit(tp.delta_ir))
    assert cos < 1 - 1e-4


@pytest.mark.assets
def test_pretrained_infrared_image_prefers_infrared_prompt():
    root = tno_root()
    if root is None or not weights_available():
        pytest.skip("needs LANGFUSION_TNO_DIR and pretrained encoder weights")
    from langfusion.data import read_gray

    clip = ClipSpace()
    path = sorted((root / "ir").iterdir())[0]
    img = torch.from_numpy(read_gray(path))
    ranked = clip.probe(img, ["an infrared image", "a visible image", "a photo of a dog"])
    assert ranked[0][0] == "an infrared image"
    z = clip.encode_image(img)
    assert float(z @ clip.encode_text("an infrared image")) > float(z @ clip.encode_text("a visible image"))
