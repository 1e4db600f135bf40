"""Mapper network and prompt schemes.

The forward oracle reimplements the four-layer net with numpy loops so a
torch-side regression in layer order, activation, or reshape shows up against
an independent computation.
"""
import numpy as np
import pytest
import torch

from ipl.core import DTYPE, LatentBatch, LatentCode, RunConfig, seeded_rng
from ipl.encoders import ToyTextEncoder
from ipl.errors import DimensionMismatchError
from ipl.mapper import (
    INIT_WEIGHT_SCALE,
    LEAKY_SLOPE,
    MANUAL_PROMPT_TEXT,
    LatentMapper,
    PromptScheme,
    SharedPromptMatrix,
    adaptive_scheme,
    build_prompt_matrix,
    init_mapper,
    learned_fixed_scheme,
    manual_fixed_scheme,
    map_latent,
    map_latent_batch,
    random_mapper,
    random_scheme,
    scheme_prompts,
    scheme_prompts_batch,
    shared_prompt_matrix,
)


def _np_forward(mapper: LatentMapper, w: np.ndarray) -> np.ndarray:
    x = w
    for idx, layer in enumerate(mapper.layers):
        x = x @ layer.weight.detach().numpy().T + layer.bias.detach().numpy()
        if idx < len(mapper.layers) - 1:
            x = np.where(x >= 0, x, LEAKY_SLOPE * x)
    return x.reshape(mapper.m, mapper.k)


def test_forward_matches_numpy_oracle():
    mapper = LatentMapper(latent_dim=3, m=2, k=4)
    rng = seeded_rng(5)
    with torch.no_grad():
        for layer in mapper.layers:
            layer.weight.copy_(torch.randn(layer.weight.shape, generator=rng, dtype=DTYPE))
            layer.bias.copy_(torch.randn(layer.bias.shape, generator=rng, dtype=DTYPE))
    w = torch.randn(3, generator=rng, dtype=DTYPE)
    got = mapper(w).detach().numpy()
    want = _np_forward(mapper, w.numpy())
    # Reduction-order slack between torch and numpy matmuls.
    assert np.allclose(got, want, atol=1e-13, rtol=0)


def test_forward_negative_preactivations_use_slope():
    # One tiny net solved by hand: every weight 1, biases shift the single
    # hidden unit negative so the leaky slope must appear in the output.
    mapper = LatentMapper(latent_dim=1, m=1, k=1, hidden_dim=1)
    with torch.no_grad():
        for layer in mapper.layers:
            layer.weight.fill_(1.0)
            layer.bias.fill_(0.0)
    w = torch.tensor([-1.0], dtype=DTYPE)
    # -1 -> leaky(-1) = -0.2 -> leaky(-0.2) = -0.04 -> leaky(-0.04) = -0.008
    # final linear layer passes it through.
    assert float(mapper(w).detach()) == pytest.approx(-0.008, abs=1e-15)


def test_forward_shapes_and_batching():
    mapper = LatentMapper(latent_dim=3, m=2, k=5)
    w = torch.randn((4, 3), generator=seeded_rng(0), dtype=DTYPE)
    out = mapper(w)
    assert out.shape == (4, 2, 5)
    for i in range(4):
        single = mapper(w[i])
        assert single.shape == (2, 5)
        # Batched and per-row matmuls may split reductions differently.
        assert torch.allclose(out[i], single, atol=1e-13, rtol=0)
    deep = mapper(w.reshape(2, 2, 3))
    assert deep.shape == (2, 2, 2, 5)


def test_forward_rejects_wrong_latent_width():
    mapper = LatentMapper(latent_dim=3, m=2, k=5)
    with pytest.raises(DimensionMismatchError):
        mapper(torch.zeros(4, dtype=DTYPE))


def test_constructor_validation_and_hidden_default():
    with pytest.raises(DimensionMismatchError):
        LatentMapper(latent_dim=0, m=1, k=1)
    with pytest.raises(DimensionMismatchError):
        LatentMapper(latent_dim=1, m=0, k=1)
    assert LatentMapper(latent_dim=6, m=1, k=1).hidden_dim == 24
    assert LatentMapper(latent_dim=6, m=1, k=1, hidden_dim=7).hidden_dim == 7


def test_init_mapper_at_zero_equals_manual_prompt_rows(tiny_cfg):
    enc = ToyTextEncoder(seed=3, k=tiny_cfg.clip_dim)
    mapper = init_mapper(tiny_cfg, enc, seeded_rng(1))
    out = mapper(torch.zeros(tiny_cfg.latent_dim, dtype=DTYPE))
    tokens = enc.embed_tokens(MANUAL_PROMPT_TEXT)
    want = torch.zeros((tiny_cfg.m, tiny_cfg.clip_dim), dtype=DTYPE)
    want[: min(tiny_cfg.m, 4)] = tokens[: min(tiny_cfg.m, 4)]
    # Zero hidden biases and leaky(0) = 0 make this exact, not approximate.
    assert torch.equal(out, want)


def test_init_mapper_pads_with_zero_rows_past_the_prompt():
    cfg = RunConfig(m=6, latent_dim=4, clip_dim=6)
    enc = ToyTextEncoder(seed=3, k=6)
    mapper = init_mapper(cfg, enc, seeded_rng(1))
    out = mapper(torch.zeros(4, dtype=DTYPE))
    tokens = enc.embed_tokens(MANUAL_PROMPT_TEXT)
    assert tokens.shape[0] == 4  # "a photo of a"
    assert torch.equal(out[:4], tokens)
    assert torch.equal(out[4:], torch.zeros((2, 6), dtype=DTYPE))


def test_init_mapper_weight_scale_and_bias_layout(tiny_cfg):
    enc = ToyTextEncoder(seed=3, k=tiny_cfg.clip_dim)
    mapper = init_mapper(tiny_cfg, enc, seeded_rng(1))
    for layer in mapper.layers[:-1]:
        assert torch.equal(layer.bias, torch.zeros_like(layer.bias))
    # Weights replay the seeded stream at the documented scale.
    rng = seeded_rng(1)
    for layer in mapper.layers:
        want = torch.randn(layer.weight.shape, generator=rng, dtype=DTYPE) * INIT_WEIGHT_SCALE
        assert torch.equal(layer.weight, want)


def test_init_mapper_rejects_width_mismatch(tiny_cfg):
    enc = ToyTextEncoder(seed=3, k=tiny_cfg.clip_dim + 1)
    with pytest.raises(DimensionMismatchError):
        init_mapper(tiny_cfg, enc, seeded_rng(1))
    with pytest.raises(DimensionMismatchError):
        random_mapper(tiny_cfg, enc, seeded_rng(1))
    with pytest.raises(DimensionMismatchError):
        shared_prompt_matrix(tiny_cfg, enc)


def test_random_mapper_maps_zero_to_zero(tiny_cfg):
    enc = ToyTextEncoder(seed=3, k=tiny_cfg.clip_dim)
    mapper = random_mapper(tiny_cfg, enc, seeded_rng(9))
    out = mapper(torch.zeros(tiny_cfg.latent_dim, dtype=DTYPE))
    assert torch.equal(out, torch.zeros_like(out))


def test_latent_wrappers_match_raw_forward(tiny_cfg):
    enc = ToyTextEncoder(seed=3, k=tiny_cfg.clip_dim)
    mapper = init_mapper(tiny_cfg, enc, seeded_rng(1))
    w = torch.randn(tiny_cfg.latent_dim, generator=seeded_rng(2), dtype=DTYPE)
    assert torch.equal(map_latent(mapper, LatentCode(w)), mapper(w))
    batch = torch.randn((3, tiny_cfg.latent_dim), generator=seeded_rng(3), dtype=DTYPE)
    assert torch.equal(map_latent_batch(mapper, LatentBatch(batch)), mapper(batch))


def test_build_prompt_matrix_stacks_label_tokens(tiny_cfg, labels):
    enc = ToyTextEncoder(seed=3, k=tiny_cfg.clip_dim)
    block = torch.randn((2, tiny_cfg.clip_dim), generator=seeded_rng(4), dtype=DTYPE)
    mat = build_prompt_matrix(block, labels[1], enc)
    assert torch.equal(mat.prompt_vectors, block)
    assert torch.equal(mat.label_tokens, enc.embed_tokens(labels[1].text))
    with pytest.raises(DimensionMismatchError):
        build_prompt_matrix(block[:, :-1], labels[1], enc)
    with pytest.raises(DimensionMismatchError):
        build_prompt_matrix(block.unsqueeze(0), labels[1], enc)


def test_shared_prompt_matrix_starts_at_manual_rows(tiny_cfg):
    enc = ToyTextEncoder(seed=3, k=tiny_cfg.clip_dim)
    shared = shared_prompt_matrix(tiny_cfg, enc)
    mapper = init_mapper(tiny_cfg, enc, seeded_rng(1))
    zero = torch.zeros((1, tiny_cfg.latent_dim), dtype=DTYPE)
    assert torch.equal(shared(zero)[0], mapper(zero)[0])
    with pytest.raises(DimensionMismatchError):
        SharedPromptMatrix(torch.zeros(3, dtype=DTYPE))


def test_scheme_payload_validation(tiny_cfg):
    enc = ToyTextEncoder(seed=3, k=tiny_cfg.clip_dim)
    with pytest.raises(ValueError, match="manual_fixed"):
        PromptScheme(kind="manual_fixed")
    with pytest.raises(ValueError, match="learned_fixed"):
        PromptScheme(kind="learned_fixed")
    with pytest.raises(ValueError, match="adaptive"):
        PromptScheme(kind="adaptive")
    with pytest.raises(ValueError, match="random"):
        PromptScheme(kind="random")
    with pytest.raises(ValueError, match="unknown prompt scheme"):
        PromptScheme(kind="manual", token_block=enc.embed_tokens("a"))


def test_fixed_schemes_give_bitwise_identical_rows(tiny_cfg):
    enc = ToyTextEncoder(seed=3, k=tiny_cfg.clip_dim)
    w = torch.randn((5, tiny_cfg.latent_dim), generator=seeded_rng(6), dtype=DTYPE)
    for scheme in (
        manual_fixed_scheme(enc),
        learned_fixed_scheme(shared_prompt_matrix(tiny_cfg, enc)),
    ):
        blocks = scheme_prompts_batch(scheme, w)
        assert blocks.shape[0] == 5
        for i in range(1, 5):
            assert torch.equal(blocks[i], blocks[0])


def test_adaptive_scheme_varies_with_latent(tiny_cfg):
    enc = ToyTextEncoder(seed=3, k=tiny_cfg.clip_dim)
    scheme = adaptive_scheme(init_mapper(tiny_cfg, enc, seeded_rng(1)))
    w = torch.randn((3, tiny_cfg.latent_dim), generator=seeded_rng(7), dtype=DTYPE)
    blocks = scheme_prompts_batch(scheme, w)
    assert not torch.equal(blocks[0], blocks[1])
    single = scheme_prompts(scheme, LatentCode(w[0]))
    assert torch.allclose(single, blocks[0], atol=1e-13, rtol=0)


def test_random_scheme_is_seed_deterministic(tiny_cfg):
    enc = ToyTextEncoder(seed=3, k=tiny_cfg.clip_dim)
    w = torch.randn((2, tiny_cfg.latent_dim), generator=seeded_rng(8), dtype=DTYPE)
    a = scheme_prompts_batch(random_scheme(tiny_cfg, enc, seeded_rng(11)), w)
    b = scheme_prompts_batch(random_scheme(tiny_cfg, enc, seeded_rng(11)), w)
    assert torch.equal(a, b)
