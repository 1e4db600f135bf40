"""Toy generator, parameter sets, and both interpolation modes."""
import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from ipl.core import DTYPE, LatentCode, seeded_rng
from ipl.errors import DimensionMismatchError
from ipl.generators import (
    ToyGenerator,
    clone_generator,
    latent_interpolate,
    load_parameter_set,
    model_interpolate,
    parameter_set,
    parse_toy_architecture,
    sample_latents,
    toy_generator,
)


def _gen(seed=0, d=3, o=5, activation="tanh"):
    return toy_generator(seed, d, o, activation=activation)


def test_same_seed_reproduces_parameters_and_outputs():
    g1, g2 = _gen(7), _gen(7)
    for (n1, p1), (n2, p2) in zip(g1.named_parameters(), g2.named_parameters()):
        assert n1 == n2
        assert torch.equal(p1, p2)
    w = torch.randn(3, generator=seeded_rng(1), dtype=DTYPE)
    assert torch.equal(g1.synthesize(w), g2.synthesize(w))
    assert not torch.equal(
        _gen(7).synthesize(w).detach(), _gen(8).synthesize(w).detach()
    )


def test_zero_latent_maps_to_zero_image_at_init():
    g = _gen()
    out = g.synthesize(torch.zeros(3, dtype=DTYPE))
    assert torch.equal(out, torch.zeros_like(out))


def test_forward_matches_numpy_oracle():
    g = _gen(seed=2)
    w = torch.randn(3, generator=seeded_rng(3), dtype=DTYPE)
    w1 = g.fc1.weight.detach().numpy()
    b1 = g.fc1.bias.detach().numpy()
    w2 = g.fc2.weight.detach().numpy()
    b2 = g.fc2.bias.detach().numpy()
    want = np.tanh(w.numpy() @ w1.T + b1) @ w2.T + b2
    got = g.synthesize(w).detach().numpy()
    assert np.allclose(got, want, atol=1e-13, rtol=0)


def test_identity_variant_is_affine():
    g = _gen(seed=2, activation="identity")
    with torch.no_grad():
        g.fc1.bias.copy_(torch.randn(g.fc1.bias.shape, generator=seeded_rng(4), dtype=DTYPE))
        g.fc2.bias.copy_(torch.randn(g.fc2.bias.shape, generator=seeded_rng(5), dtype=DTYPE))
    wa = torch.randn(3, generator=seeded_rng(6), dtype=DTYPE)
    wb = torch.randn(3, generator=seeded_rng(7), dtype=DTYPE)
    mid = g.synthesize(0.5 * wa + 0.5 * wb).detach()
    avg = 0.5 * (g.synthesize(wa).detach() + g.synthesize(wb).detach())
    assert torch.allclose(mid, avg, atol=1e-12, rtol=0)


def test_constructor_and_forward_validation():
    with pytest.raises(DimensionMismatchError):
        ToyGenerator(0, latent_dim=0, output_dim=1)
    with pytest.raises(ValueError, match="activation"):
        ToyGenerator(0, latent_dim=1, output_dim=1, activation="relu")
    with pytest.raises(DimensionMismatchError):
        _gen().synthesize(torch.zeros(4, dtype=DTYPE))


def test_batched_synthesis_matches_single():
    g = _gen(seed=9)
    w = torch.randn((4, 3), generator=seeded_rng(10), dtype=DTYPE)
    out = g.synthesize(w)
    assert out.shape == (4, 5)
    for i in range(4):
        assert torch.allclose(out[i], g.synthesize(w[i]), atol=1e-13, rtol=0)


def test_architecture_string_round_trip():
    g = ToyGenerator(0, latent_dim=8, output_dim=64, hidden_dim=16, activation="tanh")
    assert g.architecture == "toy/d8-h16-o64-tanh"
    assert parse_toy_architecture(g.architecture) == {
        "latent_dim": 8,
        "hidden_dim": 16,
        "output_dim": 64,
        "activation": "tanh",
    }
    for bad in ("mlp4/d8-h16-m4-k16", "toy/garbage", "toy/d8-h16", ""):
        with pytest.raises(ValueError, match="not a toy generator"):
            parse_toy_architecture(bad)


@settings(max_examples=25, deadline=None)
@given(
    d=st.integers(1, 32),
    o=st.integers(1, 128),
    act=st.sampled_from(["tanh", "identity"]),
)
def test_architecture_round_trip_property(d, o, act):
    g = ToyGenerator(0, latent_dim=d, output_dim=o, activation=act)
    parsed = parse_toy_architecture(g.architecture)
    rebuilt = ToyGenerator(
        0,
        latent_dim=parsed["latent_dim"],
        output_dim=parsed["output_dim"],
        hidden_dim=parsed["hidden_dim"],
        activation=parsed["activation"],
    )
    assert rebuilt.architecture == g.architecture


def test_sample_latents_shape_and_determinism():
    g = _gen()
    b1 = sample_latents(g, 4, seeded_rng(11))
    b2 = sample_latents(g, 4, seeded_rng(11))
    assert b1.tensor.shape == (4, 3)
    assert torch.equal(b1.tensor, b2.tensor)
    with pytest.raises(ValueError):
        sample_latents(g, 0, seeded_rng(11))


def test_clone_is_bitwise_equal_then_independent():
    g = _gen(seed=12)
    c = clone_generator(g)
    w = torch.randn(3, generator=seeded_rng(13), dtype=DTYPE)
    assert torch.equal(g.synthesize(w), c.synthesize(w))
    with torch.no_grad():
        c.fc1.weight.add_(1.0)
    assert not torch.equal(g.synthesize(w).detach(), c.synthesize(w).detach())
    assert torch.equal(g.synthesize(w), _gen(seed=12).synthesize(w))


def test_parameter_set_round_trip_is_bitwise():
    g = _gen(seed=14)
    params = parameter_set(g)
    other = _gen(seed=15)
    load_parameter_set(other, params)
    w = torch.randn(3, generator=seeded_rng(16), dtype=DTYPE)
    assert torch.equal(g.synthesize(w), other.synthesize(w))
    # The snapshot is detached: training the source must not mutate it.
    with torch.no_grad():
        g.fc1.weight.mul_(2.0)
    assert torch.equal(params["fc1.weight"], parameter_set(other)["fc1.weight"])


def test_incompatible_parameter_sets_are_rejected():
    g = _gen()
    params = parameter_set(g)
    missing = {k: v for k, v in params.items() if k != "fc2.bias"}
    with pytest.raises(DimensionMismatchError, match="fc2.bias"):
        load_parameter_set(g, missing)
    wrong_shape = dict(params)
    wrong_shape["fc1.weight"] = torch.zeros((1, 1), dtype=DTYPE)
    with pytest.raises(DimensionMismatchError, match="fc1.weight"):
        model_interpolate(params, wrong_shape, 0.5)
    other = parameter_set(_gen(d=4))
    with pytest.raises(DimensionMismatchError):
        model_interpolate(params, other, 0.5)


def test_model_interpolate_endpoints_are_exact_copies():
    p1 = parameter_set(_gen(seed=17))
    p2 = parameter_set(_gen(seed=18))
    at0 = model_interpolate(p1, p2, 0.0)
    at1 = model_interpolate(p1, p2, 1.0)
    for name in p1:
        assert torch.equal(at0[name], p1[name])
        assert torch.equal(at1[name], p2[name])
    # Copies, not views.
    at0["fc1.weight"].add_(1.0)
    assert not torch.equal(at0["fc1.weight"], p1["fc1.weight"])


def test_model_interpolate_matches_numpy_oracle():
    p1 = parameter_set(_gen(seed=19))
    p2 = parameter_set(_gen(seed=20))
    alpha = 0.3
    mixed = model_interpolate(p1, p2, alpha)
    for name in p1:
        want = (1.0 - alpha) * p1[name].numpy() + alpha * p2[name].numpy()
        assert np.allclose(mixed[name].numpy(), want, atol=0, rtol=0)


def test_model_interpolate_dyadic_symmetry():
    # 0.25 and 0.75 are exact binary fractions, so swapping the endpoint
    # order reproduces the mix bitwise.
    p1 = parameter_set(_gen(seed=21))
    p2 = parameter_set(_gen(seed=22))
    a = model_interpolate(p1, p2, 0.25)
    b = model_interpolate(p2, p1, 0.75)
    for name in p1:
        assert torch.equal(a[name], b[name])


def test_model_interpolate_rejects_out_of_range_alpha():
    p = parameter_set(_gen())
    for alpha in (-0.1, 1.1):
        with pytest.raises(ValueError, match="alpha"):
            model_interpolate(p, p, alpha)


def test_latent_interpolate_endpoints_bitwise():
    g = _gen(seed=23)
    w1 = LatentCode(torch.randn(3, generator=seeded_rng(24), dtype=DTYPE))
    w2 = LatentCode(torch.randn(3, generator=seeded_rng(25), dtype=DTYPE))
    frames = latent_interpolate(g, w1, w2, [0.0, 0.5, 1.0])
    assert torch.equal(frames[0], g.synthesize(w1.values))
    assert torch.equal(frames[2], g.synthesize(w2.values))


def test_latent_interpolate_linear_midpoint_is_image_average():
    g = _gen(seed=26, activation="identity")
    w1 = LatentCode(torch.randn(3, generator=seeded_rng(27), dtype=DTYPE))
    w2 = LatentCode(torch.randn(3, generator=seeded_rng(28), dtype=DTYPE))
    frames = latent_interpolate(g, w1, w2, [0.0, 0.5, 1.0])
    avg = 0.5 * (frames[0].detach() + frames[2].detach())
    assert torch.allclose(frames[1].detach(), avg, atol=1e-12, rtol=0)


def test_latent_interpolate_validation():
    g = _gen()
    w = LatentCode(torch.zeros(3, dtype=DTYPE))
    short = LatentCode(torch.zeros(2, dtype=DTYPE))
    with pytest.raises(DimensionMismatchError):
        latent_interpolate(g, w, short, [0.0])
    with pytest.raises(ValueError, match="alpha"):
        latent_interpolate(g, w, w, [1.5])
