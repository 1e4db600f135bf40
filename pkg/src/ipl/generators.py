"""Generator backends: a protocol, the deterministic toy decoder, sampling,
cloning, and the two interpolation modes.

The toy generator is a two-layer affine decoder with a tanh between the
layers (or no activation in its "identity" variant, which is exactly linear
and useful as an oracle). All of its parameters are trainable. External
StyleGAN-like or diffusion backends plug in through the same protocol; they
must pass the clone, endpoint, and determinism tests the toy backend passes.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass
from typing import Protocol, Sequence, runtime_checkable

import torch
from torch import nn

from .core import DTYPE, LatentBatch, LatentCode, seeded_rng
from .errors import DimensionMismatchError

#: A generator's trainable state as an ordered name -> tensor mapping.
ParameterSet = dict[str, torch.Tensor]


@runtime_checkable
class Generator(Protocol):
    latent_dim: int
    output_shape: tuple[int, ...]
    architecture: str

    def synthesize(self, w: torch.Tensor) -> torch.Tensor: ...


class ToyGenerator(nn.Module):
    """Seeded two-layer decoder: w -> fc2(act(fc1(w))).

    Weights are fan-in scaled draws from the seed, biases start at zero, so
    the zero latent maps to the zero image at init.
    """

    def __init__(
        self,
        seed: int,
        latent_dim: int,
        output_dim: int,
        hidden_dim: int | None = None,
        activation: str = "tanh",
    ):
        super().__init__()
        if latent_dim < 1 or output_dim < 1:
            raise DimensionMismatchError("latent_dim and output_dim must be >= 1")
        if activation not in ("tanh", "identity"):
            raise ValueError(f"activation must be tanh|identity, got {activation!r}")
        self.seed = seed
        self.latent_dim = latent_dim
        self.output_shape = (output_dim,)
        self.hidden_dim = hidden_dim if hidden_dim is not None else 2 * latent_dim
        self.activation = activation
        self.fc1 = nn.Linear(latent_dim, self.hidden_dim, dtype=DTYPE)
        self.fc2 = nn.Linear(self.hidden_dim, output_dim, dtype=DTYPE)
        rng = seeded_rng(seed)
        with torch.no_grad():
            for layer in (self.fc1, self.fc2):
                fan_in = layer.weight.shape[1]
                layer.weight.copy_(
                    torch.randn(layer.weight.shape, generator=rng, dtype=DTYPE)
                    / fan_in ** 0.5
                )
                layer.bias.zero_()

    @property
    def architecture(self) -> str:
        return (
            f"toy/d{self.latent_dim}-h{self.hidden_dim}-o{self.output_shape[0]}"
            f"-{self.activation}"
        )

    def forward(self, w: torch.Tensor) -> torch.Tensor:
        if w.shape[-1] != self.latent_dim:
            raise DimensionMismatchError(
                f"latent width {w.shape[-1]} does not match generator input {self.latent_dim}"
            )
        x = self.fc1(w)
        if self.activation == "tanh":
            x = torch.tanh(x)
        return self.fc2(x)

    def synthesize(self, w: torch.Tensor) -> torch.Tensor:
        return self.forward(w)


def toy_generator(
    seed: int, latent_dim: int, output_dim: int, activation: str = "tanh"
) -> ToyGenerator:
    return ToyGenerator(seed, latent_dim, output_dim, activation=activation)


def parse_toy_architecture(arch: str) -> dict:
    """Invert ToyGenerator.architecture strings like toy/d8-h16-o64-tanh."""
    try:
        kind, rest = arch.split("/", 1)
        if kind != "toy":
            raise ValueError
        d, h, o, act = rest.split("-", 3)
        return {
            "latent_dim": int(d[1:]),
            "hidden_dim": int(h[1:]),
            "output_dim": int(o[1:]),
            "activation": act,
        }
    except (ValueError, IndexError):
        raise ValueError(f"not a toy generator architecture: {arch!r}") from None


def sample_latents(gen: Generator, n: int, rng: torch.Generator) -> LatentBatch:
    """Draw n standard-normal latent codes for the generator's input space."""
    if n < 1:
        raise ValueError(f"need n >= 1 latents, got {n}")
    return LatentBatch(torch.randn((n, gen.latent_dim), generator=rng, dtype=DTYPE))


def clone_generator(gen):
    """Deep copy with independent parameters; the clone synthesizes
    bit-identically until one side is perturbed."""
    return copy.deepcopy(gen)


def parameter_set(module: nn.Module) -> ParameterSet:
    """Detached copies of the module's named parameters."""
    return {name: p.detach().clone() for name, p in module.named_parameters()}


def load_parameter_set(module: nn.Module, params: ParameterSet) -> None:
    current = dict(module.named_parameters())
    _check_compatible(current, params)
    with torch.no_grad():
        for name, tensor in params.items():
            current[name].copy_(tensor)


def _check_compatible(p1: ParameterSet, p2: ParameterSet) -> None:
    only_1 = sorted(set(p1) - set(p2))
    only_2 = sorted(set(p2) - set(p1))
    if only_1 or only_2:
        raise DimensionMismatchError(
            f"parameter sets do not match; missing from second: {only_1},"
            f" missing from first: {only_2}"
        )
    shape_bad = sorted(
        name for name in p1 if tuple(p1[name].shape) != tuple(p2[name].shape)
    )
    if shape_bad:
        raise DimensionMismatchError(
            f"parameter shapes differ for: {shape_bad}"
        )


def model_interpolate(p1: ParameterSet, p2: ParameterSet, alpha: float) -> ParameterSet:
    """(1 - alpha) * p1 + alpha * p2, element-wise over matching names.

    Endpoints are returned as exact copies so alpha=0 reproduces p1 bitwise.
    """
    if not (0.0 <= alpha <= 1.0):
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    _check_compatible(p1, p2)
    if alpha == 0.0:
        return {name: t.clone() for name, t in p1.items()}
    if alpha == 1.0:
        return {name: t.clone() for name, t in p2.items()}
    return {name: (1.0 - alpha) * p1[name] + alpha * p2[name] for name in p1}


def latent_interpolate(
    gen: Generator, w1: LatentCode, w2: LatentCode, alphas: Sequence[float]
) -> list[torch.Tensor]:
    """Images along the latent segment (1 - a) w1 + a w2.

    Endpoint alphas synthesize from the original codes, bit-matching direct
    synthesis at w1 and w2.
    """
    if w1.dim != gen.latent_dim or w2.dim != gen.latent_dim:
        raise DimensionMismatchError(
            f"latent codes must have width {gen.latent_dim}, got {w1.dim} and {w2.dim}"
        )
    images = []
    for a in alphas:
        a = float(a)
        if not (0.0 <= a <= 1.0):
            raise ValueError(f"alpha must be in [0, 1], got {a}")
        if a == 0.0:
            w = w1.values
        elif a == 1.0:
            w = w2.values
        else:
            w = (1.0 - a) * w1.values + a * w2.values
        images.append(gen.synthesize(w))
    return images
