import pytest
import torch

from ipl.core import DomainLabel, RunConfig

# Unit tests run on a deliberately tiny geometry so brute-force oracles stay
# readable; acceptance tests size their own configs.
TINY = dict(latent_dim=4, clip_dim=6, image_dim=16, m=2, n_stage1=3, n_stage2=2,
            iters_stage1=4, iters_stage2=4)


@pytest.fixture
def tiny_cfg() -> RunConfig:
    return RunConfig(seed=7, **TINY)


@pytest.fixture
def labels() -> tuple[DomainLabel, DomainLabel]:
    return (DomainLabel("Photo", "source"), DomainLabel("Disney", "target"))


@pytest.fixture(autouse=True)
def _default_dtype_guard():
    # Tests must not leak a changed global dtype into each other.
    before = torch.get_default_dtype()
    yield
    torch.set_default_dtype(before)
