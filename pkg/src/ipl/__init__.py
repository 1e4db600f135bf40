"""Image-specific prompt learning for zero-shot generator adaptation.

Two stages: learn per-image prompt vectors with a latent mapper against
contrastive and domain-regularization objectives, then adapt a clone of the
source generator under an adaptive directional loss in a shared embedding
space. All backends (generator, image encoder, text encoder) are pluggable;
the bundled toy backends are tiny, deterministic, and CPU-only so every
number is checkable.
"""
from .core import (
    DTYPE,
    DomainLabel,
    LatentBatch,
    LatentCode,
    PromptMatrix,
    RunConfig,
    load_config,
    save_config,
    seeded_rng,
    stable_seed,
)
from .encoders import (
    ImageEncoder,
    TextEncoder,
    ToyImageEncoder,
    ToyTextEncoder,
    default_templates,
    encode_label_averaged,
    nearest_word,
)
from .errors import (
    ArchiveError,
    ConfigError,
    DegenerateVectorError,
    DimensionMismatchError,
    IplError,
    TrainingAbortError,
    TrainingStallError,
)
from .generators import (
    Generator,
    ToyGenerator,
    clone_generator,
    latent_interpolate,
    load_parameter_set,
    model_interpolate,
    parameter_set,
    sample_latents,
)
from .losses import (
    adaptive_directional_loss,
    contrastive_loss,
    domain_regularization_loss,
    image_direction,
    mapper_loss,
    normalize,
    similarity_matrix,
    text_direction,
)
from .mapper import (
    LatentMapper,
    PromptScheme,
    SharedPromptMatrix,
    adaptive_scheme,
    init_mapper,
    learned_fixed_scheme,
    manual_fixed_scheme,
    random_scheme,
)
from .training import (
    Backends,
    FreezePolicy,
    adapt_generator,
    run_ablation,
    run_pipeline,
    toy_backends,
    train_mapper,
    train_shared_prompts,
)

__version__ = "0.1.0"

__all__ = [
    "DTYPE",
    "DomainLabel",
    "LatentBatch",
    "LatentCode",
    "PromptMatrix",
    "RunConfig",
    "load_config",
    "save_config",
    "seeded_rng",
    "stable_seed",
    "ImageEncoder",
    "TextEncoder",
    "ToyImageEncoder",
    "ToyTextEncoder",
    "default_templates",
    "encode_label_averaged",
    "nearest_word",
    "ArchiveError",
    "ConfigError",
    "DegenerateVectorError",
    "DimensionMismatchError",
    "IplError",
    "TrainingAbortError",
    "TrainingStallError",
    "Generator",
    "ToyGenerator",
    "clone_generator",
    "latent_interpolate",
    "load_parameter_set",
    "model_interpolate",
    "parameter_set",
    "sample_latents",
    "adaptive_directional_loss",
    "contrastive_loss",
    "domain_regularization_loss",
    "image_direction",
    "mapper_loss",
    "normalize",
    "similarity_matrix",
    "text_direction",
    "LatentMapper",
    "PromptScheme",
    "SharedPromptMatrix",
    "adaptive_scheme",
    "init_mapper",
    "learned_fixed_scheme",
    "manual_fixed_scheme",
    "random_scheme",
    "Backends",
    "FreezePolicy",
    "adapt_generator",
    "run_ablation",
    "run_pipeline",
    "toy_backends",
    "train_mapper",
    "train_shared_prompts",
    "__version__",
]
