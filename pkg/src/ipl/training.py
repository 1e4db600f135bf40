"""Two-stage training: prompt learning, then generator adaptation.

Stage 1 trains a prompt producer (the latent mapper, or a shared block for
the learned_fixed scheme) against a frozen source generator and frozen
encoders. Stage 2 clones the source generator, nudges the clone by a small
seeded jitter so image directions are nonzero from the first step, and
optimizes the adaptive directional objective while tracking an EMA copy of
the weights; the EMA copy is what callers get back.

Determinism: a run is a pure function of (config, seed). Batches are drawn
from explicit generator handles, ablation cells derive disjoint sub-seeds
from the config seed, and nothing reads the wall clock.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import torch

from .core import DTYPE, DomainLabel, RunConfig, seeded_rng, stable_seed
from .encoders import (
    ToyImageEncoder,
    ToyTextEncoder,
    default_templates,
    encode_label_averaged,
)
from .errors import DegenerateVectorError, TrainingAbortError, TrainingStallError
from .generators import (
    ParameterSet,
    ToyGenerator,
    clone_generator,
    load_parameter_set,
    parameter_set,
)
from .losses import (
    adaptive_directional_loss,
    contrastive_loss,
    domain_regularization_from_embeddings,
    image_direction,
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
    scheme_prompts_batch,
    shared_prompt_matrix,
)
from .metrics import embedding_diversity

CHECKPOINT_INTERVAL = 100
STALL_LIMIT = 50

# Sub-seed tags, shared with the CLI so separate invocations reproduce the
# exact streams a single-process pipeline uses.
TAG_STAGE1 = "stage1"
TAG_STAGE2 = "stage2"
TAG_PROBE = "probe"
TAG_EVAL = "eval"

CheckpointHook = Callable[[int, ParameterSet], None]


@dataclass
class Backends:
    """A source generator plus the two frozen encoders."""

    generator: ToyGenerator
    image_encoder: ToyImageEncoder
    text_encoder: ToyTextEncoder


def toy_backends(cfg: RunConfig) -> Backends:
    """Deterministic toy backend trio derived from the config seed."""
    return Backends(
        generator=ToyGenerator(
            stable_seed(cfg.seed, "toy-generator"), cfg.latent_dim, cfg.image_dim
        ),
        image_encoder=ToyImageEncoder(
            stable_seed(cfg.seed, "toy-image-encoder"), cfg.image_dim, cfg.clip_dim
        ),
        text_encoder=ToyTextEncoder(
            stable_seed(cfg.seed, "toy-text-encoder"), cfg.clip_dim
        ),
    )


def _label_pair(labels: Sequence[DomainLabel]) -> tuple[DomainLabel, DomainLabel]:
    if len(labels) != 2:
        raise ValueError(f"labels must be a (source, target) pair, got {len(labels)}")
    src, tgt = labels
    if src.role != "source" or tgt.role != "target":
        raise ValueError("labels must be ordered (source, target) with matching roles")
    return src, tgt


def batch_spread(x: torch.Tensor) -> float:
    """RMS deviation from the batch mean over all coordinates.

    Bitwise-identical rows short-circuit to exactly 0.0, so fixed prompt
    schemes report a spread of zero with no float roundoff in the way.
    """
    if x.shape[0] < 1:
        raise ValueError("need at least one row")
    if bool((x == x[0:1]).all()):
        return 0.0
    centered = x - x.mean(dim=0, keepdim=True)
    return float(centered.pow(2).mean().sqrt())


# --------------------------------------------------------------------------
# EMA and freeze policies
# --------------------------------------------------------------------------


@dataclass
class EmaTracker:
    """Exponential moving average over a parameter set."""

    shadow: ParameterSet
    decay: float

    def __post_init__(self):
        if not (0.0 <= self.decay < 1.0):
            raise ValueError(f"decay must be in [0, 1), got {self.decay}")


def ema_update(tracker: EmaTracker, current: ParameterSet) -> ParameterSet:
    """shadow <- decay * shadow + (1 - decay) * current, name by name."""
    if set(tracker.shadow) != set(current):
        raise ValueError(
            f"parameter names changed: {sorted(set(tracker.shadow) ^ set(current))}"
        )
    for name, tensor in current.items():
        old = tracker.shadow[name]
        if old.shape != tensor.shape:
            raise ValueError(f"shape of {name!r} changed: {tuple(old.shape)} -> {tuple(tensor.shape)}")
        tracker.shadow[name] = tracker.decay * old + (1.0 - tracker.decay) * tensor
    return tracker.shadow


@dataclass(frozen=True)
class FreezePolicy:
    """Which generator parameters stage 2 may move.

    train_all       every parameter (toy default)
    fixed_subset    only the named tensors
    nada_adaptive   per iteration, the top_k tensors by gradient L2 norm
    """

    kind: str = "train_all"
    names: tuple[str, ...] = ()
    top_k: int = 2

    def __post_init__(self):
        if self.kind not in ("train_all", "fixed_subset", "nada_adaptive"):
            raise ValueError(f"unknown freeze policy {self.kind!r}")
        if self.kind == "nada_adaptive" and self.top_k < 1:
            raise ValueError("nada_adaptive needs top_k >= 1")


def _validate_freeze(policy: FreezePolicy, module: torch.nn.Module) -> None:
    if policy.kind == "fixed_subset":
        known = {name for name, _ in module.named_parameters()}
        unknown = sorted(set(policy.names) - known)
        if unknown:
            raise ValueError(f"freeze subset names not in the generator: {unknown}")


def _apply_freeze(policy: FreezePolicy, module: torch.nn.Module) -> None:
    # Runs after backward, before the optimizer step. Dropping a gradient to
    # None keeps the optimizer from touching that tensor or its moments.
    if policy.kind == "train_all":
        return
    named = dict(module.named_parameters())
    if policy.kind == "fixed_subset":
        keep = set(policy.names)
    else:
        with_grad = [n for n, p in named.items() if p.grad is not None]
        ranked = sorted(
            with_grad,
            key=lambda n: (-float(torch.linalg.vector_norm(named[n].grad)), n),
        )
        keep = set(ranked[: policy.top_k])
    for name, p in named.items():
        if name not in keep:
            p.grad = None


# --------------------------------------------------------------------------
# Stage 1
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Stage1TraceRow:
    iteration: int
    l_contr: float
    l_domain: float
    l_total: float


@dataclass(frozen=True)
class Stage2TraceRow:
    iteration: int
    l_adapt: float
    l_adapt_ema: float
    delta_t_std: float
    skipped_pairs: int


def _expand_tokens(tokens: torch.Tensor, n: int) -> torch.Tensor:
    return tokens.unsqueeze(0).expand(n, -1, -1)


def _train_stage1(
    model: torch.nn.Module,
    cfg: RunConfig,
    backends: Backends,
    labels: Sequence[DomainLabel],
    rng: torch.Generator,
    checkpoint_hook: CheckpointHook | None,
    templates: Sequence[str] | None,
) -> list[Stage1TraceRow]:
    src, tgt = _label_pair(labels)
    text_enc = backends.text_encoder
    with torch.no_grad():
        label_emb = encode_label_averaged(
            text_enc, tgt, default_templates() if templates is None else templates
        )
    src_tokens = text_enc.embed_tokens(src.text)
    tgt_tokens = text_enc.embed_tokens(tgt.text)
    opt = torch.optim.Adam(
        model.parameters(),
        lr=cfg.lr_mapper,
        betas=(cfg.adam_beta1, cfg.adam_beta2),
        eps=cfg.adam_eps,
    )
    trace: list[Stage1TraceRow] = []
    for it in range(1, cfg.iters_stage1 + 1):
        w = torch.randn((cfg.n_stage1, cfg.latent_dim), generator=rng, dtype=DTYPE)
        with torch.no_grad():
            images = backends.generator.synthesize(w)
            img_embs = backends.image_encoder.encode(images)
        prompts = model(w)
        n = w.shape[0]
        src_rows = torch.cat([prompts, _expand_tokens(src_tokens, n)], dim=1)
        tgt_rows = torch.cat([prompts, _expand_tokens(tgt_tokens, n)], dim=1)
        try:
            src_m_embs = text_enc.encode_rows(src_rows)
            tgt_m_embs = text_enc.encode_rows(tgt_rows)
            sim = similarity_matrix(img_embs, src_m_embs)
            l_contr = contrastive_loss(sim)
            l_domain = domain_regularization_from_embeddings(tgt_m_embs, label_emb)
        except DegenerateVectorError as e:
            raise TrainingAbortError(it, f"degenerate embeddings: {e}") from e
        # At lambda 0 the domain term is still traced but contributes an
        # exactly-zero gradient.
        loss = l_contr + cfg.lambda_ * l_domain
        opt.zero_grad()
        loss.backward()
        opt.step()
        trace.append(
            Stage1TraceRow(
                it, float(l_contr.detach()), float(l_domain.detach()), float(loss.detach())
            )
        )
        if checkpoint_hook is not None and (
            it % CHECKPOINT_INTERVAL == 0 or it == cfg.iters_stage1
        ):
            checkpoint_hook(it, parameter_set(model))
    return trace


def train_mapper(
    cfg: RunConfig,
    backends: Backends,
    labels: Sequence[DomainLabel],
    rng: torch.Generator,
    checkpoint_hook: CheckpointHook | None = None,
    templates: Sequence[str] | None = None,
) -> tuple[LatentMapper, list[Stage1TraceRow]]:
    """Stage 1 over the latent mapper. The source generator and both
    encoders are left bit-identical."""
    mapper = init_mapper(cfg, backends.text_encoder, rng)
    trace = _train_stage1(mapper, cfg, backends, labels, rng, checkpoint_hook, templates)
    return mapper, trace


def train_shared_prompts(
    cfg: RunConfig,
    backends: Backends,
    labels: Sequence[DomainLabel],
    rng: torch.Generator,
    checkpoint_hook: CheckpointHook | None = None,
    templates: Sequence[str] | None = None,
) -> tuple[SharedPromptMatrix, list[Stage1TraceRow]]:
    """Stage 1 with one shared (m, k) block instead of a mapper; this is the
    learned_fixed scheme's training path."""
    shared = shared_prompt_matrix(cfg, backends.text_encoder)
    trace = _train_stage1(shared, cfg, backends, labels, rng, checkpoint_hook, templates)
    return shared, trace


# --------------------------------------------------------------------------
# Stage 2
# --------------------------------------------------------------------------


@dataclass
class AdaptResult:
    generator: torch.nn.Module
    trace: list[Stage2TraceRow]
    raw_parameters: ParameterSet
    ema_parameters: ParameterSet


def adapt_generator(
    cfg: RunConfig,
    backends: Backends,
    prompts: PromptScheme | LatentMapper,
    labels: Sequence[DomainLabel],
    rng: torch.Generator,
    freeze: FreezePolicy | None = None,
    checkpoint_hook: CheckpointHook | None = None,
) -> AdaptResult:
    """Stage 2: adapt a clone of the source generator; returns the EMA copy.

    The prompt producer is frozen here, whatever the scheme. Checkpoints are
    EMA snapshots, matching the returned artifact.
    """
    scheme = prompts if isinstance(prompts, PromptScheme) else adaptive_scheme(prompts)
    policy = freeze if freeze is not None else FreezePolicy()
    src, tgt = _label_pair(labels)
    text_enc = backends.text_encoder
    src_tokens = text_enc.embed_tokens(src.text)
    tgt_tokens = text_enc.embed_tokens(tgt.text)

    g_t = clone_generator(backends.generator)
    if cfg.clone_jitter > 0:
        with torch.no_grad():
            for p in g_t.parameters():
                p.add_(cfg.clone_jitter * torch.randn(p.shape, generator=rng, dtype=DTYPE))
    _validate_freeze(policy, g_t)
    ema = EmaTracker(shadow=parameter_set(g_t), decay=cfg.ema_decay)
    g_eval = clone_generator(g_t)
    opt = torch.optim.Adam(
        g_t.parameters(),
        lr=cfg.lr_generator,
        betas=(cfg.adam_beta1, cfg.adam_beta2),
        eps=cfg.adam_eps,
    )
    trace: list[Stage2TraceRow] = []
    stall = 0
    for it in range(1, cfg.iters_stage2 + 1):
        w = torch.randn((cfg.n_stage2, cfg.latent_dim), generator=rng, dtype=DTYPE)
        n = w.shape[0]
        with torch.no_grad():
            src_imgs = backends.generator.synthesize(w)
            src_img_embs = backends.image_encoder.encode(src_imgs)
            blocks = scheme_prompts_batch(scheme, w)
            src_rows = torch.cat([blocks, _expand_tokens(src_tokens, n)], dim=1)
            tgt_rows = torch.cat([blocks, _expand_tokens(tgt_tokens, n)], dim=1)
            try:
                delta_t = text_direction(
                    text_enc.encode_rows(src_rows), text_enc.encode_rows(tgt_rows)
                )
            except DegenerateVectorError as e:
                raise TrainingAbortError(it, f"degenerate text embeddings: {e}") from e
        tgt_imgs = g_t.synthesize(w)
        tgt_img_embs = backends.image_encoder.encode(tgt_imgs)
        try:
            delta_i = image_direction(src_img_embs, tgt_img_embs)
            loss, skipped = adaptive_directional_loss(delta_i, delta_t)
        except DegenerateVectorError as e:
            raise TrainingAbortError(it, f"degenerate image embeddings: {e}") from e
        stall = stall + 1 if skipped == n else 0
        if stall > STALL_LIMIT:
            raise TrainingStallError(
                it, f"all image directions degenerate for {stall} consecutive iterations"
            )
        opt.zero_grad()
        if loss.requires_grad:
            loss.backward()
            _apply_freeze(policy, g_t)
            opt.step()
        ema_update(ema, parameter_set(g_t))
        with torch.no_grad():
            load_parameter_set(g_eval, ema.shadow)
            ema_imgs = g_eval.synthesize(w)
            ema_img_embs = backends.image_encoder.encode(ema_imgs)
            try:
                ema_delta_i = image_direction(src_img_embs, ema_img_embs)
                l_adapt_ema = float(adaptive_directional_loss(ema_delta_i, delta_t).loss)
            except DegenerateVectorError as e:
                raise TrainingAbortError(it, f"degenerate EMA embeddings: {e}") from e
        trace.append(
            Stage2TraceRow(
                it, float(loss.detach()), l_adapt_ema, batch_spread(delta_t), skipped
            )
        )
        if checkpoint_hook is not None and (
            it % CHECKPOINT_INTERVAL == 0 or it == cfg.iters_stage2
        ):
            checkpoint_hook(it, {k: v.clone() for k, v in ema.shadow.items()})
    final = clone_generator(g_t)
    load_parameter_set(final, ema.shadow)
    return AdaptResult(
        generator=final,
        trace=trace,
        raw_parameters=parameter_set(g_t),
        ema_parameters={k: v.clone() for k, v in ema.shadow.items()},
    )


# --------------------------------------------------------------------------
# Probes, pipelines, ablation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PromptProbe:
    """Post-training diagnostics on a fresh latent batch."""

    sim: torch.Tensor
    diag_mean: float
    offdiag_mean: float
    domain_cos_mean: float
    delta_t_std: float


def probe_prompts(
    cfg: RunConfig,
    backends: Backends,
    labels: Sequence[DomainLabel],
    scheme: PromptScheme,
    rng: torch.Generator,
    n: int = 8,
    templates: Sequence[str] | None = None,
) -> PromptProbe:
    src, tgt = _label_pair(labels)
    text_enc = backends.text_encoder
    with torch.no_grad():
        label_emb = encode_label_averaged(
            text_enc, tgt, default_templates() if templates is None else templates
        )
        w = torch.randn((n, cfg.latent_dim), generator=rng, dtype=DTYPE)
        img_embs = backends.image_encoder.encode(backends.generator.synthesize(w))
        blocks = scheme_prompts_batch(scheme, w)
        src_rows = torch.cat([blocks, _expand_tokens(text_enc.embed_tokens(src.text), n)], dim=1)
        tgt_rows = torch.cat([blocks, _expand_tokens(text_enc.embed_tokens(tgt.text), n)], dim=1)
        src_m = text_enc.encode_rows(src_rows)
        tgt_m = text_enc.encode_rows(tgt_rows)
        sim = similarity_matrix(img_embs, src_m)
        diag = sim.diagonal()
        diag_mean = float(diag.mean())
        offdiag_mean = float((sim.sum() - diag.sum()) / (n * (n - 1))) if n > 1 else 0.0
        domain_cos = float((normalize(tgt_m) @ normalize(label_emb)).mean())
        dt_std = batch_spread(text_direction(src_m, tgt_m))
    return PromptProbe(sim, diag_mean, offdiag_mean, domain_cos, dt_std)


def target_diversity(
    generator, image_enc, rng: torch.Generator, n: int = 32
) -> float:
    """Mean pairwise cosine distance of target-image embeddings."""
    with torch.no_grad():
        w = torch.randn((n, generator.latent_dim), generator=rng, dtype=DTYPE)
        embs = image_enc.encode(generator.synthesize(w))
    return embedding_diversity(embs)


def build_scheme(
    cfg: RunConfig,
    backends: Backends,
    labels: Sequence[DomainLabel],
    scheme_name: str,
    templates: Sequence[str] | None = None,
) -> tuple[PromptScheme, list[Stage1TraceRow] | None]:
    """Produce the stage-2 prompt scheme, training it where the scheme calls
    for training. Sub-seeds derive from cfg.seed so every scheme is
    reproducible in isolation."""
    if scheme_name == "manual_fixed":
        return manual_fixed_scheme(backends.text_encoder), None
    if scheme_name == "random":
        rng = seeded_rng(stable_seed(cfg.seed, "random-scheme"))
        return random_scheme(cfg, backends.text_encoder, rng), None
    if scheme_name == "learned_fixed":
        rng = seeded_rng(stable_seed(cfg.seed, TAG_STAGE1))
        shared, trace = train_shared_prompts(cfg, backends, labels, rng, templates=templates)
        return learned_fixed_scheme(shared), trace
    if scheme_name == "adaptive":
        rng = seeded_rng(stable_seed(cfg.seed, TAG_STAGE1))
        mapper, trace = train_mapper(cfg, backends, labels, rng, templates=templates)
        return adaptive_scheme(mapper), trace
    raise ValueError(f"unknown prompt scheme {scheme_name!r}")


@dataclass
class PipelineResult:
    scheme: PromptScheme
    stage1_trace: list[Stage1TraceRow] | None
    adapt: AdaptResult
    probe: PromptProbe
    diversity: float


def run_pipeline(
    cfg: RunConfig,
    backends: Backends,
    labels: Sequence[DomainLabel],
    scheme_name: str,
    freeze: FreezePolicy | None = None,
    templates: Sequence[str] | None = None,
    eval_samples: int = 32,
) -> PipelineResult:
    """Full stage-1 + stage-2 run under one scheme, plus diagnostics."""
    scheme, stage1_trace = build_scheme(cfg, backends, labels, scheme_name, templates)
    adapt = adapt_generator(
        cfg, backends, scheme, labels,
        seeded_rng(stable_seed(cfg.seed, TAG_STAGE2)), freeze=freeze,
    )
    probe = probe_prompts(
        cfg, backends, labels, scheme,
        seeded_rng(stable_seed(cfg.seed, TAG_PROBE)), templates=templates,
    )
    diversity = target_diversity(
        adapt.generator, backends.image_encoder,
        seeded_rng(stable_seed(cfg.seed, TAG_EVAL)), n=eval_samples,
    )
    return PipelineResult(scheme, stage1_trace, adapt, probe, diversity)


@dataclass
class AblationCell:
    scheme: str
    sweep_param: str
    sweep_value: float
    ok: bool = False
    error: str = ""
    l_contr_final: float = math.nan
    l_domain_final: float = math.nan
    l_total_final: float = math.nan
    l_adapt_final: float = math.nan
    delta_t_std: float = math.nan
    diversity: float = math.nan
    sim_probe: list | None = None


def run_ablation(
    cfg: RunConfig,
    backends: Backends,
    labels: Sequence[DomainLabel],
    schemes: Sequence[str],
    sweep: tuple[str, Sequence[float]],
    templates: Sequence[str] | None = None,
) -> list[AblationCell]:
    """Grid of prompt schemes against one swept hyperparameter.

    Cells never share training state: each derives its own seed from the
    config seed and the cell identity. A failing cell records its error and
    the sweep keeps going.
    """
    param, values = sweep
    if param not in ("lambda", "m"):
        raise ValueError(f"sweep parameter must be lambda|m, got {param!r}")
    cells: list[AblationCell] = []
    for scheme_name in schemes:
        for value in values:
            cell = AblationCell(scheme_name, param, float(value))
            try:
                overrides = {"lambda_" if param == "lambda" else "m": value}
                cell_cfg = replace(
                    cfg,
                    **overrides,
                    seed=stable_seed(cfg.seed, "cell", scheme_name, param, value),
                )
                cell_cfg.validate()
                result = run_pipeline(
                    cell_cfg, backends, labels, scheme_name, templates=templates
                )
                if result.stage1_trace:
                    last = result.stage1_trace[-1]
                    cell.l_contr_final = last.l_contr
                    cell.l_domain_final = last.l_domain
                    cell.l_total_final = last.l_total
                cell.l_adapt_final = result.adapt.trace[-1].l_adapt
                cell.delta_t_std = result.probe.delta_t_std
                cell.diversity = result.diversity
                if scheme_name == "adaptive":
                    cell.sim_probe = result.probe.sim.tolist()
                cell.ok = True
            except Exception as e:  # cell isolation is the contract here
                cell.error = f"{type(e).__name__}: {e}"
            cells.append(cell)
    return cells
