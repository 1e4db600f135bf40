"""Batch command-line interface.

Subcommands: train-mapper, adapt, synthesize, interpolate, ablate, evaluate.
Exit codes: 0 on success, 1 for config or input errors, 2 for training aborts
and backend incompatibilities. Relative --out paths resolve under
$IPL_DATA_DIR when that variable is set.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import replace
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import torch  # noqa: E402

from .archive import (  # noqa: E402
    KIND_GENERATOR,
    KIND_MAPPER,
    KIND_SHARED,
    load_archive,
    load_generator,
    load_mapper,
    mapper_architecture,
    save_archive,
    save_generator,
    save_mapper,
)
from .core import (  # noqa: E402
    DTYPE,
    DomainLabel,
    LatentCode,
    RunConfig,
    config_hash,
    load_config,
    seeded_rng,
    stable_seed,
)
from .encoders import nearest_word  # noqa: E402
from .errors import (  # noqa: E402
    ArchiveError,
    ConfigError,
    DegenerateVectorError,
    DimensionMismatchError,
    IplError,
    TrainingAbortError,
    TrainingStallError,
)
from .generators import (  # noqa: E402
    clone_generator,
    load_parameter_set,
    model_interpolate,
    parameter_set,
    latent_interpolate,
)
from .mapper import (  # noqa: E402
    LatentMapper,
    PromptScheme,
    SharedPromptMatrix,
    adaptive_scheme,
    learned_fixed_scheme,
    manual_fixed_scheme,
    random_scheme,
    scheme_prompts_batch,
)
from .metrics import (  # noqa: E402
    ToyClassifier,
    ToyFeatureExtractor,
    embedding_diversity,
    identity_similarity,
    inception_score,
    sifid,
    structural_consistency,
    toy_spatial_features,
)
from .render import save_image_png, save_montage_png, to_square  # noqa: E402
from .training import (  # noqa: E402
    TAG_EVAL,
    TAG_STAGE1,
    TAG_STAGE2,
    Backends,
    FreezePolicy,
    adapt_generator,
    run_ablation,
    run_pipeline,
    toy_backends,
    train_mapper,
    train_shared_prompts,
)

SCHEME_NAMES = ("manual_fixed", "learned_fixed", "random", "adaptive")


# --------------------------------------------------------------------------
# Shared helpers
# --------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def resolve_out(out: str) -> Path:
    p = Path(out)
    if p.is_absolute():
        return p
    root = os.environ.get("IPL_DATA_DIR")
    return Path(root) / p if root else p


def lambda_table(setting: str = "gan") -> dict[str, float]:
    data = json.loads(
        resources.files("ipl.data").joinpath("lambda_table.json").read_text(encoding="utf-8")
    )
    if setting not in data:
        raise ConfigError(f"unknown lambda table setting {setting!r}")
    return {key: float(value) for key, value in data[setting].items()}


def default_lambda(source: str, target: str, setting: str = "gan") -> float | None:
    return lambda_table(setting).get(f"{source}->{target}")


def _load_cfg(args) -> tuple[RunConfig, set[str]]:
    cfg = load_config(args.config)
    raw_keys = set(json.loads(Path(args.config).read_text(encoding="utf-8")))
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg, raw_keys


def _labels(args) -> tuple[DomainLabel, DomainLabel]:
    return (
        DomainLabel(args.source_label, "source"),
        DomainLabel(args.target_label, "target"),
    )


def _resolve_lambda(cfg: RunConfig, raw_keys: set[str], source: str, target: str) -> RunConfig:
    """Fill lambda from the defaults table when the config file left it out."""
    if "lambda" in raw_keys:
        return cfg
    lam = default_lambda(source, target)
    if lam is None:
        return cfg
    if cfg.n_stage1 != 32:
        print(
            f"warning: lambda {lam} from the defaults table assumes batch 32,"
            f" but n_stage1 is {cfg.n_stage1}",
            file=sys.stderr,
        )
    return replace(cfg, lambda_=lam)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _write_run_manifest(
    out: Path,
    stage: str,
    cfg: RunConfig,
    started_at: str,
    checkpoints: list[str],
    final_metrics: dict,
) -> None:
    manifest = {
        "run_id": f"{stage}-seed{cfg.seed}-{started_at.replace(':', '').replace('+', 'Z')}",
        "stage": stage,
        "config": cfg.to_dict(),
        "config_hash": config_hash(cfg),
        "started_at": started_at,
        "finished_at": _now(),
        "checkpoints": checkpoints,
        "final_metrics": final_metrics,
    }
    (out / "run_manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _checkpoint_hook(out: Path, kind: str, architecture: str, cfg: RunConfig):
    checkpoint_dir = out / "checkpoints"
    recorded: list[str] = []

    def hook(iteration: int, params):
        path = checkpoint_dir / f"iter_{iteration:06d}.archive"
        save_archive(path, kind, params, architecture=architecture, config=cfg, seed=cfg.seed)
        recorded.append(str(path.relative_to(out)))

    return hook, recorded


def _parse_w(spec: str, latent_dim: int) -> LatentCode:
    if spec.startswith("seed:"):
        try:
            seed = int(spec[len("seed:"):])
        except ValueError:
            raise ConfigError(f"bad latent spec {spec!r}; want seed:<int> or a JSON file")
        return LatentCode(torch.randn(latent_dim, generator=seeded_rng(seed), dtype=DTYPE))
    path = Path(spec)
    if not path.exists():
        raise ConfigError(f"latent file not found: {path}")
    try:
        values = json.loads(path.read_text(encoding="utf-8"))
        tensor = torch.tensor([float(v) for v in values], dtype=DTYPE)
    except (json.JSONDecodeError, TypeError, ValueError) as e:
        raise ConfigError(f"latent file {path} is not a JSON number array: {e}") from e
    if tensor.shape[0] != latent_dim:
        raise ConfigError(
            f"latent from {path} has width {tensor.shape[0]}, generator wants {latent_dim}"
        )
    return LatentCode(tensor)


def _parse_freeze(spec: str | None, cfg: RunConfig) -> FreezePolicy:
    if spec is None or spec == "train_all":
        return FreezePolicy()
    if spec == "nada_adaptive":
        return FreezePolicy(kind="nada_adaptive", top_k=cfg.freeze_top_k)
    if spec.startswith("subset:"):
        names = tuple(n for n in spec[len("subset:"):].split(",") if n)
        if not names:
            raise ConfigError("freeze subset needs at least one parameter name")
        return FreezePolicy(kind="fixed_subset", names=names)
    raise ConfigError(
        f"bad freeze spec {spec!r}; want train_all, nada_adaptive, or subset:<names>"
    )


def _parse_schemes(spec: str) -> list[str]:
    names = [s.strip() for s in spec.split(",") if s.strip()]
    for name in names:
        if name not in SCHEME_NAMES:
            raise ConfigError(
                f"unknown scheme {name!r}; choose from {', '.join(SCHEME_NAMES)}"
            )
    if not names:
        raise ConfigError("scheme list is empty")
    return names


def _parse_sweep(spec: str) -> tuple[str, list[float]]:
    try:
        param, raw = spec.split(":", 1)
        values = [float(v) for v in raw.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"bad sweep spec {spec!r}; want lambda:0,1,10 or m:1,2,4")
    if param not in ("lambda", "m"):
        raise ConfigError(f"sweep parameter must be lambda or m, got {param!r}")
    if not values:
        raise ConfigError("sweep needs at least one value")
    if param == "m":
        values = [int(v) for v in values]
    return param, values


def _scheme_for_adapt(args, cfg: RunConfig, backends: Backends) -> PromptScheme:
    name = args.scheme or cfg.prompt_scheme
    if name not in SCHEME_NAMES:
        raise ConfigError(f"unknown scheme {name!r}")
    if name == "manual_fixed":
        return manual_fixed_scheme(backends.text_encoder)
    if name == "random":
        return random_scheme(
            cfg, backends.text_encoder, seeded_rng(stable_seed(cfg.seed, "random-scheme"))
        )
    if args.mapper is None:
        raise ConfigError(f"scheme {name!r} needs --mapper pointing to a trained archive")
    ar = load_archive(args.mapper)
    if name == "adaptive":
        if ar.kind != KIND_MAPPER:
            raise ConfigError(
                f"--mapper archive has kind {ar.kind!r}, adaptive needs {KIND_MAPPER!r}"
            )
        mapper = load_mapper(args.mapper)
        if mapper.k != backends.text_encoder.k or mapper.latent_dim != cfg.latent_dim:
            raise DimensionMismatchError(
                f"mapper geometry d{mapper.latent_dim}/k{mapper.k} does not match"
                f" run geometry d{cfg.latent_dim}/k{cfg.clip_dim}"
            )
        if mapper.m != cfg.m:
            print(
                f"warning: mapper was trained with m={mapper.m}, config says m={cfg.m};"
                " using the mapper's m",
                file=sys.stderr,
            )
        return adaptive_scheme(mapper)
    # learned_fixed
    if ar.kind != KIND_SHARED:
        raise ConfigError(
            f"--mapper archive has kind {ar.kind!r}, learned_fixed needs {KIND_SHARED!r}"
        )
    if "block" not in ar.tensors:
        raise ArchiveError("shared prompt archive is missing its block tensor")
    block = ar.tensors["block"]
    if block.shape[1] != backends.text_encoder.k:
        raise DimensionMismatchError(
            f"shared block width {block.shape[1]} does not match encoder width"
            f" {backends.text_encoder.k}"
        )
    return learned_fixed_scheme(SharedPromptMatrix(block))


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------


def cmd_train_mapper(args) -> int:
    cfg, raw_keys = _load_cfg(args)
    if args.backend != "toy":
        raise ConfigError(
            f"backend {args.backend!r} is not bundled; only the toy backend ships"
            " with this package (adapters plug in through the library API)"
        )
    labels = _labels(args)
    cfg = _resolve_lambda(cfg, raw_keys, labels[0].text, labels[1].text)
    out = resolve_out(args.out)
    out.mkdir(parents=True, exist_ok=True)
    started = _now()
    backends = toy_backends(cfg)
    rng = seeded_rng(stable_seed(cfg.seed, TAG_STAGE1))
    if args.scheme == "learned_fixed":
        arch = f"shared/m{cfg.m}-k{cfg.clip_dim}"
        hook, checkpoints = _checkpoint_hook(out, KIND_SHARED, arch, cfg)
        model, trace = train_shared_prompts(cfg, backends, labels, rng, checkpoint_hook=hook)
        params = {name: p.detach().clone() for name, p in model.named_parameters()}
        save_archive(out / "mapper.archive", KIND_SHARED, params, architecture=arch,
                     config=cfg, seed=cfg.seed)
    else:
        arch = mapper_architecture(LatentMapper(cfg.latent_dim, cfg.m, cfg.clip_dim))
        hook, checkpoints = _checkpoint_hook(out, KIND_MAPPER, arch, cfg)
        mapper, trace = train_mapper(cfg, backends, labels, rng, checkpoint_hook=hook)
        save_mapper(out / "mapper.archive", mapper, config=cfg, seed=cfg.seed)
    _write_csv(
        out / "stage1_loss.csv",
        ["iteration", "l_contr", "l_domain", "l_total"],
        [[r.iteration, r.l_contr, r.l_domain, r.l_total] for r in trace],
    )
    last = trace[-1]
    _write_run_manifest(
        out, "stage1", cfg, started, checkpoints,
        {"l_contr": last.l_contr, "l_domain": last.l_domain, "l_total": last.l_total},
    )
    print(f"stage 1 done: {out / 'mapper.archive'}")
    return 0


def cmd_adapt(args) -> int:
    cfg, raw_keys = _load_cfg(args)
    labels = _labels(args)
    cfg = _resolve_lambda(cfg, raw_keys, labels[0].text, labels[1].text)
    out = resolve_out(args.out)
    out.mkdir(parents=True, exist_ok=True)
    started = _now()
    backends = toy_backends(cfg)
    scheme = _scheme_for_adapt(args, cfg, backends)
    freeze = _parse_freeze(args.freeze, cfg)
    gen_arch = backends.generator.architecture
    hook, checkpoints = _checkpoint_hook(out, KIND_GENERATOR, gen_arch, cfg)
    result = adapt_generator(
        cfg, backends, scheme, labels,
        seeded_rng(stable_seed(cfg.seed, TAG_STAGE2)),
        freeze=freeze, checkpoint_hook=hook,
    )
    save_generator(out / "generator.archive", result.generator, config=cfg, seed=cfg.seed)
    _write_csv(
        out / "stage2_loss.csv",
        ["iteration", "l_adapt", "l_adapt_ema", "delta_t_std", "skipped_pairs"],
        [[r.iteration, r.l_adapt, r.l_adapt_ema, r.delta_t_std, r.skipped_pairs]
         for r in result.trace],
    )
    last = result.trace[-1]
    _write_run_manifest(
        out, "stage2", cfg, started, checkpoints,
        {
            "l_adapt": last.l_adapt,
            "l_adapt_ema": last.l_adapt_ema,
            "delta_t_std": last.delta_t_std,
            "skipped_pairs": last.skipped_pairs,
        },
    )
    print(f"stage 2 done: {out / 'generator.archive'}")
    return 0


def cmd_synthesize(args) -> int:
    gen = load_generator(args.generator)
    if args.n < 1:
        raise ConfigError(f"--n must be >= 1, got {args.n}")
    out = resolve_out(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = seeded_rng(args.seed)
    w = torch.randn((args.n, gen.latent_dim), generator=rng, dtype=DTYPE)
    with torch.no_grad():
        images = gen.synthesize(w)
    for i in range(args.n):
        save_image_png(out / f"sample_{i:03d}.png", images[i])
    save_montage_png(out / "montage.png", [images[i] for i in range(args.n)])
    (out / "latents.json").write_text(
        json.dumps(w.tolist(), indent=2) + "\n", encoding="utf-8"
    )
    print(f"wrote {args.n} samples to {out}")
    return 0


def cmd_interpolate(args) -> int:
    gen = load_generator(args.generator)
    if args.steps < 2:
        raise ConfigError(f"--steps must be >= 2, got {args.steps}")
    out = resolve_out(args.out)
    out.mkdir(parents=True, exist_ok=True)
    alphas = [i / (args.steps - 1) for i in range(args.steps)]
    w1 = _parse_w(args.w1, gen.latent_dim)
    if args.mode == "latent":
        if args.w2 is None:
            raise ConfigError("latent interpolation needs --w2")
        w2 = _parse_w(args.w2, gen.latent_dim)
        with torch.no_grad():
            images = latent_interpolate(gen, w1, w2, alphas)
    else:
        if args.generator2 is None:
            raise ConfigError("model interpolation needs --generator2")
        gen2 = load_generator(args.generator2)
        if gen.architecture != gen2.architecture:
            raise DimensionMismatchError(
                f"architectures differ: {gen.architecture} vs {gen2.architecture}"
            )
        p1 = parameter_set(gen)
        p2 = parameter_set(gen2)
        blend = clone_generator(gen)
        images = []
        with torch.no_grad():
            for a in alphas:
                load_parameter_set(blend, model_interpolate(p1, p2, a))
                images.append(blend.synthesize(w1.values))
    for i, img in enumerate(images):
        save_image_png(out / f"step_{i:03d}.png", img)
    save_montage_png(out / "montage.png", images, cols=len(images))
    print(f"wrote {len(images)} interpolation steps to {out}")
    return 0


def _plot_heatmap(path: Path, matrix) -> None:
    fig, ax = plt.subplots(figsize=(4.5, 4.0))
    im = ax.imshow(matrix, cmap="viridis")
    ax.set_xlabel("text matrix")
    ax.set_ylabel("image")
    ax.set_title("image/text similarity")
    fig.colorbar(im, ax=ax)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def _plot_diversity(path: Path, cells, sweep_param: str) -> None:
    fig, ax = plt.subplots(figsize=(5.0, 3.5))
    by_scheme: dict[str, list] = {}
    for cell in cells:
        if cell.ok:
            by_scheme.setdefault(cell.scheme, []).append((cell.sweep_value, cell.diversity))
    for scheme, points in sorted(by_scheme.items()):
        points.sort()
        ax.plot([p[0] for p in points], [p[1] for p in points], marker="o", label=scheme)
    ax.set_xlabel(sweep_param)
    ax.set_ylabel("embedding diversity")
    ax.set_title(f"diversity vs {sweep_param}")
    if by_scheme:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def _plot_dt_bars(path: Path, cells) -> None:
    fig, ax = plt.subplots(figsize=(5.0, 3.5))
    by_scheme: dict[str, list] = {}
    for cell in cells:
        if cell.ok:
            by_scheme.setdefault(cell.scheme, []).append(cell.delta_t_std)
    names = sorted(by_scheme)
    means = [sum(v) / len(v) for v in (by_scheme[n] for n in names)]
    ax.bar(range(len(names)), means)
    ax.set_xticks(range(len(names)), names, rotation=20, fontsize=8)
    ax.set_ylabel("text-direction spread")
    ax.set_title("per-batch text-direction spread by scheme")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def cmd_ablate(args) -> int:
    cfg, raw_keys = _load_cfg(args)
    labels = _labels(args)
    cfg = _resolve_lambda(cfg, raw_keys, labels[0].text, labels[1].text)
    schemes = _parse_schemes(args.schemes)
    sweep = _parse_sweep(args.sweep)
    out = resolve_out(args.out)
    out.mkdir(parents=True, exist_ok=True)
    backends = toy_backends(cfg)
    cells = run_ablation(cfg, backends, labels, schemes, sweep)
    rows = []
    for c in cells:
        rows.append([
            c.scheme, c.sweep_param, c.sweep_value, "ok" if c.ok else "failed",
            *("" if v != v else v  # nan -> empty cell
              for v in (c.l_contr_final, c.l_domain_final, c.l_total_final,
                        c.l_adapt_final, c.delta_t_std, c.diversity)),
            c.error,
        ])
    _write_csv(
        out / "ablation_report.csv",
        ["scheme", "sweep_param", "sweep_value", "status", "l_contr_final",
         "l_domain_final", "l_total_final", "l_adapt_final", "delta_t_std",
         "diversity", "error"],
        rows,
    )
    sim = next((c.sim_probe for c in cells if c.ok and c.sim_probe is not None), None)
    if sim is not None:
        _plot_heatmap(out / "similarity_heatmap.png", sim)
    _plot_diversity(out / "diversity_curve.png", cells, sweep[0])
    _plot_dt_bars(out / "delta_t_std_bars.png", cells)
    failed = [c for c in cells if not c.ok]
    for c in failed:
        print(
            f"warning: cell {c.scheme}/{c.sweep_param}={c.sweep_value} failed: {c.error}",
            file=sys.stderr,
        )
    if failed and len(failed) == len(cells):
        print("error: every ablation cell failed", file=sys.stderr)
        return 2
    print(f"wrote {len(cells)} ablation cells to {out}")
    return 0


def cmd_evaluate(args) -> int:
    cfg, raw_keys = _load_cfg(args)
    labels = _labels(args)
    cfg = _resolve_lambda(cfg, raw_keys, labels[0].text, labels[1].text)
    schemes = _parse_schemes(args.schemes)
    if args.n_samples < 2:
        raise ConfigError(f"--n-samples must be >= 2, got {args.n_samples}")
    out = resolve_out(args.out)
    out.mkdir(parents=True, exist_ok=True)
    backends = toy_backends(cfg)
    domain_pair = f"{labels[0].text}->{labels[1].text}"
    classifier = ToyClassifier(
        stable_seed(cfg.seed, "toy-classifier"), cfg.image_dim, n_classes=8
    )
    extractor = ToyFeatureExtractor(
        stable_seed(cfg.seed, "toy-features"), cfg.image_dim, n_features=8
    )
    metric_rows: list[list] = []
    word_rows: list[list] = []
    for scheme_name in schemes:
        result = run_pipeline(
            cfg, backends, labels, scheme_name, eval_samples=args.n_samples
        )
        rng = seeded_rng(stable_seed(cfg.seed, TAG_EVAL, "metrics"))
        w = torch.randn((args.n_samples, cfg.latent_dim), generator=rng, dtype=DTYPE)
        with torch.no_grad():
            src_imgs = backends.generator.synthesize(w)
            tgt_imgs = result.adapt.generator.synthesize(w)
            tgt_embs = backends.image_encoder.encode(tgt_imgs)
        values = {
            "inception_score": inception_score(classifier.probabilities(tgt_imgs)),
            "identity_similarity": float(
                sum(
                    identity_similarity(
                        extractor.features(src_imgs[i]), extractor.features(tgt_imgs[i])
                    )
                    for i in range(args.n_samples)
                ) / args.n_samples
            ),
            "structural_consistency": float(
                sum(
                    structural_consistency(to_square(src_imgs[i]), to_square(tgt_imgs[i]))
                    for i in range(args.n_samples)
                ) / args.n_samples
            ),
            "sifid": float(
                sum(
                    sifid(
                        toy_spatial_features(to_square(tgt_imgs[i]), stable_seed(cfg.seed, "spatial"), 4),
                        toy_spatial_features(to_square(src_imgs[i]), stable_seed(cfg.seed, "spatial"), 4),
                    )
                    for i in range(min(4, args.n_samples))
                ) / min(4, args.n_samples)
            ),
            "diversity": embedding_diversity(tgt_embs),
        }
        for metric, value in values.items():
            metric_rows.append(
                [metric, domain_pair, scheme_name, value, args.n_samples, cfg.seed]
            )
        if args.dump_nearest_words:
            probe_rng = seeded_rng(stable_seed(cfg.seed, "nearest-words"))
            probe_w = torch.randn((4, cfg.latent_dim), generator=probe_rng, dtype=DTYPE)
            with torch.no_grad():
                blocks = scheme_prompts_batch(result.scheme, probe_w)
            for s in range(blocks.shape[0]):
                for r in range(blocks.shape[1]):
                    word, dist = nearest_word(backends.text_encoder, blocks[s, r])
                    word_rows.append([scheme_name, s, r, word, dist])
    _write_csv(
        out / "metrics.csv",
        ["metric", "domain_pair", "scheme", "value", "n_samples", "seed"],
        metric_rows,
    )
    if args.dump_nearest_words:
        _write_csv(
            out / "nearest_words.csv",
            ["scheme", "sample", "row", "word", "distance"],
            word_rows,
        )
    print(f"wrote metric report to {out / 'metrics.csv'}")
    return 0


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ipl", description=__doc__)
    sub = parser.add_subparsers(dest="command")

    def add_labels(p):
        p.add_argument("--source-label", default="Photo")
        p.add_argument("--target-label", default="Disney")

    p = sub.add_parser("train-mapper", help="stage 1: learn per-image prompts")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--backend", default="toy", choices=["toy", "adapter"])
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--scheme", default="adaptive", choices=["adaptive", "learned_fixed"])
    add_labels(p)
    p.set_defaults(func=cmd_train_mapper)

    p = sub.add_parser("adapt", help="stage 2: adapt the source generator")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mapper", default=None)
    p.add_argument("--scheme", default=None, choices=list(SCHEME_NAMES))
    p.add_argument("--freeze", default=None)
    p.add_argument("--seed", type=int, default=None)
    add_labels(p)
    p.set_defaults(func=cmd_adapt)

    p = sub.add_parser("synthesize", help="render samples from a generator archive")
    p.add_argument("--generator", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("interpolate", help="latent or model interpolation")
    p.add_argument("--generator", required=True)
    p.add_argument("--generator2", default=None)
    p.add_argument("--mode", default="latent", choices=["latent", "model"])
    p.add_argument("--w1", default="seed:0")
    p.add_argument("--w2", default=None)
    p.add_argument("--steps", type=int, default=5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_interpolate)

    p = sub.add_parser("ablate", help="scheme x hyperparameter sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--schemes", default=",".join(SCHEME_NAMES))
    p.add_argument("--sweep", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    add_labels(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("evaluate", help="metric report per scheme")
    p.add_argument("--config", required=True)
    p.add_argument("--schemes", default=",".join(SCHEME_NAMES))
    p.add_argument("--out", required=True)
    p.add_argument("--n-samples", type=int, default=32)
    p.add_argument("--dump-nearest-words", action="store_true")
    p.add_argument("--seed", type=int, default=None)
    add_labels(p)
    p.set_defaults(func=cmd_evaluate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:  # --help and friends
        return int(e.code or 0)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    if getattr(args, "func", None) is None:
        parser.print_help()
        return 1
    try:
        return int(args.func(args) or 0)
    except (TrainingAbortError, TrainingStallError, DimensionMismatchError,
            DegenerateVectorError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (ConfigError, ArchiveError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except IplError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
