"""Command line front end: generate, curate, bench, train, eval, retrieve, sweep.

All commands are deterministic given (config, seed, input files); default
input and output paths live under the --out directory so the full pipeline
runs from one config file. Exit codes: 0 success, 1 usage or config error,
2 data error, 3 numerical divergence.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .captions import CaptionRecord, is_counting_candidate
from .config import RunConfig, load_run_config
from .curation import Benchmark, balance, build_benchmark, dataset_stats, filter_record
from .encoder import EncoderDims, Params, Vocabulary, init_params, load_params, save_params
from .errors import CountLabError, UsageError
from .evaluation import emit_report, retrieval_count_precision, retrieve_topk, zero_shot_count
from .records import (
    PoolRecord,
    read_id_file,
    read_records,
    to_accepted,
    to_counting_examples,
    to_general_examples,
    write_records,
    write_text_atomic,
)
from .scenes import CAPTION_MODES, DetectorNoise, caption_for_scene, dominant_class, render, sample_scene
from .seeding import derive_seed
from .training import TrainConfig, train

FILE_HEADER = "countlab dataset v1"


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        raise UsageError(message)


def _add_common(parser):
    parser.add_argument("--config", help="path to a JSON run config")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--out", help="override the config output directory")


def build_parser() -> _Parser:
    parser = _Parser(prog="countlab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate scene/caption pools")
    _add_common(p)

    p = sub.add_parser("curate", help="filter and balance a pool into a counting set")
    _add_common(p)
    p.add_argument("--pool", help="pool file (default: OUT/pool.jsonl)")

    p = sub.add_parser("bench", help="build a held-out benchmark")
    _add_common(p)
    p.add_argument("--pool", help="source pool (default: OUT/bench_pool.jsonl, else OUT/pool.jsonl)")
    p.add_argument("--exclude", help="ids to exclude (default: OUT/counting.jsonl when present)")
    p.add_argument("--annotations", help="ids to drop before quota sampling")

    p = sub.add_parser("train", help="train the dual encoder")
    _add_common(p)
    p.add_argument("--counting", help="counting set file (default: OUT/counting.jsonl)")
    p.add_argument("--general", help="general pool file (default: OUT/pool.jsonl)")
    p.add_argument("--resume", help="checkpoint to resume from")
    p.add_argument("--resume-step", type=int, default=0, help="step the checkpoint was written at")

    p = sub.add_parser("eval", help="zero-shot counting evaluation")
    _add_common(p)
    p.add_argument("--checkpoint", help="checkpoint file (default: OUT/checkpoint.bin)")
    p.add_argument("--benchmark", help="benchmark file (default: OUT/benchmark.jsonl)")

    p = sub.add_parser("retrieve", help="count-based top-k image retrieval")
    _add_common(p)
    p.add_argument("--checkpoint", help="checkpoint file (default: OUT/checkpoint.bin)")
    p.add_argument("--pool", help="image pool file (default: OUT/pool.jsonl)")
    p.add_argument("--caption", required=True, help="query caption")
    p.add_argument("--k", type=int, help="number of images to retrieve")

    p = sub.add_parser("sweep", help="ablation grid over batch fraction and loss weight")
    _add_common(p)
    p.add_argument("--counting", help="counting set file (default: OUT/counting.jsonl)")
    p.add_argument("--general", help="general pool file (default: OUT/pool.jsonl)")
    p.add_argument("--benchmark", help="benchmark file (default: OUT/benchmark.jsonl)")
    return parser


def _generate_pool(cfg: RunConfig, n: int, prefix: str, stage: str) -> list[PoolRecord]:
    gen = cfg.generate
    rng = np.random.default_rng(derive_seed(cfg.seed, stage))
    class_pool = list(range(len(cfg.classes)))
    count_weights = [gen.count_decay**k for k in range(9)]
    modes = [m for m in CAPTION_MODES if gen.mode_weights.get(m, 0.0) > 0]
    mode_probs = np.array([gen.mode_weights[m] for m in modes], dtype=float)
    mode_probs /= mode_probs.sum()

    records = []
    for i in range(n):
        scene = sample_scene(
            class_pool,
            count_range=(2, 10),
            layout_weights=(gen.layout_grid_prob, 1.0 - gen.layout_grid_prob),
            canvas=cfg.canvas,
            rng=rng,
            count_weights=count_weights,
            distractor_prob=gen.distractor_prob,
            max_distractors=gen.max_distractors,
            grid_bias=gen.grid_bias,
            glyph_size=cfg.glyph_size,
            region_weights=gen.region_weights,
            scene_id=f"{prefix}-{i:06d}",
        )
        mode = modes[int(rng.choice(len(modes), p=mode_probs))]
        caption = caption_for_scene(scene, rng, mode, class_names=cfg.classes)
        records.append(PoolRecord(scene.id, "pool", caption, scene, mode=mode))
    return records


def cmd_generate(cfg: RunConfig, args) -> int:
    records = _generate_pool(cfg, cfg.generate.n, "pool", "generate")
    write_records(cfg.out_path("pool.jsonl"), records, FILE_HEADER)
    per_mode: dict[str, int] = {}
    for rec in records:
        per_mode[rec.mode] = per_mode.get(rec.mode, 0) + 1
    print(f"wrote {len(records)} records to {cfg.out_path('pool.jsonl')}")
    for mode in CAPTION_MODES:
        if mode in per_mode:
            print(f"  {mode}: {per_mode[mode]}")
    if cfg.generate.bench_n > 0:
        bench_records = _generate_pool(cfg, cfg.generate.bench_n, "bench", "generate-bench")
        write_records(cfg.out_path("bench_pool.jsonl"), bench_records, FILE_HEADER)
        print(f"wrote {len(bench_records)} records to {cfg.out_path('bench_pool.jsonl')}")
    return 0


def _detector_noise(cfg: RunConfig) -> DetectorNoise:
    return DetectorNoise(
        miss_rate=cfg.curate.miss_rate,
        false_positive_rate=cfg.curate.false_positive_rate,
        seed=derive_seed(cfg.seed, "detector"),
    )


def cmd_curate(cfg: RunConfig, args) -> int:
    pool_path = args.pool or cfg.out_path("pool.jsonl")
    records = read_records(pool_path)
    noise = _detector_noise(cfg)

    accepted = []
    rejections = []
    by_id = {}
    for rec in records:
        decision = filter_record(rec.scene, rec.caption, noise, record_id=rec.id)
        if decision.outcome == "accepted":
            accepted.append(rec)
            by_id[rec.id] = (rec, decision.number)
        else:
            rejections.append((rec.id, decision.reject_reason))

    accepted_view = to_accepted(accepted)
    available = dataset_stats(accepted_view)
    counting = balance(accepted_view, cfg.curate.cap_low, np.random.default_rng(derive_seed(cfg.seed, "balance")))
    selected = dataset_stats(counting)

    out_records = []
    for item in counting.records:
        rec, number = by_id[item.id]
        out_records.append(replace(rec, split="train", number=number.value))
    write_records(cfg.out_path("counting.jsonl"), out_records, FILE_HEADER)

    lines = ["id,reason"] + [f"{rid},{reason}" for rid, reason in rejections]
    write_text_atomic(cfg.out_path("rejections.csv"), "\n".join(lines) + "\n")

    lines = ["number,available,selected"]
    for value in range(2, 11):
        lines.append(f"{value},{available.per_number[value]},{selected.per_number[value]}")
    write_text_atomic(cfg.out_path("curation_stats.csv"), "\n".join(lines) + "\n")

    print(f"accepted {len(accepted)} of {len(records)}; counting set has {selected.total} records")
    print(f"wrote {cfg.out_path('counting.jsonl')}")
    return 0


def cmd_bench(cfg: RunConfig, args) -> int:
    if args.pool:
        pool_path = Path(args.pool)
    else:
        pool_path = cfg.out_path("bench_pool.jsonl")
        if not pool_path.exists():
            pool_path = cfg.out_path("pool.jsonl")
    records = read_records(pool_path)
    noise = _detector_noise(cfg)

    dropped: set[str] = set()
    annotations = args.annotations or cfg.bench.annotations
    if annotations:
        dropped = read_id_file(annotations)

    exclusion: set[str] = set()
    exclude_path = args.exclude or (
        cfg.out_path("counting.jsonl") if cfg.out_path("counting.jsonl").exists() else None
    )
    if exclude_path:
        exclusion = read_id_file(exclude_path)

    accepted = []
    by_id = {}
    for rec in records:
        if rec.id in dropped:
            continue
        decision = filter_record(rec.scene, rec.caption, noise, record_id=rec.id)
        if decision.outcome == "accepted":
            accepted.append(rec)
            by_id[rec.id] = (rec, decision.number)

    benchmark = build_benchmark(
        to_accepted(accepted), cfg.bench.quota, exclusion,
        np.random.default_rng(derive_seed(cfg.seed, "bench")),
    )
    out_records = []
    for item in benchmark.records:
        rec, number = by_id[item.id]
        out_records.append(replace(rec, split="bench", number=number.value))
    write_records(cfg.out_path("benchmark.jsonl"), out_records, FILE_HEADER)

    stats = dataset_stats(benchmark)
    print(f"benchmark: {stats.total} records, quota {cfg.bench.quota} per number")
    print(f"wrote {cfg.out_path('benchmark.jsonl')}")
    return 0


def _encoder_dims(cfg: RunConfig, vocab: Vocabulary) -> EncoderDims:
    return EncoderDims(
        vocab_size=len(vocab),
        token_dim=cfg.encoder.token_dim,
        hidden_dim=cfg.encoder.hidden_dim,
        embed_dim=cfg.encoder.embed_dim,
        height=cfg.canvas[0],
        width=cfg.canvas[1],
    )


def _train_config(cfg: RunConfig, **overrides) -> TrainConfig:
    ts = cfg.train
    settings = dict(
        batch_size=ts.batch_size,
        counting_fraction=ts.counting_fraction,
        loss_weight=ts.loss_weight,
        warmup_steps=ts.warmup_steps,
        total_steps=ts.total_steps,
        base_lr=ts.base_lr,
        lr_schedule=ts.lr_schedule,
        optimizer=ts.optimizer,
        adam_beta1=ts.adam_beta1,
        adam_beta2=ts.adam_beta2,
        adam_eps=ts.adam_eps,
        sgd_momentum=ts.sgd_momentum,
        eval_every=ts.eval_every,
        seed=derive_seed(cfg.seed, "train"),
    )
    settings.update(overrides)
    return TrainConfig(**settings)


def _write_metrics(path, metrics) -> None:
    lines = ["step,l_clip,l_count,l_total,effective_lambda,lr"]
    for m in metrics:
        lines.append(f"{m.step},{m.l_clip!r},{m.l_count!r},{m.l_total!r},{m.effective_lambda!r},{m.lr!r}")
    write_text_atomic(path, "\n".join(lines) + "\n")


def cmd_train(cfg: RunConfig, args) -> int:
    vocab = Vocabulary.default(cfg.classes)
    dims = _encoder_dims(cfg, vocab)
    cache = {}
    counting = to_counting_examples(read_records(args.counting or cfg.out_path("counting.jsonl")), vocab, cache)
    general = to_general_examples(read_records(args.general or cfg.out_path("pool.jsonl")), vocab, cache)

    initial = None
    start_step = 0
    if args.resume:
        initial = load_params(args.resume)
        start_step = args.resume_step

    config = _train_config(cfg)
    every = cfg.train.checkpoint_every

    def step_hook(step: int, params: Params) -> None:
        if every > 0 and (step + 1) % every == 0:
            save_params(params, cfg.out_path(f"checkpoint_step{step + 1:06d}.bin"))

    final, metrics = train(
        config, general, counting, vocab,
        encoder_dims=dims, initial_params=initial, start_step=start_step,
        step_hook=step_hook if every > 0 else None,
    )
    cfg.out_path("checkpoint.bin").parent.mkdir(parents=True, exist_ok=True)
    save_params(final, cfg.out_path("checkpoint.bin"))
    _write_metrics(cfg.out_path("metrics.csv"), metrics)
    if metrics:
        last = metrics[-1]
        print(f"trained {len(metrics)} steps; final l_total {last.l_total:.6f}")
    print(f"wrote {cfg.out_path('checkpoint.bin')}")
    return 0


def _load_benchmark(path) -> tuple[Benchmark, dict]:
    records = read_records(path)
    accepted = to_accepted(records)
    stats = dataset_stats(accepted)
    quota = max(stats.per_number.values(), default=0)
    scenes = {rec.scene.id: rec.scene for rec in records}
    return Benchmark(tuple(accepted), quota), scenes


def cmd_eval(cfg: RunConfig, args) -> int:
    params = load_params(args.checkpoint or cfg.out_path("checkpoint.bin"))
    vocab = Vocabulary.default(cfg.classes)
    benchmark, scenes = _load_benchmark(args.benchmark or cfg.out_path("benchmark.jsonl"))
    report = zero_shot_count(params, benchmark, scenes, vocab)
    emit_report(report, cfg.out_path("reports"))
    print(f"accuracy: {report.accuracy:.2f}")
    print(f"mean_deviation: {report.mean_deviation:.4f}")
    print(f"n_records: {report.n_records}")
    print(f"wrote {cfg.out_path('reports')}/summary.csv confusion.csv per_number.csv")
    return 0


def cmd_retrieve(cfg: RunConfig, args) -> int:
    params = load_params(args.checkpoint or cfg.out_path("checkpoint.bin"))
    vocab = Vocabulary.default(cfg.classes)
    records = read_records(args.pool or cfg.out_path("pool.jsonl"))
    scenes = {rec.scene.id: rec.scene for rec in records}
    pool = [(rec.scene.id, render(rec.scene)) for rec in records]
    k = args.k if args.k is not None else cfg.retrieve.k

    result = retrieve_topk(params, pool, args.caption, k, vocab)
    caption_record = CaptionRecord.from_text("query", args.caption)
    is_counting = is_counting_candidate(caption_record)

    lines = ["rank,scene_id,similarity,dominant_count,matches_caption"]
    value = caption_record.occurrences[0][0].value if is_counting else None
    for rank, (scene_id, sim) in enumerate(result.ranked, start=1):
        count = dominant_class(scenes[scene_id])[1]
        match = "" if value is None else str(int(count == value))
        lines.append(f"{rank},{scene_id},{sim!r},{count},{match}")
    write_text_atomic(cfg.out_path("retrieval.csv"), "\n".join(lines) + "\n")

    if is_counting:
        precision = retrieval_count_precision(result, scenes)
        print(f"count precision at {len(result.ranked)}: {precision:.3f}")
    print(f"wrote {cfg.out_path('retrieval.csv')}")
    return 0


def cmd_sweep(cfg: RunConfig, args) -> int:
    vocab = Vocabulary.default(cfg.classes)
    dims = _encoder_dims(cfg, vocab)
    cache = {}
    counting = to_counting_examples(read_records(args.counting or cfg.out_path("counting.jsonl")), vocab, cache)
    general = to_general_examples(read_records(args.general or cfg.out_path("pool.jsonl")), vocab, cache)
    benchmark, scenes = _load_benchmark(args.benchmark or cfg.out_path("benchmark.jsonl"))

    lines = ["p,lambda,accuracy,mean_deviation"]
    for fraction in cfg.sweep.fractions:
        for weight in cfg.sweep.weights:
            config = _train_config(
                cfg,
                counting_fraction=fraction,
                loss_weight=weight,
                total_steps=cfg.sweep.total_steps,
                warmup_steps=min(cfg.sweep.warmup_steps, cfg.sweep.total_steps),
                seed=derive_seed(cfg.seed, f"sweep:{fraction!r}:{weight!r}"),
            )
            params, _ = train(config, general, counting, vocab, encoder_dims=dims)
            report = zero_shot_count(params, benchmark, scenes, vocab)
            lines.append(f"{fraction!r},{weight!r},{report.accuracy!r},{report.mean_deviation!r}")
            print(f"p={fraction:.5f} lambda={weight:g}: accuracy {report.accuracy:.2f}, "
                  f"mean_deviation {report.mean_deviation:.4f}")
    write_text_atomic(cfg.out_path("sweep.csv"), "\n".join(lines) + "\n")
    print(f"wrote {cfg.out_path('sweep.csv')}")
    return 0


COMMANDS = {
    "generate": cmd_generate,
    "curate": cmd_curate,
    "bench": cmd_bench,
    "train": cmd_train,
    "eval": cmd_eval,
    "retrieve": cmd_retrieve,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = load_run_config(args.config)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        if args.out is not None:
            cfg = replace(cfg, out_dir=args.out)
        return COMMANDS[args.command](cfg, args)
    except CountLabError as err:
        print(f"error: {err}", file=sys.stderr)
        return err.exit_code


if __name__ == "__main__":
    sys.exit(main())
