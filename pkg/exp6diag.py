"""Diagnose: is the image tower or the text alignment the bottleneck?"""
import time

import numpy as np

from countlab.cli import _generate_pool
from countlab.config import GenerateSettings, RunConfig
from countlab.curation import balance, build_benchmark, filter_record
from countlab.encoder import EncoderDims, Vocabulary, encode_image_batch, encode_text_batch
from countlab.evaluation import zero_shot_count
from countlab.records import to_accepted, to_counting_examples, to_general_examples
from countlab.scenes import dominant_class, render
from countlab.seeding import derive_seed
from countlab.training import TrainConfig, train

cfg = RunConfig(seed=2026)
pool = _generate_pool(cfg, 20000, "pool", "generate")
accepted_records = [r for r in pool if filter_record(r.scene, r.caption, record_id=r.id).outcome == "accepted"]
by_id = {r.id: r for r in accepted_records}
accepted = to_accepted(accepted_records)
benchmark = build_benchmark(accepted, 5, set(), np.random.default_rng(derive_seed(cfg.seed, "bench")))
bench_ids = benchmark.ids()
train_pool = [a for a in accepted if a.id not in bench_ids]
counting = balance(train_pool, cfg.curate.cap_low, np.random.default_rng(derive_seed(cfg.seed, "balance")))

vocab = Vocabulary.default(cfg.classes)
dims = EncoderDims(len(vocab), 32, 64, 32, 32, 32)
cache = {}
counting_examples = to_counting_examples([by_id[r.id] for r in counting.records], vocab, cache)
general_examples = to_general_examples(pool, vocab, cache)
scenes = {rec.scene.id: rec.scene for rec in pool}

config = TrainConfig(batch_size=64, counting_fraction=1 / 8, loss_weight=1.0,
                     warmup_steps=1000, total_steps=5000, base_lr=3e-3,
                     seed=derive_seed(cfg.seed, "train"))
params, metrics = train(config, general_examples, counting_examples, vocab, encoder_dims=dims)
report = zero_shot_count(params, benchmark, scenes, vocab)
print(f"zero-shot: acc {report.accuracy:.2f} md {report.mean_deviation:.3f}")

# --- image-side probe: nearest class-count centroid on embeddings
train_embs, _ = encode_image_batch(params, np.stack([ex.raster.flat() for ex in counting_examples]))
train_counts = np.array([ex.number.value for ex in counting_examples])
train_cls = np.array([dominant_class(by_id[ex.id].scene)[0] for ex in counting_examples])

bench_rasters = np.stack([render(scenes[r.scene_id]).flat() for r in benchmark.records])
bench_embs, _ = encode_image_batch(params, bench_rasters)
bench_counts = np.array([r.number.value for r in benchmark.records])
bench_cls = np.array([dominant_class(scenes[r.scene_id])[0] for r in benchmark.records])

# count centroids ignoring class
centroids = np.stack([train_embs[train_counts == v].mean(axis=0) for v in range(2, 11)])
pred = np.argmax(bench_embs @ centroids.T, axis=1) + 2
print(f"image-embedding centroid readout: acc {(pred == bench_counts).mean()*100:.1f}")

# per (class,count) centroid readout
acc = 0
for i in range(len(bench_embs)):
    sims = []
    for v in range(2, 11):
        mask = (train_counts == v) & (train_cls == bench_cls[i])
        sims.append(bench_embs[i] @ train_embs[mask].mean(axis=0) if mask.any() else -9)
    acc += (np.argmax(sims) + 2) == bench_counts[i]
print(f"image-embedding per-class centroid readout: acc {acc/len(bench_embs)*100:.1f}")

# raw pixel mass oracle (per dominant class): nearest per-(class,count) mean mass
train_mass = np.stack([ex.raster.flat().sum() for ex in counting_examples])
bench_mass = bench_rasters.sum(axis=1)
acc = 0
for i in range(len(bench_mass)):
    means = []
    for v in range(2, 11):
        mask = (train_counts == v) & (train_cls == bench_cls[i])
        means.append(train_mass[mask].mean() if mask.any() else 1e9)
    acc += (np.argmin(np.abs(np.array(means) - bench_mass[i])) + 2) == bench_counts[i]
print(f"pixel-mass per-class oracle: acc {acc/len(bench_mass)*100:.1f}")

# text-side: margins between true and counterfactual caption embeddings
from countlab.captions import CaptionRecord, enumerate_caption_variants
margins = []
ranks = []
for r in benchmark.records[:45]:
    variants = enumerate_caption_variants(CaptionRecord.from_text(r.id, r.caption))
    embs, _ = encode_text_batch(params, [vocab.encode(v) for v in variants])
    img = bench_embs[list(benchmark.records).index(r)]
    sims = embs @ img
    true_idx = r.number.value - 2
    rank = (sims > sims[true_idx]).sum()
    ranks.append(rank)
    margins.append(sims[true_idx] - np.delete(sims, true_idx).max())
print(f"true-caption rank distribution: {np.bincount(ranks, minlength=9)}")
print(f"margin to best alternative: mean {np.mean(margins):.3f}")

# text variant geometry: pairwise sims of the 9 variants of one caption
variants = enumerate_caption_variants(CaptionRecord.from_text("x", "a photo of three discs"))
embs, _ = encode_text_batch(params, [vocab.encode(v) for v in variants])
gram = embs @ embs.T
print("variant gram row 'three':", np.round(gram[1], 2))
