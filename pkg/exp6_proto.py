"""Prototype of the end-to-end directional experiment (acceptance #6)."""
import time

import numpy as np

from countlab.cli import _generate_pool
from countlab.config import RunConfig
from countlab.curation import balance, build_benchmark, filter_record
from countlab.encoder import EncoderDims, Vocabulary
from countlab.evaluation import zero_shot_count
from countlab.records import to_accepted, to_counting_examples, to_general_examples
from countlab.seeding import derive_seed
from countlab.training import TrainConfig, train

t0 = time.time()
cfg = RunConfig(seed=2026)
pool = _generate_pool(cfg, 20000, "pool", "generate")
print(f"generate: {time.time()-t0:.1f}s, {len(pool)} records")

t1 = time.time()
accepted_records = []
for rec in pool:
    decision = filter_record(rec.scene, rec.caption, record_id=rec.id)
    if decision.outcome == "accepted":
        accepted_records.append(rec)
print(f"filter: {time.time()-t1:.1f}s, accepted {len(accepted_records)}")

by_id = {r.id: r for r in accepted_records}
accepted = to_accepted(accepted_records)

bench_rng = np.random.default_rng(derive_seed(cfg.seed, "bench"))
benchmark = build_benchmark(accepted, 5, set(), bench_rng)
bench_ids = benchmark.ids()
train_pool = [a for a in accepted if a.id not in bench_ids]
counting = balance(train_pool, cfg.curate.cap_low, np.random.default_rng(derive_seed(cfg.seed, "balance")))
print(f"benchmark {len(benchmark.records)}, counting set {len(counting.records)}")
from countlab.curation import dataset_stats
print("counting per number:", dataset_stats(counting).per_number)

t2 = time.time()
vocab = Vocabulary.default(cfg.classes)
dims = EncoderDims(len(vocab), 32, 64, 32, 32, 32)
cache = {}
counting_examples = to_counting_examples([by_id[r.id] for r in counting.records], vocab, cache)
general_examples = to_general_examples(pool, vocab, cache)
scenes = {rec.scene.id: rec.scene for rec in pool}
print(f"prepare: {time.time()-t2:.1f}s")

for lam in (1.0, 0.0):
    t3 = time.time()
    config = TrainConfig(
        batch_size=64, counting_fraction=1 / 8, loss_weight=lam,
        warmup_steps=1000, total_steps=5000, base_lr=1e-3,
        seed=derive_seed(cfg.seed, "train"),
    )
    params, metrics = train(config, general_examples, counting_examples, vocab, encoder_dims=dims)
    report = zero_shot_count(params, benchmark, scenes, vocab)
    print(
        f"lambda={lam}: accuracy {report.accuracy:.2f}, mean_dev {report.mean_deviation:.4f}, "
        f"train {time.time()-t3:.1f}s, final losses clip={metrics[-1].l_clip:.4f} count={metrics[-1].l_count:.4f}"
    )

print(f"total: {time.time()-t0:.1f}s")
