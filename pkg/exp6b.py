"""Knob exploration for the directional experiment."""
import sys
import time

import numpy as np

from countlab.cli import _generate_pool
from countlab.config import GenerateSettings, RunConfig
from countlab.curation import balance, build_benchmark, filter_record
from countlab.encoder import EncoderDims, Vocabulary
from countlab.evaluation import zero_shot_count
from countlab.records import to_accepted, to_counting_examples, to_general_examples
from countlab.seeding import derive_seed
from countlab.training import TrainConfig, train

n_pool = int(sys.argv[1]) if len(sys.argv) > 1 else 20000
lr = float(sys.argv[2]) if len(sys.argv) > 2 else 1e-3
hidden = int(sys.argv[3]) if len(sys.argv) > 3 else 64
distractor_prob = float(sys.argv[4]) if len(sys.argv) > 4 else 0.5
steps = int(sys.argv[5]) if len(sys.argv) > 5 else 5000

cfg = RunConfig(seed=2026, generate=GenerateSettings(distractor_prob=distractor_prob))
t0 = time.time()
pool = _generate_pool(cfg, n_pool, "pool", "generate")
accepted_records = [r for r in pool if filter_record(r.scene, r.caption, record_id=r.id).outcome == "accepted"]
by_id = {r.id: r for r in accepted_records}
accepted = to_accepted(accepted_records)
benchmark = build_benchmark(accepted, 5, set(), np.random.default_rng(derive_seed(cfg.seed, "bench")))
bench_ids = benchmark.ids()
train_pool = [a for a in accepted if a.id not in bench_ids]
counting = balance(train_pool, cfg.curate.cap_low, np.random.default_rng(derive_seed(cfg.seed, "balance")))

vocab = Vocabulary.default(cfg.classes)
dims = EncoderDims(len(vocab), 32, hidden, 32, 32, 32)
cache = {}
counting_examples = to_counting_examples([by_id[r.id] for r in counting.records], vocab, cache)
general_examples = to_general_examples(pool, vocab, cache)
scenes = {rec.scene.id: rec.scene for rec in pool}
print(f"setup {time.time()-t0:.0f}s pool={n_pool} lr={lr} h={hidden} dp={distractor_prob} T={steps}")

for lam in (1.0, 0.0):
    t3 = time.time()
    config = TrainConfig(
        batch_size=64, counting_fraction=1 / 8, loss_weight=lam,
        warmup_steps=1000, total_steps=steps, base_lr=lr,
        seed=derive_seed(cfg.seed, "train"),
    )
    params, metrics = train(config, general_examples, counting_examples, vocab, encoder_dims=dims)
    report = zero_shot_count(params, benchmark, scenes, vocab)
    curve = [f"{metrics[i].l_count:.3f}" for i in range(0, steps, max(1, steps // 8))]
    print(
        f"lambda={lam}: acc {report.accuracy:.2f} md {report.mean_deviation:.3f} "
        f"({time.time()-t3:.0f}s) clip={metrics[-1].l_clip:.3f} l_count curve: {curve}"
    )
