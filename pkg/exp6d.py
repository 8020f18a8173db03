"""Capacity/lr sweep on the pinned experiment settings."""
import sys
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

lr = float(sys.argv[1])
hidden = int(sys.argv[2])
embed = int(sys.argv[3]) if len(sys.argv) > 3 else 32
lams = [float(x) for x in sys.argv[4].split(",")] if len(sys.argv) > 4 else [1.0]
warmup = int(sys.argv[5]) if len(sys.argv) > 5 else 1000

cfg = RunConfig(seed=2026)
pool = _generate_pool(cfg, 20000, "pool", "generate")
acc_recs = [r for r in pool if filter_record(r.scene, r.caption, record_id=r.id).outcome == "accepted"]
by_id = {r.id: r for r in acc_recs}
accepted = to_accepted(acc_recs)
benchmark = build_benchmark(accepted, 5, set(), np.random.default_rng(derive_seed(cfg.seed, "bench")))
bids = benchmark.ids()
counting = balance([a for a in accepted if a.id not in bids], cfg.curate.cap_low,
                   np.random.default_rng(derive_seed(cfg.seed, "balance")))
vocab = Vocabulary.default(cfg.classes)
dims = EncoderDims(len(vocab), 32, hidden, embed, 32, 32)
cache = {}
ce = to_counting_examples([by_id[r.id] for r in counting.records], vocab, cache)
ge = to_general_examples(pool, vocab, cache)
scenes = {r.scene.id: r.scene for r in pool}

for lam in lams:
    config = TrainConfig(batch_size=64, counting_fraction=1 / 8, loss_weight=lam,
                         warmup_steps=warmup, total_steps=5000, base_lr=lr,
                         seed=derive_seed(cfg.seed, "train"))
    t0 = time.time()
    params, metrics = train(config, ge, ce, vocab, encoder_dims=dims)
    report = zero_shot_count(params, benchmark, scenes, vocab)
    tail = np.mean([m.l_count for m in metrics[-200:]])
    print(f"lr={lr} h={hidden} d_e={embed} W={warmup} lam={lam}: "
          f"acc {report.accuracy:.1f} md {report.mean_deviation:.3f} l_count_tail {tail:.3f} "
          f"clip={metrics[-1].l_clip:.3f} ({time.time()-t0:.0f}s)")
