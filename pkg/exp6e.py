"""Two-seed measurement of the directional gap for a knob setting."""
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

lr = float(sys.argv[1])
true_w = float(sys.argv[2]) if len(sys.argv) > 2 else 0.15
warmup = int(sys.argv[3]) if len(sys.argv) > 3 else 1000
seeds = [int(s) for s in (sys.argv[4].split(",") if len(sys.argv) > 4 else ["2026", "7"])]

rest = 1.0 - true_w - 0.05
weights = {"true_count": true_w, "wrong_count": rest * 0.10, "digit_distractor": rest * 0.21,
           "non_count_number": rest * 0.13, "no_number": rest * 0.56, "amount_modifier": 0.05}

for seed in seeds:
    cfg = RunConfig(seed=seed, generate=GenerateSettings(mode_weights=weights))
    pool = _generate_pool(cfg, 20000, "pool", "generate")
    acc_recs = [r for r in pool if filter_record(r.scene, r.caption, record_id=r.id).outcome == "accepted"]
    by_id = {r.id: r for r in acc_recs}
    accepted = to_accepted(acc_recs)
    benchmark = build_benchmark(accepted, 5, set(), np.random.default_rng(derive_seed(cfg.seed, "bench")))
    bids = benchmark.ids()
    counting = balance([a for a in accepted if a.id not in bids], 2000,
                       np.random.default_rng(derive_seed(cfg.seed, "balance")))
    vocab = Vocabulary.default(cfg.classes)
    dims = EncoderDims(len(vocab), 32, 64, 32, 32, 32)
    cache = {}
    ce = to_counting_examples([by_id[r.id] for r in counting.records], vocab, cache)
    ge = to_general_examples(pool, vocab, cache)
    scenes = {r.scene.id: r.scene for r in pool}
    res = {}
    for lam in (1.0, 0.0):
        config = TrainConfig(batch_size=64, counting_fraction=1 / 8, loss_weight=lam,
                             warmup_steps=warmup, total_steps=5000, base_lr=lr,
                             seed=derive_seed(cfg.seed, "train"))
        params, _ = train(config, ge, ce, vocab, encoder_dims=dims)
        res[lam] = zero_shot_count(params, benchmark, scenes, vocab)
    gap = res[1.0].accuracy - res[0.0].accuracy
    ratio = res[0.0].mean_deviation / max(res[1.0].mean_deviation, 1e-9)
    print(f"seed {seed} lr={lr} true_w={true_w} W={warmup}: "
          f"lam1 {res[1.0].accuracy:.1f}/{res[1.0].mean_deviation:.3f}  "
          f"lam0 {res[0.0].accuracy:.1f}/{res[0.0].mean_deviation:.3f}  "
          f"GAP {gap:.1f} ratio {ratio:.2f}")
