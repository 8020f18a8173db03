"""Mode-mix and distractor exploration for the directional gap."""
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

true_w = float(sys.argv[1]) if len(sys.argv) > 1 else 0.15
dp = float(sys.argv[2]) if len(sys.argv) > 2 else 0.25
lr = float(sys.argv[3]) if len(sys.argv) > 3 else 3e-3
n_pool = int(sys.argv[4]) if len(sys.argv) > 4 else 20000
seed = int(sys.argv[5]) if len(sys.argv) > 5 else 2026

rest = 1.0 - true_w
weights = {
    "true_count": true_w,
    "wrong_count": rest * 0.20,
    "digit_distractor": rest * 0.22,
    "non_count_number": rest * 0.23,
    "no_number": rest * 0.29,
    "amount_modifier": rest * 0.06,
}
cfg = RunConfig(seed=seed, generate=GenerateSettings(distractor_prob=dp, mode_weights=weights))
t0 = time.time()
pool = _generate_pool(cfg, n_pool, "pool", "generate")
acc_recs = [r for r in pool if filter_record(r.scene, r.caption, record_id=r.id).outcome == "accepted"]
by_id = {r.id: r for r in acc_recs}
accepted = to_accepted(acc_recs)
benchmark = build_benchmark(accepted, 5, set(), np.random.default_rng(derive_seed(cfg.seed, "bench")))
bids = benchmark.ids()
counting = balance([a for a in accepted if a.id not in bids], cfg.curate.cap_low,
                   np.random.default_rng(derive_seed(cfg.seed, "balance")))
vocab = Vocabulary.default(cfg.classes)
dims = EncoderDims(len(vocab), 32, 64, 32, 32, 32)
cache = {}
ce = to_counting_examples([by_id[r.id] for r in counting.records], vocab, cache)
ge = to_general_examples(pool, vocab, cache)
scenes = {r.scene.id: r.scene for r in pool}
print(f"true_w={true_w} dp={dp} lr={lr} pool={n_pool} seed={seed} "
      f"accepted={len(accepted)} counting={len(counting.records)} setup={time.time()-t0:.0f}s")

results = {}
for lam in (1.0, 0.0):
    t3 = time.time()
    config = TrainConfig(batch_size=64, counting_fraction=1 / 8, loss_weight=lam,
                         warmup_steps=1000, total_steps=5000, base_lr=lr,
                         seed=derive_seed(cfg.seed, "train"))
    params, metrics = train(config, ge, ce, vocab, encoder_dims=dims)
    report = zero_shot_count(params, benchmark, scenes, vocab)
    results[lam] = report
    print(f"lambda={lam}: acc {report.accuracy:.2f} md {report.mean_deviation:.3f} ({time.time()-t3:.0f}s) "
          f"l_count={metrics[-1].l_count:.3f}")
gap = results[1.0].accuracy - results[0.0].accuracy
ratio = results[0.0].mean_deviation / max(results[1.0].mean_deviation, 1e-9)
print(f"GAP {gap:.1f} pts; md ratio {ratio:.2f}")
