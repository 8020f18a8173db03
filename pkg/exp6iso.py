"""Factor isolation: counting-loss ceiling under different generators."""
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
import countlab.scenes as S

label = sys.argv[1]
glyph = int(sys.argv[2])
regions_on = sys.argv[3] == "1"
short_templates = sys.argv[4] == "1"
p_frac = float(sys.argv[5]) if len(sys.argv) > 5 else 0.9

if short_templates:
    S.DEFAULT_TEMPLATES = dict(S.DEFAULT_TEMPLATES)
    S.DEFAULT_TEMPLATES["true_count"] = (
        "a photo of {number} {objects}",
        "{number} {objects}",
    )

region_weights = None if not regions_on else {"full": 0.2, "left": 0.2, "right": 0.2, "top": 0.2, "bottom": 0.2}
gen = GenerateSettings(region_weights=region_weights or {"full": 1.0})
cfg = RunConfig(seed=2026, glyph_size=glyph, generate=gen)

pool = _generate_pool(cfg, 8000, "pool", "generate")
acc_recs = [r for r in pool if filter_record(r.scene, r.caption, record_id=r.id).outcome == "accepted"]
by_id = {r.id: r for r in acc_recs}
accepted = to_accepted(acc_recs)
benchmark = build_benchmark(accepted, 5, set(), np.random.default_rng(derive_seed(cfg.seed, "bench")))
bids = benchmark.ids()
counting = balance([a for a in accepted if a.id not in bids], 2000, np.random.default_rng(derive_seed(cfg.seed, "balance")))
vocab = Vocabulary.default(cfg.classes)
dims = EncoderDims(len(vocab), 32, 64, 32, 32, 32)
cache = {}
ce = to_counting_examples([by_id[r.id] for r in counting.records], vocab, cache)
ge = to_general_examples(pool, vocab, cache)
scenes = {r.scene.id: r.scene for r in pool}

config = TrainConfig(batch_size=64, counting_fraction=p_frac, loss_weight=1.0, warmup_steps=0,
                     total_steps=5000, base_lr=3e-3, seed=derive_seed(cfg.seed, "train"))
t0 = time.time()
params, metrics = train(config, ge, ce, vocab, encoder_dims=dims)
report = zero_shot_count(params, benchmark, scenes, vocab)
tail = np.mean([m.l_count for m in metrics[-200:]])
print(f"{label}: acc {report.accuracy:.1f} md {report.mean_deviation:.3f} "
      f"l_count_tail {tail:.3f} ({time.time()-t0:.0f}s, counting={len(ce)})")
