"""Instrument counting-alignment dynamics during training."""
import sys

import numpy as np

from countlab.cli import _generate_pool
from countlab.config import GenerateSettings, RunConfig
from countlab.curation import balance, build_benchmark, filter_record
from countlab.encoder import EncoderDims, Vocabulary, encode_image_batch, encode_text_batch
from countlab.evaluation import zero_shot_count
from countlab.records import to_accepted, to_counting_examples, to_general_examples
from countlab.seeding import derive_seed
from countlab.training import TrainConfig, train

p_frac = float(sys.argv[1]) if len(sys.argv) > 1 else 1 / 8

weights = {'true_count': 0.15, 'wrong_count': 0.08, 'digit_distractor': 0.17,
           'non_count_number': 0.10, 'no_number': 0.45, 'amount_modifier': 0.05}
cfg = RunConfig(seed=2026, generate=GenerateSettings(mode_weights=weights))
pool = _generate_pool(cfg, 20000, "pool", "generate")
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
scenes = {rec.scene.id: rec.scene for rec in pool}

# fixed probe: 90 counting examples, true caption vs the value+1 swap (wrap)
probe = ce[:90]
probe_pixels = np.stack([ex.raster.flat() for ex in probe])
probe_tokens = [ex.tokens for ex in probe]
number_ids = {v: vocab.index_of(w) for v, w in
              zip(range(2, 11), ["two", "three", "four", "five", "six", "seven", "eight", "nine", "ten"])}
probe_cf_tokens = []
for ex in probe:
    alt = 2 + (ex.number.value - 2 + 4) % 9
    toks = list(ex.tokens)
    toks[toks.index(number_ids[ex.number.value])] = number_ids[alt]
    probe_cf_tokens.append(tuple(toks))


def probe_stats(step, params):
    ei, _ = encode_image_batch(params, probe_pixels)
    et, _ = encode_text_batch(params, probe_tokens)
    ecf, _ = encode_text_batch(params, probe_cf_tokens)
    margins = np.sum(ei * (et - ecf), axis=1)
    text_sep = np.linalg.norm(et - ecf, axis=1)
    rows = params.text_embedding[[number_ids[v] for v in range(2, 11)]]
    row_norm = np.linalg.norm(rows, axis=1).mean()
    row_spread = np.linalg.norm(rows - rows.mean(0), axis=1).mean()
    report = zero_shot_count(params, benchmark, scenes, vocab)
    print(f"  step {step:5d}: margin {margins.mean():+.3f}  text_sep {text_sep.mean():.3f}  "
          f"num_row_norm {row_norm:.2f} spread {row_spread:.2f}  zs_acc {report.accuracy:.1f}")


config = TrainConfig(batch_size=64, counting_fraction=p_frac, loss_weight=1.0,
                     warmup_steps=1000, total_steps=5000, base_lr=3e-3,
                     seed=derive_seed(cfg.seed, "train"), eval_every=500)
print(f"p = {p_frac}")
params, metrics = train(config, ge, ce, vocab, encoder_dims=dims, eval_hook=probe_stats)
