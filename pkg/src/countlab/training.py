"""Contrastive and counting losses, batch composition, and the training loop.

The combined objective is

    total = clip_loss + effective_lambda(step) * counting_loss

where the clip loss is the symmetric InfoNCE over all (image, true caption)
pairs in the step (general and counting alike, scaled by exp(log_scale)),
and the counting loss is a per-triplet two-way softmax between the image's
similarity to its true caption and to a counterfactual caption, on raw dot
products with no temperature. Counterfactual captions never enter the clip
loss. All gradients are analytic and validated by finite differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .captions import CaptionRecord, NumberWord, make_counterfactual
from .encoder import (
    EncoderDims,
    Params,
    Vocabulary,
    encode_image_batch,
    encode_text_batch,
    image_backward,
    init_params,
    text_backward,
)
from .errors import DataError, DivergenceError, UsageError
from .scenes import Raster
from .seeding import derive_seed

__all__ = [
    "TrainConfig",
    "LossReport",
    "MetricsRow",
    "GeneralExample",
    "CountingExample",
    "CountingTriplet",
    "l_clip",
    "l_count",
    "effective_lambda",
    "learning_rate",
    "combined_loss",
    "compose_batch",
    "counting_batch_size",
    "train",
]


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    counting_fraction: float = 0.125
    loss_weight: float = 1.0
    warmup_steps: int = 1000
    total_steps: int = 5000
    base_lr: float = 1e-3
    lr_schedule: str = "cosine"
    optimizer: str = "adam"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    sgd_momentum: float = 0.0
    seed: int = 0
    eval_every: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise UsageError("batch_size must be positive")
        if not 0.0 < self.counting_fraction < 1.0:
            raise UsageError("counting_fraction must lie in (0, 1)")
        if self.loss_weight < 0.0:
            raise UsageError("loss_weight must be non-negative")
        if self.warmup_steps < 0 or self.total_steps < 0:
            raise UsageError("step counts must be non-negative")
        if self.warmup_steps > self.total_steps:
            raise UsageError("warmup_steps cannot exceed total_steps")
        if self.lr_schedule not in ("cosine", "constant"):
            raise UsageError(f"unknown lr_schedule {self.lr_schedule!r}")
        if self.optimizer not in ("adam", "sgd"):
            raise UsageError(f"unknown optimizer {self.optimizer!r}")
        if self.loss_weight > 0 and math.ceil(self.counting_fraction * self.batch_size) < 1:
            raise UsageError("counting fraction yields an empty counting batch")


@dataclass(frozen=True)
class LossReport:
    l_clip: float
    l_count: float
    l_total: float
    effective_lambda: float
    step: int


@dataclass(frozen=True)
class MetricsRow:
    step: int
    l_clip: float
    l_count: float
    l_total: float
    effective_lambda: float
    lr: float


@dataclass(frozen=True)
class GeneralExample:
    """An (image, caption) pair for the clip loss."""

    id: str
    raster: Raster
    tokens: tuple[int, ...]


@dataclass(frozen=True)
class CountingExample:
    """A curated counting record, ready for per-batch counterfactual swaps."""

    id: str
    raster: Raster
    record: CaptionRecord
    tokens: tuple[int, ...]
    number: NumberWord


@dataclass(frozen=True)
class CountingTriplet:
    """(image, true caption, counterfactual caption) as token lists."""

    scene_id: str
    raster: Raster
    caption_tokens: tuple[int, ...]
    counterfactual_tokens: tuple[int, ...]


def validate_triplet(triplet: CountingTriplet, number_token_ids: frozenset[int]) -> None:
    a, b = triplet.caption_tokens, triplet.counterfactual_tokens
    if len(a) != len(b):
        raise DataError(f"triplet {triplet.scene_id}: token lists differ in length")
    diffs = [i for i, (u, v) in enumerate(zip(a, b)) if u != v]
    if len(diffs) != 1 or a[diffs[0]] not in number_token_ids or b[diffs[0]] not in number_token_ids:
        raise DataError(
            f"triplet {triplet.scene_id}: captions must differ in exactly one number token"
        )


def _logsumexp_rows(m: np.ndarray) -> np.ndarray:
    top = m.max(axis=1, keepdims=True)
    return (top + np.log(np.exp(m - top).sum(axis=1, keepdims=True)))[:, 0]


def _clip_forward(image_embs: np.ndarray, text_embs: np.ndarray, log_scale: float):
    n = image_embs.shape[0]
    if n == 0:
        raise UsageError("clip loss needs at least one pair")
    scale = float(np.exp(log_scale))  # may overflow to inf; the divergence guard catches it
    sims = image_embs @ text_embs.T
    logits = scale * sims
    diag = np.diag(logits)
    row_loss = (_logsumexp_rows(logits) - diag).mean()
    col_loss = (_logsumexp_rows(logits.T) - diag).mean()
    return 0.5 * (row_loss + col_loss), sims, logits, scale


def l_clip(image_embs: np.ndarray, text_embs: np.ndarray, log_scale: float) -> float:
    """Symmetric InfoNCE over N matched pairs, stabilized with max subtraction."""
    image_embs = np.asarray(image_embs, dtype=np.float64)
    text_embs = np.asarray(text_embs, dtype=np.float64)
    if image_embs.shape != text_embs.shape:
        raise UsageError("image and text embedding batches must have equal shape")
    return float(_clip_forward(image_embs, text_embs, log_scale)[0])


def _clip_grads(image_embs: np.ndarray, text_embs: np.ndarray, log_scale: float):
    """Loss plus gradients w.r.t. both embedding batches and log_scale.

    With L = scale * sims and P/Q the row/column softmaxes of L, the
    derivative of the symmetric cross-entropy w.r.t. L is
    ((P - I) + (Q - I)) / (2N).
    """
    loss, sims, logits, scale = _clip_forward(image_embs, text_embs, log_scale)
    n = logits.shape[0]
    row_soft = np.exp(logits - _logsumexp_rows(logits)[:, None])
    col_soft = np.exp(logits - _logsumexp_rows(logits.T)[None, :])
    eye = np.eye(n)
    d_logits = ((row_soft - eye) + (col_soft - eye)) / (2 * n)
    d_sims = scale * d_logits
    d_images = d_sims @ text_embs
    d_texts = d_sims.T @ image_embs
    d_log_scale = float(scale * np.sum(d_logits * sims))
    return loss, d_images, d_texts, d_log_scale


def l_count(
    image_embs: np.ndarray, text_embs: np.ndarray, counterfactual_embs: np.ndarray
) -> float:
    """Counting loss: mean softplus of the negated (true - counterfactual) margin.

    Per triplet the term is -log(exp(s_pos) / (exp(s_pos) + exp(s_neg)))
    with raw dot products, computed as log(1 + exp(-(s_pos - s_neg))).
    """
    margins = _count_margins(image_embs, text_embs, counterfactual_embs)
    return float(np.logaddexp(0.0, -margins).mean())


def _count_margins(image_embs, text_embs, counterfactual_embs) -> np.ndarray:
    image_embs = np.asarray(image_embs, dtype=np.float64)
    if image_embs.shape[0] == 0:
        raise UsageError("counting loss needs at least one triplet")
    s_pos = np.sum(image_embs * text_embs, axis=1)
    s_neg = np.sum(image_embs * counterfactual_embs, axis=1)
    return s_pos - s_neg


def _count_grads(image_embs, text_embs, counterfactual_embs):
    margins = _count_margins(image_embs, text_embs, counterfactual_embs)
    loss = float(np.logaddexp(0.0, -margins).mean())
    n = margins.shape[0]
    # d/dm log(1 + exp(-m)) = -sigmoid(-m)
    d_margin = (-_sigmoid(-margins) / n)[:, None]
    d_images = d_margin * (text_embs - counterfactual_embs)
    d_texts = d_margin * image_embs
    d_counterfactuals = -d_margin * image_embs
    return loss, d_images, d_texts, d_counterfactuals


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def effective_lambda(step: int, loss_weight: float, warmup_steps: int) -> float:
    """Linear warm-up of the counting-loss weight over the first W steps."""
    if step < 0:
        raise UsageError("step must be non-negative")
    if warmup_steps <= 0:
        return loss_weight
    return loss_weight * min(1.0, step / warmup_steps)


def learning_rate(step: int, config: TrainConfig) -> float:
    if config.lr_schedule == "constant" or config.total_steps == 0:
        return config.base_lr
    return config.base_lr * 0.5 * (1.0 + math.cos(math.pi * step / config.total_steps))


def combined_loss(
    params: Params,
    general_batch: Sequence[GeneralExample],
    counting_batch: Sequence[CountingTriplet],
    step: int,
    loss_weight: float,
    warmup_steps: int,
) -> tuple[LossReport, Params]:
    """Evaluate the combined objective and its exact parameter gradients.

    The clip loss sees the union of general pairs and counting (image, true
    caption) pairs; the counting loss sees only the triplets. With a zero
    loss weight and no counting batch, the counting term is reported as 0.
    """
    n_general = len(general_batch)
    n_counting = len(counting_batch)
    if n_general + n_counting == 0:
        raise UsageError("cannot evaluate the loss on an empty step")
    if n_counting == 0 and loss_weight > 0:
        raise UsageError("counting batch is empty but the counting loss is weighted")

    pixels = [ex.raster.flat() for ex in general_batch]
    pixels += [t.raster.flat() for t in counting_batch]
    token_lists = [ex.tokens for ex in general_batch]
    token_lists += [t.caption_tokens for t in counting_batch]
    cf_token_lists = [t.counterfactual_tokens for t in counting_batch]

    image_e, image_cache = encode_image_batch(params, np.stack(pixels))
    text_e, text_cache = encode_text_batch(params, list(token_lists) + list(cf_token_lists))
    n_pairs = n_general + n_counting
    clip_text_e = text_e[:n_pairs]
    cf_e = text_e[n_pairs:]

    clip_value, d_img, d_txt, d_log_scale = _clip_grads(image_e, clip_text_e, params.log_scale)

    eff = effective_lambda(step, loss_weight, warmup_steps)
    d_cf = np.zeros((n_counting, image_e.shape[1]))
    if n_counting > 0:
        count_value, dci, dct, dccf = _count_grads(
            image_e[n_general:], clip_text_e[n_general:], cf_e
        )
        d_img[n_general:] += eff * dci
        d_txt[n_general:] += eff * dct
        d_cf = eff * dccf
    else:
        count_value = 0.0

    total = clip_value + eff * count_value
    report = LossReport(clip_value, count_value, total, eff, step)

    grads = Params.zeros(params.dims)
    grads.log_scale = d_log_scale
    image_backward(params, image_cache, d_img, grads)
    text_backward(params, text_cache, np.vstack([d_txt, d_cf]), grads)
    return report, grads


def counting_batch_size(batch_size: int, counting_fraction: float) -> int:
    """Round half-up, with a floor of one triplet per batch."""
    return max(1, int(math.floor(counting_fraction * batch_size + 0.5)))


def compose_batch(
    general_pool: Sequence[GeneralExample],
    counting_pool: Sequence[CountingExample],
    batch_size: int,
    counting_fraction: float,
    rng: np.random.Generator,
    vocab: Vocabulary,
) -> tuple[list[GeneralExample], list[CountingTriplet]]:
    """Sample one batch without replacement; counterfactuals are drawn fresh.

    ``m = round(counting_fraction * batch_size)`` records come from the
    counting pool as triplets, the remaining ``batch_size - m`` from the
    general pool.
    """
    m = counting_batch_size(batch_size, counting_fraction)
    n_general = batch_size - m
    if len(general_pool) < n_general:
        raise DataError(
            f"general pool has {len(general_pool)} records, batch needs {n_general}"
        )
    if len(counting_pool) < m:
        raise DataError(f"counting pool has {len(counting_pool)} records, batch needs {m}")

    general_idx = rng.choice(len(general_pool), size=n_general, replace=False)
    counting_idx = rng.choice(len(counting_pool), size=m, replace=False)
    general_batch = [general_pool[int(i)] for i in general_idx]

    number_ids = vocab.number_token_ids()
    triplets = []
    for i in counting_idx:
        example = counting_pool[int(i)]
        swap = make_counterfactual(example.record, rng)
        triplet = CountingTriplet(
            scene_id=example.id,
            raster=example.raster,
            caption_tokens=example.tokens,
            counterfactual_tokens=tuple(vocab.encode(swap.text)),
        )
        validate_triplet(triplet, number_ids)
        triplets.append(triplet)
    return general_batch, triplets


class _Optimizer:
    def __init__(self, config: TrainConfig, n_params: int):
        self.config = config
        if config.optimizer == "adam":
            self.m = np.zeros(n_params)
            self.v = np.zeros(n_params)
            self.t = 0
        else:
            self.momentum = np.zeros(n_params)

    def update(self, vector: np.ndarray, grad: np.ndarray, lr: float) -> np.ndarray:
        cfg = self.config
        if cfg.optimizer == "adam":
            self.t += 1
            self.m = cfg.adam_beta1 * self.m + (1 - cfg.adam_beta1) * grad
            self.v = cfg.adam_beta2 * self.v + (1 - cfg.adam_beta2) * grad**2
            m_hat = self.m / (1 - cfg.adam_beta1**self.t)
            v_hat = self.v / (1 - cfg.adam_beta2**self.t)
            return vector - lr * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
        self.momentum = cfg.sgd_momentum * self.momentum + grad
        return vector - lr * self.momentum


def train(
    config: TrainConfig,
    general_pool: Sequence[GeneralExample],
    counting_pool: Sequence[CountingExample],
    vocab: Vocabulary,
    *,
    encoder_dims: EncoderDims | None = None,
    initial_params: Params | None = None,
    start_step: int = 0,
    eval_hook: Callable[[int, Params], None] | None = None,
    step_hook: Callable[[int, Params], None] | None = None,
) -> tuple[Params, list[MetricsRow]]:
    """Run the optimization loop; fully deterministic given the config seed.

    Per-step batch and counterfactual randomness is keyed by (seed, step),
    so resuming from a checkpoint at step k reproduces step k's batch and
    therefore its LossReport exactly.
    """
    if initial_params is not None:
        params = initial_params
    else:
        if encoder_dims is None:
            raise UsageError("train needs encoder_dims or initial_params")
        params = init_params(encoder_dims, derive_seed(config.seed, "init"))

    vector = params.to_vector()
    optimizer = _Optimizer(config, vector.size)
    batch_seed = derive_seed(config.seed, "batch")
    metrics: list[MetricsRow] = []

    for step in range(start_step, config.total_steps):
        rng = np.random.default_rng([batch_seed, step])
        general_batch, counting_batch = compose_batch(
            general_pool, counting_pool, config.batch_size, config.counting_fraction, rng, vocab
        )
        report, grads = combined_loss(
            params,
            general_batch,
            counting_batch,
            step=step,
            loss_weight=config.loss_weight,
            warmup_steps=config.warmup_steps,
        )
        if not math.isfinite(report.l_total):
            raise DivergenceError(f"non-finite loss {report.l_total} at step {step}")
        lr = learning_rate(step, config)
        vector = optimizer.update(vector, grads.to_vector(), lr)
        metrics.append(
            MetricsRow(step, report.l_clip, report.l_count, report.l_total, report.effective_lambda, lr)
        )
        params = Params.from_vector(params.dims, vector)
        if step_hook is not None:
            step_hook(step, params)
        if eval_hook is not None and config.eval_every > 0 and (step + 1) % config.eval_every == 0:
            eval_hook(step, params)

    return Params.from_vector(params.dims, vector), metrics
