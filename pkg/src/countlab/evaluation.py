"""Zero-shot counting evaluation and count-based image retrieval.

The counting protocol scores each benchmark image against all nine number
variants of its caption; the variant with the highest similarity is the
prediction, with ties resolved toward the lowest number. Retrieval ranks a
pool of images against a single counting caption.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .captions import CaptionRecord, enumerate_caption_variants, is_counting_candidate
from .curation import Benchmark
from .encoder import Params, Vocabulary, encode_image, encode_text_batch
from .errors import DataError, UsageError
from .scenes import Raster, SceneSpec, dominant_class, render

__all__ = [
    "EvalReport",
    "RetrievalResult",
    "aggregate_zero_shot",
    "zero_shot_count",
    "retrieve_topk",
    "retrieval_count_precision",
    "emit_report",
]

VALUES = tuple(range(2, 11))


@dataclass(frozen=True)
class EvalReport:
    """Zero-shot counting metrics over a benchmark.

    ``confusion`` rows are true values 2..10, columns predicted values;
    accuracies are percentages, ``mean_deviation`` is the mean absolute
    distance between predicted and true values.
    """

    accuracy: float
    mean_deviation: float
    confusion: np.ndarray
    per_number_accuracy: np.ndarray
    n_records: int


@dataclass(frozen=True)
class RetrievalResult:
    caption: str
    ranked: tuple[tuple[str, float], ...]
    k: int


def aggregate_zero_shot(true_values: Sequence[int], similarities: np.ndarray) -> EvalReport:
    """Reduce an (N, 9) similarity table to the counting metrics.

    Row i holds record i's similarity to the caption variants for values
    2..10 in order; the prediction is the argmax with ties going to the
    lowest value.
    """
    sims = np.asarray(similarities, dtype=np.float64)
    n = len(true_values)
    if n == 0:
        raise UsageError("cannot aggregate an empty benchmark")
    if sims.shape != (n, 9):
        raise UsageError(f"similarity table has shape {sims.shape}, expected ({n}, 9)")
    confusion = np.zeros((9, 9), dtype=np.int64)
    deviation_total = 0
    for i, true_value in enumerate(true_values):
        if true_value not in VALUES:
            raise DataError(f"record {i} has true value {true_value} outside 2..10")
        predicted = int(np.argmax(sims[i])) + 2  # first max = lowest value
        confusion[true_value - 2, predicted - 2] += 1
        deviation_total += abs(predicted - true_value)
    accuracy = 100.0 * np.trace(confusion) / n
    row_totals = confusion.sum(axis=1)
    per_number = np.zeros(9, dtype=np.float64)
    nonzero = row_totals > 0
    per_number[nonzero] = 100.0 * np.diag(confusion)[nonzero] / row_totals[nonzero]
    return EvalReport(
        accuracy=float(accuracy),
        mean_deviation=deviation_total / n,
        confusion=confusion,
        per_number_accuracy=per_number,
        n_records=n,
    )


def zero_shot_count(
    params: Params,
    benchmark: Benchmark,
    scenes: Mapping[str, SceneSpec],
    vocab: Vocabulary,
) -> EvalReport:
    """Run the nine-variant zero-shot counting protocol over a benchmark."""
    true_values = []
    rows = []
    for rec in benchmark.records:
        caption = CaptionRecord.from_text(rec.id, rec.caption)
        if not is_counting_candidate(caption):
            raise DataError(f"benchmark record {rec.id!r} is not a counting candidate")
        if rec.scene_id not in scenes:
            raise DataError(f"benchmark record {rec.id!r} references unknown scene {rec.scene_id!r}")
        variants = enumerate_caption_variants(caption)
        text_embs, _ = encode_text_batch(params, [vocab.encode(v) for v in variants])
        image_emb = encode_image(params, render(scenes[rec.scene_id]))
        rows.append(text_embs @ image_emb)
        true_values.append(rec.number.value)
    return aggregate_zero_shot(true_values, np.stack(rows))


def retrieve_topk(
    params: Params,
    image_pool: Sequence[tuple[str, Raster]],
    caption: str,
    k: int,
    vocab: Vocabulary,
) -> RetrievalResult:
    """Rank pool images by similarity to the caption; ties break by scene id."""
    if not image_pool:
        raise UsageError("image pool must be non-empty")
    if k < 1:
        raise UsageError("k must be at least 1")
    tokens = vocab.encode(caption)
    text_emb = np.asarray(encode_text_batch(params, [tokens])[0][0])
    scored = []
    for scene_id, raster in image_pool:
        image_emb = encode_image(params, raster)
        scored.append((scene_id, float(image_emb @ text_emb)))
    scored.sort(key=lambda pair: (-pair[1], pair[0]))
    return RetrievalResult(caption, tuple(scored[: min(k, len(scored))]), k)


def retrieval_count_precision(
    result: RetrievalResult, scene_lookup: Mapping[str, SceneSpec]
) -> float:
    """Fraction of retrieved images whose dominant count matches the caption."""
    record = CaptionRecord.from_text("query", result.caption)
    if not is_counting_candidate(record):
        raise UsageError(f"caption is not a counting candidate: {result.caption!r}")
    value = record.occurrences[0][0].value
    matches = 0
    for scene_id, _ in result.ranked:
        if scene_id not in scene_lookup:
            raise DataError(f"retrieval result references unknown scene {scene_id!r}")
        if dominant_class(scene_lookup[scene_id])[1] == value:
            matches += 1
    return matches / len(result.ranked)


def _write_text(path: Path, content: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    try:
        tmp.write_text(content, encoding="utf-8", newline="\n")
        os.replace(tmp, path)
    except OSError as err:
        raise DataError(f"cannot write {path}: {err}") from err


def emit_report(report: EvalReport, out_dir) -> list[Path]:
    """Write summary, confusion, and per-number CSVs; byte-deterministic."""
    if report.n_records < 1:
        raise UsageError("refusing to emit a report for an empty benchmark")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    summary = out / "summary.csv"
    _write_text(
        summary,
        "accuracy,mean_deviation,n_records\n"
        f"{report.accuracy!r},{report.mean_deviation!r},{report.n_records}\n",
    )

    confusion = out / "confusion.csv"
    lines = ["true\\pred," + ",".join(str(v) for v in VALUES)]
    for i, value in enumerate(VALUES):
        lines.append(f"{value}," + ",".join(str(int(c)) for c in report.confusion[i]))
    _write_text(confusion, "\n".join(lines) + "\n")

    per_number = out / "per_number.csv"
    lines = ["number,records,correct,accuracy"]
    for i, value in enumerate(VALUES):
        records = int(report.confusion[i].sum())
        correct = int(report.confusion[i, i])
        lines.append(f"{value},{records},{correct},{report.per_number_accuracy[i]!r}")
    _write_text(per_number, "\n".join(lines) + "\n")
    return [summary, confusion, per_number]
