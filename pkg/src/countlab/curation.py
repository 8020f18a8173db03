"""Filtering, balancing, and benchmark construction for counting records.

A record is accepted when its caption is a counting candidate and the
detector's maximally-detected count agrees with the caption's spelled
number. Rejections name the first failing stage, in a fixed order, so the
pipeline is auditable.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .captions import CaptionRecord, NumberWord, has_amount_modifier
from .errors import DataError, UsageError
from .scenes import NO_NOISE, DetectorNoise, SceneSpec, detect

__all__ = [
    "REJECT_REASONS",
    "CurationDecision",
    "AcceptedRecord",
    "CountingSet",
    "Benchmark",
    "DatasetStats",
    "filter_record",
    "balance",
    "build_benchmark",
    "dataset_stats",
]

REJECT_REASONS = (
    "no_spelled_number",
    "multiple_numbers",
    "amount_modifier",
    "count_mismatch",
)


@dataclass(frozen=True)
class CurationDecision:
    record_id: str
    outcome: str  # "accepted" or "rejected"
    number: NumberWord | None = None
    reject_reason: str | None = None

    def __post_init__(self):
        if self.outcome == "accepted":
            if self.number is None or self.reject_reason is not None:
                raise UsageError("accepted decisions carry a number and no reason")
        elif self.outcome == "rejected":
            if self.reject_reason not in REJECT_REASONS or self.number is not None:
                raise UsageError("rejected decisions carry a known reason and no number")
        else:
            raise UsageError(f"unknown outcome {self.outcome!r}")


@dataclass(frozen=True)
class AcceptedRecord:
    """A (scene, caption) pair that passed the full filter."""

    id: str
    scene_id: str
    caption: str
    number: NumberWord


@dataclass(frozen=True)
class CountingSet:
    """The filtered, balanced training subset."""

    records: tuple[AcceptedRecord, ...]
    per_number_counts: dict[int, int]

    @classmethod
    def from_records(cls, records: Sequence[AcceptedRecord]) -> "CountingSet":
        counts = {v: 0 for v in range(2, 11)}
        for rec in records:
            counts[rec.number.value] += 1
        return cls(tuple(records), counts)

    def ids(self) -> set[str]:
        return {r.id for r in self.records}


@dataclass(frozen=True)
class Benchmark:
    """Held-out evaluation set with an equal quota of records per number."""

    records: tuple[AcceptedRecord, ...]
    quota: int

    def ids(self) -> set[str]:
        return {r.id for r in self.records}


@dataclass(frozen=True)
class DatasetStats:
    per_number: dict[int, int]
    total: int


def filter_record(
    scene: SceneSpec,
    caption: str,
    detector_noise: DetectorNoise = NO_NOISE,
    record_id: str | None = None,
) -> CurationDecision:
    """Run the staged filter on one (scene, caption) pair.

    Stages, in order: the caption must contain exactly one spelled number,
    must not pair it with an amount-modifier word, and the detector's
    maximally-detected count must equal the spelled value. The decision
    follows the detected count, not the true one, so detector noise can
    flip it.
    """
    rid = record_id if record_id is not None else scene.id
    record = CaptionRecord.from_text(rid, caption)
    if len(record.occurrences) == 0:
        return CurationDecision(rid, "rejected", reject_reason="no_spelled_number")
    if len(record.occurrences) > 1:
        return CurationDecision(rid, "rejected", reject_reason="multiple_numbers")
    if has_amount_modifier(record):
        return CurationDecision(rid, "rejected", reject_reason="amount_modifier")
    number = record.occurrences[0][0]
    if detect(scene, detector_noise).max_count != number.value:
        return CurationDecision(rid, "rejected", reject_reason="count_mismatch")
    return CurationDecision(rid, "accepted", number=number)


def _grouped_by_value(records: Iterable[AcceptedRecord]) -> dict[int, list[AcceptedRecord]]:
    groups: dict[int, list[AcceptedRecord]] = {v: [] for v in range(2, 11)}
    for rec in records:
        groups[rec.number.value].append(rec)
    for group in groups.values():
        group.sort(key=lambda r: r.id)
    return groups


def balance(
    accepted: Sequence[AcceptedRecord],
    cap_low: int,
    rng: np.random.Generator,
    low_values: tuple[int, ...] = (2, 3, 4, 5, 6),
) -> CountingSet:
    """Balance the accepted pool: cap the frequent low numbers, keep the rest.

    For values in ``low_values`` a uniform sample without replacement of at
    most ``cap_low`` records is kept; for the scarce high values every
    accepted record is kept. Deterministic given the rng state (records are
    id-sorted before sampling so input order is irrelevant).
    """
    if cap_low < 0:
        raise UsageError("cap_low must be non-negative")
    groups = _grouped_by_value(accepted)
    kept: list[AcceptedRecord] = []
    for value in range(2, 11):
        group = groups[value]
        if value in low_values and len(group) > cap_low:
            chosen = rng.permutation(len(group))[:cap_low]
            kept.extend(group[i] for i in sorted(chosen))
        else:
            kept.extend(group)
    return CountingSet.from_records(kept)


def build_benchmark(
    pool: Sequence[AcceptedRecord],
    quota: int,
    exclusion_ids: set[str],
    rng: np.random.Generator,
) -> Benchmark:
    """Sample exactly ``quota`` records per number, avoiding excluded ids."""
    if quota < 1:
        raise UsageError("quota must be at least 1")
    groups = _grouped_by_value(r for r in pool if r.id not in exclusion_ids)
    deficient = [v for v in range(2, 11) if len(groups[v]) < quota]
    if deficient:
        have = {v: len(groups[v]) for v in deficient}
        raise DataError(
            f"pool cannot fill quota {quota} for numbers {deficient} (available: {have})"
        )
    chosen: list[AcceptedRecord] = []
    for value in range(2, 11):
        group = groups[value]
        picks = rng.permutation(len(group))[:quota]
        chosen.extend(group[i] for i in sorted(picks))
    return Benchmark(tuple(chosen), quota)


def dataset_stats(dataset) -> DatasetStats:
    """Per-number record counts for a CountingSet, Benchmark, or record list."""
    records = getattr(dataset, "records", dataset)
    per_number = {v: 0 for v in range(2, 11)}
    for rec in records:
        per_number[rec.number.value] += 1
    return DatasetStats(per_number, sum(per_number.values()))
