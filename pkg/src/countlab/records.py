"""Line-delimited dataset record files and example preparation.

Each record file starts with a '#' header comment; every other non-blank
line is one JSON object with sorted keys, so identical pipelines produce
byte-identical files and rejection logs can cite line numbers.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .captions import CaptionRecord, NumberWord, extract_spelled_numbers
from .curation import AcceptedRecord
from .encoder import Vocabulary
from .errors import DataError
from .scenes import Placement, Raster, SceneSpec, render
from .training import CountingExample, GeneralExample

__all__ = [
    "PoolRecord",
    "scene_to_dict",
    "scene_from_dict",
    "write_records",
    "read_records",
    "read_id_file",
    "write_text_atomic",
    "to_accepted",
    "to_general_examples",
    "to_counting_examples",
]


@dataclass(frozen=True)
class PoolRecord:
    """One dataset line: an id, split tag, caption, and its scene."""

    id: str
    split: str
    caption: str
    scene: SceneSpec
    mode: str | None = None
    number: int | None = None
    flags: tuple[str, ...] = ()


def scene_to_dict(scene: SceneSpec) -> dict:
    return {
        "id": scene.id,
        "counts": {str(k): v for k, v in sorted(scene.counts.items())},
        "layout": scene.layout,
        "canvas": list(scene.canvas),
        "placements": [[p.class_id, p.cx, p.cy, p.size] for p in scene.placements],
        "seed": scene.seed,
        "region": scene.region,
    }


def scene_from_dict(data: dict) -> SceneSpec:
    return SceneSpec(
        id=data["id"],
        counts={int(k): int(v) for k, v in data["counts"].items()},
        layout=data["layout"],
        canvas=tuple(data["canvas"]),
        placements=tuple(Placement(int(c), float(x), float(y), int(s)) for c, x, y, s in data["placements"]),
        seed=int(data["seed"]),
        region=data.get("region", "full"),
    )


def _record_to_json(record: PoolRecord) -> str:
    payload = {
        "id": record.id,
        "split": record.split,
        "caption": record.caption,
        "scene": scene_to_dict(record.scene),
        "mode": record.mode,
        "number": record.number,
        "flags": list(record.flags),
    }
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def _record_from_json(data: dict) -> PoolRecord:
    return PoolRecord(
        id=data["id"],
        split=data["split"],
        caption=data["caption"],
        scene=scene_from_dict(data["scene"]),
        mode=data.get("mode"),
        number=data.get("number"),
        flags=tuple(data.get("flags") or ()),
    )


def write_text_atomic(path, content: str) -> None:
    """Write via a temp file and rename, so readers never see partial files."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    try:
        tmp.write_text(content, encoding="utf-8", newline="\n")
        os.replace(tmp, path)
    except OSError as err:
        raise DataError(f"cannot write {path}: {err}") from err


def write_records(path, records: Iterable[PoolRecord], header: str) -> None:
    lines = [f"# {header}"]
    lines.extend(_record_to_json(r) for r in records)
    write_text_atomic(path, "\n".join(lines) + "\n")


def read_records(path) -> list[PoolRecord]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as err:
        raise DataError(f"cannot read {path}: {err}") from err
    records = []
    seen: set[str] = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        try:
            record = _record_from_json(json.loads(stripped))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as err:
            raise DataError(f"{path}:{lineno}: malformed record ({err})") from err
        if record.id in seen:
            raise DataError(f"{path}:{lineno}: duplicate record id {record.id!r}")
        seen.add(record.id)
        records.append(record)
    return records


def read_id_file(path) -> set[str]:
    """Record ids from a dataset file or a plain one-id-per-line list."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as err:
        raise DataError(f"cannot read {path}: {err}") from err
    ids = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if stripped.startswith("{"):
            try:
                ids.add(json.loads(stripped)["id"])
            except (json.JSONDecodeError, KeyError) as err:
                raise DataError(f"{path}:{lineno}: malformed record ({err})") from err
        else:
            ids.add(stripped)
    return ids


def to_accepted(records: Sequence[PoolRecord]) -> list[AcceptedRecord]:
    """View records as accepted curation output, recovering the number."""
    accepted = []
    for rec in records:
        if rec.number is not None:
            number = NumberWord.from_value(rec.number)
        else:
            occurrences = extract_spelled_numbers(rec.caption)
            if len(occurrences) != 1:
                raise DataError(f"record {rec.id!r} has no unambiguous spelled number")
            number = occurrences[0][0]
        accepted.append(AcceptedRecord(rec.id, rec.scene.id, rec.caption, number))
    return accepted


def _render_cached(scene: SceneSpec, cache: dict[str, Raster] | None) -> Raster:
    if cache is None:
        return render(scene)
    if scene.id not in cache:
        cache[scene.id] = render(scene)
    return cache[scene.id]


def to_general_examples(
    records: Sequence[PoolRecord], vocab: Vocabulary, render_cache: dict[str, Raster] | None = None
) -> list[GeneralExample]:
    return [
        GeneralExample(rec.id, _render_cached(rec.scene, render_cache), tuple(vocab.encode(rec.caption)))
        for rec in records
    ]


def to_counting_examples(
    records: Sequence[PoolRecord], vocab: Vocabulary, render_cache: dict[str, Raster] | None = None
) -> list[CountingExample]:
    examples = []
    for rec in records:
        caption = CaptionRecord.from_text(rec.id, rec.caption)
        if len(caption.occurrences) != 1:
            raise DataError(f"counting record {rec.id!r} lacks a single spelled number")
        examples.append(
            CountingExample(
                rec.id,
                _render_cached(rec.scene, render_cache),
                caption,
                tuple(vocab.encode(rec.caption)),
                caption.occurrences[0][0],
            )
        )
    return examples
