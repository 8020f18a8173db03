"""Run configuration: one JSON file drives the whole pipeline.

Every section has defaults, so an empty config is valid; unknown keys are
rejected so typos cannot silently fall back to defaults.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import UsageError
from .scenes import CAPTION_MODES, DEFAULT_CLASS_NAMES, REGIONS

__all__ = [
    "EncoderSettings",
    "GenerateSettings",
    "CurateSettings",
    "BenchSettings",
    "TrainSettings",
    "RetrieveSettings",
    "SweepSettings",
    "RunConfig",
    "load_run_config",
]

# Accurate count captions are a small minority of the raw pool: numbers in
# web-style captions mostly mean dates, versions, prices, or nothing at all.
DEFAULT_MODE_WEIGHTS = {
    "true_count": 0.15,
    "wrong_count": 0.17,
    "digit_distractor": 0.19,
    "non_count_number": 0.19,
    "no_number": 0.25,
    "amount_modifier": 0.05,
}

DEFAULT_REGION_WEIGHTS = {
    "full": 0.2,
    "left": 0.2,
    "right": 0.2,
    "top": 0.2,
    "bottom": 0.2,
}


@dataclass(frozen=True)
class EncoderSettings:
    token_dim: int = 32
    hidden_dim: int = 64
    embed_dim: int = 32


@dataclass(frozen=True)
class GenerateSettings:
    n: int = 20000
    bench_n: int = 2000
    count_decay: float = 0.9  # weight(value) ~ decay ** (value - 2)
    mode_weights: dict = field(default_factory=lambda: dict(DEFAULT_MODE_WEIGHTS))
    layout_grid_prob: float = 0.5
    grid_bias: float = 0.0
    distractor_prob: float = 0.15
    max_distractors: int = 1
    region_weights: dict = field(default_factory=lambda: dict(DEFAULT_REGION_WEIGHTS))


@dataclass(frozen=True)
class CurateSettings:
    cap_low: int = 2000
    miss_rate: float = 0.0
    false_positive_rate: float = 0.0


@dataclass(frozen=True)
class BenchSettings:
    quota: int = 5
    annotations: str | None = None


@dataclass(frozen=True)
class TrainSettings:
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
    eval_every: int = 0
    checkpoint_every: int = 0


@dataclass(frozen=True)
class RetrieveSettings:
    k: int = 5


@dataclass(frozen=True)
class SweepSettings:
    fractions: tuple[float, ...] = (1 / 32, 1 / 8, 1 / 4)
    weights: tuple[float, ...] = (0.1, 1.0, 5.0, 10.0)
    total_steps: int = 400
    warmup_steps: int = 100


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    out_dir: str = "run"
    classes: tuple[tuple[str, str], ...] = DEFAULT_CLASS_NAMES
    canvas: tuple[int, int] = (32, 32)
    glyph_size: int = 3
    encoder: EncoderSettings = field(default_factory=EncoderSettings)
    generate: GenerateSettings = field(default_factory=GenerateSettings)
    curate: CurateSettings = field(default_factory=CurateSettings)
    bench: BenchSettings = field(default_factory=BenchSettings)
    train: TrainSettings = field(default_factory=TrainSettings)
    retrieve: RetrieveSettings = field(default_factory=RetrieveSettings)
    sweep: SweepSettings = field(default_factory=SweepSettings)

    def out_path(self, name: str) -> Path:
        return Path(self.out_dir) / name


_SECTIONS = {
    "encoder": EncoderSettings,
    "generate": GenerateSettings,
    "curate": CurateSettings,
    "bench": BenchSettings,
    "train": TrainSettings,
    "retrieve": RetrieveSettings,
    "sweep": SweepSettings,
}


def _build(cls, data: dict, context: str):
    if not isinstance(data, dict):
        raise UsageError(f"{context}: expected an object, got {type(data).__name__}")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise UsageError(f"{context}: unknown keys {unknown}")
    coerced = {}
    for key, value in data.items():
        if isinstance(value, list):
            value = tuple(tuple(v) if isinstance(v, list) else v for v in value)
        coerced[key] = value
    return cls(**coerced)


def _validate(config: RunConfig) -> RunConfig:
    if not config.classes:
        raise UsageError("config: classes must be non-empty")
    for entry in config.classes:
        if len(entry) != 2 or not all(isinstance(x, str) for x in entry):
            raise UsageError(f"config: each class needs [singular, plural], got {entry!r}")
    if len(config.canvas) != 2 or min(config.canvas) < 4:
        raise UsageError(f"config: canvas must be [height, width] >= 4, got {config.canvas!r}")
    unknown_modes = sorted(set(config.generate.mode_weights) - set(CAPTION_MODES))
    if unknown_modes:
        raise UsageError(f"config: generate.mode_weights has unknown modes {unknown_modes}")
    if any(w < 0 for w in config.generate.mode_weights.values()):
        raise UsageError("config: generate.mode_weights must be non-negative")
    if sum(config.generate.mode_weights.values()) <= 0:
        raise UsageError("config: generate.mode_weights must not all be zero")
    if not 0 < config.generate.count_decay <= 1:
        raise UsageError("config: generate.count_decay must lie in (0, 1]")
    unknown_regions = sorted(set(config.generate.region_weights) - set(REGIONS))
    if unknown_regions:
        raise UsageError(f"config: generate.region_weights has unknown regions {unknown_regions}")
    return config


def load_run_config(path: str | None) -> RunConfig:
    """Parse and validate a config file; ``None`` gives the defaults."""
    if path is None:
        return _validate(RunConfig())
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as err:
        raise UsageError(f"cannot read config {path}: {err}") from err
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        raise UsageError(f"config {path} is not valid JSON: {err}") from err
    if not isinstance(data, dict):
        raise UsageError(f"config {path}: top level must be an object")

    top_known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = sorted(set(data) - top_known)
    if unknown:
        raise UsageError(f"config {path}: unknown keys {unknown}")

    kwargs = {}
    for key, value in data.items():
        if key in _SECTIONS:
            kwargs[key] = _build(_SECTIONS[key], value, f"config {path}: {key}")
        elif key in ("classes", "canvas"):
            if not isinstance(value, list):
                raise UsageError(f"config {path}: {key} must be a list")
            kwargs[key] = tuple(tuple(v) if isinstance(v, list) else v for v in value)
        else:
            kwargs[key] = value
    return _validate(RunConfig(**kwargs))
