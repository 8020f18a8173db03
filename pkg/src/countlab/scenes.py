"""Synthetic counting scenes: sampling, rasterization, a detector oracle, captions.

Scenes are small grayscale canvases holding glyphs of a handful of object
classes. Each scene has one dominant class whose instance count is the
ground truth a caption may or may not describe; the detector oracle stands
in for an off-the-shelf object detector and can be degraded with miss and
false-positive noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .captions import NumberWord
from .errors import UsageError

__all__ = [
    "DEFAULT_CLASS_NAMES",
    "DEFAULT_TEMPLATES",
    "ARRANGEMENT_PHRASES",
    "CAPTION_MODES",
    "REGIONS",
    "Placement",
    "SceneSpec",
    "Raster",
    "DetectionResult",
    "DetectorNoise",
    "NO_NOISE",
    "sample_scene",
    "render",
    "detect",
    "dominant_class",
    "caption_for_scene",
    "write_pgm",
]

#: (singular, plural) per class id; the id doubles as the glyph shape index.
DEFAULT_CLASS_NAMES = (
    ("disc", "discs"),
    ("square", "squares"),
    ("triangle", "triangles"),
    ("cross", "crosses"),
    ("ring", "rings"),
)

#: Glyph intensity per class id (cycled), all in (0, 1].
_CLASS_INTENSITIES = (1.0, 0.85, 0.7, 0.55, 0.4)

_MIN_GLYPH_SIZE = 1

CAPTION_MODES = (
    "true_count",
    "wrong_count",
    "digit_distractor",
    "non_count_number",
    "no_number",
    "amount_modifier",
)

#: Canvas regions objects may be confined to; "full" is the whole canvas.
REGIONS = ("full", "left", "right", "top", "bottom")

#: Vague quantity words by count bucket, the way captions in the wild say
#: "a group of" or "many" instead of an exact number. None is a spelled
#: number or an amount-modifier stopword.
QUANTITY_WORDS = ((2, 4, "some"), (5, 7, "several"), (8, 10, "many"))


def quantity_word(count: int) -> str:
    for lo, hi, word in QUANTITY_WORDS:
        if lo <= count <= hi:
            return word
    return "many"

#: Caption phrase per (layout, region). These give the contrastive loss
#: plenty of non-count signal to match images and captions on, the way rich
#: web captions do, so counting skill is not a byproduct of batch
#: discrimination alone. Kept short: with mean-pooled text encoding, long
#: captions dilute the number token.
ARRANGEMENT_PHRASES = {
    ("grid", "full"): "in a grid",
    ("grid", "left"): "in a left grid",
    ("grid", "right"): "in a right grid",
    ("grid", "top"): "in a top grid",
    ("grid", "bottom"): "in a bottom grid",
    ("scatter", "full"): "scattered around",
    ("scatter", "left"): "scattered left",
    ("scatter", "right"): "scattered right",
    ("scatter", "top"): "scattered top",
    ("scatter", "bottom"): "scattered bottom",
}

# Caption templates per mode. Placeholders: {number} spelled number,
# {objects} plural class name, {arrangement} layout/region phrase,
# {digit}/{year}/{hour} digit numerals.
DEFAULT_TEMPLATES = {
    "true_count": (
        "{number} {objects} {arrangement}",
        "a photo of {number} {objects}",
        "{number} {objects}",
    ),
    "wrong_count": (
        "{number} {objects} {arrangement}",
        "a photo of {number} {objects}",
        "{number} {objects}",
    ),
    "digit_distractor": (
        "{objects} {arrangement} in {year}",
        "{objects} wallpaper version {digit}",
        "{objects} {arrangement} at {hour} o'clock",
    ),
    "non_count_number": (
        "{objects} {arrangement} for {number} dollars",
        "my {objects} poster from {number} years ago",
        "{objects} rated {number} stars",
    ),
    "no_number": (
        "{quantity} {objects} {arrangement}",
        "a photo of {quantity} {objects}",
        "a group of {objects} {arrangement}",
        "{objects} {arrangement}",
    ),
    "amount_modifier": (
        "a couple of {number} {objects} {arrangement}",
        "a pair of {number} {objects}",
    ),
}


class Placement(NamedTuple):
    class_id: int
    cx: float
    cy: float
    size: int


@dataclass(frozen=True)
class SceneSpec:
    """Ground-truth description of a synthetic scene."""

    id: str
    counts: dict[int, int]
    layout: str  # "grid" or "scatter"
    canvas: tuple[int, int]  # (height, width)
    placements: tuple[Placement, ...]
    seed: int
    region: str = "full"

    def total_objects(self) -> int:
        return sum(self.counts.values())


@dataclass(frozen=True)
class Raster:
    """Grayscale image with intensities in [0, 1], row-major."""

    height: int
    width: int
    pixels: np.ndarray

    def __post_init__(self):
        if self.pixels.shape != (self.height, self.width):
            raise UsageError(
                f"raster shape {self.pixels.shape} does not match "
                f"({self.height}, {self.width})"
            )

    def flat(self) -> np.ndarray:
        return self.pixels.reshape(-1)


@dataclass(frozen=True)
class DetectionResult:
    """Per-class detection counts plus the maximally-detected class."""

    per_class_counts: dict[int, int]
    max_class: int | None
    max_count: int


@dataclass(frozen=True)
class DetectorNoise:
    """Degradation knobs for the detector oracle."""

    miss_rate: float = 0.0
    false_positive_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.miss_rate <= 1.0:
            raise UsageError(f"miss_rate must be in [0, 1], got {self.miss_rate}")
        if self.false_positive_rate < 0.0:
            raise UsageError("false_positive_rate must be non-negative")


NO_NOISE = DetectorNoise(0.0, 0.0, 0)


def dominant_class(scene: SceneSpec) -> tuple[int, int]:
    """The class with the highest true count (ties broken by lowest id)."""
    if not scene.counts:
        raise UsageError(f"scene {scene.id!r} is empty")
    max_count = max(scene.counts.values())
    max_cls = min(c for c, n in scene.counts.items() if n == max_count)
    return max_cls, max_count


def _region_box(canvas: tuple[int, int], region: str) -> tuple[float, float, float, float]:
    """(y0, x0, y1, x1) bounds of a region, end-exclusive in pixel units."""
    height, width = canvas
    boxes = {
        "full": (0.0, 0.0, float(height), float(width)),
        "left": (0.0, 0.0, float(height), width / 2),
        "right": (0.0, width / 2, float(height), float(width)),
        "top": (0.0, 0.0, height / 2, float(width)),
        "bottom": (height / 2, 0.0, float(height), float(width)),
    }
    if region not in boxes:
        raise UsageError(f"unknown region {region!r}")
    return boxes[region]


def _grid_placements(
    class_sequence: list[int],
    box: tuple[float, float, float, float],
    glyph_size: int,
    rng: np.random.Generator,
) -> list[Placement] | None:
    """A compact block lattice with a fixed pitch, anchored inside the box.

    The pitch depends only on the glyph size, never on the object count, so
    rendered pixel mass stays proportional to the count. Returns None when
    the block does not fit.
    """
    y0, x0, y1, x1 = box
    n = len(class_sequence)
    pitch = 2 * glyph_size + 2
    cols_max = int((x1 - x0) // pitch)
    rows_max = int((y1 - y0) // pitch)
    if cols_max * rows_max < n:
        return None
    cols = min(cols_max, math.ceil(math.sqrt(n)))
    rows = math.ceil(n / cols)
    if rows > rows_max:
        rows = rows_max
        cols = math.ceil(n / rows)
        if cols > cols_max:
            return None
    off_x = x0 + rng.uniform(0.0, (x1 - x0) - cols * pitch)
    off_y = y0 + rng.uniform(0.0, (y1 - y0) - rows * pitch)
    cells = rng.permutation(rows * cols)[:n]
    placements = []
    for cls, cell in zip(class_sequence, cells):
        r, c = divmod(int(cell), cols)
        placements.append(
            Placement(cls, off_x + (c + 0.5) * pitch, off_y + (r + 0.5) * pitch, glyph_size)
        )
    return placements


def _scatter_placements(
    class_sequence: list[int],
    box: tuple[float, float, float, float],
    glyph_size: int,
    rng: np.random.Generator,
) -> list[Placement] | None:
    y0, x0, y1, x1 = box
    size = glyph_size
    if 2 * size + 1 > min(y1 - y0, x1 - x0):
        return None
    centers: list[tuple[float, float]] = []
    # Try generous separation first, then shrink it before giving up;
    # coinciding centers are never allowed.
    for min_dist in (2 * size + 1, size + 1, 0.5):
        for _ in range(len(class_sequence) - len(centers)):
            placed = False
            for _attempt in range(200):
                cx = rng.uniform(x0 + size, x1 - 1 - size)
                cy = rng.uniform(y0 + size, y1 - 1 - size)
                if all((cx - x) ** 2 + (cy - y) ** 2 >= min_dist**2 for x, y in centers):
                    centers.append((cx, cy))
                    placed = True
                    break
            if not placed:
                break
        if len(centers) == len(class_sequence):
            break
    if len(centers) < len(class_sequence):
        return None
    return [Placement(cls, cx, cy, size) for cls, (cx, cy) in zip(class_sequence, centers)]


def sample_scene(
    class_pool: Sequence[int],
    count_range: tuple[int, int] = (2, 10),
    layout_weights: tuple[float, float] = (0.5, 0.5),
    canvas: tuple[int, int] = (32, 32),
    rng: np.random.Generator | None = None,
    *,
    count_weights: Sequence[float] | None = None,
    distractor_prob: float = 0.5,
    max_distractors: int = 2,
    grid_bias: float = 0.0,
    glyph_size: int = 3,
    region_weights: dict[str, float] | None = None,
    scene_id: str | None = None,
) -> SceneSpec:
    """Draw a random scene with one dominant class and optional distractors.

    The dominant count is drawn from ``count_range`` (uniformly, or with
    ``count_weights``); distractor classes always have strictly smaller
    counts so the maximally-detected object is unambiguous. ``grid_bias``
    shifts the grid-vs-scatter probability upward with the count, mirroring
    how larger collections tend to be arranged more regularly.
    ``region_weights`` confines objects to a canvas region (falling back to
    the full canvas when the region cannot hold them).
    """
    if rng is None:
        raise UsageError("sample_scene requires an explicit rng")
    if not class_pool:
        raise UsageError("class_pool must be non-empty")
    lo, hi = count_range
    if lo < 1 or hi > 10 or lo > hi:
        raise UsageError(f"count_range must lie within [1, 10], got {count_range}")

    values = np.arange(lo, hi + 1)
    if count_weights is None:
        probs = None
    else:
        weights = np.asarray(count_weights, dtype=float)
        if weights.shape != values.shape or np.any(weights < 0) or weights.sum() <= 0:
            raise UsageError("count_weights must be non-negative, one per count value")
        probs = weights / weights.sum()
    dominant_count = int(rng.choice(values, p=probs))
    dominant = int(class_pool[int(rng.integers(len(class_pool)))])

    counts = {dominant: dominant_count}
    others = [c for c in class_pool if c != dominant]
    rng.shuffle(others)
    for cls in others[:max_distractors]:
        if dominant_count < 2:
            break
        if rng.random() < distractor_prob:
            counts[int(cls)] = int(rng.integers(1, dominant_count))

    height, width = canvas
    capacity = (height // (2 * _MIN_GLYPH_SIZE + 1)) * (width // (2 * _MIN_GLYPH_SIZE + 1))
    total = sum(counts.values())
    if total > capacity:
        raise UsageError(
            f"canvas {canvas} cannot fit {total} objects at minimum glyph size"
        )

    p_grid = layout_weights[0] / (layout_weights[0] + layout_weights[1])
    if hi > lo:
        p_grid = min(1.0, p_grid + grid_bias * (dominant_count - lo) / (hi - lo))
    layout = "grid" if rng.random() < p_grid else "scatter"

    if region_weights is None:
        region = "full"
    else:
        names = [r for r in REGIONS if region_weights.get(r, 0.0) > 0]
        if not names:
            raise UsageError("region_weights must give positive weight to some region")
        region_probs = np.array([region_weights[r] for r in names], dtype=float)
        region = names[int(rng.choice(len(names), p=region_probs / region_probs.sum()))]

    class_sequence = [dominant] * dominant_count
    for cls in sorted(c for c in counts if c != dominant):
        class_sequence.extend([cls] * counts[cls])

    # Fall back from the chosen region to the full canvas, then to smaller
    # glyphs, before giving up; crowded scenes stay placeable.
    place = _grid_placements if layout == "grid" else _scatter_placements
    placements = None
    for size in range(glyph_size, 0, -1):
        for candidate in dict.fromkeys((region, "full")):
            placements = place(class_sequence, _region_box(canvas, candidate), size, rng)
            if placements is not None:
                region = candidate
                break
        if placements is not None:
            break
    if placements is None:
        raise UsageError(
            f"canvas {canvas} cannot fit {total} objects at glyph size {glyph_size} "
            f"({layout} layout)"
        )

    seed = int(rng.integers(0, 2**63 - 1))
    return SceneSpec(
        id=scene_id if scene_id is not None else f"scene-{seed:016x}",
        counts=counts,
        layout=layout,
        canvas=(height, width),
        placements=tuple(placements),
        seed=seed,
        region=region,
    )


def _glyph_mask(shape: int, dx: np.ndarray, dy: np.ndarray, size: int) -> np.ndarray:
    if shape == 0:  # disc
        return dx**2 + dy**2 <= size**2
    if shape == 1:  # square
        return np.maximum(np.abs(dx), np.abs(dy)) <= size
    if shape == 2:  # triangle, apex at the top
        return (np.abs(dy) <= size) & (np.abs(dx) <= (dy + size) / 2)
    if shape == 3:  # cross
        thickness = max(0.5, size / 3)
        inside = np.maximum(np.abs(dx), np.abs(dy)) <= size
        return inside & ((np.abs(dx) <= thickness) | (np.abs(dy) <= thickness))
    # ring
    d2 = dx**2 + dy**2
    return ((size / 2) ** 2 <= d2) & (d2 <= size**2)


def render(scene: SceneSpec) -> Raster:
    """Rasterize a scene deterministically; background 0, glyphs in (0, 1]."""
    height, width = scene.canvas
    img = np.zeros((height, width), dtype=np.float64)
    for cls, cx, cy, size in scene.placements:
        y0 = max(0, int(math.floor(cy - size)))
        y1 = min(height - 1, int(math.ceil(cy + size)))
        x0 = max(0, int(math.floor(cx - size)))
        x1 = min(width - 1, int(math.ceil(cx + size)))
        ys = np.arange(y0, y1 + 1, dtype=np.float64)
        xs = np.arange(x0, x1 + 1, dtype=np.float64)
        dy = ys[:, None] - cy
        dx = xs[None, :] - cx
        mask = _glyph_mask(cls % 5, dx, dy, size)
        intensity = _CLASS_INTENSITIES[cls % len(_CLASS_INTENSITIES)]
        region = img[y0 : y1 + 1, x0 : x1 + 1]
        region[mask] = np.maximum(region[mask], intensity)
    return Raster(height, width, img)


def detect(scene: SceneSpec, noise: DetectorNoise = NO_NOISE) -> DetectionResult:
    """Detector oracle: exact counts at zero noise, degraded counts otherwise.

    Each true instance is dropped independently with ``miss_rate``; spurious
    detections arrive at a Poisson rate of ``false_positive_rate`` per image
    and are assigned to classes already present in the scene. The noise
    stream is keyed by (noise.seed, scene.seed) so per-scene noise is
    deterministic yet varies across scenes.
    """
    if noise.miss_rate == 0.0 and noise.false_positive_rate == 0.0:
        per_class = dict(sorted(scene.counts.items()))
    else:
        rng = np.random.default_rng([noise.seed, scene.seed])
        per_class = {}
        for cls in sorted(scene.counts):
            kept = scene.counts[cls] - int(rng.binomial(scene.counts[cls], noise.miss_rate))
            if kept > 0:
                per_class[cls] = kept
        present = sorted(scene.counts)
        if present:
            for _ in range(int(rng.poisson(noise.false_positive_rate))):
                cls = present[int(rng.integers(len(present)))]
                per_class[cls] = per_class.get(cls, 0) + 1
    if not per_class:
        return DetectionResult({}, None, 0)
    max_count = max(per_class.values())
    max_cls = min(c for c, n in per_class.items() if n == max_count)
    return DetectionResult(per_class, max_cls, max_count)


def _spell(value: int) -> str:
    return NumberWord.from_value(value).word


def caption_for_scene(
    scene: SceneSpec,
    rng: np.random.Generator,
    mode: str,
    class_names: Sequence[tuple[str, str]] = DEFAULT_CLASS_NAMES,
    template_pool: dict[str, tuple[str, ...]] | None = None,
) -> str:
    """Produce a caption for the scene in one of the distractor modes.

    ``true_count`` spells the dominant count; ``wrong_count`` and
    ``non_count_number`` spell a different number (so a zero-noise filter
    always rejects them); ``digit_distractor`` uses digit numerals only;
    ``no_number`` omits numbers; ``amount_modifier`` pairs the true count
    with an amount word like "couple".
    """
    if mode not in CAPTION_MODES:
        raise UsageError(f"unknown caption mode {mode!r}")
    templates = (template_pool or DEFAULT_TEMPLATES)[mode]
    template = templates[int(rng.integers(len(templates)))]
    cls, count = dominant_class(scene)
    objects = class_names[cls % len(class_names)][1]

    fields: dict[str, object] = {
        "objects": objects,
        "arrangement": ARRANGEMENT_PHRASES[(scene.layout, scene.region)],
        "quantity": quantity_word(count),
    }
    if mode in ("true_count", "amount_modifier"):
        fields["number"] = _spell(count)
    elif mode in ("wrong_count", "non_count_number"):
        choices = [v for v in range(2, 11) if v != count]
        fields["number"] = _spell(int(rng.choice(choices)))
    elif mode == "digit_distractor":
        fields["year"] = str(int(rng.integers(1990, 2026)))
        fields["digit"] = str(int(rng.integers(2, 100)))
        fields["hour"] = str(int(rng.integers(1, 13)))
    return template.format(**fields)


def write_pgm(raster: Raster, path) -> None:
    """Export as a binary portable graymap (P5, maxval 255)."""
    header = f"P5\n{raster.width} {raster.height}\n255\n".encode("ascii")
    data = np.round(raster.pixels * 255).astype(np.uint8).tobytes()
    with open(path, "wb") as fh:
        fh.write(header + data)
