"""A tiny dual encoder with unit-norm embeddings and hand-derived gradients.

Both towers are one-hidden-layer tanh MLPs in 64-bit arithmetic: the text
tower mean-pools token embeddings before the MLP, the image tower consumes
the flattened raster. Outputs are L2-normalized, so the dot product of two
embeddings is their cosine similarity. Every backward pass here is checked
against central finite differences in the test suite.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .captions import WORD_VALUES, normalized_tokens
from .errors import DataError, UsageError
from .scenes import (
    ARRANGEMENT_PHRASES,
    DEFAULT_CLASS_NAMES,
    DEFAULT_TEMPLATES,
    QUANTITY_WORDS,
    Raster,
)

__all__ = [
    "Vocabulary",
    "EncoderDims",
    "Params",
    "init_params",
    "save_params",
    "load_params",
    "encode_text",
    "encode_image",
    "encode_text_batch",
    "encode_image_batch",
    "text_backward",
    "image_backward",
    "similarity",
    "grad_check",
    "GradCheckReport",
]

UNKNOWN_TOKEN = "<unk>"

#: Pre-normalization vectors shorter than this are mapped to e_1 instead of
#: being divided by a vanishing norm.
NORM_EPSILON = 1e-12


@dataclass(frozen=True)
class Vocabulary:
    """Dense token-to-index map; index 0 is the unknown token."""

    tokens: tuple[str, ...]

    def __post_init__(self):
        if not self.tokens or self.tokens[0] != UNKNOWN_TOKEN:
            raise UsageError("vocabulary must start with the unknown token")
        if len(set(self.tokens)) != len(self.tokens):
            raise UsageError("vocabulary tokens must be unique")
        missing = [w for w in WORD_VALUES if w not in self.tokens]
        if missing:
            raise UsageError(f"vocabulary is missing number words: {missing}")
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(self.tokens)})

    def __len__(self) -> int:
        return len(self.tokens)

    @classmethod
    def from_words(cls, words) -> "Vocabulary":
        ordered = sorted(set(words) - {UNKNOWN_TOKEN})
        return cls((UNKNOWN_TOKEN, *ordered))

    @classmethod
    def default(cls, class_names: Sequence[tuple[str, str]] = DEFAULT_CLASS_NAMES) -> "Vocabulary":
        """Vocabulary covering the number words, class names, and templates."""
        words = set(WORD_VALUES)
        for singular, plural in class_names:
            words.add(singular.lower())
            words.add(plural.lower())
        for templates in DEFAULT_TEMPLATES.values():
            for template in templates:
                for token in normalized_tokens(template):
                    if "{" not in token and "}" not in token:
                        words.add(token)
        for phrase in ARRANGEMENT_PHRASES.values():
            words.update(normalized_tokens(phrase))
        words.update(word for _, _, word in QUANTITY_WORDS)
        return cls.from_words(words)

    def encode(self, text: str) -> list[int]:
        index = self._index
        return [index.get(core, 0) for core in normalized_tokens(text)]

    def index_of(self, token: str) -> int:
        return self._index.get(token.lower(), 0)

    def number_token_ids(self) -> frozenset[int]:
        return frozenset(self._index[w] for w in WORD_VALUES)


@dataclass(frozen=True)
class EncoderDims:
    vocab_size: int
    token_dim: int = 32
    hidden_dim: int = 64
    embed_dim: int = 32
    height: int = 32
    width: int = 32

    def n_params(self) -> int:
        return sum(int(np.prod(shape)) for _, shape in _array_specs(self))


def _array_specs(dims: EncoderDims) -> list[tuple[str, tuple[int, ...]]]:
    # Fixed field order; also the checkpoint serialization order.
    hw = dims.height * dims.width
    return [
        ("text_embedding", (dims.vocab_size, dims.token_dim)),
        ("text_w1", (dims.token_dim, dims.hidden_dim)),
        ("text_b1", (dims.hidden_dim,)),
        ("text_w2", (dims.hidden_dim, dims.embed_dim)),
        ("text_b2", (dims.embed_dim,)),
        ("image_w1", (hw, dims.hidden_dim)),
        ("image_b1", (dims.hidden_dim,)),
        ("image_w2", (dims.hidden_dim, dims.embed_dim)),
        ("image_b2", (dims.embed_dim,)),
        ("log_scale", ()),
    ]


@dataclass
class Params:
    """All trainable weights; ``log_scale`` stores the logit scale as log(tau)."""

    dims: EncoderDims
    text_embedding: np.ndarray
    text_w1: np.ndarray
    text_b1: np.ndarray
    text_w2: np.ndarray
    text_b2: np.ndarray
    image_w1: np.ndarray
    image_b1: np.ndarray
    image_w2: np.ndarray
    image_b2: np.ndarray
    log_scale: float

    def to_vector(self) -> np.ndarray:
        parts = []
        for name, _ in _array_specs(self.dims):
            value = getattr(self, name)
            parts.append(np.atleast_1d(np.asarray(value, dtype=np.float64)).ravel())
        return np.concatenate(parts)

    @classmethod
    def from_vector(cls, dims: EncoderDims, vector: np.ndarray) -> "Params":
        if vector.shape != (dims.n_params(),):
            raise UsageError(
                f"parameter vector has {vector.shape} entries, expected {dims.n_params()}"
            )
        fields = {}
        offset = 0
        for name, shape in _array_specs(dims):
            size = int(np.prod(shape)) if shape else 1
            chunk = vector[offset : offset + size]
            fields[name] = float(chunk[0]) if shape == () else chunk.reshape(shape).copy()
            offset += size
        return cls(dims=dims, **fields)

    @classmethod
    def zeros(cls, dims: EncoderDims) -> "Params":
        fields = {
            name: (0.0 if shape == () else np.zeros(shape, dtype=np.float64))
            for name, shape in _array_specs(dims)
        }
        return cls(dims=dims, **fields)


def init_params(dims: EncoderDims, seed: int) -> Params:
    """Symmetric uniform init scaled by 1/sqrt(fan_in); tau starts at 1/0.07."""
    rng = np.random.default_rng(seed)
    fan_in = {
        "text_embedding": dims.token_dim,
        "text_w1": dims.token_dim,
        "text_w2": dims.hidden_dim,
        "image_w1": dims.height * dims.width,
        "image_w2": dims.hidden_dim,
    }
    fields = {}
    for name, shape in _array_specs(dims):
        if name == "log_scale":
            fields[name] = math.log(1.0 / 0.07)
        elif name in fan_in:
            bound = 1.0 / math.sqrt(fan_in[name])
            fields[name] = rng.uniform(-bound, bound, size=shape)
        else:
            fields[name] = np.zeros(shape, dtype=np.float64)
    return Params(dims=dims, **fields)


_MAGIC = b"COUNTENC"
_VERSION = 1
_HEADER = struct.Struct("<8sI6I")


def save_params(params: Params, path) -> None:
    """Write the checkpoint: header (magic, version, dims) then little-endian
    64-bit floats in the documented field order."""
    d = params.dims
    header = _HEADER.pack(
        _MAGIC, _VERSION, d.vocab_size, d.token_dim, d.hidden_dim, d.embed_dim, d.height, d.width
    )
    payload = params.to_vector().astype("<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(header + payload)


def load_params(path) -> Params:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size or blob[:8] != _MAGIC:
        raise DataError(f"{path}: not a checkpoint file")
    _, version, v, dt, h, de, hh, ww = _HEADER.unpack_from(blob)
    if version != _VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    dims = EncoderDims(v, dt, h, de, hh, ww)
    expected = _HEADER.size + dims.n_params() * 8
    if len(blob) != expected:
        raise DataError(f"{path}: checkpoint has {len(blob)} bytes, expected {expected}")
    vector = np.frombuffer(blob, dtype="<f8", offset=_HEADER.size).astype(np.float64)
    return Params.from_vector(dims, vector)


@dataclass
class TowerCache:
    """Forward intermediates needed by the backward pass."""

    x: np.ndarray  # (N, in_dim) tower input
    a1: np.ndarray  # (N, hidden) tanh activations
    norms: np.ndarray  # (N,) pre-normalization norms
    guarded: np.ndarray  # (N,) rows that hit the zero-vector guard
    e: np.ndarray  # (N, embed) unit-norm outputs
    token_lists: tuple[tuple[int, ...], ...] | None = None


def _mlp_and_normalize(x, w1, b1, w2, b2, token_lists=None) -> tuple[np.ndarray, TowerCache]:
    a1 = np.tanh(x @ w1 + b1)
    z2 = a1 @ w2 + b2
    norms = np.linalg.norm(z2, axis=1)
    guarded = norms < NORM_EPSILON
    e = np.zeros_like(z2)
    safe = ~guarded
    e[safe] = z2[safe] / norms[safe, None]
    e[guarded, 0] = 1.0
    return e, TowerCache(x=x, a1=a1, norms=norms, guarded=guarded, e=e, token_lists=token_lists)


def _backward_through_tower(cache: TowerCache, w1, w2, de, need_dx: bool):
    """Backprop de (gradient w.r.t. unit-norm outputs) to weight gradients.

    Normalization: e = z / ||z||, so dz = (de - (de . e) e) / ||z||.
    Guarded rows emit a constant and get zero gradient.
    """
    dz2 = np.zeros_like(de)
    safe = ~cache.guarded
    if np.any(safe):
        de_s = de[safe]
        e_s = cache.e[safe]
        inner = np.sum(de_s * e_s, axis=1, keepdims=True)
        dz2[safe] = (de_s - inner * e_s) / cache.norms[safe, None]
    db2 = dz2.sum(axis=0)
    dw2 = cache.a1.T @ dz2
    da1 = dz2 @ w2.T
    dz1 = da1 * (1.0 - cache.a1**2)
    db1 = dz1.sum(axis=0)
    dw1 = cache.x.T @ dz1
    dx = dz1 @ w1.T if need_dx else None
    return dw1, db1, dw2, db2, dx


def encode_text_batch(params: Params, token_lists: Sequence[Sequence[int]]):
    """Mean-pool token embeddings, run the text MLP, L2-normalize."""
    if any(len(toks) == 0 for toks in token_lists):
        raise UsageError("cannot encode an empty token list")
    table = params.text_embedding
    x = np.stack([table[list(toks)].mean(axis=0) for toks in token_lists])
    return _mlp_and_normalize(
        x,
        params.text_w1,
        params.text_b1,
        params.text_w2,
        params.text_b2,
        token_lists=tuple(tuple(t) for t in token_lists),
    )


def text_backward(params: Params, cache: TowerCache, de: np.ndarray, grads: Params) -> None:
    dw1, db1, dw2, db2, dx = _backward_through_tower(
        cache, params.text_w1, params.text_w2, de, need_dx=True
    )
    grads.text_w1 += dw1
    grads.text_b1 += db1
    grads.text_w2 += dw2
    grads.text_b2 += db2
    for i, toks in enumerate(cache.token_lists):
        np.add.at(grads.text_embedding, list(toks), dx[i] / len(toks))


def _check_raster(params: Params, raster: Raster) -> None:
    if (raster.height, raster.width) != (params.dims.height, params.dims.width):
        raise UsageError(
            f"raster is {raster.height}x{raster.width}, encoder expects "
            f"{params.dims.height}x{params.dims.width}"
        )


def encode_image_batch(params: Params, pixel_rows: np.ndarray):
    """Flatten rasters (rows of H*W pixels), run the image MLP, L2-normalize."""
    x = np.asarray(pixel_rows, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.dims.height * params.dims.width:
        raise UsageError(f"pixel batch has shape {x.shape}, expected (N, H*W)")
    return _mlp_and_normalize(x, params.image_w1, params.image_b1, params.image_w2, params.image_b2)


def image_backward(params: Params, cache: TowerCache, de: np.ndarray, grads: Params) -> None:
    dw1, db1, dw2, db2, _ = _backward_through_tower(
        cache, params.image_w1, params.image_w2, de, need_dx=False
    )
    grads.image_w1 += dw1
    grads.image_b1 += db1
    grads.image_w2 += dw2
    grads.image_b2 += db2


def encode_text(params: Params, tokens: Sequence[int]) -> np.ndarray:
    """Encode one token list to a unit-norm embedding."""
    if len(tokens) == 0:
        raise UsageError("cannot encode an empty token list")
    e, _ = encode_text_batch(params, [tokens])
    return e[0]


def encode_image(params: Params, raster: Raster) -> np.ndarray:
    """Encode one raster to a unit-norm embedding."""
    _check_raster(params, raster)
    e, _ = encode_image_batch(params, raster.flat()[None, :])
    return e[0]


def similarity(u: np.ndarray, v: np.ndarray) -> float:
    """Dot product; equals cosine similarity for unit-norm inputs."""
    return float(np.dot(u, v))


@dataclass(frozen=True)
class CoordinateCheck:
    index: int
    analytic: float
    numeric: float
    relative_error: float
    passed: bool


@dataclass(frozen=True)
class GradCheckReport:
    checks: tuple[CoordinateCheck, ...]
    max_relative_error: float
    passed: bool


def grad_check(
    params: Params,
    loss_fn: Callable[[Params], tuple[float, Params]],
    probe_count: int = 100,
    step: float = 1e-5,
    tol: float = 1e-4,
    rng: np.random.Generator | None = None,
    coordinates: Sequence[int] | None = None,
) -> GradCheckReport:
    """Compare the analytic gradient against central finite differences.

    ``loss_fn`` maps Params to (loss, gradient). Probes ``probe_count``
    randomly chosen coordinates (or an explicit list); the relative error is
    |g_a - g_fd| / max(1e-8, |g_a| + |g_fd|).
    """
    vector = params.to_vector()
    _, grads = loss_fn(params)
    analytic = grads.to_vector()
    n = vector.size
    if coordinates is None:
        if rng is None:
            rng = np.random.default_rng(0)
        count = min(probe_count, n)
        coordinates = rng.choice(n, size=count, replace=False)
    checks = []
    for index in coordinates:
        index = int(index)
        bumped = vector.copy()
        bumped[index] += step
        loss_plus, _ = loss_fn(Params.from_vector(params.dims, bumped))
        bumped[index] -= 2 * step
        loss_minus, _ = loss_fn(Params.from_vector(params.dims, bumped))
        numeric = (loss_plus - loss_minus) / (2 * step)
        g_a = float(analytic[index])
        rel = abs(g_a - numeric) / max(1e-8, abs(g_a) + abs(numeric))
        checks.append(CoordinateCheck(index, g_a, float(numeric), float(rel), rel <= tol))
    max_rel = max((c.relative_error for c in checks), default=0.0)
    return GradCheckReport(tuple(checks), max_rel, all(c.passed for c in checks))
