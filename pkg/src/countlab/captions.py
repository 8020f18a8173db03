"""Spelled-number parsing and counterfactual caption synthesis.

Captions are tokenized by whitespace; each token is reduced to its core by
stripping leading and trailing non-alphanumeric characters, and cores are
matched case-insensitively against the nine number words "two" through
"ten". Digit numerals are never treated as counts.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .errors import UsageError

__all__ = [
    "WORD_VALUES",
    "NUMBER_WORDS",
    "DEFAULT_AMOUNT_MODIFIERS",
    "MODIFIER_WINDOW",
    "NumberWord",
    "CaptionRecord",
    "CounterfactualCaption",
    "extract_spelled_numbers",
    "normalized_tokens",
    "is_counting_candidate",
    "make_counterfactual",
    "enumerate_caption_variants",
]

WORD_VALUES = {
    "two": 2,
    "three": 3,
    "four": 4,
    "five": 5,
    "six": 6,
    "seven": 7,
    "eight": 8,
    "nine": 9,
    "ten": 10,
}

#: Amount words that disqualify a nearby number from being read as a count.
DEFAULT_AMOUNT_MODIFIERS = frozenset({"couple", "pair", "dozen", "few"})

#: Tokens within this many positions of the number token are scanned for
#: amount modifiers ("a couple of two birds" has one intervening token).
MODIFIER_WINDOW = 2


@dataclass(frozen=True)
class NumberWord:
    """One of the nine spelled numbers, paired with its integer value."""

    word: str
    value: int

    def __post_init__(self):
        if WORD_VALUES.get(self.word) != self.value:
            raise UsageError(f"not a spelled number in [2, 10]: {self.word!r}={self.value}")

    @classmethod
    def from_word(cls, word: str) -> "NumberWord":
        key = word.lower()
        if key not in WORD_VALUES:
            raise UsageError(f"unknown number word: {word!r}")
        return cls(key, WORD_VALUES[key])

    @classmethod
    def from_value(cls, value: int) -> "NumberWord":
        for word, val in WORD_VALUES.items():
            if val == value:
                return cls(word, val)
        raise UsageError(f"no spelled number for value {value}")


#: All nine number words in ascending value order.
NUMBER_WORDS = tuple(NumberWord(w, v) for w, v in sorted(WORD_VALUES.items(), key=lambda kv: kv[1]))

_WS_SPLIT = re.compile(r"(\s+)")


def _chunks(text: str) -> list[str]:
    """Split into alternating token/whitespace chunks that rebuild the text."""
    return _WS_SPLIT.split(text)


def _token_positions(chunks: list[str]) -> list[int]:
    """Chunk indices holding tokens, in whitespace-split order."""
    return [i for i in range(0, len(chunks), 2) if chunks[i]]


def _split_core(token: str) -> tuple[str, str, str]:
    """Split a token into (leading punctuation, core, trailing punctuation)."""
    start = 0
    end = len(token)
    while start < end and not token[start].isalnum():
        start += 1
    while end > start and not token[end - 1].isalnum():
        end -= 1
    return token[:start], token[start:end], token[end:]


def _tokens(text: str) -> list[str]:
    return [c for c in _chunks(text) if c and not c.isspace()]


def normalized_tokens(text: str) -> list[str]:
    """Lowercased punctuation-stripped token cores, skipping empty ones."""
    cores = []
    for token in _tokens(text):
        _, core, _ = _split_core(token)
        if core:
            cores.append(core.lower())
    return cores


def extract_spelled_numbers(text: str) -> list[tuple[NumberWord, int]]:
    """Find all whole-token spelled numbers in a caption.

    Returns (NumberWord, token_index) pairs in caption order, where the
    index counts whitespace-separated tokens. Matching is case-insensitive
    on the punctuation-stripped token core, so "Three" and '"three,"' match
    while "thirteen" and digit forms like "3" do not.
    """
    found = []
    for index, token in enumerate(_tokens(text)):
        _, core, _ = _split_core(token)
        key = core.lower()
        if key in WORD_VALUES:
            found.append((NumberWord.from_word(key), index))
    return found


@dataclass(frozen=True)
class CaptionRecord:
    """A caption with its parsed spelled-number occurrences."""

    id: str
    text: str
    occurrences: tuple[tuple[NumberWord, int], ...]

    def __post_init__(self):
        expected = tuple(extract_spelled_numbers(self.text))
        if self.occurrences != expected:
            raise UsageError(
                f"occurrences for record {self.id!r} do not match its text: "
                f"{self.occurrences} != {expected}"
            )

    @classmethod
    def from_text(cls, record_id: str, text: str) -> "CaptionRecord":
        return cls(record_id, text, tuple(extract_spelled_numbers(text)))


@dataclass(frozen=True)
class CounterfactualCaption:
    """A caption whose single number token was swapped for a different one."""

    text: str
    original_number: NumberWord
    swapped_number: NumberWord

    def __post_init__(self):
        if self.swapped_number == self.original_number:
            raise UsageError("counterfactual must change the number")


def has_amount_modifier(
    record: CaptionRecord,
    modifiers: frozenset[str] = DEFAULT_AMOUNT_MODIFIERS,
    window: int = MODIFIER_WINDOW,
) -> bool:
    """True if an amount word sits within ``window`` tokens of a number token."""
    tokens = _tokens(record.text)
    cores = [_split_core(t)[1].lower() for t in tokens]
    for _, index in record.occurrences:
        lo = max(0, index - window)
        hi = min(len(tokens), index + window + 1)
        for j in range(lo, hi):
            if j != index and cores[j] in modifiers:
                return True
    return False


def is_counting_candidate(
    record: CaptionRecord,
    modifiers: frozenset[str] = DEFAULT_AMOUNT_MODIFIERS,
    window: int = MODIFIER_WINDOW,
) -> bool:
    """Decide whether a caption can serve as a counting training example.

    Requires exactly one spelled number (several numbers make the swap
    ambiguous) and no amount-modifier word near it.
    """
    if len(record.occurrences) != 1:
        return False
    return not has_amount_modifier(record, modifiers, window)


def _match_case(source: str, replacement: str) -> str:
    if len(source) > 1 and source.isupper():
        return replacement.upper()
    if source[:1].isupper():
        return replacement.capitalize()
    return replacement


def _swap_number_token(text: str, token_index: int, replacement: NumberWord) -> str:
    chunks = _chunks(text)
    positions = _token_positions(chunks)
    pos = positions[token_index]
    prefix, core, suffix = _split_core(chunks[pos])
    chunks[pos] = prefix + _match_case(core, replacement.word) + suffix
    return "".join(chunks)


def _require_candidate(record: CaptionRecord) -> tuple[NumberWord, int]:
    if not is_counting_candidate(record):
        raise UsageError(f"record {record.id!r} is not a counting candidate: {record.text!r}")
    return record.occurrences[0]


def make_counterfactual(record: CaptionRecord, rng: np.random.Generator) -> CounterfactualCaption:
    """Swap the caption's number for one of the eight others, drawn uniformly.

    The replacement copies the original token's casing pattern and keeps
    surrounding punctuation, so the output differs from the source caption
    in exactly the one number token.
    """
    original, index = _require_candidate(record)
    alternatives = [w for w in NUMBER_WORDS if w.value != original.value]
    swapped = alternatives[int(rng.integers(len(alternatives)))]
    return CounterfactualCaption(
        text=_swap_number_token(record.text, index, swapped),
        original_number=original,
        swapped_number=swapped,
    )


def enumerate_caption_variants(record: CaptionRecord) -> list[str]:
    """All nine number variants of a caption, in ascending value order.

    The variant matching the original value is the original text itself;
    the other eight differ from it only in the number token.
    """
    original, index = _require_candidate(record)
    variants = []
    for word in NUMBER_WORDS:
        if word.value == original.value:
            variants.append(record.text)
        else:
            variants.append(_swap_number_token(record.text, index, word))
    return variants
