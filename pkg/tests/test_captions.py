import collections

import numpy as np
import pytest

from countlab.captions import (
    NUMBER_WORDS,
    CaptionRecord,
    NumberWord,
    enumerate_caption_variants,
    extract_spelled_numbers,
    is_counting_candidate,
    make_counterfactual,
)
from countlab.errors import UsageError


def record(text, rid="r0"):
    return CaptionRecord.from_text(rid, text)


class TestExtractSpelledNumbers:
    def test_single_number(self):
        assert extract_spelled_numbers("A photo of three dogs") == [
            (NumberWord("three", 3), 3)
        ]

    def test_digits_are_not_matched(self):
        assert extract_spelled_numbers("iPhone 11 case, version 2") == []

    def test_repeated_word_case_insensitive(self):
        assert extract_spelled_numbers("Two dogs and two cats") == [
            (NumberWord("two", 2), 0),
            (NumberWord("two", 2), 3),
        ]

    def test_punctuation_stripped_for_matching(self):
        occ = extract_spelled_numbers('She said "ten!" loudly')
        assert occ == [(NumberWord("ten", 10), 2)]

    def test_substring_does_not_match(self):
        # "tent" contains "ten" but is a different token core
        assert extract_spelled_numbers("a tent by the sixth lake") == []

    def test_numbers_above_ten_and_one_ignored(self):
        assert extract_spelled_numbers("one of eleven twelve hundred") == []

    def test_pure_function(self):
        text = "Four cats, four mats"
        assert extract_spelled_numbers(text) == extract_spelled_numbers(text)

    @pytest.mark.parametrize(
        "text",
        ["room 237", "taken at 10:30", "call 555-0100 now", "3 + 4 = 7"],
    )
    def test_no_digit_leakage(self, text):
        assert extract_spelled_numbers(text) == []


class TestCountingCandidate:
    def test_simple_candidate(self):
        assert is_counting_candidate(record("A photo of three dogs"))

    def test_multiple_numbers_rejected(self):
        assert not is_counting_candidate(record("Two dogs and two cats"))

    def test_no_number_rejected(self):
        assert not is_counting_candidate(record("a photo of dogs"))

    def test_amount_modifier_adjacent(self):
        assert not is_counting_candidate(record("a couple of two birds"))

    def test_amount_modifier_after_number(self):
        assert not is_counting_candidate(record("two pair combos"))

    def test_modifier_outside_window_is_ignored(self):
        # "few" is 4 tokens away from "two"
        assert is_counting_candidate(record("a few friends brought two dogs"))

    def test_occurrence_mismatch_rejected_at_construction(self):
        with pytest.raises(UsageError):
            CaptionRecord("bad", "three dogs", ())


class TestMakeCounterfactual:
    def test_output_number_always_differs(self):
        rng = np.random.default_rng(7)
        rec = record("five dogs")
        for _ in range(200):
            cf = make_counterfactual(rec, rng)
            assert cf.swapped_number.value != 5
            assert cf.original_number.value == 5

    def test_single_token_edit(self):
        rng = np.random.default_rng(3)
        rec = record("A photo of five dogs.")
        cf = make_counterfactual(rec, rng)
        original_tokens = rec.text.split()
        swapped_tokens = cf.text.split()
        assert len(original_tokens) == len(swapped_tokens)
        diffs = [i for i, (a, b) in enumerate(zip(original_tokens, swapped_tokens)) if a != b]
        assert diffs == [3]
        assert swapped_tokens[3].endswith(".") is False  # "dogs." carries the period
        assert cf.text.endswith("dogs.")

    def test_casing_patterns(self):
        rng = np.random.default_rng(0)
        cap = make_counterfactual(record("Five dogs"), rng)
        assert cap.text.split()[0][0].isupper()
        allcaps = make_counterfactual(record("FIVE DOGS"), rng)
        assert allcaps.text.split()[0].isupper()

    def test_punctuation_preserved(self):
        rng = np.random.default_rng(1)
        cf = make_counterfactual(record('portrait of "three" cats'), rng)
        token = cf.text.split()[2]
        assert token.startswith('"') and token.endswith('"')

    def test_rejects_non_candidate(self):
        rng = np.random.default_rng(0)
        with pytest.raises(UsageError):
            make_counterfactual(record("two dogs and two cats"), rng)

    def test_uniform_over_eight_alternatives(self):
        # Frequency check against the uniform oracle: each of the 8
        # alternatives should appear with probability 0.125 +- 0.01.
        rng = np.random.default_rng(123)
        rec = record("five dogs")
        counts = collections.Counter()
        n = 100_000
        for _ in range(n):
            counts[make_counterfactual(rec, rng).swapped_number.value] += 1
        assert set(counts) == {2, 3, 4, 6, 7, 8, 9, 10}
        for value, c in counts.items():
            assert abs(c / n - 0.125) < 0.01, (value, c / n)

    def test_round_trip_parse(self):
        rng = np.random.default_rng(11)
        rec = record("There are seven rings on display")
        for _ in range(50):
            cf = make_counterfactual(rec, rng)
            occ = extract_spelled_numbers(cf.text)
            assert len(occ) == 1
            assert occ[0][0] == cf.swapped_number


class TestEnumerateVariants:
    def test_nine_variants_ascending(self):
        variants = enumerate_caption_variants(record("A photo of three dogs"))
        assert len(variants) == 9
        assert variants[0] == "A photo of two dogs"
        assert variants[1] == "A photo of three dogs"
        assert variants[-1] == "A photo of ten dogs"

    def test_original_at_value_position(self):
        for word in NUMBER_WORDS:
            text = f"a photo of {word.word} dogs"
            variants = enumerate_caption_variants(record(text))
            assert variants[word.value - 2] == text

    def test_variants_parse_back(self):
        variants = enumerate_caption_variants(record("Seven large, dark crosses!"))
        values = []
        for v in variants:
            occ = extract_spelled_numbers(v)
            assert len(occ) == 1
            values.append(occ[0][0].value)
        assert values == list(range(2, 11))

    def test_variants_pairwise_distinct(self):
        variants = enumerate_caption_variants(record("ten discs"))
        assert len(set(variants)) == 9

    def test_rejects_non_candidate(self):
        with pytest.raises(UsageError):
            enumerate_caption_variants(record("no numbers here"))
