import numpy as np
import pytest

from countlab.captions import NumberWord
from countlab.curation import (
    AcceptedRecord,
    CurationDecision,
    balance,
    build_benchmark,
    dataset_stats,
    filter_record,
)
from countlab.errors import DataError, UsageError
from countlab.scenes import NO_NOISE, DetectorNoise, SceneSpec, detect, sample_scene


def scene_with(counts, seed=0):
    return SceneSpec(f"s{seed}", counts, "scatter", (32, 32), (), seed)


def accepted(rid, value, scene_id=None):
    return AcceptedRecord(rid, scene_id or rid, f"a photo of {NumberWord.from_value(value).word} discs", NumberWord.from_value(value))


class TestFilterRecord:
    def test_accepts_matching_caption(self):
        decision = filter_record(scene_with({0: 3}), "A photo of three dogs")
        assert decision.outcome == "accepted"
        assert decision.number == NumberWord("three", 3)

    def test_rejects_count_mismatch(self):
        decision = filter_record(scene_with({0: 3}), "A photo of five dogs")
        assert decision.reject_reason == "count_mismatch"

    def test_rejects_no_spelled_number(self):
        decision = filter_record(scene_with({0: 3}), "a photo of dogs")
        assert decision.reject_reason == "no_spelled_number"

    def test_rejects_multiple_numbers(self):
        decision = filter_record(scene_with({0: 2}), "Two dogs and two cats")
        assert decision.reject_reason == "multiple_numbers"

    def test_rejects_amount_modifier_before_count_check(self):
        # Stage order: even a true count is rejected once a modifier is near.
        decision = filter_record(scene_with({0: 2}), "a couple of two birds")
        assert decision.reject_reason == "amount_modifier"

    def test_decision_follows_detected_count(self):
        # Find a noise seed that actually drops a detection, then check that
        # the decision tracks the detector rather than the ground truth.
        scene = scene_with({0: 5}, seed=99)
        noise = None
        for s in range(1000):
            candidate = DetectorNoise(miss_rate=0.3, false_positive_rate=0.0, seed=s)
            if detect(scene, candidate).max_count == 4:
                noise = candidate
                break
        assert noise is not None
        decision = filter_record(scene, "A photo of five dogs", noise)
        assert decision.reject_reason == "count_mismatch"

    def test_max_count_rule_with_distractors(self):
        decision = filter_record(scene_with({0: 4, 1: 2}), "four discs in a row")
        assert decision.outcome == "accepted"

    def test_record_id_defaults_to_scene_id(self):
        scene = scene_with({0: 2}, seed=7)
        assert filter_record(scene, "two discs").record_id == scene.id
        assert filter_record(scene, "two discs", record_id="r1").record_id == "r1"

    def test_decision_invariants(self):
        with pytest.raises(UsageError):
            CurationDecision("x", "accepted")
        with pytest.raises(UsageError):
            CurationDecision("x", "rejected", reject_reason="bogus")

    def test_filter_precision_with_zero_noise(self):
        # Every accepted record's caption value equals the dominant count.
        rng = np.random.default_rng(50)
        for i in range(300):
            scene = sample_scene([0, 1, 2, 3, 4], rng=rng, scene_id=f"p{i}")
            value = int(rng.integers(2, 11))
            caption = f"a photo of {NumberWord.from_value(value).word} things"
            decision = filter_record(scene, caption, NO_NOISE)
            dominant = max(scene.counts.values())
            if decision.outcome == "accepted":
                assert value == dominant
            else:
                assert decision.reject_reason == "count_mismatch"
                assert value != dominant


class TestBalance:
    def make_pool(self, availability):
        pool = []
        for value, n in availability.items():
            for i in range(n):
                pool.append(accepted(f"v{value:02d}-{i:04d}", value))
        return pool

    def test_cap_rule_example(self):
        availability = {2: 500, 3: 500, 4: 500, 5: 500, 6: 500, 7: 40, 8: 30, 9: 20, 10: 10}
        pool = self.make_pool(availability)
        counting = balance(pool, cap_low=100, rng=np.random.default_rng(0))
        # Recount by brute force rather than trusting per_number_counts.
        recount = {v: 0 for v in range(2, 11)}
        for rec in counting.records:
            recount[rec.number.value] += 1
        assert recount == {2: 100, 3: 100, 4: 100, 5: 100, 6: 100, 7: 40, 8: 30, 9: 20, 10: 10}
        assert counting.per_number_counts == recount

    def test_inactive_cap_keeps_everything(self):
        pool = self.make_pool({v: 5 for v in range(2, 11)})
        counting = balance(pool, cap_low=100, rng=np.random.default_rng(1))
        assert set(r.id for r in counting.records) == set(r.id for r in pool)

    def test_deterministic_given_seed(self):
        pool = self.make_pool({2: 50, 3: 10, 7: 9})
        a = balance(pool, 5, np.random.default_rng(42))
        b = balance(pool, 5, np.random.default_rng(42))
        assert [r.id for r in a.records] == [r.id for r in b.records]

    def test_input_order_is_irrelevant(self):
        pool = self.make_pool({2: 30, 5: 12})
        shuffled = list(pool)
        np.random.default_rng(3).shuffle(shuffled)
        a = balance(pool, 8, np.random.default_rng(42))
        b = balance(shuffled, 8, np.random.default_rng(42))
        assert [r.id for r in a.records] == [r.id for r in b.records]

    def test_high_numbers_never_capped(self):
        pool = self.make_pool({7: 500, 8: 300})
        counting = balance(pool, cap_low=10, rng=np.random.default_rng(4))
        assert counting.per_number_counts[7] == 500
        assert counting.per_number_counts[8] == 300


class TestBuildBenchmark:
    def make_pool(self, per_number):
        pool = []
        for value in range(2, 11):
            for i in range(per_number):
                pool.append(accepted(f"b{value:02d}-{i:04d}", value))
        return pool

    def test_quota_totals(self):
        bench = build_benchmark(self.make_pool(80), 60, set(), np.random.default_rng(0))
        assert len(bench.records) == 540
        stats = dataset_stats(bench)
        assert all(stats.per_number[v] == 60 for v in range(2, 11))

    def test_forced_selection(self):
        pool = self.make_pool(1)
        bench = build_benchmark(pool, 1, set(), np.random.default_rng(0))
        assert bench.ids() == {r.id for r in pool}

    def test_exclusion_respected(self):
        pool = self.make_pool(20)
        rng = np.random.default_rng(7)
        for _ in range(100):
            excluded = {r.id for r in pool if rng.random() < 0.3}
            deficient = any(
                sum(1 for r in pool if r.number.value == v and r.id not in excluded) < 5
                for v in range(2, 11)
            )
            if deficient:
                continue
            bench = build_benchmark(pool, 5, excluded, rng)
            assert bench.ids() & excluded == set()

    def test_insufficient_pool_names_numbers(self):
        pool = self.make_pool(3)
        pool = [r for r in pool if r.number.value != 10]
        with pytest.raises(DataError, match="10"):
            build_benchmark(pool, 3, set(), np.random.default_rng(0))


class TestDatasetStats:
    def test_empty(self):
        stats = dataset_stats([])
        assert stats.total == 0
        assert all(stats.per_number[v] == 0 for v in range(2, 11))

    def test_decaying_pool_is_strictly_decreasing(self):
        rng = np.random.default_rng(60)
        decay = 0.75
        weights = np.array([decay**k for k in range(9)])
        records = []
        for i in range(4000):
            value = int(rng.choice(np.arange(2, 11), p=weights / weights.sum()))
            records.append(accepted(f"d{i:05d}", value))
        stats = dataset_stats(records)
        counts = [stats.per_number[v] for v in range(2, 11)]
        assert all(a > b for a, b in zip(counts, counts[1:]))
        assert stats.total == 4000
