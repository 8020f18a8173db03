import numpy as np
import pytest

from countlab.encoder import Vocabulary
from countlab.errors import DataError
from countlab.records import (
    PoolRecord,
    read_id_file,
    read_records,
    scene_from_dict,
    scene_to_dict,
    to_accepted,
    to_counting_examples,
    to_general_examples,
    write_records,
)
from countlab.scenes import sample_scene

VOCAB = Vocabulary.default()


def make_records(n, prefix="r", seed=0, caption="a photo of three discs"):
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n):
        scene = sample_scene([0, 1], rng=rng, scene_id=f"{prefix}{i:03d}")
        records.append(PoolRecord(scene.id, "pool", caption, scene, mode="true_count"))
    return records


class TestSceneSerialization:
    def test_round_trip(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            scene = sample_scene([0, 1, 2, 3, 4], rng=rng)
            assert scene_from_dict(scene_to_dict(scene)) == scene


class TestRecordFiles:
    def test_round_trip(self, tmp_path):
        records = make_records(10)
        path = tmp_path / "pool.jsonl"
        write_records(path, records, "countlab dataset v1")
        assert read_records(path) == records

    def test_header_comment_first_line(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        write_records(path, [], "countlab dataset v1")
        assert path.read_text().startswith("# countlab dataset v1")
        assert read_records(path) == []

    def test_byte_identical_rewrites(self, tmp_path):
        records = make_records(5)
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        write_records(a, records, "h")
        write_records(b, records, "h")
        assert a.read_bytes() == b.read_bytes()

    def test_duplicate_id_cites_line(self, tmp_path):
        records = make_records(3)
        path = tmp_path / "dup.jsonl"
        write_records(path, records + [records[0]], "h")
        with pytest.raises(DataError, match=":5:"):
            read_records(path)

    def test_malformed_line_cites_line(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('# h\n{"id": "ok"\n')
        with pytest.raises(DataError, match=":2:"):
            read_records(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            read_records(tmp_path / "nope.jsonl")


class TestIdFiles:
    def test_ids_from_dataset_file(self, tmp_path):
        records = make_records(4)
        path = tmp_path / "pool.jsonl"
        write_records(path, records, "h")
        assert read_id_file(path) == {r.id for r in records}

    def test_ids_from_plain_list(self, tmp_path):
        path = tmp_path / "ids.txt"
        path.write_text("# comment\nr001\nr002\n\n")
        assert read_id_file(path) == {"r001", "r002"}


class TestExamplePreparation:
    def test_to_accepted_prefers_stored_number(self):
        records = make_records(2)
        stored = [r.__class__(**{**r.__dict__, "number": 7}) for r in records]
        accepted = to_accepted(stored)
        assert all(a.number.value == 7 for a in accepted)

    def test_to_accepted_parses_caption(self):
        accepted = to_accepted(make_records(2))
        assert all(a.number.value == 3 for a in accepted)

    def test_to_accepted_rejects_ambiguous(self):
        records = make_records(1, caption="no numbers at all")
        with pytest.raises(DataError):
            to_accepted(records)

    def test_general_examples_share_render_cache(self):
        records = make_records(3)
        cache = {}
        examples = to_general_examples(records, VOCAB, cache)
        again = to_general_examples(records, VOCAB, cache)
        assert len(cache) == 3
        for a, b in zip(examples, again):
            assert a.raster is b.raster

    def test_counting_examples_carry_number(self):
        examples = to_counting_examples(make_records(3), VOCAB)
        for ex in examples:
            assert ex.number.value == 3
            assert VOCAB.index_of("three") in ex.tokens
