import math

import numpy as np
import pytest

from countlab.captions import WORD_VALUES
from countlab.encoder import (
    EncoderDims,
    Params,
    Vocabulary,
    encode_image,
    encode_text,
    grad_check,
    init_params,
    load_params,
    save_params,
    similarity,
)
from countlab.errors import DataError, UsageError
from countlab.scenes import Raster


def small_dims(vocab_size=16):
    return EncoderDims(vocab_size, token_dim=6, hidden_dim=8, embed_dim=5, height=6, width=6)


class TestVocabulary:
    def test_default_contains_number_words(self):
        vocab = Vocabulary.default()
        for word in WORD_VALUES:
            assert vocab.index_of(word) > 0

    def test_unknown_maps_to_zero(self):
        vocab = Vocabulary.from_words(["two", "three", "four", "five", "six", "seven", "eight", "nine", "ten"])
        assert vocab.encode("zebra two")[0] == 0
        assert vocab.encode("zebra two")[1] == vocab.index_of("two")

    def test_number_token_ids(self):
        vocab = Vocabulary.default()
        ids = vocab.number_token_ids()
        assert len(ids) == 9
        assert vocab.index_of("three") in ids

    def test_encode_strips_punctuation_and_case(self):
        vocab = Vocabulary.default()
        assert vocab.encode("Three discs!") == [vocab.index_of("three"), vocab.index_of("discs")]

    def test_missing_number_words_rejected(self):
        with pytest.raises(UsageError):
            Vocabulary.from_words(["dog", "cat"])


class TestParamsVector:
    def test_round_trip(self):
        dims = small_dims()
        params = init_params(dims, seed=1)
        vec = params.to_vector()
        assert vec.size == dims.n_params()
        back = Params.from_vector(dims, vec)
        assert np.array_equal(back.text_embedding, params.text_embedding)
        assert np.array_equal(back.image_w1, params.image_w1)
        assert back.log_scale == params.log_scale

    def test_init_deterministic(self):
        dims = small_dims()
        a = init_params(dims, seed=3)
        b = init_params(dims, seed=3)
        assert np.array_equal(a.to_vector(), b.to_vector())

    def test_init_scale_and_tau(self):
        dims = small_dims()
        params = init_params(dims, seed=0)
        assert params.log_scale == pytest.approx(math.log(1 / 0.07))
        bound = 1 / math.sqrt(dims.height * dims.width)
        assert np.abs(params.image_w1).max() <= bound
        assert np.all(params.text_b1 == 0)

    def test_wrong_vector_size(self):
        dims = small_dims()
        with pytest.raises(UsageError):
            Params.from_vector(dims, np.zeros(3))


class TestCheckpointFile:
    def test_save_load_bitwise(self, tmp_path):
        dims = small_dims()
        params = init_params(dims, seed=9)
        path = tmp_path / "ckpt.bin"
        save_params(params, path)
        loaded = load_params(path)
        assert loaded.dims == dims
        assert np.array_equal(loaded.to_vector(), params.to_vector())

    def test_deterministic_bytes(self, tmp_path):
        params = init_params(small_dims(), seed=4)
        p1, p2 = tmp_path / "a.bin", tmp_path / "b.bin"
        save_params(params, p1)
        save_params(params, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_rejects_garbage(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"not a checkpoint at all")
        with pytest.raises(DataError):
            load_params(path)

    def test_rejects_truncation(self, tmp_path):
        params = init_params(small_dims(), seed=4)
        path = tmp_path / "trunc.bin"
        save_params(params, path)
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(DataError):
            load_params(path)


class TestEncodeText:
    def test_unit_norm(self):
        params = init_params(small_dims(), seed=2)
        e = encode_text(params, [1, 2, 3])
        assert abs(np.linalg.norm(e) - 1.0) < 1e-9

    def test_order_invariance(self):
        params = init_params(small_dims(), seed=2)
        a = encode_text(params, [1, 2, 3, 4])
        b = encode_text(params, [4, 3, 2, 1])
        assert np.array_equal(a, b)

    def test_empty_tokens_rejected(self):
        params = init_params(small_dims(), seed=2)
        with pytest.raises(UsageError):
            encode_text(params, [])

    def test_number_row_sensitivity(self):
        # If two captions differ only in the number token and the embedding
        # rows of those tokens differ, the outputs must differ too.
        params = init_params(small_dims(), seed=5)
        params.text_embedding[3] = 1.0
        params.text_embedding[4] = -1.0
        a = encode_text(params, [1, 3, 2])
        b = encode_text(params, [1, 4, 2])
        assert not np.allclose(a, b)

    def test_determinism(self):
        params = init_params(small_dims(), seed=2)
        assert np.array_equal(encode_text(params, [5, 6]), encode_text(params, [5, 6]))


class TestEncodeImage:
    def make_raster(self, dims, fill=0.5):
        return Raster(dims.height, dims.width, np.full((dims.height, dims.width), fill))

    def test_unit_norm(self):
        dims = small_dims()
        params = init_params(dims, seed=2)
        e = encode_image(params, self.make_raster(dims))
        assert abs(np.linalg.norm(e) - 1.0) < 1e-9

    def test_dim_mismatch(self):
        params = init_params(small_dims(), seed=2)
        with pytest.raises(UsageError):
            encode_image(params, Raster(3, 3, np.zeros((3, 3))))

    def test_zero_raster_hits_epsilon_guard(self):
        # Zero input with zero biases gives a zero pre-normalization vector,
        # which the guard maps to the first basis vector.
        dims = small_dims()
        params = init_params(dims, seed=2)
        e = encode_image(params, self.make_raster(dims, fill=0.0))
        expected = np.zeros(dims.embed_dim)
        expected[0] = 1.0
        assert np.array_equal(e, expected)

    def test_single_glyph_sensitivity(self):
        dims = small_dims()
        rng = np.random.default_rng(0)
        distinct = 0
        for trial in range(100):
            params = init_params(dims, seed=trial)
            base = np.zeros((dims.height, dims.width))
            base[1:3, 1:3] = 0.8
            other = base.copy()
            other[4:6, 4:6] = 0.6
            ea = encode_image(params, Raster(dims.height, dims.width, base))
            eb = encode_image(params, Raster(dims.height, dims.width, other))
            if not np.allclose(ea, eb):
                distinct += 1
        assert distinct == 100


class TestSimilarity:
    def test_identical(self):
        u = np.zeros(4)
        u[1] = 1.0
        assert similarity(u, u) == 1.0

    def test_opposite(self):
        u = np.zeros(4)
        u[1] = 1.0
        assert similarity(u, -u) == -1.0

    def test_orthogonal(self):
        u = np.zeros(4)
        v = np.zeros(4)
        u[0] = 1.0
        v[1] = 1.0
        assert similarity(u, v) == 0.0


class TestGradCheck:
    def test_quadratic_loss_exact(self):
        dims = small_dims(vocab_size=4)
        params = init_params(dims, seed=7)

        def quadratic(p):
            vec = p.to_vector()
            grads = Params.from_vector(dims, vec.copy())
            return 0.5 * float(vec @ vec), grads

        report = grad_check(params, quadratic, probe_count=50, step=1e-5, tol=1e-8,
                            rng=np.random.default_rng(1))
        assert report.passed
        assert report.max_relative_error < 1e-8

    def test_detects_corrupted_gradient(self):
        dims = small_dims(vocab_size=4)
        params = init_params(dims, seed=7)

        def corrupted(p):
            vec = p.to_vector()
            grad = vec.copy()
            grad[10] *= 2.0
            return 0.5 * float(vec @ vec), Params.from_vector(dims, grad)

        report = grad_check(params, corrupted, step=1e-5, tol=1e-4, coordinates=[10])
        assert not report.passed
        assert report.checks[0].relative_error > 0.3
