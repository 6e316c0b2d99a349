import numpy as np
import pytest

from bcq.greedy import dequantize, quantize_matrix, quantize_rows
from container.tensors import DenseTensor
from kernel.gemv import footprint_bytes, gemv_dense, gemv_direct, memory_footprint
from kernel.lut import build_lut, gemv_lut
from kernel.packing import pack_plane, pack_row, unpack_plane, unpack_row


def _random_tensor(rng, rows, cols, q):
    return quantize_matrix(DenseTensor("w", rows, cols, rng.standard_normal((rows, cols))), [(rows, q)])


def _reference(t, x) -> np.ndarray:
    return dequantize(t).data.astype(np.float64) @ np.asarray(x, dtype=np.float64)


def _assert_close(y, reference):
    assert np.all(np.abs(y - reference) <= 1e-5 * (1 + np.abs(reference)))


class TestPacking:
    def test_all_plus_one(self):
        assert pack_row(np.ones(32)).tolist() == [0xFFFFFFFF]

    def test_all_minus_one(self):
        assert pack_row(-np.ones(32)).tolist() == [0]

    def test_bit_order(self):
        assert pack_row(np.array([1, -1, -1, 1])).tolist() == [0x9]

    def test_second_word(self):
        b = -np.ones(40)
        b[33] = 1
        assert pack_row(b).tolist() == [0, 0b10]

    def test_unpack_restores_codes(self, rng):
        b = rng.choice([-1, 1], size=77)
        assert unpack_row(pack_row(b), 77).tolist() == b.tolist()

    def test_unpack_restores_random_lengths(self, rng):
        for length in [1, 31, 32, 33, 64, 2048, *rng.integers(1, 2049, size=200).tolist()]:
            b = rng.choice([-1, 1], size=length)
            words = pack_row(b)
            assert words.shape == (-(-length // 32),)
            assert unpack_row(words, length).tolist() == b.tolist()

    def test_padding_bits_clear(self):
        assert pack_row(np.ones(3)).tolist() == [0b111]

    def test_rejects_non_sign_entries(self):
        with pytest.raises(ValueError):
            pack_row(np.array([1, 0, -1]))

    def test_plane_matches_rows(self, rng):
        bits = rng.random((5, 45)) > 0.5
        words = pack_plane(bits)
        assert words.shape == (5, 2)
        for i in range(5):
            assert words[i].tolist() == pack_row(np.where(bits[i], 1, -1)).tolist()
        np.testing.assert_array_equal(unpack_plane(words, 45), bits)

    def test_word_count_checked(self):
        with pytest.raises(ValueError):
            unpack_plane(np.zeros((1, 2), dtype=np.uint32), 70)


class TestGemvDirect:
    def test_constant_code(self):
        t = quantize_matrix(DenseTensor("w", 1, 6, np.full(6, 0.5)), [(1, 1)])
        x = np.array([1, 2, 3, 4, 5, 6], dtype=np.float32)
        assert gemv_direct(t, x).tolist() == [0.5 * 21]

    def test_matches_dequantized_dense(self, rng):
        t = _random_tensor(rng, 2, 4, 2)
        x = rng.standard_normal(4)
        np.testing.assert_allclose(gemv_direct(t, x), _reference(t, x), rtol=1e-5)

    def test_zero_input(self, rng):
        t = _random_tensor(rng, 7, 50, 3)
        assert not gemv_direct(t, np.zeros(50)).any()

    def test_mixed_row_bits(self, rng):
        w = DenseTensor("emb", 6, 70, rng.standard_normal((6, 70)))
        t = quantize_rows(w, [4, 1, 2, 1, 3, 4])
        x = rng.standard_normal(70) / np.sqrt(70)
        _assert_close(gemv_direct(t, x), _reference(t, x))

    @pytest.mark.parametrize("kernel", [gemv_direct, lambda t, x: gemv_lut(t, x, mu=4)])
    def test_linear_in_input(self, rng, kernel):
        for _ in range(50):
            rows, cols = int(rng.integers(1, 30)), int(rng.integers(1, 300))
            t = _random_tensor(rng, rows, cols, int(rng.integers(1, 5)))
            x1 = (rng.standard_normal(cols) / np.sqrt(cols)).astype(np.float32)
            x2 = (rng.standard_normal(cols) / np.sqrt(cols)).astype(np.float32)
            a, b = (float(v) for v in rng.uniform(-2, 2, size=2))
            combined = kernel(t, (a * x1.astype(np.float64) + b * x2).astype(np.float32))
            _assert_close(combined, a * kernel(t, x1) + b * kernel(t, x2))

    def test_wrong_length(self, rng):
        t = _random_tensor(rng, 2, 4, 1)
        with pytest.raises(ValueError):
            gemv_direct(t, np.zeros(5))

    def test_non_finite_input(self, rng):
        t = _random_tensor(rng, 2, 4, 1)
        with pytest.raises(ValueError):
            gemv_direct(t, np.array([0, np.nan, 0, 0]))

    def test_dense_baseline(self):
        w = np.array([[1, 2], [3, 4]], dtype=np.float32)
        assert gemv_dense(w, np.array([1, 1], dtype=np.float32)).tolist() == [3, 7]


class TestLut:
    def test_two_entry_block(self):
        lut = build_lut([1, 2], 2)
        assert lut.tables.tolist() == [[0, 1, 2, 3]]
        assert lut.additions == 3

    def test_empty_subset_is_zero(self, rng):
        lut = build_lut(rng.standard_normal(40), 8)
        assert not lut.tables[:, 0].any()
        assert lut.blocks == 5

    def test_zero_block(self):
        assert not build_lut(np.zeros(8), 4).tables.any()

    def test_tail_block_is_zero_padded(self):
        lut = build_lut([1, 2, 3], 2)
        assert lut.tables[1].tolist() == [0, 3, 0, 3]

    @pytest.mark.parametrize("mu", [0, 17])
    def test_mu_range(self, mu):
        with pytest.raises(ValueError):
            build_lut([1.0], mu)

    def test_additions_per_block(self):
        assert build_lut(np.ones(64), 8).additions == 2**8 - 1

    @pytest.mark.parametrize("mu", [1, 3, 4, 8, 11])
    def test_matches_direct(self, rng, mu):
        for _ in range(10):
            rows, cols = int(rng.integers(1, 40)), int(rng.integers(1, 200))
            t = _random_tensor(rng, rows, cols, int(rng.integers(1, 5)))
            x = rng.standard_normal(cols) / np.sqrt(cols)
            _assert_close(gemv_lut(t, x, mu=mu), gemv_direct(t, x))

    def test_all_plus_codes(self):
        t = quantize_matrix(DenseTensor("w", 2, 9, np.array([[1.0] * 9, [3.0] * 9])), [(2, 1)])
        x = np.arange(9, dtype=np.float32)
        assert gemv_lut(t, x, mu=4).tolist() == [36.0, 108.0]

    def test_prebuilt_table_must_match_mu(self, rng):
        t = _random_tensor(rng, 2, 16, 1)
        x = rng.standard_normal(16)
        with pytest.raises(ValueError):
            gemv_lut(t, x, mu=8, lut=build_lut(x, 4))


class TestFootprint:
    def test_two_bit_square(self, rng):
        t = _random_tensor(rng, 512, 512, 2)
        assert memory_footprint(t) == 2 * 512 * 16 * 4 + 2 * 512 * 4 == 69632

    def test_single_word_row(self, rng):
        assert memory_footprint(_random_tensor(rng, 1, 32, 1)) == 8

    def test_closed_form(self, rng):
        for _ in range(50):
            rows, cols = int(rng.integers(1, 60)), int(rng.integers(1, 300))
            row_bits = rng.integers(1, 9, size=rows)
            w = DenseTensor("w", rows, cols, rng.standard_normal((rows, cols)))
            t = quantize_rows(w, row_bits)
            words = -(-cols // 32)
            assert memory_footprint(t) == int(row_bits.sum()) * (words * 4 + 4)

    def test_smaller_than_dense_when_inequality_holds(self, rng):
        for _ in range(50):
            rows, cols, q = int(rng.integers(1, 30)), int(rng.integers(2, 300)), int(rng.integers(1, 9))
            if q * (-(-cols // 32) * 4 + 4) < 4 * cols:
                assert footprint_bytes([(rows, q)], cols) < 4 * rows * cols
