import json
import struct

import numpy as np
import pytest

from bcq.greedy import quantize_matrix, quantize_rows
from container.errors import (
    BadMagicError,
    BoundsError,
    CheckpointError,
    DuplicateNameError,
    NonFiniteError,
    TruncatedPayloadError,
    VersionMismatchError,
)
from container.format import (
    HEADER,
    read_checkpoint,
    read_checkpoint_with_attributes,
    read_metadata,
    write_checkpoint,
)
from container.tensors import DenseTensor


def _pair(rng: np.random.Generator) -> list:
    dense = DenseTensor("dense", 8, 8, rng.standard_normal((8, 8)))
    weights = DenseTensor("packed", 8, 8, rng.standard_normal((8, 8)))
    return [dense, quantize_matrix(weights, [(8, 2)])]


def _payload(raw: bytes) -> bytes:
    _, start = read_metadata(raw)
    return raw[start:]


class TestDenseTensor:
    def test_vector_becomes_single_row(self):
        t = DenseTensor.from_array("bias", np.arange(5))
        assert t.shape == (1, 5)
        assert t.data.dtype == np.float32

    def test_data_length_must_match_shape(self):
        with pytest.raises(ValueError):
            DenseTensor("w", 2, 3, np.zeros(5))

    def test_empty_name_rejected(self):
        with pytest.raises(ValueError):
            DenseTensor("", 1, 1, np.zeros(1))


class TestWrite:
    def test_empty_list_is_header_only(self, tmp_path):
        path = tmp_path / "empty.bcq"
        written = write_checkpoint([], path)

        raw = path.read_bytes()
        magic, version, meta_len = HEADER.unpack_from(raw)
        assert (magic, version) == (b"BCQ1", 1)
        assert written == len(raw) == HEADER.size + meta_len
        assert json.loads(raw[HEADER.size :])["tensors"] == []
        assert read_checkpoint(path) == []

    def test_single_zero_is_four_zero_bytes(self, tmp_path):
        path = tmp_path / "zero.bcq"
        write_checkpoint([DenseTensor("z", 1, 1, np.zeros(1))], path)
        assert _payload(path.read_bytes()) == b"\x00" * 4

    def test_rewrite_is_byte_identical(self, tmp_path, rng):
        first = tmp_path / "a.bcq"
        second = tmp_path / "b.bcq"
        tensors = _pair(rng)
        write_checkpoint(tensors, first)
        write_checkpoint(read_checkpoint(first), second)
        assert first.read_bytes() == second.read_bytes()

    def test_read_gives_equal_tensors(self, tmp_path, rng):
        path = tmp_path / "pair.bcq"
        tensors = _pair(rng)
        write_checkpoint(tensors, path)
        assert read_checkpoint(path) == tensors

    def test_mixed_bit_rows_survive(self, tmp_path, rng):
        path = tmp_path / "mixed.bcq"
        weights = DenseTensor("emb", 6, 40, rng.standard_normal((6, 40)))
        t = quantize_rows(weights, [3, 1, 1, 4, 2, 3])
        write_checkpoint([t], path)
        (back,) = read_checkpoint(path)
        assert back == t
        assert back.clusters == ((1, 3), (2, 1), (1, 4), (1, 2), (1, 3))

    def test_file_size_is_header_meta_and_payloads(self, tmp_path, rng):
        path = tmp_path / "size.bcq"
        tensors = _pair(rng)
        written = write_checkpoint(tensors, path)

        raw = path.read_bytes()
        _, _, meta_len = HEADER.unpack_from(raw)
        # 8x8 dense = 256 B; 8 rows x 2 planes x (1 word + 1 scale) = 128 B
        assert written == len(raw) == HEADER.size + meta_len + 256 + 128

    def test_attributes_round_trip(self, tmp_path):
        path = tmp_path / "attrs.bcq"
        write_checkpoint([], path, attributes={"dims": {"d_model": 4}})
        _, attributes = read_checkpoint_with_attributes(path)
        assert attributes == {"dims": {"d_model": 4}}

    def test_duplicate_names_rejected(self, tmp_path):
        t = DenseTensor("w", 1, 1, np.ones(1))
        with pytest.raises(DuplicateNameError):
            write_checkpoint([t, t], tmp_path / "dup.bcq")

    def test_nan_rejected(self, tmp_path):
        t = DenseTensor("w", 1, 2, np.array([1.0, np.nan]))
        with pytest.raises(NonFiniteError):
            write_checkpoint([t], tmp_path / "nan.bcq")


class TestRead:
    @pytest.fixture
    def raw(self, tmp_path, rng) -> bytes:
        path = tmp_path / "ok.bcq"
        write_checkpoint(_pair(rng), path)
        return path.read_bytes()

    def _read(self, tmp_path, raw: bytes):
        path = tmp_path / "broken.bcq"
        path.write_bytes(raw)
        return read_checkpoint(path)

    def test_bad_magic(self, tmp_path, raw):
        with pytest.raises(BadMagicError):
            self._read(tmp_path, b"XXXX" + raw[4:])

    def test_version_mismatch(self, tmp_path, raw):
        patched = raw[:4] + struct.pack("<I", 2) + raw[8:]
        with pytest.raises(VersionMismatchError):
            self._read(tmp_path, patched)

    def test_truncated_payload(self, tmp_path, raw):
        with pytest.raises(TruncatedPayloadError):
            self._read(tmp_path, raw[:-1])

    def test_trailing_bytes(self, tmp_path, raw):
        with pytest.raises(BoundsError):
            self._read(tmp_path, raw + b"\x00")

    def test_overlapping_offsets(self, tmp_path, raw):
        metadata, start = read_metadata(raw)
        first, second = metadata.tensors
        # the second tensor claims the first one's bytes; the total length is unchanged
        second.offset = first.offset
        meta_bytes = metadata.model_dump_json().encode("utf-8")
        patched = HEADER.pack(b"BCQ1", 1, len(meta_bytes)) + meta_bytes + raw[start:]
        with pytest.raises(BoundsError, match="overlaps"):
            self._read(tmp_path, patched)

    def test_truncated_header(self, tmp_path, raw):
        with pytest.raises(TruncatedPayloadError):
            self._read(tmp_path, raw[:10])

    def test_garbled_metadata(self, tmp_path, raw):
        _, _, meta_len = HEADER.unpack_from(raw)
        garbled = raw[: HEADER.size] + b"{" * meta_len + raw[HEADER.size + meta_len :]
        with pytest.raises(CheckpointError):
            self._read(tmp_path, garbled)

    def test_nan_in_payload(self, tmp_path):
        path = tmp_path / "one.bcq"
        write_checkpoint([DenseTensor("w", 1, 1, np.ones(1))], path)
        raw = path.read_bytes()
        with pytest.raises(NonFiniteError):
            self._read(tmp_path, raw[:-4] + struct.pack("<f", float("nan")))
