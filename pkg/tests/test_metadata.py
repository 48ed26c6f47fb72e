import struct

import numpy as np
import pytest

from medroi import (
    FieldOverflow,
    InvalidBox,
    RoiBox,
    RoiMetadata,
    WrongLength,
    decode_metadata,
    encode_metadata,
    restore_affine,
)
from medroi.metadata import (
    RECORD_SIZE,
    decode_translation,
    encode_translation,
    read_metadata_file,
    write_metadata_file,
)


def random_record(rng) -> RoiMetadata:
    dims = rng.integers(1, 200, size=3)
    lo = [int(rng.integers(0, d)) for d in dims]
    hi = [int(rng.integers(l, d)) for l, d in zip(lo, dims)]
    rot = rng.uniform(-4.0, 4.0, size=(3, 3))
    return RoiMetadata(
        box=RoiBox(lo[0], hi[0], lo[1], hi[1], lo[2], hi[2]),
        original_shape=tuple(int(d) for d in dims),
        rot_scale=rot,
    )


def test_record_is_54_bytes_for_1000_random_records():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        m = random_record(rng)
        assert len(encode_metadata(m)) == RECORD_SIZE


def test_decode_encode_identity():
    rng = np.random.default_rng(77)
    for _ in range(1000):
        m = random_record(rng)
        assert decode_metadata(encode_metadata(m)) == m


def test_encode_decode_identity_on_byte_strings():
    rng = np.random.default_rng(78)
    for _ in range(200):
        blob = encode_metadata(random_record(rng))
        assert encode_metadata(decode_metadata(blob)) == blob


def test_little_endian_layout():
    m = RoiMetadata(
        box=RoiBox(1, 2, 3, 4, 5, 6),
        original_shape=(10, 11, 12),
        rot_scale=np.eye(3),
    )
    blob = encode_metadata(m)
    assert blob[0:2] == b"\x01\x00"           # x_min = 1, little-endian int16
    assert blob[18:22] == b"\x00\x00\x80\x3f"  # rot[0,0] = f32 1.0


def test_zero_record_bytes():
    m = RoiMetadata(
        box=RoiBox(0, 0, 0, 0, 0, 0),
        original_shape=(1, 1, 1),
        rot_scale=np.zeros((3, 3)),
    )
    blob = encode_metadata(m)
    assert blob[12:18] == b"\x01\x00\x01\x00\x01\x00"
    assert blob[:12] == bytes(12)
    assert blob[18:] == bytes(36)


def test_wrong_length_rejected():
    with pytest.raises(WrongLength):
        decode_metadata(bytes(53))
    with pytest.raises(WrongLength):
        decode_metadata(bytes(55))


def test_invalid_box_rejected():
    blob = struct.pack("<6h3h9f", 5, 2, 0, 1, 0, 1, 8, 8, 8, *([1.0] * 9))
    with pytest.raises(InvalidBox):
        decode_metadata(blob)


def test_field_overflow():
    m = RoiMetadata(
        box=RoiBox(0, 1, 0, 1, 0, 1),
        original_shape=(40000, 8, 8),
        rot_scale=np.eye(3),
    )
    with pytest.raises(FieldOverflow):
        encode_metadata(m)


def test_injective_on_sample():
    rng = np.random.default_rng(99)
    seen = set()
    for _ in range(300):
        blob = encode_metadata(random_record(rng))
        assert blob not in seen
        seen.add(blob)


class TestRestoreAffine:
    def test_identity_shape3(self):
        m = RoiMetadata(RoiBox(0, 1, 0, 1, 0, 1), (3, 3, 3), np.eye(3))
        affine = restore_affine(m)
        np.testing.assert_array_equal(affine[:3, :3], np.eye(3))
        np.testing.assert_array_equal(affine[:3, 3], [-1, -1, -1])
        np.testing.assert_array_equal(affine[3], [0, 0, 0, 1])

    def test_diag2_shape5(self):
        m = RoiMetadata(RoiBox(0, 1, 0, 1, 0, 1), (5, 5, 5), np.diag([2., 2., 2.]))
        np.testing.assert_array_equal(restore_affine(m)[:3, 3], [-4, -4, -4])

    def test_matrix_multiply_oracle_seed3(self):
        rng = np.random.default_rng(3)
        rot = rng.uniform(-3, 3, size=(3, 3))
        shape = (9, 13, 7)
        m = RoiMetadata(RoiBox(0, 1, 0, 1, 0, 1), shape, rot)
        center = np.array([(shape[0] - 1) / 2, (shape[1] - 1) / 2,
                           (shape[2] - 1) / 2])
        np.testing.assert_allclose(restore_affine(m)[:3, 3], -rot @ center)

    def test_exact_translation_overrides_convention(self):
        m = RoiMetadata(RoiBox(0, 1, 0, 1, 0, 1), (8, 8, 8), np.eye(3),
                        translation=np.array([4.0, -5.0, 6.0]))
        np.testing.assert_array_equal(restore_affine(m)[:3, 3], [4, -5, 6])


def test_translation_sidecar_round_trip():
    t = np.array([1.5, -2.25, 1e6])
    blob = encode_translation(t)
    assert len(blob) == 12
    np.testing.assert_array_equal(decode_translation(blob),
                                  t.astype(np.float32).astype(np.float64))


def test_metadata_file_round_trip(tmp_path):
    rng = np.random.default_rng(11)
    m = random_record(rng)
    path = tmp_path / "rec.mroi-meta"
    write_metadata_file(m, path)
    assert path.stat().st_size == 54
    assert read_metadata_file(path) == m

    m.translation = np.array([1.0, 2.0, 3.0])
    write_metadata_file(m, path)
    assert path.stat().st_size == 66
    assert read_metadata_file(path) == m
