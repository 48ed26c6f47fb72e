"""The fixed 54-byte restoration record.

Layout (little-endian): 6 int16 bounding-box bounds, 3 int16 original
dimensions, 9 float32 row-major rotation-scaling entries.  12 + 6 + 36 =
54 bytes.  The affine translation is not stored; restoration re-derives it
from a documented center-origin convention, unless the optional 12-byte
float32 translation sidecar is attached (66 bytes total).
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import FieldOverflow, InvalidBox, WrongLength
from .roi import RoiBox

RECORD_SIZE = 54
TRANSLATION_SIZE = 12
_RECORD = struct.Struct("<6h3h9f")
_TRANSLATION = struct.Struct("<3f")
INT16_MIN, INT16_MAX = -32768, 32767


@dataclass
class RoiMetadata:
    """Spatial restoration record for a cropped volume."""

    box: RoiBox
    original_shape: tuple[int, int, int]
    rot_scale: np.ndarray  # 3x3, rotation-scaling submatrix of the affine
    translation: np.ndarray | None = field(default=None)  # optional exact sidecar

    def __post_init__(self):
        self.rot_scale = np.asarray(self.rot_scale, dtype=np.float64)
        if self.rot_scale.shape != (3, 3):
            raise ValueError("rot_scale must be 3x3")
        if self.translation is not None:
            self.translation = np.asarray(self.translation, dtype=np.float64)
            if self.translation.shape != (3,):
                raise ValueError("translation must have 3 entries")

    def __eq__(self, other):
        if not isinstance(other, RoiMetadata):
            return NotImplemented
        if self.box != other.box or tuple(self.original_shape) != tuple(other.original_shape):
            return False
        if not np.array_equal(
            self.rot_scale.astype(np.float32), other.rot_scale.astype(np.float32)
        ):
            return False
        if (self.translation is None) != (other.translation is None):
            return False
        if self.translation is not None:
            return np.array_equal(
                self.translation.astype(np.float32),
                other.translation.astype(np.float32),
            )
        return True


def _check_int16(name: str, value: int) -> int:
    value = int(value)
    if not (INT16_MIN <= value <= INT16_MAX):
        raise FieldOverflow(f"{name}={value} does not fit int16")
    return value


def encode_metadata(m: RoiMetadata) -> bytes:
    """Serialize the record to exactly 54 bytes (translation excluded)."""
    fields = [
        _check_int16(name, v)
        for name, v in zip(
            ("x_min", "x_max", "y_min", "y_max", "z_min", "z_max"),
            m.box.as_tuple(),
        )
    ]
    fields += [
        _check_int16(name, v)
        for name, v in zip(("W", "H", "D"), m.original_shape)
    ]
    flat = [float(v) for v in np.asarray(m.rot_scale, dtype=np.float64).ravel()]
    return _RECORD.pack(*fields, *flat)


def decode_metadata(blob: bytes) -> RoiMetadata:
    """Inverse of encode_metadata; rejects inconsistent boxes."""
    if len(blob) != RECORD_SIZE:
        raise WrongLength(f"record must be {RECORD_SIZE} bytes, got {len(blob)}")
    vals = _RECORD.unpack(blob)
    x0, x1, y0, y1, z0, z1 = vals[:6]
    for lo, hi, axis in ((x0, x1, "x"), (y0, y1, "y"), (z0, z1, "z")):
        if lo > hi:
            raise InvalidBox(f"{axis}_min={lo} > {axis}_max={hi}")
        if lo < 0:
            raise InvalidBox(f"{axis}_min={lo} is negative")
    shape = tuple(int(v) for v in vals[6:9])
    rot = np.array(vals[9:18], dtype=np.float64).reshape(3, 3)
    return RoiMetadata(RoiBox(x0, x1, y0, y1, z0, z1), shape, rot)


def encode_translation(translation) -> bytes:
    """12-byte float32 sidecar carrying the exact affine translation."""
    t = np.asarray(translation, dtype=np.float64).ravel()
    if t.shape != (3,):
        raise ValueError("translation must have 3 entries")
    return _TRANSLATION.pack(*(float(v) for v in t))


def decode_translation(blob: bytes) -> np.ndarray:
    if len(blob) != TRANSLATION_SIZE:
        raise WrongLength(
            f"translation sidecar must be {TRANSLATION_SIZE} bytes, got {len(blob)}"
        )
    return np.array(_TRANSLATION.unpack(blob), dtype=np.float64)


def restore_affine(m: RoiMetadata) -> np.ndarray:
    """Rebuild a 4x4 affine from the record.

    Without the exact-translation sidecar the world origin is placed at the
    center of the original grid: t = -R @ ((W-1)/2, (H-1)/2, (D-1)/2).
    """
    affine = np.eye(4)
    affine[:3, :3] = m.rot_scale
    if m.translation is not None:
        affine[:3, 3] = m.translation
    else:
        w, h, d = m.original_shape
        center = np.array([(w - 1) / 2.0, (h - 1) / 2.0, (d - 1) / 2.0])
        affine[:3, 3] = -m.rot_scale @ center
    return affine


def write_metadata_file(m: RoiMetadata, path) -> None:
    """Write the standalone .mroi-meta sidecar (54 or 66 bytes)."""
    blob = encode_metadata(m)
    if m.translation is not None:
        blob += encode_translation(m.translation)
    with open(path, "wb") as fh:
        fh.write(blob)


def read_metadata_file(path) -> RoiMetadata:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) == RECORD_SIZE:
        return decode_metadata(blob)
    if len(blob) == RECORD_SIZE + TRANSLATION_SIZE:
        m = decode_metadata(blob[:RECORD_SIZE])
        m.translation = decode_translation(blob[RECORD_SIZE:])
        return m
    raise WrongLength(
        f"metadata file must be {RECORD_SIZE} or {RECORD_SIZE + TRANSLATION_SIZE} "
        f"bytes, got {len(blob)}"
    )
