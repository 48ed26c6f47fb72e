"""Serialization of compressed archives (the .mroi file format).

Single-file little-endian layout, version 1:

    magic "MROI" | version u8 | mode u8 | dim_mode u8 | dtype u8 |
    codec id (u8 length + bytes) | quality i16 | shape 3 x u16 |
    scl_slope f32 | scl_inter f32 | affine rot-scale 9 x f32 |
    affine translation 3 x f32 |
    [ROI mode only: record flag u8 (1 = 54-byte record, 2 = +12-byte
     exact translation), record bytes] |
    payload count u32 | per payload: u32 byte length + bytes

The serialized length is the compressed size used for every ratio metric;
an ROI archive is exactly 55 bytes (record + flag) larger than the Full
archive with identical payloads, 67 with the exact-translation sidecar.
"""
from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field

import numpy as np

from .codec import DimMode, EncodedPayload
from .errors import BadMagic, ContainerError, Truncated, UnsupportedVersion
from .metadata import (
    RECORD_SIZE,
    TRANSLATION_SIZE,
    RoiMetadata,
    decode_metadata,
    decode_translation,
    encode_metadata,
    encode_translation,
)
from .volume import DTYPE_FROM_ID, DTYPE_IDS, MAX_DIM

ARCHIVE_MAGIC = b"MROI"
ARCHIVE_VERSION = 1

# Byte accounting, used by tests and documented in FORMAT.md.
FIXED_OVERHEAD = 4 + 1 + 1 + 1 + 1 + 1 + 2 + 6 + 4 + 4 + 36 + 12 + 4  # + len(codec id)
ROI_EXTRA = 1 + RECORD_SIZE
ROI_EXTRA_EXACT = ROI_EXTRA + TRANSLATION_SIZE
PER_PAYLOAD_OVERHEAD = 4

_MAX_PAYLOAD = 0xFFFFFFFF


class Mode(enum.Enum):
    FULL = "full"
    ROI = "roi"

    @property
    def wire(self) -> int:
        return 0 if self is Mode.FULL else 1

    @classmethod
    def from_wire(cls, value: int) -> "Mode":
        if value == 0:
            return cls.FULL
        if value == 1:
            return cls.ROI
        raise ContainerError(f"bad mode byte {value}")


@dataclass
class Archive:
    """A compressed volume plus everything needed to restore it."""

    mode: Mode
    dim_mode: DimMode
    codec_id: str
    quality: int
    original_shape: tuple[int, int, int]
    dtype: str
    scl_slope: float
    scl_inter: float
    rot_scale: np.ndarray      # source affine rotation-scaling (float32 wire)
    translation: np.ndarray    # source affine translation (float32 wire)
    metadata: RoiMetadata | None = field(default=None)
    payloads: list[EncodedPayload] = field(default_factory=list)

    def __post_init__(self):
        self.rot_scale = np.asarray(self.rot_scale, dtype=np.float64)
        self.translation = np.asarray(self.translation, dtype=np.float64)

    @property
    def region_dims(self) -> tuple[int, int, int]:
        """Dimensions of the encoded region (box for ROI, volume for Full)."""
        if self.mode is Mode.ROI:
            return self.metadata.box.dims
        return self.original_shape

    def source_affine(self) -> np.ndarray:
        affine = np.eye(4)
        affine[:3, :3] = self.rot_scale
        affine[:3, 3] = self.translation
        return affine

    def __eq__(self, other):
        if not isinstance(other, Archive):
            return NotImplemented
        return (
            self.mode == other.mode
            and self.dim_mode == other.dim_mode
            and self.codec_id == other.codec_id
            and self.quality == other.quality
            and tuple(self.original_shape) == tuple(other.original_shape)
            and self.dtype == other.dtype
            and np.float32(self.scl_slope) == np.float32(other.scl_slope)
            and np.float32(self.scl_inter) == np.float32(other.scl_inter)
            and np.array_equal(self.rot_scale.astype(np.float32),
                               other.rot_scale.astype(np.float32))
            and np.array_equal(self.translation.astype(np.float32),
                               other.translation.astype(np.float32))
            and self.metadata == other.metadata
            and self.payloads == other.payloads
        )


def _expected_payload_count(archive: Archive) -> int:
    if archive.dim_mode is DimMode.VOLUME3D:
        return 1
    return archive.region_dims[2]


def _validate(archive: Archive) -> None:
    if not archive.codec_id or len(archive.codec_id) > 16 or not archive.codec_id.isascii():
        raise ContainerError(f"codec id {archive.codec_id!r} must be 1..16 ASCII bytes")
    if archive.dtype not in DTYPE_IDS:
        raise ContainerError(f"unknown dtype code {archive.dtype!r}")
    if not (-32768 <= int(archive.quality) <= 32767):
        raise ContainerError(f"quality {archive.quality} does not fit int16")
    for v in archive.original_shape:
        if not (1 <= int(v) <= MAX_DIM):
            raise ContainerError(f"shape entry {v} outside [1, {MAX_DIM}]")
    if (archive.metadata is None) == (archive.mode is Mode.ROI):
        raise ContainerError("metadata must be present exactly in ROI mode")
    if archive.mode is Mode.ROI:
        box = archive.metadata.box
        shape = archive.original_shape
        if (box.x_max >= shape[0] or box.y_max >= shape[1] or box.z_max >= shape[2]):
            raise ContainerError(f"box {box.as_tuple()} outside shape {shape}")
    n = len(archive.payloads)
    if n == 0:
        raise ContainerError("archive must hold at least one payload")
    expected = _expected_payload_count(archive)
    if n != expected:
        kind = "slices of the encoded region" if archive.dim_mode is DimMode.SLICE2D else "payload"
        raise ContainerError(f"payload count {n} != expected {expected} ({kind})")
    for i, p in enumerate(archive.payloads):
        if len(p.data) == 0:
            raise ContainerError(f"payload {i} is empty")
        if len(p.data) > _MAX_PAYLOAD:
            raise ContainerError(f"payload {i} exceeds 4 GiB")


def serialize(archive: Archive) -> bytes:
    """Encode the archive; the result's length is its compressed size."""
    _validate(archive)
    out = bytearray()
    out += ARCHIVE_MAGIC
    out += struct.pack(
        "<BBBB",
        ARCHIVE_VERSION,
        archive.mode.wire,
        archive.dim_mode.wire,
        DTYPE_IDS[archive.dtype],
    )
    ident = archive.codec_id.encode("ascii")
    out += struct.pack("<B", len(ident)) + ident
    out += struct.pack("<h", int(archive.quality))
    out += struct.pack("<3H", *(int(v) for v in archive.original_shape))
    out += struct.pack("<ff", float(archive.scl_slope), float(archive.scl_inter))
    out += np.asarray(archive.rot_scale, dtype="<f4").tobytes()
    out += np.asarray(archive.translation, dtype="<f4").tobytes()
    if archive.mode is Mode.ROI:
        m = archive.metadata
        if m.translation is not None:
            out += struct.pack("<B", 2)
            out += encode_metadata(m) + encode_translation(m.translation)
        else:
            out += struct.pack("<B", 1)
            out += encode_metadata(m)
    out += struct.pack("<I", len(archive.payloads))
    for p in archive.payloads:
        out += struct.pack("<I", len(p.data))
        out += p.data
    return bytes(out)


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        end = self.pos + n
        if end > len(self.blob):
            raise Truncated(
                f"archive truncated while reading {what} "
                f"(need {n} bytes at offset {self.pos}, have {len(self.blob) - self.pos})"
            )
        chunk = self.blob[self.pos:end]
        self.pos = end
        return chunk

    def unpack(self, fmt: str, what: str):
        s = struct.Struct(fmt)
        return s.unpack(self.take(s.size, what))

    def at_end(self) -> bool:
        return self.pos == len(self.blob)


def deserialize(blob: bytes) -> Archive:
    """Decode an archive; every malformation raises a ContainerError."""
    r = _Reader(blob)
    if r.take(4, "magic") != ARCHIVE_MAGIC:
        raise BadMagic(f"not an archive: magic {blob[:4]!r}")
    (version,) = r.unpack("<B", "version")
    if version != ARCHIVE_VERSION:
        raise UnsupportedVersion(f"archive version {version}, supported: {ARCHIVE_VERSION}")
    (mode_b, dim_b, dtype_b) = r.unpack("<BBB", "mode bytes")
    mode = Mode.from_wire(mode_b)
    try:
        dim_mode = DimMode.from_wire(dim_b)
    except ValueError as exc:
        raise ContainerError(str(exc)) from exc
    dtype = DTYPE_FROM_ID.get(dtype_b)
    if dtype is None:
        raise ContainerError(f"bad dtype byte {dtype_b}")
    (id_len,) = r.unpack("<B", "codec id length")
    if not (1 <= id_len <= 16):
        raise ContainerError(f"codec id length {id_len} outside [1, 16]")
    try:
        codec_id = r.take(id_len, "codec id").decode("ascii")
    except UnicodeDecodeError as exc:
        raise ContainerError("codec id is not ASCII") from exc
    (quality,) = r.unpack("<h", "quality")
    shape = r.unpack("<3H", "shape")
    for v in shape:
        if not (1 <= v <= MAX_DIM):
            raise ContainerError(f"shape entry {v} outside [1, {MAX_DIM}]")
    scl_slope, scl_inter = r.unpack("<ff", "intensity scaling")
    rot = np.frombuffer(r.take(36, "affine rotation-scaling"), dtype="<f4")
    rot = rot.astype(np.float64).reshape(3, 3)
    trans = np.frombuffer(r.take(12, "affine translation"), dtype="<f4")
    trans = trans.astype(np.float64)

    metadata = None
    if mode is Mode.ROI:
        (flag,) = r.unpack("<B", "metadata flag")
        if flag not in (1, 2):
            raise ContainerError(f"bad metadata flag {flag}")
        metadata = decode_metadata(r.take(RECORD_SIZE, "metadata record"))
        if flag == 2:
            metadata.translation = decode_translation(
                r.take(TRANSLATION_SIZE, "metadata translation")
            )

    (count,) = r.unpack("<I", "payload count")
    if count == 0:
        raise ContainerError("archive holds no payloads")
    region = metadata.box.dims if mode is Mode.ROI else tuple(int(v) for v in shape)
    if dim_mode is DimMode.VOLUME3D:
        expected, per_dims = 1, region
    else:
        expected, per_dims = region[2], (region[0], region[1])
    if count != expected:
        raise ContainerError(f"payload count {count} != expected {expected}")
    payloads = []
    for i in range(count):
        (length,) = r.unpack("<I", f"payload {i} length")
        if length == 0:
            raise ContainerError(f"payload {i} is empty")
        data = r.take(length, f"payload {i}")
        payloads.append(EncodedPayload(data=data, source_dims=per_dims, dtype=dtype))
    if not r.at_end():
        raise ContainerError(f"{len(blob) - r.pos} trailing bytes after archive")

    return Archive(
        mode=mode,
        dim_mode=dim_mode,
        codec_id=codec_id,
        quality=int(quality),
        original_shape=tuple(int(v) for v in shape),
        dtype=dtype,
        scl_slope=float(scl_slope),
        scl_inter=float(scl_inter),
        rot_scale=rot,
        translation=trans,
        metadata=metadata,
        payloads=payloads,
    )
