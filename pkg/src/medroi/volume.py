"""The in-memory 3D volume type shared by every stage of the pipeline.

A ``Volume`` is a scalar grid indexed ``data[x, y, z]`` together with the
voxel-to-world affine and enough file provenance (dtype, on-disk byte
length, intensity scaling) to make compression-ratio accounting and
round-trips well defined.  The canonical serialization order of the grid
is x fastest, then y, then z, which is also the NIfTI on-disk order.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Supported sample types, keyed by the short codes used throughout the
# toolkit (archives, payloads, CLI).
DTYPE_CODES = {
    "u8": np.dtype(np.uint8),
    "i16": np.dtype(np.int16),
    "u16": np.dtype(np.uint16),
    "f32": np.dtype(np.float32),
}

# Stable numeric ids for the archive header.
DTYPE_IDS = {"u8": 0, "i16": 1, "u16": 2, "f32": 3}
DTYPE_FROM_ID = {v: k for k, v in DTYPE_IDS.items()}

# NIfTI-1 single-file layout: 348-byte header + 4-byte extension pad.
NIFTI_HEADER_SIZE = 348
DEFAULT_VOX_OFFSET = 352

MAX_DIM = 32767  # every dimension must fit int16 for the restoration record


def dtype_code_of(dtype) -> str:
    """Short code ("u8", "i16", "u16", "f32") for a numpy dtype."""
    dt = np.dtype(dtype).newbyteorder("=")
    for code, cand in DTYPE_CODES.items():
        if cand == dt:
            return code
    raise ValueError(f"unsupported sample dtype: {dtype!r}")


@dataclass
class Volume:
    """A 3D scalar grid with spatial and provenance metadata.

    data            voxel grid, shape (W, H, D), dtype one of DTYPE_CODES
    affine          4x4 voxel-index -> world-mm matrix, bottom row (0,0,0,1)
    source_dtype    short code of the on-disk sample type
    scl_slope/inter NIfTI intensity scaling, preserved but never applied
    source_byte_len uncompressed on-disk byte count (header + data)
    """

    data: np.ndarray
    affine: np.ndarray
    source_dtype: str
    scl_slope: float = 1.0
    scl_inter: float = 0.0
    source_byte_len: int = field(default=0)

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 3:
            raise ValueError(f"volume data must be 3D, got shape {self.data.shape}")
        w, h, d = self.data.shape
        if not (1 <= w <= MAX_DIM and 1 <= h <= MAX_DIM and 1 <= d <= MAX_DIM):
            raise ValueError(f"dimensions {self.data.shape} outside [1, {MAX_DIM}]")
        if self.source_dtype not in DTYPE_CODES:
            raise ValueError(f"unknown source_dtype {self.source_dtype!r}")
        want = DTYPE_CODES[self.source_dtype]
        if self.data.dtype != want:
            raise ValueError(
                f"data dtype {self.data.dtype} does not match source_dtype "
                f"{self.source_dtype!r} ({want})"
            )
        self.affine = np.asarray(self.affine, dtype=np.float64)
        if self.affine.shape != (4, 4):
            raise ValueError("affine must be 4x4")
        if not np.array_equal(self.affine[3], [0.0, 0.0, 0.0, 1.0]):
            raise ValueError("affine bottom row must be (0, 0, 0, 1)")
        if self.source_byte_len == 0:
            self.source_byte_len = DEFAULT_VOX_OFFSET + self.data.nbytes
        min_len = NIFTI_HEADER_SIZE + self.data.nbytes
        if self.source_byte_len < min_len:
            raise ValueError(
                f"source_byte_len {self.source_byte_len} below minimum {min_len}"
            )

    @property
    def dims(self) -> tuple[int, int, int]:
        w, h, d = self.data.shape
        return (int(w), int(h), int(d))

    @property
    def nvoxels(self) -> int:
        return int(self.data.size)

    @property
    def itemsize(self) -> int:
        return DTYPE_CODES[self.source_dtype].itemsize

    def tobytes_canonical(self) -> bytes:
        """Serialize voxels in canonical order (x fastest, then y, then z)."""
        return np.ascontiguousarray(self.data.ravel(order="F")).tobytes()

    @classmethod
    def from_array(
        cls,
        data: np.ndarray,
        affine: np.ndarray | None = None,
        scl_slope: float = 1.0,
        scl_inter: float = 0.0,
        source_byte_len: int = 0,
    ) -> "Volume":
        """Wrap an array as a Volume, inferring the dtype code.

        source_byte_len defaults to the size the NIfTI writer would emit.
        """
        data = np.asarray(data)
        if affine is None:
            affine = np.eye(4)
        return cls(
            data=data,
            affine=affine,
            source_dtype=dtype_code_of(data.dtype),
            scl_slope=scl_slope,
            scl_inter=scl_inter,
            source_byte_len=source_byte_len,
        )


def array_from_canonical(buf: bytes, dims: tuple[int, int, int], dtype) -> np.ndarray:
    """Inverse of tobytes_canonical: rebuild a (W, H, D) grid from the stream."""
    w, h, d = dims
    flat = np.frombuffer(buf, dtype=np.dtype(dtype))
    if flat.size != w * h * d:
        raise ValueError(f"buffer holds {flat.size} samples, expected {w * h * d}")
    return flat.reshape((w, h, d), order="F")
