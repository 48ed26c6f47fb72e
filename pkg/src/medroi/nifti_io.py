"""Minimal NIfTI-1 single-file reader and writer.

Covers exactly what the toolkit needs: 3D volumes (or 4D with a singleton
fourth dimension) in uint8, int16, uint16, or float32, plain or gzipped,
little- or big-endian headers on read, little-endian on write.  The affine
is taken from the sform when present, the qform otherwise, and falls back
to a pixdim diagonal.  Intensity scaling (scl_slope/scl_inter) is carried
on the Volume but never applied, so round-trips stay bit-exact.
"""
from __future__ import annotations

import gzip
import io
import zlib
from pathlib import Path

import numpy as np

from .errors import NiftiError
from .volume import DTYPE_CODES, NIFTI_HEADER_SIZE, DEFAULT_VOX_OFFSET, MAX_DIM, Volume

# nifti1.h field layout; numpy keeps these packed, total itemsize 348.
HEADER_DTYPE = np.dtype([
    ("sizeof_hdr", "<i4"),
    ("data_type", "S10"),
    ("db_name", "S18"),
    ("extents", "<i4"),
    ("session_error", "<i2"),
    ("regular", "S1"),
    ("dim_info", "S1"),
    ("dim", "<i2", (8,)),
    ("intent_p1", "<f4"),
    ("intent_p2", "<f4"),
    ("intent_p3", "<f4"),
    ("intent_code", "<i2"),
    ("datatype", "<i2"),
    ("bitpix", "<i2"),
    ("slice_start", "<i2"),
    ("pixdim", "<f4", (8,)),
    ("vox_offset", "<f4"),
    ("scl_slope", "<f4"),
    ("scl_inter", "<f4"),
    ("slice_end", "<i2"),
    ("slice_code", "i1"),
    ("xyzt_units", "i1"),
    ("cal_max", "<f4"),
    ("cal_min", "<f4"),
    ("slice_duration", "<f4"),
    ("toffset", "<f4"),
    ("glmax", "<i4"),
    ("glmin", "<i4"),
    ("descrip", "S80"),
    ("aux_file", "S24"),
    ("qform_code", "<i2"),
    ("sform_code", "<i2"),
    ("quatern_b", "<f4"),
    ("quatern_c", "<f4"),
    ("quatern_d", "<f4"),
    ("qoffset_x", "<f4"),
    ("qoffset_y", "<f4"),
    ("qoffset_z", "<f4"),
    ("srow_x", "<f4", (4,)),
    ("srow_y", "<f4", (4,)),
    ("srow_z", "<f4", (4,)),
    ("intent_name", "S16"),
    ("magic", "S4"),
])
assert HEADER_DTYPE.itemsize == NIFTI_HEADER_SIZE

MAGIC_SINGLE = b"n+1\x00"
GZIP_MAGIC = b"\x1f\x8b"

# NIfTI datatype code <-> toolkit dtype code. int32 (8) is intentionally
# not accepted.
NIFTI_DATATYPES = {2: "u8", 4: "i16", 512: "u16", 16: "f32"}
DATATYPE_OF_CODE = {v: k for k, v in NIFTI_DATATYPES.items()}


def _quaternion_to_rotation(b: float, c: float, d: float) -> np.ndarray:
    """3x3 rotation from the (b, c, d) quaternion triple, a >= 0 implied."""
    w2 = 1.0 - (b * b + c * c + d * d)
    a = np.sqrt(w2) if w2 > 0 else 0.0
    return np.array([
        [a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)],
        [2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b)],
        [2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - b * b - c * c],
    ])


def _affine_from_header(hdr) -> np.ndarray:
    affine = np.eye(4)
    if int(hdr["sform_code"]) > 0:
        affine[0, :] = hdr["srow_x"]
        affine[1, :] = hdr["srow_y"]
        affine[2, :] = hdr["srow_z"]
    elif int(hdr["qform_code"]) > 0:
        rot = _quaternion_to_rotation(
            float(hdr["quatern_b"]), float(hdr["quatern_c"]), float(hdr["quatern_d"])
        )
        pixdim = np.asarray(hdr["pixdim"], dtype=np.float64)
        qfac = -1.0 if pixdim[0] < 0 else 1.0
        scales = np.array([pixdim[1], pixdim[2], qfac * pixdim[3]])
        affine[:3, :3] = rot * scales
        affine[:3, 3] = [hdr["qoffset_x"], hdr["qoffset_y"], hdr["qoffset_z"]]
    else:
        pixdim = np.asarray(hdr["pixdim"], dtype=np.float64)
        scales = [p if p != 0 else 1.0 for p in pixdim[1:4]]
        affine[:3, :3] = np.diag(scales)
    return affine


def _read_file_bytes(path) -> bytes:
    raw = Path(path).read_bytes()
    if raw[:2] == GZIP_MAGIC:
        try:
            return gzip.decompress(raw)
        except (OSError, EOFError, zlib.error) as exc:
            raise NiftiError(f"{path}: malformed gzip stream: {exc}") from exc
    return raw


def read_nifti(path) -> Volume:
    """Read a NIfTI-1 single file (.nii or gzipped) into a Volume.

    source_byte_len is measured after gzip decompression, so it is
    invariant under gzip-at-rest.
    """
    blob = _read_file_bytes(path)
    if len(blob) < NIFTI_HEADER_SIZE:
        raise NiftiError(f"{path}: file shorter than the 348-byte header")
    hdr = np.frombuffer(blob[:NIFTI_HEADER_SIZE], dtype=HEADER_DTYPE)[0]
    swapped = False
    if int(hdr["sizeof_hdr"]) != NIFTI_HEADER_SIZE:
        hdr = np.frombuffer(
            blob[:NIFTI_HEADER_SIZE], dtype=HEADER_DTYPE.newbyteorder()
        )[0]
        swapped = True
        if int(hdr["sizeof_hdr"]) != NIFTI_HEADER_SIZE:
            raise NiftiError(f"{path}: not a NIfTI-1 file (bad sizeof_hdr)")
    # compare raw bytes: numpy S4 strips trailing nulls
    if blob[344:348] != MAGIC_SINGLE:
        raise NiftiError(f"{path}: bad magic {blob[344:348]!r}, need 'n+1\\0'")

    ndim = int(hdr["dim"][0])
    if ndim == 4:
        if int(hdr["dim"][4]) != 1:
            raise NiftiError(f"{path}: 4D file with dim[4]={int(hdr['dim'][4])}")
    elif ndim != 3:
        raise NiftiError(f"{path}: dim[0]={ndim}, only 3D volumes are supported")
    dims = tuple(int(v) for v in hdr["dim"][1:4])
    if any(v < 1 for v in dims):
        raise NiftiError(f"{path}: nonpositive dimension in {dims}")
    if any(v > MAX_DIM for v in dims):
        raise NiftiError(f"{path}: dimension in {dims} exceeds {MAX_DIM}")

    dt_code = int(hdr["datatype"])
    if dt_code not in NIFTI_DATATYPES:
        raise NiftiError(f"{path}: unsupported datatype code {dt_code}")
    code = NIFTI_DATATYPES[dt_code]
    sample_dtype = DTYPE_CODES[code].newbyteorder(">" if swapped else "<")

    vox_offset = int(round(float(hdr["vox_offset"])))
    if vox_offset < NIFTI_HEADER_SIZE:
        raise NiftiError(f"{path}: vox_offset {vox_offset} below header size")
    nbytes = dims[0] * dims[1] * dims[2] * sample_dtype.itemsize
    section = blob[vox_offset:vox_offset + nbytes]
    if len(section) < nbytes:
        raise NiftiError(
            f"{path}: truncated data section ({len(section)} of {nbytes} bytes)"
        )
    flat = np.frombuffer(section, dtype=sample_dtype).astype(DTYPE_CODES[code])
    data = flat.reshape(dims, order="F")

    scl_slope = float(hdr["scl_slope"])
    if scl_slope == 0.0 or not np.isfinite(scl_slope):
        scl_slope = 1.0
    scl_inter = float(hdr["scl_inter"])
    if not np.isfinite(scl_inter):
        scl_inter = 0.0

    return Volume(
        data=data,
        affine=_affine_from_header(hdr),
        source_dtype=code,
        scl_slope=scl_slope,
        scl_inter=scl_inter,
        source_byte_len=len(blob),
    )


def write_nifti(volume: Volume, path) -> None:
    """Write a Volume as a little-endian NIfTI-1 single file.

    The affine goes out through the sform (sform_code=1) and data starts at
    vox_offset 352.  A '.gz' suffix triggers gzip wrapping; reading it back
    restores the identical volume.
    """
    hdr = np.zeros((), dtype=HEADER_DTYPE)
    hdr["sizeof_hdr"] = NIFTI_HEADER_SIZE
    hdr["regular"] = b"r"
    w, h, d = volume.dims
    hdr["dim"] = [3, w, h, d, 1, 1, 1, 1]
    hdr["datatype"] = DATATYPE_OF_CODE[volume.source_dtype]
    hdr["bitpix"] = volume.itemsize * 8
    rot = volume.affine[:3, :3]
    pixdim = np.sqrt((rot * rot).sum(axis=0))
    hdr["pixdim"] = [1.0, pixdim[0], pixdim[1], pixdim[2], 0, 0, 0, 0]
    hdr["vox_offset"] = float(DEFAULT_VOX_OFFSET)
    hdr["scl_slope"] = volume.scl_slope
    hdr["scl_inter"] = volume.scl_inter
    hdr["sform_code"] = 1
    hdr["srow_x"] = volume.affine[0, :].astype(np.float32)
    hdr["srow_y"] = volume.affine[1, :].astype(np.float32)
    hdr["srow_z"] = volume.affine[2, :].astype(np.float32)
    hdr["magic"] = MAGIC_SINGLE

    buf = io.BytesIO()
    buf.write(hdr.tobytes())
    buf.write(b"\x00" * (DEFAULT_VOX_OFFSET - NIFTI_HEADER_SIZE))
    buf.write(volume.tobytes_canonical())
    payload = buf.getvalue()

    path = Path(path)
    try:
        if path.suffix == ".gz":
            # mtime pinned so identical volumes produce identical files
            path.write_bytes(gzip.compress(payload, mtime=0))
        else:
            path.write_bytes(payload)
    except OSError as exc:
        raise NiftiError(f"cannot write {path}: {exc}") from exc
