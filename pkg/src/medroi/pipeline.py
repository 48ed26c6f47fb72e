"""Compression modes and restoration.

Full mode encodes the entire volume; ROI mode extracts the tissue bounding
box, embeds the 54-byte restoration record, and encodes only the cropped
region.  Either way the region goes through the codec as independent axial
slices (ascending z) or as one 3D unit.  Restoration decodes into a
zero-filled volume of the original dimensions, so ROI-mode background is
exactly 0 regardless of what the source held there.
"""
from __future__ import annotations

import numpy as np

from .codec import (
    CodecSpec,
    DimMode,
    EncodedPayload,
    decode_slice,
    decode_volume,
    encode_slice,
    encode_volume,
)
from .container import Archive, Mode
from .errors import DecodeError, EncodeError, UnsupportedMode
from .metadata import RoiMetadata, restore_affine
from .roi import crop, extract_roi
from .volume import DTYPE_CODES, Volume


def _check_support(spec: CodecSpec, dim_mode: DimMode) -> None:
    if not spec.supports(dim_mode):
        raise UnsupportedMode(
            f"codec {spec.id!r} does not support {dim_mode.value} mode"
        )


def _encode_region(spec: CodecSpec, region: Volume, dim_mode: DimMode) -> list[EncodedPayload]:
    if dim_mode is DimMode.VOLUME3D:
        return [encode_volume(spec, region)]
    payloads = []
    for z in range(region.dims[2]):
        try:
            payloads.append(encode_slice(spec, region.data[:, :, z]))
        except EncodeError as exc:
            raise EncodeError(f"slice {z}: {exc}") from exc
    return payloads


def compress_full(volume: Volume, spec: CodecSpec, dim_mode: DimMode) -> Archive:
    """Compress the whole volume without ROI extraction."""
    _check_support(spec, dim_mode)
    return Archive(
        mode=Mode.FULL,
        dim_mode=dim_mode,
        codec_id=spec.id,
        quality=spec.quality,
        original_shape=volume.dims,
        dtype=volume.source_dtype,
        scl_slope=volume.scl_slope,
        scl_inter=volume.scl_inter,
        rot_scale=volume.affine[:3, :3],
        translation=volume.affine[:3, 3],
        payloads=_encode_region(spec, volume, dim_mode),
    )


def compress_roi(
    volume: Volume,
    spec: CodecSpec,
    dim_mode: DimMode,
    exact_affine: bool = False,
) -> Archive:
    """Extract the tissue box, then compress only the cropped region.

    Raises AllZeroVolume when no tissue exists; fall back to full mode.
    """
    _check_support(spec, dim_mode)
    report = extract_roi(volume)
    metadata = RoiMetadata(
        box=report.box,
        original_shape=volume.dims,
        rot_scale=volume.affine[:3, :3],
        translation=volume.affine[:3, 3] if exact_affine else None,
    )
    region = crop(volume, report.box)
    return Archive(
        mode=Mode.ROI,
        dim_mode=dim_mode,
        codec_id=spec.id,
        quality=spec.quality,
        original_shape=volume.dims,
        dtype=volume.source_dtype,
        scl_slope=volume.scl_slope,
        scl_inter=volume.scl_inter,
        rot_scale=volume.affine[:3, :3],
        translation=volume.affine[:3, 3],
        metadata=metadata,
        payloads=_encode_region(spec, region, dim_mode),
    )


def _cast_to(dtype_code: str, arr: np.ndarray) -> np.ndarray:
    """Bring decoded samples back to the stored dtype (round for integers)."""
    target = DTYPE_CODES[dtype_code]
    if arr.dtype == target:
        return arr
    if target.kind in "iu":
        info = np.iinfo(target)
        return np.clip(np.rint(arr), info.min, info.max).astype(target)
    return arr.astype(target)


def _decode_region(archive: Archive, spec: CodecSpec) -> np.ndarray:
    region_dims = archive.region_dims
    if archive.dim_mode is DimMode.VOLUME3D:
        out = decode_volume(spec, archive.payloads[0])
        return _cast_to(archive.dtype, out)
    w, h, d = region_dims
    if len(archive.payloads) != d:
        raise DecodeError(
            f"{len(archive.payloads)} payloads for {d} axial slices"
        )
    region = np.empty(region_dims, dtype=DTYPE_CODES[archive.dtype])
    for z, payload in enumerate(archive.payloads):
        try:
            decoded = decode_slice(spec, payload)
        except DecodeError as exc:
            raise DecodeError(f"slice {z}: {exc}") from exc
        if decoded.shape != (w, h):
            raise DecodeError(
                f"slice {z}: decoded shape {decoded.shape}, expected {(w, h)}"
            )
        region[:, :, z] = _cast_to(archive.dtype, decoded)
    return region


def decompress(archive: Archive) -> Volume:
    """Restore a volume of the original dimensions from an archive."""
    spec = CodecSpec(
        id=archive.codec_id,
        quality=archive.quality,
        slice2d=True,
        volume3d=True,
        lossless=False,
    )
    region = _decode_region(archive, spec)
    if archive.mode is Mode.FULL:
        data = region
        affine = archive.source_affine()
    else:
        box = archive.metadata.box
        data = np.zeros(archive.original_shape, dtype=DTYPE_CODES[archive.dtype])
        data[box.x_min:box.x_max + 1,
             box.y_min:box.y_max + 1,
             box.z_min:box.z_max + 1] = region
        affine = restore_affine(archive.metadata)
    return Volume(
        data=data,
        affine=affine,
        source_dtype=archive.dtype,
        scl_slope=archive.scl_slope,
        scl_inter=archive.scl_inter,
    )
