"""Rate and quality metrics.

Compression ratio divides the uncompressed on-disk byte count by the
serialized archive length (the ROI record is inside that length by
construction).  Bits per pixel always uses the original volume's voxel
count.  PSNR and SSIM run per axial slice and average in 2D mode, or over
the whole grid in 3D mode, optionally restricted to a region; intensities
are normalized by the reference volume's peak.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .codec import DimMode
from .errors import MetricsError, SmallRegion
from .roi import RoiBox
from .volume import Volume

PSNR_CAP_DB = 100.0  # reported for exact matches instead of infinity

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def compression_ratio(original_bytes: int, archive_bytes: int) -> float:
    """Original uncompressed size over serialized archive size."""
    if archive_bytes <= 0:
        raise MetricsError("archive byte count must be positive")
    if original_bytes <= 0:
        raise MetricsError("original byte count must be positive")
    return original_bytes / archive_bytes


def bits_per_pixel(archive_bytes: int, volume: Volume) -> float:
    """Compressed bits over the ORIGINAL volume's voxel count."""
    return 8.0 * archive_bytes / volume.nvoxels


def _check_pair(reference: Volume, test: Volume, region: RoiBox | None):
    if reference.dims != test.dims:
        raise MetricsError(
            f"dimension mismatch: reference {reference.dims}, test {test.dims}"
        )
    if region is not None and not region.within(reference.dims):
        raise MetricsError(f"region {region} outside volume dims {reference.dims}")


def _region_arrays(reference: Volume, test: Volume, region: RoiBox | None):
    a = reference.data.astype(np.float64)
    b = test.data.astype(np.float64)
    if region is not None:
        sl = (
            slice(region.x_min, region.x_max + 1),
            slice(region.y_min, region.y_max + 1),
            slice(region.z_min, region.z_max + 1),
        )
        a = a[sl]
        b = b[sl]
    return a, b


def _peak(reference: Volume) -> float:
    peak = float(reference.data.max())
    return peak if peak > 0 else 1.0


def _psnr_from_mse(mse: float) -> float:
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(-10.0 * math.log10(mse), PSNR_CAP_DB)


def psnr(
    reference: Volume,
    test: Volume,
    region: RoiBox | None = None,
    dim_mode: DimMode = DimMode.VOLUME3D,
) -> float:
    """Peak signal-to-noise ratio in dB, capped at 100 for exact matches."""
    _check_pair(reference, test, region)
    a, b = _region_arrays(reference, test, region)
    diff = (a - b) / _peak(reference)
    if dim_mode is DimMode.VOLUME3D:
        return _psnr_from_mse(float(np.mean(diff * diff)))
    per_slice = [
        _psnr_from_mse(float(np.mean(diff[:, :, z] ** 2)))
        for z in range(diff.shape[2])
    ]
    return float(np.mean(per_slice))


def _gaussian_kernel(sigma: float, radius: int) -> np.ndarray:
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def _filter_valid(arr: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Separable correlation keeping only fully-covered (valid) positions."""
    out = arr
    for axis in range(arr.ndim):
        windows = np.lib.stride_tricks.sliding_window_view(
            out, kernel.size, axis=axis
        )
        out = windows @ kernel
    return out


def _ssim_mean(x: np.ndarray, y: np.ndarray, dynamic_range: float) -> float:
    kernel = _gaussian_kernel(SSIM_SIGMA, (SSIM_WINDOW - 1) // 2)
    mu_x = _filter_valid(x, kernel)
    mu_y = _filter_valid(y, kernel)
    mu_xx = _filter_valid(x * x, kernel)
    mu_yy = _filter_valid(y * y, kernel)
    mu_xy = _filter_valid(x * y, kernel)
    var_x = mu_xx - mu_x * mu_x
    var_y = mu_yy - mu_y * mu_y
    cov = mu_xy - mu_x * mu_y
    c1 = (SSIM_K1 * dynamic_range) ** 2
    c2 = (SSIM_K2 * dynamic_range) ** 2
    num = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    return float(np.mean(num / den))


def ssim(
    reference: Volume,
    test: Volume,
    region: RoiBox | None = None,
    dim_mode: DimMode = DimMode.VOLUME3D,
) -> float:
    """Structural similarity (Gaussian 11-window), averaged like PSNR."""
    _check_pair(reference, test, region)
    a, b = _region_arrays(reference, test, region)
    if dim_mode is DimMode.SLICE2D:
        if a.shape[0] < SSIM_WINDOW or a.shape[1] < SSIM_WINDOW:
            raise SmallRegion(
                f"in-plane region {a.shape[:2]} smaller than the "
                f"{SSIM_WINDOW}x{SSIM_WINDOW} window"
            )
    elif min(a.shape) < SSIM_WINDOW:
        raise SmallRegion(
            f"region {a.shape} smaller than the {SSIM_WINDOW}^3 window"
        )
    peak = _peak(reference)
    if dim_mode is DimMode.VOLUME3D:
        return _ssim_mean(a, b, peak)
    per_slice = [
        _ssim_mean(a[:, :, z], b[:, :, z], peak) for z in range(a.shape[2])
    ]
    return float(np.mean(per_slice))


def timed(action, *args, **kwargs):
    """Run action(*args, **kwargs), returning (result, wall seconds)."""
    start = time.perf_counter()
    result = action(*args, **kwargs)
    return result, time.perf_counter() - start


CSV_HEADER = [
    "volume_id", "codec", "quality", "mode", "dim_mode",
    "cr", "bpp", "psnr_db", "ssim", "compress_s", "decompress_s",
]


@dataclass
class EvalRecord:
    """One (volume, codec configuration, mode) measurement row."""

    volume_id: str
    codec: str
    quality: int
    mode: str       # "full" | "roi"
    dim_mode: str   # "2d" | "3d"
    cr: float
    bpp: float
    psnr_db: float
    ssim: float
    compress_s: float
    decompress_s: float

    def to_row(self) -> list[str]:
        return [
            self.volume_id, self.codec, str(self.quality), self.mode,
            self.dim_mode,
            f"{self.cr:.12g}", f"{self.bpp:.12g}", f"{self.psnr_db:.12g}",
            f"{self.ssim:.12g}", f"{self.compress_s:.6g}",
            f"{self.decompress_s:.6g}",
        ]

    @classmethod
    def from_row(cls, row: list[str]) -> "EvalRecord":
        if len(row) != len(CSV_HEADER):
            raise ValueError(f"expected {len(CSV_HEADER)} columns, got {len(row)}")
        return cls(
            volume_id=row[0], codec=row[1], quality=int(row[2]),
            mode=row[3], dim_mode=row[4],
            cr=float(row[5]), bpp=float(row[6]), psnr_db=float(row[7]),
            ssim=float(row[8]), compress_s=float(row[9]),
            decompress_s=float(row[10]),
        )
