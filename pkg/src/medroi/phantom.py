"""Seeded synthetic brain-like volumes for benchmarking and tests.

Each phantom is a centered ellipsoid of smoothly varying tissue intensity
inside an exactly-zero (or uniformly noisy) background, emitted as int16.
The ellipsoid is sized so its axis-aligned bounding box spans a requested
fraction of each dimension, which makes every downstream quantity (bbox,
miss rate, compression gain) predictable from the construction.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .volume import Volume

# Radial falloff exponent. Shallow on purpose: the mean-intensity threshold
# then cuts at ~0.83 of the ellipsoid radius, leaving a thin sub-threshold
# rim (< 3 voxels for dims up to ~35 at fraction 1.0) that exercises the
# adaptive padding path.
_FALLOFF_EXP = 0.25
_FLOOR = 0.302          # normalized intensity at the ellipsoid surface
_RIPPLE_WEIGHT = 0.08   # low-amplitude seeded modulation
_RIPPLE_MODES = 4


@dataclass(frozen=True)
class PhantomSpec:
    """Parameters of one synthetic volume."""

    seed: int
    dims: tuple[int, int, int] = (64, 64, 64)
    tissue_fraction: float = 0.5
    noise_amplitude: float = 0.0
    intensity_peak: float = 1000.0

    def __post_init__(self):
        if len(self.dims) != 3 or any(int(v) < 8 for v in self.dims):
            raise ValueError(f"dims must be >= (8, 8, 8), got {self.dims}")
        if not (0.0 < self.tissue_fraction <= 1.0):
            raise ValueError("tissue_fraction must be in (0, 1]")
        if self.noise_amplitude < 0:
            raise ValueError("noise_amplitude must be >= 0")
        if not (10 <= self.intensity_peak <= 32767):
            raise ValueError("intensity_peak must be in [10, 32767]")


def designed_bbox(spec: PhantomSpec) -> tuple[int, int, int, int, int, int]:
    """Inclusive bounds of the ellipsoid bounding box the phantom is built on."""
    bounds = []
    for w in spec.dims:
        n = max(int(round(spec.tissue_fraction * w)), 1)
        lo = (int(w) - n) // 2
        bounds.extend((lo, lo + n - 1))
    return tuple(bounds)


def generate_phantom(spec: PhantomSpec) -> Volume:
    """Deterministically generate the phantom volume for a spec."""
    rng = np.random.default_rng(spec.seed)
    w, h, d = (int(v) for v in spec.dims)
    x0, x1, y0, y1, z0, z1 = designed_bbox(spec)
    centers = ((x0 + x1) / 2.0, (y0 + y1) / 2.0, (z0 + z1) / 2.0)
    semis = ((x1 - x0 + 1) / 2.0, (y1 - y0 + 1) / 2.0, (z1 - z0 + 1) / 2.0)

    xs = (np.arange(w, dtype=np.float64) - centers[0]) / semis[0]
    ys = (np.arange(h, dtype=np.float64) - centers[1]) / semis[1]
    zs = (np.arange(d, dtype=np.float64) - centers[2]) / semis[2]
    r2 = (
        xs[:, None, None] ** 2
        + ys[None, :, None] ** 2
        + zs[None, None, :] ** 2
    )
    inside = r2 <= 1.0

    falloff = np.zeros((w, h, d))
    falloff[inside] = (1.0 - r2[inside]) ** _FALLOFF_EXP

    # Smooth seeded ripple in [-1, 1]: a few random-phase cosine modes.
    ripple = np.zeros((w, h, d))
    freqs = rng.integers(1, 4, size=(_RIPPLE_MODES, 3))
    phases = rng.uniform(0.0, 2.0 * np.pi, size=_RIPPLE_MODES)
    gx = 2.0 * np.pi * np.arange(w) / w
    gy = 2.0 * np.pi * np.arange(h) / h
    gz = 2.0 * np.pi * np.arange(d) / d
    for k in range(_RIPPLE_MODES):
        fx, fy, fz = (int(v) for v in freqs[k])
        ripple += np.cos(
            fx * gx[:, None, None]
            + fy * gy[None, :, None]
            + fz * gz[None, None, :]
            + phases[k]
        )
    ripple /= _RIPPLE_MODES

    span = 1.0 - _FLOOR
    norm = _FLOOR + span * falloff * (
        (1.0 - _RIPPLE_WEIGHT) + _RIPPLE_WEIGHT * ripple
    )
    values = np.zeros((w, h, d))
    values[inside] = norm[inside] * spec.intensity_peak

    if spec.noise_amplitude > 0:
        noise = rng.uniform(0.0, spec.noise_amplitude, size=(w, h, d))
        values = np.where(inside, values, noise)

    data = np.rint(values).astype(np.int16)
    return Volume.from_array(data)
