"""Pluggable compression codecs.

Three built-ins cover the reference cases: "raw" (identity), "deflate"
(RFC 1951 lossless byte compression of the canonical sample stream), and
"quant" (uniform scalar quantization to q bits followed by deflate, the
rate-distortion knob).  Any other codec id resolves through the
MEDROI_CODEC_<ID> environment variable to an external encoder process that
speaks raw frames on stdin/stdout.
"""
from __future__ import annotations

import enum
import os
import shlex
import struct
import subprocess
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import (
    DecodeError,
    EncodeError,
    ExternalCodecError,
    UnknownCodec,
    UnsupportedMode,
)
from .volume import DTYPE_CODES, Volume, dtype_code_of


class DimMode(enum.Enum):
    """Whether a volume is coded as independent axial slices or as one unit."""

    SLICE2D = "2d"
    VOLUME3D = "3d"

    @property
    def wire(self) -> int:
        return 0 if self is DimMode.SLICE2D else 1

    @classmethod
    def from_wire(cls, value: int) -> "DimMode":
        if value == 0:
            return cls.SLICE2D
        if value == 1:
            return cls.VOLUME3D
        raise ValueError(f"bad dim_mode byte {value}")


@dataclass(frozen=True)
class CodecSpec:
    """Resolved codec configuration used by the pipeline."""

    id: str
    quality: int
    slice2d: bool
    volume3d: bool
    lossless: bool

    def __post_init__(self):
        if not self.id or len(self.id) > 16 or not self.id.isascii():
            raise ValueError(f"codec id must be 1..16 ASCII bytes, got {self.id!r}")

    def supports(self, dim_mode: DimMode) -> bool:
        return self.slice2d if dim_mode is DimMode.SLICE2D else self.volume3d


@dataclass(frozen=True)
class EncodedPayload:
    """One compressed slice or volume plus what is needed to decode it."""

    data: bytes
    source_dims: tuple
    dtype: str  # short code of the source samples

    @property
    def bit_depth(self) -> int:
        return DTYPE_CODES[self.dtype].itemsize * 8


def canonical_bytes(arr: np.ndarray) -> bytes:
    """Samples in canonical order: x fastest, then y (then z)."""
    return np.ascontiguousarray(arr.ravel(order="F")).tobytes()


def from_canonical(blob: bytes, dims, dtype) -> np.ndarray:
    flat = np.frombuffer(blob, dtype=np.dtype(dtype))
    expected = int(np.prod(dims))
    if flat.size != expected:
        raise DecodeError(f"payload holds {flat.size} samples, expected {expected}")
    return flat.reshape(dims, order="F").copy()


class Codec:
    """Interface implemented by every codec."""

    id: str = ""
    slice2d = True
    volume3d = True
    lossless = False
    quality_range: tuple[int, int] | None = None
    quality_default = 0

    def encode(self, samples: np.ndarray, quality: int) -> bytes:
        raise NotImplementedError

    def decode(self, blob: bytes, dims, dtype: str, quality: int) -> np.ndarray:
        raise NotImplementedError

    def check_quality(self, quality: int) -> int:
        if self.quality_range is not None:
            lo, hi = self.quality_range
            if not (lo <= quality <= hi):
                raise ValueError(
                    f"codec {self.id!r} quality {quality} outside [{lo}, {hi}]"
                )
        return int(quality)


class RawCodec(Codec):
    """Identity codec: the canonical sample stream itself."""

    id = "raw"
    lossless = True

    def encode(self, samples, quality):
        return canonical_bytes(samples)

    def decode(self, blob, dims, dtype, quality):
        return from_canonical(blob, dims, DTYPE_CODES[dtype])


class DeflateCodec(Codec):
    """RFC 1951 DEFLATE over the canonical sample stream."""

    id = "deflate"
    lossless = True
    quality_range = (1, 9)
    quality_default = 6

    def encode(self, samples, quality):
        comp = zlib.compressobj(level=quality, wbits=-15)
        return comp.compress(canonical_bytes(samples)) + comp.flush()

    def decode(self, blob, dims, dtype, quality):
        try:
            dec = zlib.decompressobj(wbits=-15)
            raw = dec.decompress(blob) + dec.flush()
        except zlib.error as exc:
            raise DecodeError(f"deflate stream corrupt: {exc}") from exc
        return from_canonical(raw, dims, DTYPE_CODES[dtype])


_QUANT_HEADER = struct.Struct("<4sBff")
_QUANT_MAGIC = b"MQ01"


class QuantizeCodec(Codec):
    """Uniform scalar quantizer to q bits, then DEFLATE on the indices.

    The sample range is measured per encoded unit (slice or volume) and
    stored in the payload header, so payloads are self-contained.  Decoding
    returns midpoint reconstruction values as float64; the error per sample
    is at most range / 2^(q+1).
    """

    id = "quant"
    lossless = False
    quality_range = (1, 8)
    quality_default = 4

    def encode(self, samples, quality):
        q = int(quality)
        values = np.asarray(samples, dtype=np.float64)
        lo = float(values.min())
        hi = float(values.max())
        levels = 1 << q
        if hi > lo:
            step = (hi - lo) / levels
            idx = np.floor((values - lo) / step)
            np.clip(idx, 0, levels - 1, out=idx)
        else:
            idx = np.zeros_like(values)
        stream = idx.astype(np.uint8).ravel(order="F").tobytes()
        comp = zlib.compressobj(level=6, wbits=-15)
        packed = comp.compress(stream) + comp.flush()
        return _QUANT_HEADER.pack(_QUANT_MAGIC, q, lo, hi) + packed

    def decode(self, blob, dims, dtype, quality):
        if len(blob) < _QUANT_HEADER.size:
            raise DecodeError("quantizer payload shorter than its header")
        magic, q, lo, hi = _QUANT_HEADER.unpack(blob[:_QUANT_HEADER.size])
        if magic != _QUANT_MAGIC:
            raise DecodeError(f"bad quantizer magic {magic!r}")
        try:
            dec = zlib.decompressobj(wbits=-15)
            stream = dec.decompress(blob[_QUANT_HEADER.size:]) + dec.flush()
        except zlib.error as exc:
            raise DecodeError(f"quantizer index stream corrupt: {exc}") from exc
        idx = from_canonical(stream, dims, np.uint8).astype(np.float64)
        lo = float(lo)
        hi = float(hi)
        if hi > lo:
            step = (hi - lo) / (1 << int(q))
            return lo + (idx + 0.5) * step
        return np.full(dims, lo, dtype=np.float64)


_FRAME_HEADER = struct.Struct("<4sHHB")
_FRAME_MAGIC = b"MRF1"
ENV_PREFIX = "MEDROI_CODEC_"


def encode_frame(samples: np.ndarray) -> bytes:
    """Pack a 2D slice as a raw frame: MRF1, u16 width, u16 height, u8
    bit depth, then row-major samples (x fastest).

    Frames carry unsigned integers (8/16 bit) or float32; nonnegative int16
    slices are passed through as 16-bit unsigned.
    """
    if samples.ndim != 2:
        raise EncodeError("external codecs accept 2D slices only")
    code = dtype_code_of(samples.dtype)
    if code == "i16":
        if samples.min() < 0:
            raise EncodeError("frame format carries unsigned samples; "
                              "int16 slice has negative values")
        samples = samples.astype(np.uint16)
        code = "u16"
    w, h = samples.shape
    if w > 0xFFFF or h > 0xFFFF:
        raise EncodeError(f"slice {samples.shape} exceeds frame header capacity")
    depth = DTYPE_CODES[code].itemsize * 8
    wire = samples.astype(DTYPE_CODES[code].newbyteorder("<"))
    return _FRAME_HEADER.pack(_FRAME_MAGIC, w, h, depth) + canonical_bytes(wire)


def decode_frame(blob: bytes) -> np.ndarray:
    if len(blob) < _FRAME_HEADER.size:
        raise DecodeError("frame shorter than its header")
    magic, w, h, depth = _FRAME_HEADER.unpack(blob[:_FRAME_HEADER.size])
    if magic != _FRAME_MAGIC:
        raise DecodeError(f"bad frame magic {magic!r}")
    dtype = {8: "<u1", 16: "<u2", 32: "<f4"}.get(depth)
    if dtype is None:
        raise DecodeError(f"unsupported frame bit depth {depth}")
    body = blob[_FRAME_HEADER.size:]
    expected = w * h * np.dtype(dtype).itemsize
    if len(body) != expected:
        raise DecodeError(f"frame body {len(body)} bytes, expected {expected}")
    return from_canonical(body, (w, h), dtype)


class ExternalCodec(Codec):
    """Adapter that shells out to an encoder/decoder pair.

    MEDROI_CODEC_<ID> holds the encoder command (shell-style split); the
    optional "{quality}" placeholder is substituted.  The encoder receives
    one raw frame on stdin and must emit the payload on stdout.
    MEDROI_CODEC_<ID>_DECODE names the decoder, payload in, frame out.
    """

    slice2d = True
    volume3d = False
    lossless = False
    quality_default = 0

    def __init__(self, codec_id: str, timeout: float = 60.0):
        self.id = codec_id
        self.timeout = timeout

    def _command(self, suffix: str, quality: int) -> list[str]:
        var = ENV_PREFIX + self.id.upper().replace("-", "_") + suffix
        value = os.environ.get(var)
        if not value:
            raise ExternalCodecError(
                f"codec {self.id!r}: environment variable {var} is not set"
            )
        argv = shlex.split(value)
        return [arg.replace("{quality}", str(quality)) for arg in argv]

    def _run(self, argv: list[str], payload: bytes) -> bytes:
        try:
            proc = subprocess.run(
                argv,
                input=payload,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                timeout=self.timeout,
            )
        except FileNotFoundError as exc:
            raise ExternalCodecError(
                f"codec {self.id!r}: executable not found: {argv[0]}"
            ) from exc
        except subprocess.TimeoutExpired as exc:
            raise ExternalCodecError(
                f"codec {self.id!r}: timed out after {self.timeout}s"
            ) from exc
        if proc.returncode != 0:
            stderr = proc.stderr.decode(errors="replace").strip()
            raise ExternalCodecError(
                f"codec {self.id!r}: exit {proc.returncode}: {stderr}"
            )
        return proc.stdout

    def encode(self, samples, quality):
        frame = encode_frame(samples)
        return self._run(self._command("", quality), frame)

    def decode(self, blob, dims, dtype, quality):
        frame = self._run(self._command("_DECODE", quality), blob)
        decoded = decode_frame(frame)
        if decoded.shape != tuple(dims):
            raise DecodeError(
                f"external decoder returned {decoded.shape}, expected {tuple(dims)}"
            )
        return decoded


_REGISTRY: dict[str, Codec] = {}


def register_codec(codec: Codec) -> None:
    _REGISTRY[codec.id] = codec


def registered_codecs() -> list[str]:
    return sorted(_REGISTRY)


def get_codec(codec_id: str) -> Codec:
    """Resolve a codec id, falling back to the external adapter when the
    corresponding environment variable is set."""
    codec = _REGISTRY.get(codec_id)
    if codec is not None:
        return codec
    env = ENV_PREFIX + codec_id.upper().replace("-", "_")
    if os.environ.get(env):
        return ExternalCodec(codec_id)
    raise UnknownCodec(
        f"unknown codec {codec_id!r}; registered: {', '.join(registered_codecs())} "
        f"(or set {env} for an external encoder)"
    )


def codec_spec(codec_id: str, quality: int | None = None) -> CodecSpec:
    codec = get_codec(codec_id)
    if quality is None:
        quality = codec.quality_default
    quality = codec.check_quality(quality)
    return CodecSpec(
        id=codec.id,
        quality=quality,
        slice2d=codec.slice2d,
        volume3d=codec.volume3d,
        lossless=codec.lossless,
    )


register_codec(RawCodec())
register_codec(DeflateCodec())
register_codec(QuantizeCodec())


def _checked_encode(spec: CodecSpec, samples: np.ndarray) -> bytes:
    codec = get_codec(spec.id)
    try:
        return codec.encode(samples, spec.quality)
    except (EncodeError, ExternalCodecError):
        raise
    except Exception as exc:
        raise EncodeError(f"codec {spec.id!r} failed to encode: {exc}") from exc


def encode_slice(spec: CodecSpec, slice_: np.ndarray) -> EncodedPayload:
    """Compress one 2D slice."""
    if not spec.slice2d:
        raise UnsupportedMode(f"codec {spec.id!r} does not support 2D slices")
    slice_ = np.asarray(slice_)
    if slice_.ndim != 2 or slice_.size == 0:
        raise EncodeError(f"slice must be 2D and nonempty, got shape {slice_.shape}")
    return EncodedPayload(
        data=_checked_encode(spec, slice_),
        source_dims=tuple(int(v) for v in slice_.shape),
        dtype=dtype_code_of(slice_.dtype),
    )


def decode_slice(spec: CodecSpec, payload: EncodedPayload) -> np.ndarray:
    """Inverse of encode_slice (exact for lossless codecs)."""
    codec = get_codec(spec.id)
    try:
        out = codec.decode(payload.data, payload.source_dims, payload.dtype,
                           spec.quality)
    except (DecodeError, ExternalCodecError):
        raise
    except Exception as exc:
        raise DecodeError(f"codec {spec.id!r} failed to decode: {exc}") from exc
    if out.shape != tuple(payload.source_dims):
        raise DecodeError(
            f"decoded shape {out.shape} != payload dims {payload.source_dims}"
        )
    return out


def encode_volume(spec: CodecSpec, volume: Volume) -> EncodedPayload:
    """Compress a whole volume as a single unit."""
    if not spec.volume3d:
        raise UnsupportedMode(f"codec {spec.id!r} does not support 3D volumes")
    return EncodedPayload(
        data=_checked_encode(spec, volume.data),
        source_dims=volume.dims,
        dtype=volume.source_dtype,
    )


def decode_volume(spec: CodecSpec, payload: EncodedPayload) -> np.ndarray:
    if not spec.volume3d:
        raise UnsupportedMode(f"codec {spec.id!r} does not support 3D volumes")
    codec = get_codec(spec.id)
    try:
        out = codec.decode(payload.data, payload.source_dims, payload.dtype,
                           spec.quality)
    except (DecodeError, ExternalCodecError):
        raise
    except Exception as exc:
        raise DecodeError(f"codec {spec.id!r} failed to decode: {exc}") from exc
    if out.shape != tuple(payload.source_dims):
        raise DecodeError(
            f"decoded shape {out.shape} != payload dims {payload.source_dims}"
        )
    return out
