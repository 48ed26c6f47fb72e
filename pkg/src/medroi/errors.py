"""Exception hierarchy shared across the toolkit."""


class MedroiError(Exception):
    """Base class for all toolkit errors."""


# --- NIfTI I/O ---

class NiftiError(MedroiError):
    """Malformed, unsupported, or truncated NIfTI file."""


# --- ROI extraction ---

class AllZeroVolume(MedroiError):
    """Volume contains no nonzero voxel; no ROI exists."""


class EmptyTissueSet(MedroiError):
    """No voxel meets the intensity threshold."""


# --- Metadata record ---

class MetadataError(MedroiError):
    """Invalid restoration record."""


class FieldOverflow(MetadataError):
    """A coordinate or dimension does not fit int16."""


class WrongLength(MetadataError):
    """Serialized record has the wrong byte length."""


class InvalidBox(MetadataError):
    """Bounding box bounds are inconsistent (min > max)."""


# --- Codecs ---

class CodecError(MedroiError):
    """Base class for codec failures."""


class UnknownCodec(CodecError):
    """Codec id is not registered."""


class UnsupportedMode(CodecError):
    """Codec does not support the requested slice/volume mode."""


class EncodeError(CodecError):
    """Codec failed while encoding."""


class DecodeError(CodecError):
    """Payload is corrupt or does not match the codec."""


class ExternalCodecError(CodecError):
    """External codec process failed (missing, timed out, or nonzero exit)."""


# --- Container ---

class ContainerError(MedroiError):
    """Malformed archive."""


class BadMagic(ContainerError):
    """Input does not start with the archive magic."""


class Truncated(ContainerError):
    """Archive ends before a complete structure was read."""


class UnsupportedVersion(ContainerError):
    """Archive version is not supported."""


# --- Metrics ---

class MetricsError(MedroiError):
    """Invalid metric inputs."""


class SmallRegion(MetricsError):
    """Region is smaller than the SSIM window."""


# --- Statistics ---

class StatsError(MedroiError):
    """Invalid statistical test inputs."""
