"""ROI-centric, codec-agnostic compression for 3D medical volumes."""

from .codec import (
    CodecSpec,
    DimMode,
    EncodedPayload,
    codec_spec,
    decode_slice,
    decode_volume,
    encode_slice,
    encode_volume,
    get_codec,
    register_codec,
    registered_codecs,
)
from .container import Archive, Mode, deserialize, serialize
from .errors import (
    AllZeroVolume,
    BadMagic,
    CodecError,
    ContainerError,
    DecodeError,
    EmptyTissueSet,
    EncodeError,
    ExternalCodecError,
    FieldOverflow,
    InvalidBox,
    MedroiError,
    MetadataError,
    MetricsError,
    NiftiError,
    SmallRegion,
    StatsError,
    Truncated,
    UnknownCodec,
    UnsupportedMode,
    UnsupportedVersion,
    WrongLength,
)
from .metadata import (
    RoiMetadata,
    decode_metadata,
    encode_metadata,
    read_metadata_file,
    restore_affine,
    write_metadata_file,
)
from .metrics import (
    EvalRecord,
    bits_per_pixel,
    compression_ratio,
    psnr,
    ssim,
    timed,
)
from .nifti_io import read_nifti, write_nifti
from .phantom import PhantomSpec, designed_bbox, generate_phantom
from .pipeline import compress_full, compress_roi, decompress
from .roi import (
    RoiBox,
    RoiReport,
    compute_bbox,
    compute_threshold,
    crop,
    extract_roi,
    miss_rate,
)
from .stats import (
    TTestResult,
    bonferroni_correction,
    holm_correction,
    paired_t_test,
)
from .volume import Volume

__version__ = "0.1.0"
