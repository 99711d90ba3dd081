"""Bit-plane aware lossless compression for LLM weight and KV-cache tensors."""

from .bitplane import BitPlaneMatrix, aggregate, disaggregate, mask_top_bits, resolve_precision, truncate_planes
from .codec import (
    CompressedSuperblock,
    CompressionAlgo,
    compress_superblock,
    compression_ratio,
    decompress_superblock,
    footprint_reduction,
)
from .container import (
    ContainerReader,
    ContainerSettings,
    ContainerWriter,
    ManifestEntry,
    TensorManifest,
    read_tensor,
    stat_tensor,
    write_container,
)
from .costmodel import DramConfig, PrecisionSchedule, compare_layouts, estimate_access
from .errors import BplcError, CodecError, ContainerError, FormatError, IntegrityError, UnsupportedFormatError
from .float_format import (
    FORMATS,
    FloatFormat,
    ValueBlock,
    decode_array,
    decode_value,
    encode_array,
    encode_nearest,
    get_format,
    register_format,
    split_fields,
)
from .kv_transform import (
    ChannelGroupedBlock,
    DeltaMeta,
    TokenGroup,
    delta_forward,
    delta_inverse,
    group_by_channel,
    kv_bitplane_concat,
    ungroup,
)
from .synth import SynthSpec, entropy_oracle, generate

__version__ = "0.1.0"
