"""Run-length tokenization for video.

Prune temporally repeated patches, attach run-length metadata, pack the
variable-length results into block-diagonal attention batches, and verify
the mechanism with a small deterministic transformer.
"""

from .errors import (
    ConfigError,
    DataError,
    FormatError,
    GridConfigError,
    ProvenanceError,
    RltokError,
    StreamError,
)
from .fileio import (
    read_frame_pipe,
    read_image_dir,
    read_raw,
    read_tokens,
    write_raw,
    write_tokens,
)
from .model import (
    PatchEmbedder,
    PositionalTables,
    ToyTransformer,
    count_flops,
    embed,
    flop_breakdown,
    forward_packed,
    forward_single,
)
from .packing import (
    BlockDiagonalMask,
    ExampleMeta,
    PackedBatch,
    build_mask,
    pack,
    unpack,
)
from .stats import (
    ReductionReport,
    SkipRecord,
    SweepPoint,
    SweepReport,
    VideoRecord,
    analyze,
    sweep_tau,
)
from .tokenizer import (
    DiffMetric,
    StaticMask,
    Threshold,
    TokenSequence,
    compute_run_lengths,
    compute_static_mask,
    patch_difference,
    random_mask,
    reduction_ratio,
    tokenize,
    tokenize_full,
)
from .video import (
    NormalizationParams,
    PatchGrid,
    TubeletConfig,
    VideoTensor,
    denormalize,
    extract_patches,
    normalize,
    patch_frame_crop,
    reassemble,
)
from .viz import render_overlay, save_overlay_frames

__version__ = "0.1.0"

__all__ = [
    "BlockDiagonalMask",
    "ConfigError",
    "DataError",
    "DiffMetric",
    "ExampleMeta",
    "FormatError",
    "GridConfigError",
    "NormalizationParams",
    "PackedBatch",
    "PatchEmbedder",
    "PatchGrid",
    "PositionalTables",
    "ProvenanceError",
    "ReductionReport",
    "RltokError",
    "SkipRecord",
    "StaticMask",
    "StreamError",
    "SweepPoint",
    "SweepReport",
    "Threshold",
    "TokenSequence",
    "ToyTransformer",
    "TubeletConfig",
    "VideoRecord",
    "VideoTensor",
    "analyze",
    "build_mask",
    "compute_run_lengths",
    "compute_static_mask",
    "count_flops",
    "denormalize",
    "embed",
    "extract_patches",
    "flop_breakdown",
    "forward_packed",
    "forward_single",
    "normalize",
    "pack",
    "patch_difference",
    "patch_frame_crop",
    "random_mask",
    "read_frame_pipe",
    "read_image_dir",
    "read_raw",
    "read_tokens",
    "reassemble",
    "reduction_ratio",
    "render_overlay",
    "save_overlay_frames",
    "sweep_tau",
    "tokenize",
    "tokenize_full",
    "unpack",
    "write_raw",
    "write_tokens",
]
