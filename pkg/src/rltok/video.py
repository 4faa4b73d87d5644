"""Dense video tensors, per-channel normalization, and tubelet extraction.

Everything upstream of the pruning decision lives here. The canonical pixel
layout is channel-major float32: a video is a (C, T, H, W) array with values
in [0, 1] before normalization. A tubelet ("patch") is a non-overlapping
crop of patch_y x patch_x pixels spanning tubelet_t consecutive frames; its
flattened payload keeps the channel-major order (C, Dt, Dy, Dx).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, GridConfigError

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


@dataclass(frozen=True)
class VideoTensor:
    """A dense (C, T, H, W) float32 frame stack."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 4:
            raise DataError(f"video must be 4-D (C, T, H, W), got shape {arr.shape}")
        if any(s < 1 for s in arr.shape):
            raise DataError(f"all video dimensions must be >= 1, got shape {arr.shape}")
        if arr.dtype != np.float32:
            arr = arr.astype(np.float32)
        object.__setattr__(self, "data", arr)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def frames(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[2]

    @property
    def width(self) -> int:
        return self.data.shape[3]

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.data.shape

    @classmethod
    def from_uint8(cls, arr: np.ndarray) -> "VideoTensor":
        """Ingest 8-bit pixels, scaling to [0, 1] floats."""
        arr = np.asarray(arr)
        if arr.dtype != np.uint8:
            raise DataError(f"expected uint8 input, got {arr.dtype}")
        return cls(arr.astype(np.float32) / np.float32(255.0))


@dataclass(frozen=True)
class TubeletConfig:
    """Tubelet geometry: patch_x x patch_y pixels over tubelet_t frames.

    embed_dim is carried along for the downstream model; it does not affect
    tokenization.
    """

    patch_x: int = 16
    patch_y: int = 16
    tubelet_t: int = 2
    embed_dim: int = 64

    def __post_init__(self):
        for name in ("patch_x", "patch_y", "tubelet_t", "embed_dim"):
            if getattr(self, name) < 1:
                raise GridConfigError(f"{name} must be >= 1, got {getattr(self, name)}")

    def validate_for(self, video: VideoTensor) -> None:
        """Require exact divisibility; no silent padding or cropping."""
        c, t, h, w = video.shape
        if w % self.patch_x != 0:
            raise GridConfigError(f"width {w} not divisible by patch_x {self.patch_x}")
        if h % self.patch_y != 0:
            raise GridConfigError(f"height {h} not divisible by patch_y {self.patch_y}")
        if t % self.tubelet_t != 0:
            raise GridConfigError(f"frame count {t} not divisible by tubelet_t {self.tubelet_t}")

    def grid_dims(self, video_shape: tuple[int, int, int, int]) -> tuple[int, int, int]:
        """(grid_x, grid_y, grid_t) slot counts for a video of this shape."""
        c, t, h, w = video_shape
        return w // self.patch_x, h // self.patch_y, t // self.tubelet_t

    def patch_elems(self, channels: int) -> int:
        return channels * self.patch_x * self.patch_y * self.tubelet_t


@dataclass(frozen=True)
class NormalizationParams:
    """Per-channel affine normalization: out = (in - mean) / std."""

    mean: tuple[float, ...] = IMAGENET_MEAN
    std: tuple[float, ...] = IMAGENET_STD

    def __post_init__(self):
        if len(self.mean) != len(self.std):
            raise DataError("mean and std must have the same number of channels")
        if any(not np.isfinite(m) for m in self.mean):
            raise DataError("normalization mean must be finite")
        if any(s <= 0 or not np.isfinite(s) for s in self.std):
            raise DataError("normalization std components must be strictly positive")

    @classmethod
    def identity(cls, channels: int = 3) -> "NormalizationParams":
        return cls(mean=(0.0,) * channels, std=(1.0,) * channels)

    @classmethod
    def imagenet(cls) -> "NormalizationParams":
        return cls()

    def validate_for(self, video: VideoTensor) -> None:
        if len(self.mean) != video.channels:
            raise DataError(
                f"normalization has {len(self.mean)} channels, video has {video.channels}"
            )


@dataclass(frozen=True)
class PatchGrid:
    """A video reorganized into tubelet slots indexed (x, y, t).

    patches has shape (grid_x, grid_y, grid_t, elems) with each payload the
    flattened (C, Dt, Dy, Dx) crop; the reorganization is lossless.
    """

    patches: np.ndarray
    config: TubeletConfig
    video_shape: tuple[int, int, int, int]

    @property
    def grid_x(self) -> int:
        return self.patches.shape[0]

    @property
    def grid_y(self) -> int:
        return self.patches.shape[1]

    @property
    def grid_t(self) -> int:
        return self.patches.shape[2]

    @property
    def n_patches(self) -> int:
        return self.grid_x * self.grid_y * self.grid_t

    def patch(self, x: int, y: int, t: int) -> np.ndarray:
        """Flattened payload of the tubelet at slot (x, y, t)."""
        if not (0 <= x < self.grid_x and 0 <= y < self.grid_y and 0 <= t < self.grid_t):
            raise IndexError(f"slot ({x}, {y}, {t}) outside grid "
                             f"({self.grid_x}, {self.grid_y}, {self.grid_t})")
        return self.patches[x, y, t]


def normalize(video: VideoTensor, params: NormalizationParams) -> VideoTensor:
    """Apply per-channel normalization: out[c] = (in[c] - mean[c]) / std[c].

    Rejects non-finite pixel values so that threshold comparisons downstream
    are well defined.
    """
    params.validate_for(video)
    if not np.isfinite(video.data).all():
        raise DataError("video contains non-finite pixel values")
    c = video.channels
    mean = np.asarray(params.mean, dtype=np.float32).reshape(c, 1, 1, 1)
    std = np.asarray(params.std, dtype=np.float32).reshape(c, 1, 1, 1)
    return VideoTensor((video.data - mean) / std)


def denormalize(video: VideoTensor, params: NormalizationParams) -> VideoTensor:
    """Inverse of :func:`normalize`."""
    params.validate_for(video)
    c = video.channels
    mean = np.asarray(params.mean, dtype=np.float32).reshape(c, 1, 1, 1)
    std = np.asarray(params.std, dtype=np.float32).reshape(c, 1, 1, 1)
    return VideoTensor(video.data * std + mean)


def extract_patches(video: VideoTensor, config: TubeletConfig) -> PatchGrid:
    """Split a video into non-overlapping tubelets.

    The grid has dims (W/Dx, H/Dy, T/Dt) and reassembling all patches
    reproduces the video exactly.
    """
    config.validate_for(video)
    c, t, h, w = video.shape
    dx, dy, dt = config.patch_x, config.patch_y, config.tubelet_t
    gx, gy, gt = w // dx, h // dy, t // dt
    # (C,T,H,W) -> (C,gt,Dt,gy,Dy,gx,Dx) -> (gx,gy,gt,C,Dt,Dy,Dx)
    blocks = video.data.reshape(c, gt, dt, gy, dy, gx, dx)
    patches = np.ascontiguousarray(blocks.transpose(5, 3, 1, 0, 2, 4, 6))
    return PatchGrid(
        patches=patches.reshape(gx, gy, gt, c * dt * dy * dx),
        config=config,
        video_shape=video.shape,
    )


def reassemble(grid: PatchGrid) -> VideoTensor:
    """Inverse of :func:`extract_patches` (exact, bit-for-bit)."""
    c, t, h, w = grid.video_shape
    dx, dy, dt = grid.config.patch_x, grid.config.patch_y, grid.config.tubelet_t
    gx, gy, gt = grid.grid_x, grid.grid_y, grid.grid_t
    blocks = grid.patches.reshape(gx, gy, gt, c, dt, dy, dx)
    data = np.ascontiguousarray(blocks.transpose(3, 2, 4, 1, 5, 0, 6))
    return VideoTensor(data.reshape(c, t, h, w))


def patch_frame_crop(grid: PatchGrid, x: int, y: int, t_slot: int, frame_offset: int) -> np.ndarray:
    """The (C, Dy, Dx) spatial crop of one tubelet at a single frame.

    frame_offset indexes within the tubelet; the absolute source frame is
    t_slot * tubelet_t + frame_offset.
    """
    cfg = grid.config
    if not (0 <= frame_offset < cfg.tubelet_t):
        raise IndexError(f"frame_offset {frame_offset} outside tubelet of {cfg.tubelet_t} frames")
    c = grid.video_shape[0]
    payload = grid.patch(x, y, t_slot).reshape(c, cfg.tubelet_t, cfg.patch_y, cfg.patch_x)
    return np.ascontiguousarray(payload[:, frame_offset])
