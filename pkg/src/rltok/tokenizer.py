"""Static-patch detection, pruning, and run-length computation.

A tubelet at slot (x, y, t) is *static* when the L1 difference between the
first frame-crop of the tubelet at (x, y, t-1) and the last frame-crop of
the tubelet at (x, y, t) falls strictly below a threshold tau, measured on
normalized pixels. Static tubelets are pruned; every tubelet in the first
temporal slot is always retained. Each retained token carries a run length:
the number of consecutive tubelet slots it stands for.

Differences are accumulated in float64 so the mask is reproducible against
a naive scalar reference.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .video import (
    NormalizationParams,
    PatchGrid,
    TubeletConfig,
    VideoTensor,
    extract_patches,
    normalize,
)


class DiffMetric(enum.Enum):
    """How the L1 difference between two frame-crops is reduced.

    MEAN_ABS divides the absolute-difference sum by the number of crop
    elements (C * patch_y * patch_x), making tau comparable across patch
    sizes; SUM_ABS keeps the raw sum.
    """

    MEAN_ABS = "mean"
    SUM_ABS = "sum"


@dataclass(frozen=True)
class Threshold:
    """Pruning sensitivity: pairs with difference strictly below tau are static.

    tau >= 0; math.inf is allowed as a sweep sentinel under which only the
    always-retained first slot survives.
    """

    tau: float = 0.1

    def __post_init__(self):
        t = float(self.tau)
        if math.isnan(t) or t < 0:
            raise ConfigError(f"tau must be a nonnegative number, got {self.tau}")
        object.__setattr__(self, "tau", t)


def _tau_value(tau: "Threshold | float") -> float:
    if isinstance(tau, Threshold):
        return tau.tau
    return Threshold(float(tau)).tau


@dataclass(frozen=True)
class StaticMask:
    """Boolean retention grid over tubelet slots; True = token retained.

    Every (x, y, 0) entry is True: the first temporal slot is never pruned.
    """

    bits: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.bits)
        if arr.ndim != 3:
            raise DataError(f"mask must be 3-D (grid_x, grid_y, grid_t), got shape {arr.shape}")
        if arr.dtype != np.bool_:
            arr = arr.astype(np.bool_)
        if any(s < 1 for s in arr.shape):
            raise DataError(f"all mask dimensions must be >= 1, got shape {arr.shape}")
        if not arr[:, :, 0].all():
            raise DataError("first temporal slot must be fully retained")
        object.__setattr__(self, "bits", arr)

    @property
    def grid_x(self) -> int:
        return self.bits.shape[0]

    @property
    def grid_y(self) -> int:
        return self.bits.shape[1]

    @property
    def grid_t(self) -> int:
        return self.bits.shape[2]

    @property
    def total_count(self) -> int:
        return self.bits.size

    @property
    def retained_count(self) -> int:
        return int(self.bits.sum())


@dataclass(frozen=True, eq=False)
class TokenSequence:
    """Retained tokens of one video, in lexicographic (t, y, x) slot order.

    Arrays are parallel: token i sits at slot (xs[i], ys[i], ts[i]), stands
    for run_lengths[i] consecutive tubelet slots, and carries the flattened
    normalized patch payload patches[i]. The tokenization settings are
    recorded so the sequence can be recomputed from its source video.
    """

    xs: np.ndarray
    ys: np.ndarray
    ts: np.ndarray
    run_lengths: np.ndarray
    patches: np.ndarray
    config: TubeletConfig
    video_shape: tuple[int, int, int, int]
    norm: NormalizationParams
    tau: float
    metric: DiffMetric

    def __post_init__(self):
        xs = np.ascontiguousarray(self.xs, dtype=np.uint32)
        ys = np.ascontiguousarray(self.ys, dtype=np.uint32)
        ts = np.ascontiguousarray(self.ts, dtype=np.uint32)
        lens = np.ascontiguousarray(self.run_lengths, dtype=np.uint32)
        patches = np.ascontiguousarray(self.patches, dtype=np.float32)
        n = xs.shape[0]
        if not (ys.shape == ts.shape == lens.shape == (n,)):
            raise DataError("token index arrays must have identical lengths")
        if patches.ndim != 2 or patches.shape[0] != n:
            raise DataError(f"patches must be (n_tokens, elems), got {patches.shape}")
        shape = tuple(int(s) for s in self.video_shape)
        if len(shape) != 4:
            raise DataError(f"video_shape must be (C, T, H, W), got {shape}")
        gx, gy, gt = self.config.grid_dims(shape)
        elems = self.config.patch_elems(shape[0])
        if patches.shape[1] != elems:
            raise DataError(f"patch payload has {patches.shape[1]} elems, config implies {elems}")
        if n:
            if xs.max() >= gx or ys.max() >= gy or ts.max() >= gt:
                raise DataError("token slot indices outside the tubelet grid")
            if lens.min() < 1 or lens.max() > gt:
                raise DataError(f"run lengths must lie in [1, {gt}]")
            key = (ts.astype(np.int64) * gy + ys) * gx + xs
            if n > 1 and not (np.diff(key) > 0).all():
                raise DataError("tokens must be strictly ordered by (t, y, x)")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)
        object.__setattr__(self, "ts", ts)
        object.__setattr__(self, "run_lengths", lens)
        object.__setattr__(self, "patches", patches)
        object.__setattr__(self, "video_shape", shape)

    def __len__(self) -> int:
        return self.xs.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, TokenSequence):
            return NotImplemented
        return (
            self.config == other.config
            and self.video_shape == other.video_shape
            and self.norm == other.norm
            and self.tau == other.tau
            and self.metric == other.metric
            and np.array_equal(self.xs, other.xs)
            and np.array_equal(self.ys, other.ys)
            and np.array_equal(self.ts, other.ts)
            and np.array_equal(self.run_lengths, other.run_lengths)
            and np.array_equal(self.patches, other.patches)
        )

    @property
    def grid_dims(self) -> tuple[int, int, int]:
        return self.config.grid_dims(self.video_shape)

    @property
    def n_patches(self) -> int:
        gx, gy, gt = self.grid_dims
        return gx * gy * gt

    @property
    def retained_count(self) -> int:
        return len(self)


def _crop_views(grid: PatchGrid) -> tuple[np.ndarray, np.ndarray]:
    """(first, last) frame-crop views, each (gx, gy, gt, C, Dy, Dx)."""
    c = grid.video_shape[0]
    cfg = grid.config
    p = grid.patches.reshape(
        grid.grid_x, grid.grid_y, grid.grid_t, c, cfg.tubelet_t, cfg.patch_y, cfg.patch_x
    )
    return p[:, :, :, :, 0], p[:, :, :, :, cfg.tubelet_t - 1]


def _crop_elems(grid: PatchGrid) -> int:
    cfg = grid.config
    return grid.video_shape[0] * cfg.patch_y * cfg.patch_x


def patch_difference(
    grid: PatchGrid,
    x: int,
    y: int,
    t_prev: int,
    t_next: int,
    metric: DiffMetric = DiffMetric.MEAN_ABS,
) -> float:
    """L1 difference deciding whether slot t_next is static relative to t_prev.

    Compares the first frame-crop of the tubelet at t_prev against the last
    frame-crop of the tubelet at t_next; interior frames are skipped.
    """
    if t_next != t_prev + 1:
        raise DataError(f"slots must be adjacent, got t_prev={t_prev}, t_next={t_next}")
    if not (0 <= t_prev and t_next < grid.grid_t):
        raise DataError(f"slot pair ({t_prev}, {t_next}) outside grid_t={grid.grid_t}")
    first, last = _crop_views(grid)
    a = first[x, y, t_prev].astype(np.float64)
    b = last[x, y, t_next].astype(np.float64)
    total = float(np.abs(a - b).sum())
    if metric is DiffMetric.MEAN_ABS:
        return total / _crop_elems(grid)
    return total


def compute_static_mask(
    grid: PatchGrid,
    tau: "Threshold | float",
    metric: DiffMetric = DiffMetric.MEAN_ABS,
) -> StaticMask:
    """Decide retention for every tubelet slot.

    bits[x, y, 0] is always True; for t >= 1, the slot is retained iff its
    difference from slot t-1 is >= tau (a difference exactly equal to tau
    is not static).
    """
    t = _tau_value(tau)
    gx, gy, gt = grid.grid_x, grid.grid_y, grid.grid_t
    bits = np.empty((gx, gy, gt), dtype=np.bool_)
    bits[:, :, 0] = True
    if gt > 1:
        first, last = _crop_views(grid)
        d = first[:, :, : gt - 1].astype(np.float64) - last[:, :, 1:].astype(np.float64)
        diffs = np.abs(d).sum(axis=(3, 4, 5))
        if metric is DiffMetric.MEAN_ABS:
            diffs /= _crop_elems(grid)
        bits[:, :, 1:] = ~(diffs < t)
    return StaticMask(bits)


def compute_run_lengths(mask: StaticMask) -> np.ndarray:
    """Run length per retained slot; pruned slots carry 0.

    The length of a retained slot t is the distance to the next retained
    slot in the same (x, y) column, or grid_t - t when none follows, so the
    lengths in each column always sum to grid_t.
    """
    bits = mask.bits
    if not bits[:, :, 0].all():
        raise DataError("first temporal slot must be fully retained")
    gx, gy, gt = bits.shape
    out = np.zeros((gx, gy, gt), dtype=np.uint32)
    nxt = np.full((gx, gy), gt, dtype=np.int64)
    for t in range(gt - 1, -1, -1):
        out[:, :, t] = np.where(bits[:, :, t], nxt - t, 0)
        nxt = np.where(bits[:, :, t], t, nxt)
    return out


def _gather(
    grid: PatchGrid,
    mask: StaticMask,
    lengths: np.ndarray,
    norm: NormalizationParams,
    tau: float,
    metric: DiffMetric,
) -> TokenSequence:
    # nonzero on the (t, y, x)-transposed bits yields lexicographic (t, y, x)
    t_idx, y_idx, x_idx = np.nonzero(mask.bits.transpose(2, 1, 0))
    return TokenSequence(
        xs=x_idx,
        ys=y_idx,
        ts=t_idx,
        run_lengths=lengths.transpose(2, 1, 0)[t_idx, y_idx, x_idx],
        patches=grid.patches[x_idx, y_idx, t_idx],
        config=grid.config,
        video_shape=grid.video_shape,
        norm=norm,
        tau=tau,
        metric=metric,
    )


def tokenize(
    video: VideoTensor,
    config: TubeletConfig,
    params: NormalizationParams | None = None,
    tau: "Threshold | float" = 0.1,
    metric: DiffMetric = DiffMetric.MEAN_ABS,
) -> TokenSequence:
    """Full pipeline: normalize, split into tubelets, prune, attach run lengths.

    Token payloads are the normalized patches; the comparison and the
    payload therefore see identical pixel values.
    """
    params = params if params is not None else NormalizationParams.imagenet()
    t = _tau_value(tau)
    grid = extract_patches(normalize(video, params), config)
    mask = compute_static_mask(grid, t, metric)
    lengths = compute_run_lengths(mask)
    return _gather(grid, mask, lengths, params, t, metric)


def tokenize_full(
    video: VideoTensor,
    config: TubeletConfig,
    params: NormalizationParams | None = None,
    metric: DiffMetric = DiffMetric.MEAN_ABS,
) -> TokenSequence:
    """Baseline tokenization: every tubelet kept, every run length 1.

    Equivalent to tokenize with tau=0, where no pair can fall strictly
    below the threshold.
    """
    return tokenize(video, config, params, tau=0.0, metric=metric)


def reduction_ratio(seq: TokenSequence) -> float:
    """Fraction of tokens pruned: 1 - retained / total, in [0, 1)."""
    return 1.0 - len(seq) / seq.n_patches


def random_mask(seq: TokenSequence, ratio: float, seed: int) -> TokenSequence:
    """Remove floor(ratio * len) tokens uniformly at random.

    The content-blind baseline: survivors keep their run lengths and order,
    and the subset depends only on the seed.
    """
    if not (0 <= ratio < 1):
        raise ConfigError(f"mask ratio must lie in [0, 1), got {ratio}")
    n = len(seq)
    k = math.floor(ratio * n)
    rng = np.random.default_rng(seed)
    drop = rng.choice(n, size=k, replace=False)
    keep = np.ones(n, dtype=np.bool_)
    keep[drop] = False
    return TokenSequence(
        xs=seq.xs[keep],
        ys=seq.ys[keep],
        ts=seq.ts[keep],
        run_lengths=seq.run_lengths[keep],
        patches=seq.patches[keep],
        config=seq.config,
        video_shape=seq.video_shape,
        norm=seq.norm,
        tau=seq.tau,
        metric=seq.metric,
    )
