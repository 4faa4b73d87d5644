"""Concatenating variable-length token sequences into one attention batch.

A packed batch is the in-order concatenation of token sequences plus a
cumulative-offset boundary array; tokens attend only within their own
segment, which the block-diagonal mask expresses either compactly (the
boundaries themselves) or as a dense boolean matrix. No padding tokens
exist anywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, FormatError
from .tokenizer import DiffMetric, TokenSequence
from .video import NormalizationParams, TubeletConfig


@dataclass(frozen=True)
class ExampleMeta:
    """Everything about one packed example except its token arrays."""

    source_id: str
    video_shape: tuple[int, int, int, int]
    norm: NormalizationParams
    tau: float
    metric: DiffMetric


@dataclass(frozen=True, eq=False)
class PackedBatch:
    """Concatenated token sequences with segment boundaries.

    boundaries[i] is the first token row of example i; the array is
    strictly increasing from 0 to the total token count, so every segment
    is non-empty and segment count B == len(boundaries) - 1.
    """

    xs: np.ndarray
    ys: np.ndarray
    ts: np.ndarray
    run_lengths: np.ndarray
    patches: np.ndarray
    boundaries: np.ndarray
    config: TubeletConfig
    meta: tuple[ExampleMeta, ...]

    def __post_init__(self):
        bounds = np.ascontiguousarray(self.boundaries, dtype=np.int64)
        n = self.patches.shape[0]
        if bounds.ndim != 1 or bounds.shape[0] < 2:
            raise FormatError(f"boundaries must hold at least [0, total], got shape {bounds.shape}")
        if bounds[0] != 0 or bounds[-1] != n:
            raise FormatError(
                f"boundaries must run from 0 to the token count {n}, got "
                f"[{bounds[0]}, ..., {bounds[-1]}]"
            )
        if not (np.diff(bounds) > 0).all():
            raise FormatError("boundaries must be strictly increasing (no empty segments)")
        if len(self.meta) != bounds.shape[0] - 1:
            raise FormatError(
                f"{len(self.meta)} metadata entries for {bounds.shape[0] - 1} segments"
            )
        for name in ("xs", "ys", "ts", "run_lengths"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.uint32)
            if arr.shape != (n,):
                raise FormatError(f"{name} must have shape ({n},), got {arr.shape}")
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "patches", np.ascontiguousarray(self.patches, dtype=np.float32))
        object.__setattr__(self, "boundaries", bounds)
        object.__setattr__(self, "meta", tuple(self.meta))

    @property
    def n_tokens(self) -> int:
        return self.patches.shape[0]

    @property
    def n_examples(self) -> int:
        return self.boundaries.shape[0] - 1

    @property
    def segment_lengths(self) -> np.ndarray:
        return np.diff(self.boundaries)

    def segment(self, i: int) -> slice:
        if not (0 <= i < self.n_examples):
            raise IndexError(f"segment {i} outside batch of {self.n_examples}")
        return slice(int(self.boundaries[i]), int(self.boundaries[i + 1]))

    def __eq__(self, other) -> bool:
        if not isinstance(other, PackedBatch):
            return NotImplemented
        return (
            self.config == other.config
            and self.meta == other.meta
            and np.array_equal(self.boundaries, other.boundaries)
            and np.array_equal(self.xs, other.xs)
            and np.array_equal(self.ys, other.ys)
            and np.array_equal(self.ts, other.ts)
            and np.array_equal(self.run_lengths, other.run_lengths)
            and np.array_equal(self.patches, other.patches)
        )


@dataclass(frozen=True)
class BlockDiagonalMask:
    """Attention structure of a packed batch.

    The compact form is the boundaries array itself, the interchange a
    variable-length attention implementation consumes; the dense form
    additionally materializes the boolean matrix for exhaustive checking.
    """

    boundaries: np.ndarray
    matrix: np.ndarray | None = None

    @property
    def form(self) -> str:
        return "dense" if self.matrix is not None else "compact"

    @property
    def n_tokens(self) -> int:
        return int(self.boundaries[-1])

    def to_dense(self) -> np.ndarray:
        if self.matrix is not None:
            return self.matrix
        return _dense_from_boundaries(self.boundaries)

    def allowed_pairs(self) -> int:
        lengths = np.diff(self.boundaries).astype(np.int64)
        return int((lengths * lengths).sum())

    def segment_of(self, token_index: int) -> int:
        if not (0 <= token_index < self.n_tokens):
            raise IndexError(f"token {token_index} outside {self.n_tokens}")
        return int(np.searchsorted(self.boundaries, token_index, side="right")) - 1


def _dense_from_boundaries(boundaries: np.ndarray) -> np.ndarray:
    n = int(boundaries[-1])
    dense = np.zeros((n, n), dtype=np.bool_)
    for s, e in zip(boundaries[:-1], boundaries[1:]):
        dense[s:e, s:e] = True
    return dense


def pack(seqs: "list[TokenSequence]", source_ids: "list[str] | None" = None) -> PackedBatch:
    """Concatenate sequences in order; no reordering, no padding.

    All sequences must share the tubelet config and channel count so the
    patch payloads stack into one matrix.
    """
    if not seqs:
        raise ConfigError("cannot pack an empty list of sequences")
    if source_ids is None:
        source_ids = [str(i) for i in range(len(seqs))]
    if len(source_ids) != len(seqs):
        raise ConfigError(f"{len(source_ids)} ids for {len(seqs)} sequences")
    cfg = seqs[0].config
    channels = seqs[0].video_shape[0]
    for i, s in enumerate(seqs):
        if s.config != cfg:
            raise ConfigError(f"sequence {i} has a different tubelet config")
        if s.video_shape[0] != channels:
            raise ConfigError(f"sequence {i} has {s.video_shape[0]} channels, expected {channels}")
        if len(s) == 0:
            raise ConfigError(f"sequence {i} is empty")
    lengths = [len(s) for s in seqs]
    boundaries = np.concatenate(([0], np.cumsum(lengths))).astype(np.int64)
    return PackedBatch(
        xs=np.concatenate([s.xs for s in seqs]),
        ys=np.concatenate([s.ys for s in seqs]),
        ts=np.concatenate([s.ts for s in seqs]),
        run_lengths=np.concatenate([s.run_lengths for s in seqs]),
        patches=np.concatenate([s.patches for s in seqs]),
        boundaries=boundaries,
        config=cfg,
        meta=tuple(
            ExampleMeta(sid, s.video_shape, s.norm, s.tau, s.metric)
            for sid, s in zip(source_ids, seqs)
        ),
    )


def unpack(batch: PackedBatch) -> "list[TokenSequence]":
    """Exact inverse of pack."""
    bounds = batch.boundaries
    n = batch.patches.shape[0]
    if (
        bounds.ndim != 1
        or bounds.shape[0] < 2
        or bounds[0] != 0
        or bounds[-1] != n
        or not (np.diff(bounds) > 0).all()
    ):
        raise FormatError("batch boundaries are corrupted")
    out = []
    for i, m in enumerate(batch.meta):
        seg = slice(int(bounds[i]), int(bounds[i + 1]))
        out.append(
            TokenSequence(
                xs=batch.xs[seg].copy(),
                ys=batch.ys[seg].copy(),
                ts=batch.ts[seg].copy(),
                run_lengths=batch.run_lengths[seg].copy(),
                patches=batch.patches[seg].copy(),
                config=batch.config,
                video_shape=m.video_shape,
                norm=m.norm,
                tau=m.tau,
                metric=m.metric,
            )
        )
    return out


def build_mask(batch: PackedBatch, form: str = "compact") -> BlockDiagonalMask:
    """Block-diagonal attention structure for a batch.

    form="compact" carries only the boundaries; form="dense" also
    materializes the boolean matrix. Both describe the same allowed set.
    """
    if form == "compact":
        return BlockDiagonalMask(boundaries=batch.boundaries.copy())
    if form == "dense":
        return BlockDiagonalMask(
            boundaries=batch.boundaries.copy(),
            matrix=_dense_from_boundaries(batch.boundaries),
        )
    raise ConfigError(f"mask form must be 'compact' or 'dense', got {form!r}")
