"""Corpus-level token-reduction statistics and threshold sweeps.

Reports are deterministic: records appear in input order whether computed
serially or on a worker pool, unreadable inputs become skip records with
reasons, and every aggregate is recomputable from the per-video rows.
"""

from __future__ import annotations

import json
import math
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .errors import ConfigError, DataError, RltokError
from .tokenizer import DiffMetric, Threshold, reduction_ratio, tokenize
from .video import NormalizationParams, TubeletConfig, VideoTensor

HISTOGRAM_BINS = 10


@dataclass(frozen=True)
class VideoRecord:
    video_id: str
    n_patches: int
    retained: int
    reduction: float
    grid: tuple[int, int, int]
    tau: float
    metric: str


@dataclass(frozen=True)
class SkipRecord:
    video_id: str
    reason: str


def _json_tau(tau: float):
    # keep the emitted rows strict-JSON even for an infinite sweep sentinel
    return tau if math.isfinite(tau) else "inf"


@dataclass(frozen=True)
class ReductionReport:
    """Per-video reduction records plus order-independent aggregates."""

    records: tuple[VideoRecord, ...]
    skipped: tuple[SkipRecord, ...]
    tau: float
    metric: str

    @property
    def mean_reduction(self) -> "float | None":
        if not self.records:
            return None
        return statistics.fmean(r.reduction for r in self.records)

    @property
    def median_reduction(self) -> "float | None":
        if not self.records:
            return None
        return statistics.median(r.reduction for r in self.records)

    @property
    def total_before(self) -> int:
        return sum(r.n_patches for r in self.records)

    @property
    def total_after(self) -> int:
        return sum(r.retained for r in self.records)

    def histogram(self) -> "list[int]":
        """Counts of per-video reduction in [i/10, (i+1)/10)."""
        counts = [0] * HISTOGRAM_BINS
        for r in self.records:
            counts[min(int(r.reduction * HISTOGRAM_BINS), HISTOGRAM_BINS - 1)] += 1
        return counts

    def to_json_lines(self) -> str:
        lines = []
        for r in self.records:
            lines.append(
                json.dumps(
                    {
                        "id": r.video_id,
                        "n_patches": r.n_patches,
                        "retained": r.retained,
                        "reduction": r.reduction,
                        "grid": list(r.grid),
                        "tau": _json_tau(r.tau),
                        "metric": r.metric,
                    },
                    sort_keys=True,
                )
            )
        for s in self.skipped:
            lines.append(json.dumps({"id": s.video_id, "skipped": s.reason}, sort_keys=True))
        return "\n".join(lines) + ("\n" if lines else "")

    def to_text(self) -> str:
        header = f"{'id':<24} {'patches':>8} {'kept':>8} {'reduction':>9}"
        lines = [header, "-" * len(header)]
        for r in self.records:
            lines.append(
                f"{r.video_id:<24} {r.n_patches:>8} {r.retained:>8} {r.reduction:>9.4f}"
            )
        for s in self.skipped:
            lines.append(f"{s.video_id:<24} skipped: {s.reason}")
        if self.records:
            lines.append("-" * len(header))
            lines.append(
                f"{len(self.records)} videos, tokens {self.total_before} -> {self.total_after}, "
                f"mean reduction {self.mean_reduction:.4f}, median {self.median_reduction:.4f}"
            )
        else:
            lines.append("no videos tokenized")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class SweepPoint:
    tau: float
    mean_reduction: float
    mean_tokens: float
    n_videos: int


@dataclass(frozen=True)
class SweepReport:
    """Mean reduction and token count over an ascending threshold grid.

    Retention can only shrink as tau grows, so mean token counts are
    non-increasing along the rows; violations are rejected.
    """

    points: tuple[SweepPoint, ...]
    metric: str
    skipped: tuple[SkipRecord, ...]

    def __post_init__(self):
        counts = [p.mean_tokens for p in self.points]
        if any(a < b for a, b in zip(counts, counts[1:])):
            raise DataError("mean token count must be non-increasing across the tau grid")

    def to_json_lines(self) -> str:
        lines = [
            json.dumps(
                {
                    "tau": _json_tau(p.tau),
                    "mean_reduction": p.mean_reduction,
                    "mean_tokens": p.mean_tokens,
                    "n_videos": p.n_videos,
                },
                sort_keys=True,
            )
            for p in self.points
        ]
        return "\n".join(lines) + ("\n" if lines else "")

    def to_text(self) -> str:
        header = f"{'tau':>10} {'mean_tokens':>12} {'mean_reduction':>15}"
        lines = [header, "-" * len(header)]
        for p in self.points:
            lines.append(f"{p.tau:>10.4g} {p.mean_tokens:>12.2f} {p.mean_reduction:>15.4f}")
        for s in self.skipped:
            lines.append(f"{s.video_id}: skipped: {s.reason}")
        return "\n".join(lines) + "\n"


def _resolve(source) -> VideoTensor:
    video = source() if callable(source) else source
    if not isinstance(video, VideoTensor):
        raise DataError(f"expected a video tensor, got {type(video).__name__}")
    return video


def _map_ordered(fn, items, workers: int):
    if workers <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def analyze(
    items,
    config: TubeletConfig,
    tau: "Threshold | float" = 0.1,
    metric: DiffMetric = DiffMetric.MEAN_ABS,
    norm: "NormalizationParams | None" = None,
    workers: int = 1,
) -> ReductionReport:
    """Tokenize a corpus and report per-video reductions.

    items yields (id, source) pairs where source is a video tensor or a
    zero-argument loader; a source that raises is recorded as skipped.
    """
    items = list(items)
    if not items:
        raise ConfigError("analyze needs at least one video")
    norm = norm if norm is not None else NormalizationParams.imagenet()
    tau_value = tau.tau if isinstance(tau, Threshold) else Threshold(float(tau)).tau

    def one(pair):
        video_id, source = pair
        try:
            seq = tokenize(_resolve(source), config, norm, tau_value, metric)
        except (RltokError, OSError) as exc:
            return SkipRecord(video_id, f"{type(exc).__name__}: {exc}")
        return VideoRecord(
            video_id=video_id,
            n_patches=seq.n_patches,
            retained=len(seq),
            reduction=reduction_ratio(seq),
            grid=seq.grid_dims,
            tau=tau_value,
            metric=metric.value,
        )

    results = _map_ordered(one, items, workers)
    return ReductionReport(
        records=tuple(r for r in results if isinstance(r, VideoRecord)),
        skipped=tuple(r for r in results if isinstance(r, SkipRecord)),
        tau=tau_value,
        metric=metric.value,
    )


def sweep_tau(
    items,
    config: TubeletConfig,
    tau_grid,
    metric: DiffMetric = DiffMetric.MEAN_ABS,
    norm: "NormalizationParams | None" = None,
    workers: int = 1,
) -> SweepReport:
    """Run analyze at each threshold of an ascending grid.

    Sources are loaded once and reused across thresholds, so loader
    failures skip the video at every grid point.
    """
    grid = [tau.tau if isinstance(tau, Threshold) else Threshold(float(tau)).tau for tau in tau_grid]
    if not grid:
        raise ConfigError("tau grid must not be empty")
    if any(a > b for a, b in zip(grid, grid[1:])):
        raise ConfigError(f"tau grid must be sorted ascending, got {grid}")
    items = list(items)
    if not items:
        raise ConfigError("sweep needs at least one video")

    loaded: list = []
    skipped: list = []
    for video_id, source in items:
        try:
            loaded.append((video_id, _resolve(source)))
        except (RltokError, OSError) as exc:
            skipped.append(SkipRecord(video_id, f"{type(exc).__name__}: {exc}"))

    # tokenization failures are independent of tau, so the record set is the
    # same at every grid point and the skip list merges without duplicates
    points = []
    merged: dict = {}
    for tau_value in grid:
        n = 0
        mean_reduction = 0.0
        mean_tokens = 0.0
        if loaded:
            report = analyze(loaded, config, tau_value, metric, norm, workers)
            for s in report.skipped:
                merged.setdefault(s.video_id, s)
            n = len(report.records)
            if n:
                mean_reduction = report.mean_reduction
                mean_tokens = report.total_after / n
        points.append(
            SweepPoint(tau=tau_value, mean_reduction=mean_reduction, mean_tokens=mean_tokens, n_videos=n)
        )
    return SweepReport(
        points=tuple(points),
        metric=metric.value,
        skipped=tuple(skipped) + tuple(merged.values()),
    )
