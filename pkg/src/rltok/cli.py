"""Command-line pipeline: tokenize, pack, stats, sweep, viz, refdemo, bench.

Every run echoes its resolved configuration on the first output line so
results are reproducible from logs alone. Exit codes: 0 success, 1 for
data/parse/stream problems, 2 for configuration problems, 3 when refdemo
finds packed and per-example forwards disagreeing.
"""

from __future__ import annotations

import argparse
import json
import statistics
import sys
import time
from functools import partial
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, FormatError
from .fileio import read_frame_pipe, read_image_dir, read_raw, read_tokens, write_tokens
from .model import ToyTransformer, forward_packed, forward_single
from .packing import PackedBatch, pack
from .stats import analyze, sweep_tau
from .testkit import SyntheticSpec, gen_video
from .tokenizer import DiffMetric, TokenSequence, reduction_ratio, tokenize
from .video import NormalizationParams, TubeletConfig, VideoTensor
from .viz import render_overlay, save_overlay_frames

REFDEMO_TOLERANCE = 1e-5


def _add_common(p: argparse.ArgumentParser, workers: bool = False) -> None:
    p.add_argument("--tau", type=float, default=0.1, help="static threshold (default 0.1)")
    p.add_argument("--metric", choices=["mean", "sum"], default="mean",
                   help="L1 reduction: mean or sum of absolute differences (default mean)")
    p.add_argument("--patch", type=int, default=16, help="patch edge in pixels (default 16)")
    p.add_argument("--tubelet", type=int, default=2, help="frames per tubelet (default 2)")
    p.add_argument("--embed-dim", type=int, default=64, help="model width (default 64)")
    p.add_argument("--norm", choices=["imagenet", "none", "custom"], default="imagenet",
                   help="per-channel normalization before comparison (default imagenet)")
    p.add_argument("--mean", default=None, help="comma-separated channel means for --norm custom")
    p.add_argument("--std", default=None, help="comma-separated channel stds for --norm custom")
    p.add_argument("--seed", type=int, default=0, help="seed for anything randomized (default 0)")
    p.add_argument("--dims", default=None,
                   help="C,T,H,W of a raw frame pipe when the input is '-' (stdin)")
    p.add_argument("--pattern", default="*", help="filename glob inside image directories")
    if workers:
        p.add_argument("--workers", type=int, default=1, help="worker threads (default 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rltok",
        description="Run-length tokenization for video: prune temporally repeated "
        "patches and pack what remains.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("tokenize", help="tokenize one video into a token-sequence file")
    p.add_argument("input", help="RLTV1 file, image directory, or '-' for a raw frame pipe")
    p.add_argument("--output", default=None, help="write the token sequence here")
    _add_common(p)
    p.set_defaults(func=cmd_tokenize)

    p = sub.add_parser("pack", help="pack token-sequence files into one batch file")
    p.add_argument("inputs", nargs="+", help="token-sequence files")
    p.add_argument("--output", required=True, help="write the packed batch here")
    _add_common(p)
    p.set_defaults(func=cmd_pack)

    p = sub.add_parser("stats", help="token-reduction report over a corpus")
    p.add_argument("inputs", nargs="+", help="video inputs (RLTV1 files or image directories)")
    p.add_argument("--output", default=None, help="write machine-readable rows here")
    _add_common(p, workers=True)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("sweep", help="reduction versus threshold over a grid")
    p.add_argument("inputs", nargs="+", help="video inputs")
    p.add_argument("--taus", default="0,0.025,0.05,0.1,0.2,0.5",
                   help="ascending comma-separated thresholds ('inf' allowed)")
    p.add_argument("--output", default=None, help="write machine-readable rows here")
    _add_common(p, workers=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("viz", help="render pruned-patch overlay frames")
    p.add_argument("input", help="the source video")
    p.add_argument("--tokens", required=True, help="token-sequence file produced from it")
    p.add_argument("--outdir", required=True, help="directory for the PNG frames")
    p.add_argument("--gray", type=float, default=0.5, help="fill level for pruned patches")
    _add_common(p)
    p.set_defaults(func=cmd_viz)

    p = sub.add_parser("refdemo", help="check packed and per-example forwards agree")
    p.add_argument("inputs", nargs="+", help="video inputs, tokenized fresh")
    p.add_argument("--packed", default=None,
                   help="packed batch file to verify against the fresh tokenization")
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--depth", type=int, default=2)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--model-out", default=None, help="write the model snapshot JSON here")
    _add_common(p)
    p.set_defaults(func=cmd_refdemo)

    p = sub.add_parser("bench", help="tokenization cost relative to a model forward")
    p.add_argument("--frames", type=int, default=16)
    p.add_argument("--size", type=int, default=224, help="frame height and width")
    p.add_argument("--runs", type=int, default=50)
    p.add_argument("--output", default=None, help="write the timing report JSON here")
    _add_common(p)
    p.set_defaults(func=cmd_bench)

    return parser


def _echo_config(args: argparse.Namespace) -> None:
    skip = {"func", "command"}
    fields = " ".join(
        f"{key}={getattr(args, key)}"
        for key in sorted(vars(args))
        if key not in skip and getattr(args, key) is not None
    )
    print(f"config: command={args.command} {fields}")


def _tubelet_config(args) -> TubeletConfig:
    return TubeletConfig(
        patch_x=args.patch, patch_y=args.patch, tubelet_t=args.tubelet, embed_dim=args.embed_dim
    )


def _parse_floats(text: str, what: str) -> tuple[float, ...]:
    try:
        values = tuple(float(s) for s in text.split(",") if s.strip())
    except ValueError as exc:
        raise ConfigError(f"{what} must be comma-separated numbers, got {text!r}") from exc
    if not values:
        raise ConfigError(f"{what} must hold at least one number")
    return values


def _norm_params(args, channels: int) -> NormalizationParams:
    if args.norm == "imagenet":
        params = NormalizationParams.imagenet()
    elif args.norm == "none":
        params = NormalizationParams.identity(channels)
    else:
        if args.mean is None or args.std is None:
            raise ConfigError("--norm custom requires --mean and --std")
        params = NormalizationParams(
            mean=_parse_floats(args.mean, "--mean"), std=_parse_floats(args.std, "--std")
        )
    if len(params.mean) != channels:
        raise ConfigError(
            f"normalization has {len(params.mean)} channels but the video has {channels}"
        )
    return params


def _load_video(path: str, args) -> VideoTensor:
    if path == "-":
        if args.dims is None:
            raise ConfigError("reading from '-' requires --dims C,T,H,W")
        try:
            dims = [int(s) for s in args.dims.split(",")]
        except ValueError as exc:
            raise ConfigError(f"--dims must be integers C,T,H,W, got {args.dims!r}") from exc
        if len(dims) != 4:
            raise ConfigError(f"--dims must hold exactly C,T,H,W, got {args.dims!r}")
        return read_frame_pipe(sys.stdin.buffer, *dims)
    p = Path(path)
    if p.is_dir():
        return read_image_dir(p, args.pattern)
    return read_raw(p)


def cmd_tokenize(args) -> int:
    _echo_config(args)
    video = _load_video(args.input, args)
    config = _tubelet_config(args)
    seq = tokenize(video, config, _norm_params(args, video.channels), args.tau,
                   DiffMetric(args.metric))
    gx, gy, gt = seq.grid_dims
    print(
        f"tokens: {seq.n_patches} -> {len(seq)} (reduction {reduction_ratio(seq):.4f}) "
        f"grid=({gx},{gy},{gt})"
    )
    if args.output:
        write_tokens(args.output, seq)
        print(f"wrote {args.output}")
    return 0


def cmd_pack(args) -> int:
    _echo_config(args)
    seqs = []
    for path in args.inputs:
        item = read_tokens(path)
        if not isinstance(item, TokenSequence):
            raise ConfigError(f"{path} holds a packed batch; pack expects single sequences")
        seqs.append(item)
    batch = pack(seqs, source_ids=list(args.inputs))
    write_tokens(args.output, batch)
    print(f"packed {batch.n_examples} examples, boundaries {batch.boundaries.tolist()}")
    print(f"wrote {args.output}")
    return 0


def _corpus(args):
    return [(path, partial(_load_video, path, args)) for path in args.inputs]


def cmd_stats(args) -> int:
    _echo_config(args)
    report = analyze(
        _corpus(args),
        _tubelet_config(args),
        tau=args.tau,
        metric=DiffMetric(args.metric),
        norm=None if args.norm == "imagenet" else _norm_params(args, 3),
        workers=args.workers,
    )
    print(report.to_text(), end="")
    if args.output:
        Path(args.output).write_text(report.to_json_lines())
        print(f"wrote {args.output}")
    return 0


def cmd_sweep(args) -> int:
    _echo_config(args)
    report = sweep_tau(
        _corpus(args),
        _tubelet_config(args),
        _parse_floats(args.taus, "--taus"),
        metric=DiffMetric(args.metric),
        norm=None if args.norm == "imagenet" else _norm_params(args, 3),
        workers=args.workers,
    )
    print(report.to_text(), end="")
    if args.output:
        Path(args.output).write_text(report.to_json_lines())
        print(f"wrote {args.output}")
    return 0


def cmd_viz(args) -> int:
    _echo_config(args)
    video = _load_video(args.input, args)
    item = read_tokens(args.tokens)
    if not isinstance(item, TokenSequence):
        raise ConfigError(f"{args.tokens} holds a packed batch; viz expects one sequence")
    overlay = render_overlay(video, item, gray=args.gray)
    paths = save_overlay_frames(overlay, args.outdir)
    print(f"wrote {len(paths)} frames to {args.outdir}")
    return 0


def cmd_refdemo(args) -> int:
    _echo_config(args)
    videos = [_load_video(path, args) for path in args.inputs]
    shape = videos[0].shape
    for path, video in zip(args.inputs, videos):
        if video.shape != shape:
            raise ConfigError(f"{path} is {video.shape}, expected {shape}; refdemo needs one geometry")
    config = _tubelet_config(args)
    norm = _norm_params(args, shape[0])
    metric = DiffMetric(args.metric)
    seqs = [tokenize(v, config, norm, args.tau, metric) for v in videos]
    model = ToyTransformer.create(
        config, shape, depth=args.depth, heads=args.heads,
        num_classes=args.classes, seed=args.seed,
    )
    print(f"model: {json.dumps(model.to_snapshot(), sort_keys=True)}")
    if args.model_out:
        Path(args.model_out).write_text(json.dumps(model.to_snapshot(), sort_keys=True) + "\n")
    singles = np.stack([forward_single(s, model) for s in seqs])
    if args.packed:
        item = read_tokens(args.packed)
        if not isinstance(item, PackedBatch):
            raise ConfigError(f"{args.packed} does not hold a packed batch")
        batch = item
    else:
        batch = pack(seqs, source_ids=list(args.inputs))
    if batch.n_examples != len(seqs):
        print(f"equivalence FAILED: {batch.n_examples} packed examples for {len(seqs)} inputs")
        return 3
    packed_logits = forward_packed(batch, model)
    for path, row in zip(args.inputs, packed_logits):
        print(f"{path}: " + " ".join(f"{v:+.6f}" for v in row))
    deviation = float(np.max(np.abs(packed_logits - singles)))
    print(f"max deviation: {deviation:.3e}")
    if deviation > REFDEMO_TOLERANCE:
        print(f"equivalence FAILED (tolerance {REFDEMO_TOLERANCE:g})")
        return 3
    print("equivalence ok")
    return 0


def cmd_bench(args) -> int:
    _echo_config(args)
    if args.runs < 1:
        raise ConfigError(f"--runs must be >= 1, got {args.runs}")
    video = gen_video(
        SyntheticSpec(
            "noise", frames=args.frames, height=args.size, width=args.size, seed=args.seed
        )
    )
    config = _tubelet_config(args)
    norm = _norm_params(args, video.channels)
    metric = DiffMetric(args.metric)
    model = ToyTransformer.create(config, video.shape, seed=args.seed)
    seq = tokenize(video, config, norm, args.tau, metric)  # warmup
    forward_single(seq, model)
    tok_times = []
    fwd_times = []
    for _ in range(args.runs):
        t0 = time.perf_counter()
        seq = tokenize(video, config, norm, args.tau, metric)
        t1 = time.perf_counter()
        forward_single(seq, model)
        t2 = time.perf_counter()
        tok_times.append(t1 - t0)
        fwd_times.append(t2 - t1)
    tok_med = statistics.median(tok_times)
    fwd_med = statistics.median(fwd_times)
    report = {
        "clip": "x".join(str(v) for v in video.shape),
        "runs": args.runs,
        "n_patches": seq.n_patches,
        "retained": len(seq),
        "tokenize_ms_median": tok_med * 1e3,
        "forward_ms_median": fwd_med * 1e3,
        "tokens_per_second": seq.n_patches / tok_med,
        "ratio": tok_med / fwd_med,
    }
    for key in (
        "clip", "runs", "n_patches", "retained",
        "tokenize_ms_median", "forward_ms_median", "tokens_per_second", "ratio",
    ):
        value = report[key]
        print(f"{key}={value:.4f}" if isinstance(value, float) else f"{key}={value}")
    if args.output:
        Path(args.output).write_text(json.dumps(report, sort_keys=True) + "\n")
        print(f"wrote {args.output}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return int(args.func(args))
    except ConfigError as exc:  # includes grid and provenance problems
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FormatError, DataError, OSError) as exc:  # includes stream errors
        print(f"error: {exc}", file=sys.stderr)
        return 1
