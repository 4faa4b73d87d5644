"""Rendering pruned-patch overlays.

A retained patch shows its source pixels; a pruned patch is filled with a
flag gray, at the original resolution, for every frame its tubelet covers.
One output frame per source frame, so the result is itself a video tensor.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DataError, ProvenanceError
from .tokenizer import TokenSequence
from .video import VideoTensor


def render_overlay(video: VideoTensor, seq: TokenSequence, gray: float = 0.5) -> VideoTensor:
    """Paint every pruned tubelet mid-gray over a copy of the source video.

    The sequence must have been tokenized from a video of exactly these
    dimensions with the same tubelet config.
    """
    if seq.video_shape != video.shape:
        raise ProvenanceError(
            f"token sequence came from a {seq.video_shape} video, not {video.shape}"
        )
    c, t, h, w = video.shape
    gx, gy, gt = seq.grid_dims
    cfg = seq.config
    retained = np.zeros((gx, gy, gt), dtype=np.bool_)
    retained[seq.xs, seq.ys, seq.ts] = True
    out = video.data.copy()
    blocks = out.reshape(c, gt, cfg.tubelet_t, gy, cfg.patch_y, gx, cfg.patch_x)
    for x, y, t_slot in np.argwhere(~retained):
        blocks[:, t_slot, :, y, :, x, :] = gray
    return VideoTensor(out)


def save_overlay_frames(
    overlay: VideoTensor, out_dir: "str | Path", prefix: str = "frame"
) -> "list[Path]":
    """Write one 8-bit PNG per frame, named <prefix>_00000.png onward."""
    c = overlay.channels
    if c not in (1, 3):
        raise DataError(f"only 1- or 3-channel overlays can be written as images, got C={c}")
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    quantized = np.round(np.clip(overlay.data, 0.0, 1.0) * 255.0).astype(np.uint8)
    paths = []
    for t in range(overlay.frames):
        frame = quantized[:, t].transpose(1, 2, 0)  # (H, W, C)
        image = Image.fromarray(frame[:, :, 0], "L") if c == 1 else Image.fromarray(frame, "RGB")
        path = root / f"{prefix}_{t:05d}.png"
        image.save(path)
        paths.append(path)
    return paths
