"""Synthetic video generators and naive reference implementations.

The oracles here recompute the pruning decisions with plain Python loops
over scalar values, sharing no arithmetic helpers with the optimized code
paths, so equality against them is meaningful evidence. Generators are
deterministic functions of their spec.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ProvenanceError
from .tokenizer import DiffMetric, StaticMask, Threshold
from .video import PatchGrid, TubeletConfig, VideoTensor

KINDS = ("static", "noise", "moving_block", "brightness_ramp", "two_segment_static")


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a deterministic test clip.

    kind selects the construction; the remaining fields are interpreted per
    kind:

    - static: one seeded random frame repeated ``frames`` times.
    - noise: every pixel independently uniform in [0, 1).
    - moving_block: a block_w x block_h block hopping one block-column to
      the right every hop_frames frames (wrapping), drawn amplitude above
      the background along patch row block_row.
    - brightness_ramp: spatially flat frames at base + k * step; exact when
      base and step are binary fractions.
    - two_segment_static: a random texture for the first half of the clip,
      the same texture shifted up by amplitude for the second half.
    """

    kind: str
    channels: int = 3
    frames: int = 8
    height: int = 32
    width: int = 32
    seed: int = 0
    amplitude: float = 0.5
    base: float = 0.0
    step: float = 0.0625
    block_w: int = 16
    block_h: int = 16
    hop_frames: int = 2
    block_row: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown synthetic kind {self.kind!r}, expected one of {KINDS}")


def gen_video(spec: SyntheticSpec) -> VideoTensor:
    """Deterministically construct the clip a spec describes."""
    rng = np.random.default_rng(spec.seed)
    c, t, h, w = spec.channels, spec.frames, spec.height, spec.width

    if spec.kind == "static":
        frame = rng.random((c, 1, h, w), dtype=np.float32)
        return VideoTensor(np.broadcast_to(frame, (c, t, h, w)).copy())

    if spec.kind == "noise":
        return VideoTensor(rng.random((c, t, h, w), dtype=np.float32))

    if spec.kind == "brightness_ramp":
        top = spec.base + (t - 1) * spec.step
        if not (0.0 <= spec.base and top <= 1.0):
            raise ConfigError(f"ramp leaves [0, 1]: base={spec.base}, final level {top}")
        levels = (spec.base + np.arange(t, dtype=np.float64) * spec.step).astype(np.float32)
        data = np.empty((c, t, h, w), dtype=np.float32)
        data[:] = levels.reshape(1, t, 1, 1)
        return VideoTensor(data)

    if spec.kind == "two_segment_static":
        if t < 2:
            raise ConfigError("two_segment_static needs at least 2 frames")
        if not (0 < spec.amplitude <= 1):
            raise ConfigError(f"segment shift must lie in (0, 1], got {spec.amplitude}")
        texture = rng.random((c, 1, h, w), dtype=np.float32) * np.float32(1 - spec.amplitude)
        data = np.empty((c, t, h, w), dtype=np.float32)
        half = t // 2
        data[:, :half] = texture
        data[:, half:] = texture + np.float32(spec.amplitude)
        return VideoTensor(data)

    # moving_block
    if w % spec.block_w or h % spec.block_h:
        raise ConfigError(f"block {spec.block_w}x{spec.block_h} must tile the {w}x{h} frame")
    if t % spec.hop_frames:
        raise ConfigError(f"hop_frames {spec.hop_frames} must divide frame count {t}")
    cols = w // spec.block_w
    if cols < 2:
        raise ConfigError("moving_block needs at least two block columns to move")
    if not (0 <= spec.block_row < h // spec.block_h):
        raise ConfigError(f"block_row {spec.block_row} outside {h // spec.block_h} rows")
    if not (0 < spec.amplitude <= 1):
        raise ConfigError(f"block contrast must lie in (0, 1], got {spec.amplitude}")
    background = np.float32(0.5 - spec.amplitude / 2)
    block = np.float32(0.5 + spec.amplitude / 2)
    data = np.full((c, t, h, w), background, dtype=np.float32)
    y0 = spec.block_row * spec.block_h
    for f in range(t):
        col = (f // spec.hop_frames) % cols
        x0 = col * spec.block_w
        data[:, f, y0 : y0 + spec.block_h, x0 : x0 + spec.block_w] = block
    return VideoTensor(data)


def moving_block_retained(spec: SyntheticSpec, config: TubeletConfig) -> set[tuple[int, int, int]]:
    """Retained slot set a moving_block clip must tokenize to.

    Valid whenever one tubelet slot covers exactly one hop and tau falls
    strictly between zero and the normalized block contrast: the whole
    first slot survives, and each later slot retains exactly the vacated
    and the entered block columns.
    """
    if (config.patch_x, config.patch_y) != (spec.block_w, spec.block_h):
        raise ProvenanceError("patch size must equal the block size")
    if config.tubelet_t != spec.hop_frames:
        raise ProvenanceError("tubelet span must equal the hop interval")
    gx = spec.width // config.patch_x
    gy = spec.height // config.patch_y
    gt = spec.frames // config.tubelet_t
    retained = {(x, y, 0) for x in range(gx) for y in range(gy)}
    for t in range(1, gt):
        retained.add(((t - 1) % gx, spec.block_row, t))
        retained.add((t % gx, spec.block_row, t))
    return retained


def oracle_mask(grid: PatchGrid, tau: "Threshold | float", metric: DiffMetric) -> StaticMask:
    """Scalar-loop recomputation of the retention mask.

    Walks every slot pair and every crop element as Python floats; the
    payload layout (C, Dt, Dy, Dx) is indexed by hand.
    """
    if isinstance(tau, Threshold):
        tau = tau.tau
    tau = float(tau)
    cfg = grid.config
    c = grid.video_shape[0]
    dt, dy, dx = cfg.tubelet_t, cfg.patch_y, cfg.patch_x
    gx, gy, gt = grid.grid_x, grid.grid_y, grid.grid_t
    crop_elems = c * dy * dx
    cells = grid.patches.tolist()
    bits = np.zeros((gx, gy, gt), dtype=np.bool_)
    for x in range(gx):
        for y in range(gy):
            bits[x, y, 0] = True
            for t in range(1, gt):
                prev = cells[x][y][t - 1]
                cur = cells[x][y][t]
                total = 0.0
                for ci in range(c):
                    for yy in range(dy):
                        for xx in range(dx):
                            a = prev[((ci * dt + 0) * dy + yy) * dx + xx]
                            b = cur[((ci * dt + (dt - 1)) * dy + yy) * dx + xx]
                            total += abs(a - b)
                diff = total / crop_elems if metric is DiffMetric.MEAN_ABS else total
                bits[x, y, t] = not (diff < tau)
    return StaticMask(bits)


def oracle_run_lengths(mask: StaticMask) -> np.ndarray:
    """Literal per-slot scan for the next retained slot in the column."""
    bits = mask.bits.tolist()
    gx, gy, gt = mask.bits.shape
    out = np.zeros((gx, gy, gt), dtype=np.uint32)
    for x in range(gx):
        for y in range(gy):
            for t in range(gt):
                if not bits[x][y][t]:
                    continue
                nxt = None
                for tp in range(t + 1, gt):
                    if bits[x][y][tp]:
                        nxt = tp
                        break
                out[x, y, t] = (nxt - t) if nxt is not None else (gt - t)
    return out
