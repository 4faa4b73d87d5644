"""Binary artifact formats and pixel ingestion.

Three little-endian, byte-exact container formats:

- RLTV1, a raw video: magic, dtype code (0 = f32le, 1 = u8), C/T/H/W as
  u32le, then the channel-major payload. u8 payloads are divided by 255 at
  read time.
- RLTT1, one token sequence: source dims, tubelet config, tau (f64le),
  metric code (0 = mean_abs, 1 = sum_abs), per-channel normalization
  mean/std (f64le), token count, the x/y/t/run-length arrays (u32le each),
  then the patch payloads (f32le).
- RLTP1, a packed batch: example count, shared tubelet config, then one
  record per example (utf-8 source id with u16le length prefix, followed
  by the RLTT1 body fields from the source dims onward).

Every reader rejects malformed input — bad magic, truncation, trailing
bytes, inconsistent sizes — rather than truncating or padding.

Pixel ingestion: image-sequence directories (frames ordered by natural
numeric sort) and a raw interleaved-RGB frame pipe for external decoders.
"""

from __future__ import annotations

import re
import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ConfigError, DataError, FormatError, RltokError, StreamError
from .packing import PackedBatch, pack, unpack
from .tokenizer import DiffMetric, TokenSequence
from .video import NormalizationParams, TubeletConfig, VideoTensor

RAW_MAGIC = b"RLTV1"
SEQ_MAGIC = b"RLTT1"
BATCH_MAGIC = b"RLTP1"

_DTYPE_F32 = 0
_DTYPE_U8 = 1
_METRIC_CODE = {DiffMetric.MEAN_ABS: 0, DiffMetric.SUM_ABS: 1}
_METRIC_FROM_CODE = {code: metric for metric, code in _METRIC_CODE.items()}


class _Cursor:
    """Sequential parser over one buffer; errors carry the byte offset."""

    def __init__(self, buf: bytes, label: str):
        self.buf = buf
        self.off = 0
        self.label = label

    def fail(self, message: str) -> "FormatError":
        return FormatError(f"{self.label}: {message} at byte {self.off}")

    def take(self, n: int, what: str) -> bytes:
        if len(self.buf) - self.off < n:
            raise FormatError(
                f"{self.label}: truncated {what} at byte {self.off}: "
                f"need {n} bytes, have {len(self.buf) - self.off}"
            )
        piece = self.buf[self.off : self.off + n]
        self.off += n
        return piece

    def u8(self, what: str) -> int:
        return self.take(1, what)[0]

    def u16(self, what: str) -> int:
        return struct.unpack("<H", self.take(2, what))[0]

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def f64(self, what: str) -> float:
        return struct.unpack("<d", self.take(8, what))[0]

    def array(self, dtype: str, count: int, what: str) -> np.ndarray:
        raw = self.take(count * np.dtype(dtype).itemsize, what)
        return np.frombuffer(raw, dtype=dtype, count=count).copy()

    def expect_magic(self, magic: bytes) -> None:
        got = self.take(len(magic), "magic")
        if got != magic:
            self.off = 0
            raise self.fail(f"bad magic {got!r}, expected {magic!r}")

    def done(self) -> None:
        if self.off != len(self.buf):
            raise self.fail(f"{len(self.buf) - self.off} trailing bytes")


def _dims4(cur: _Cursor, what: str) -> tuple[int, int, int, int]:
    dims = tuple(cur.u32(what) for _ in range(4))
    if any(d < 1 for d in dims):
        raise cur.fail(f"{what} must all be >= 1, got {dims}")
    return dims


def write_raw(path: "str | Path", video: VideoTensor, dtype: str = "f32") -> None:
    """Serialize a video as RLTV1; dtype 'u8' quantizes to 8-bit."""
    c, t, h, w = video.shape
    parts = [RAW_MAGIC]
    if dtype == "f32":
        parts.append(struct.pack("<BIIII", _DTYPE_F32, c, t, h, w))
        parts.append(np.asarray(video.data, "<f4").tobytes())
    elif dtype == "u8":
        parts.append(struct.pack("<BIIII", _DTYPE_U8, c, t, h, w))
        quantized = np.round(np.clip(video.data, 0.0, 1.0) * 255.0).astype(np.uint8)
        parts.append(quantized.tobytes())
    else:
        raise ConfigError(f"raw dtype must be 'f32' or 'u8', got {dtype!r}")
    Path(path).write_bytes(b"".join(parts))


def read_raw(path: "str | Path") -> VideoTensor:
    """Parse an RLTV1 file back into a video tensor."""
    cur = _Cursor(Path(path).read_bytes(), str(path))
    cur.expect_magic(RAW_MAGIC)
    code = cur.u8("dtype code")
    if code not in (_DTYPE_F32, _DTYPE_U8):
        raise cur.fail(f"unknown dtype code {code}")
    c, t, h, w = _dims4(cur, "video dims")
    count = c * t * h * w
    if code == _DTYPE_F32:
        data = cur.array("<f4", count, "f32 payload").reshape(c, t, h, w)
        cur.done()
        return VideoTensor(data)
    data = cur.array("u1", count, "u8 payload").reshape(c, t, h, w)
    cur.done()
    return VideoTensor.from_uint8(data)


def _write_norm(parts: list, norm: NormalizationParams) -> None:
    for value in norm.mean:
        parts.append(struct.pack("<d", value))
    for value in norm.std:
        parts.append(struct.pack("<d", value))


def _read_norm(cur: _Cursor, channels: int) -> NormalizationParams:
    mean = tuple(cur.f64("normalization mean") for _ in range(channels))
    std = tuple(cur.f64("normalization std") for _ in range(channels))
    try:
        return NormalizationParams(mean=mean, std=std)
    except RltokError as exc:
        raise cur.fail(f"invalid normalization block: {exc}") from exc


def _write_seq_body(parts: list, seq: TokenSequence) -> None:
    c, t, h, w = seq.video_shape
    parts.append(struct.pack("<IIII", c, t, h, w))
    parts.append(struct.pack("<d", seq.tau))
    parts.append(struct.pack("<B", _METRIC_CODE[seq.metric]))
    _write_norm(parts, seq.norm)
    parts.append(struct.pack("<I", len(seq)))
    for arr in (seq.xs, seq.ys, seq.ts, seq.run_lengths):
        parts.append(np.asarray(arr, "<u4").tobytes())
    parts.append(np.asarray(seq.patches, "<f4").tobytes())


def _read_seq_body(cur: _Cursor, config: TubeletConfig) -> TokenSequence:
    shape = _dims4(cur, "source dims")
    tau = cur.f64("tau")
    metric_code = cur.u8("metric code")
    if metric_code not in _METRIC_FROM_CODE:
        raise cur.fail(f"unknown metric code {metric_code}")
    norm = _read_norm(cur, shape[0])
    count = cur.u32("token count")
    xs = cur.array("<u4", count, "x indices")
    ys = cur.array("<u4", count, "y indices")
    ts = cur.array("<u4", count, "t indices")
    lens = cur.array("<u4", count, "run lengths")
    elems = config.patch_elems(shape[0])
    patches = cur.array("<f4", count * elems, "patch payload")
    try:
        return TokenSequence(
            xs=xs,
            ys=ys,
            ts=ts,
            run_lengths=lens,
            patches=patches.reshape(count, elems),
            config=config,
            video_shape=shape,
            norm=norm,
            tau=tau,
            metric=_METRIC_FROM_CODE[metric_code],
        )
    except RltokError as exc:
        raise cur.fail(f"inconsistent token records: {exc}") from exc


def _write_config(parts: list, config: TubeletConfig) -> None:
    parts.append(
        struct.pack("<IIII", config.patch_x, config.patch_y, config.tubelet_t, config.embed_dim)
    )


def _read_config(cur: _Cursor) -> TubeletConfig:
    px, py, tt, embed = (cur.u32("tubelet config") for _ in range(4))
    try:
        return TubeletConfig(patch_x=px, patch_y=py, tubelet_t=tt, embed_dim=embed)
    except RltokError as exc:
        raise cur.fail(f"invalid tubelet config: {exc}") from exc


def write_tokens(path: "str | Path", item: "TokenSequence | PackedBatch") -> None:
    """Serialize a token sequence (RLTT1) or packed batch (RLTP1)."""
    parts: list = []
    if isinstance(item, TokenSequence):
        parts.append(SEQ_MAGIC)
        _write_config(parts, item.config)
        _write_seq_body(parts, item)
    elif isinstance(item, PackedBatch):
        parts.append(BATCH_MAGIC)
        parts.append(struct.pack("<I", item.n_examples))
        _write_config(parts, item.config)
        for meta, seq in zip(item.meta, unpack(item)):
            encoded = meta.source_id.encode("utf-8")
            if len(encoded) > 0xFFFF:
                raise ConfigError(f"source id too long to serialize ({len(encoded)} bytes)")
            parts.append(struct.pack("<H", len(encoded)))
            parts.append(encoded)
            _write_seq_body(parts, seq)
    else:
        raise DataError(f"expected a TokenSequence or PackedBatch, got {type(item).__name__}")
    Path(path).write_bytes(b"".join(parts))


def read_tokens(path: "str | Path") -> "TokenSequence | PackedBatch":
    """Parse an RLTT1 or RLTP1 file, dispatching on the magic."""
    buf = Path(path).read_bytes()
    cur = _Cursor(buf, str(path))
    magic = cur.take(5, "magic")
    if magic == SEQ_MAGIC:
        config = _read_config(cur)
        seq = _read_seq_body(cur, config)
        cur.done()
        return seq
    if magic == BATCH_MAGIC:
        count = cur.u32("example count")
        if count < 1:
            raise cur.fail("a packed batch must hold at least one example")
        config = _read_config(cur)
        ids = []
        seqs = []
        for _ in range(count):
            id_len = cur.u16("source id length")
            ids.append(cur.take(id_len, "source id").decode("utf-8"))
            seqs.append(_read_seq_body(cur, config))
        cur.done()
        try:
            return pack(seqs, ids)
        except RltokError as exc:
            raise FormatError(f"{path}: inconsistent packed examples: {exc}") from exc
    cur.off = 0
    raise cur.fail(f"bad magic {magic!r}, expected {SEQ_MAGIC!r} or {BATCH_MAGIC!r}")


def _natural_key(name: str):
    return tuple(
        (1, int(piece)) if piece.isdigit() else (0, piece)
        for piece in re.split(r"(\d+)", name)
    )


def read_image_dir(path: "str | Path", pattern: str = "*") -> VideoTensor:
    """Stack a directory of images into a video, frames in natural-numeric
    filename order (frame_2 before frame_10); alpha channels are dropped."""
    root = Path(path)
    files = sorted((p for p in root.glob(pattern) if p.is_file()), key=lambda p: _natural_key(p.name))
    if not files:
        raise DataError(f"no frame images match {pattern!r} under {root}")
    frames = []
    for p in files:
        with Image.open(p) as img:
            frames.append(np.asarray(img.convert("RGB"), dtype=np.uint8))
    first = frames[0].shape
    offenders = [
        f"{p.name} is {arr.shape[1]}x{arr.shape[0]}"
        for p, arr in zip(files, frames)
        if arr.shape != first
    ]
    if offenders:
        raise DataError(
            f"frames must share dimensions; {files[0].name} is {first[1]}x{first[0]} but "
            + ", ".join(offenders)
        )
    stack = np.stack(frames)  # (T, H, W, C)
    return VideoTensor.from_uint8(np.ascontiguousarray(stack.transpose(3, 0, 1, 2)))


def read_frame_pipe(stream, channels: int, frames: int, height: int, width: int) -> VideoTensor:
    """Consume exactly frames * height * width * channels bytes of raw
    interleaved pixels (RGB24-style, one byte per channel) from a stream."""
    if min(channels, frames, height, width) < 1:
        raise ConfigError(
            f"declared dims must all be >= 1, got C={channels} T={frames} H={height} W={width}"
        )
    frame_bytes = height * width * channels
    total = frames * frame_bytes
    buf = bytearray()
    while len(buf) < total:
        piece = stream.read(min(1 << 20, total - len(buf)))
        if not piece:
            break
        buf.extend(piece)
    if len(buf) < total:
        raise StreamError(
            f"stream ended after {len(buf) // frame_bytes} of {frames} frames "
            f"({len(buf)} of {total} bytes)"
        )
    data = np.frombuffer(bytes(buf), dtype=np.uint8).reshape(frames, height, width, channels)
    return VideoTensor.from_uint8(np.ascontiguousarray(data.transpose(3, 0, 1, 2)))
