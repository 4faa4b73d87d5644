"""Regenerate the committed golden artifacts.

The inputs are tiny hand-picked videos whose values are exact binary
fractions, so every byte downstream is reproducible on any platform. Run
from the repository root:

    python3 tests/golden/make_goldens.py

The expected byte layouts are rebuilt independently (struct by struct)
inside tests/test_fileio.py; regenerating these files must not change them
unless the on-disk format itself changed.
"""

from pathlib import Path

import numpy as np

from rltok import (
    NormalizationParams,
    TubeletConfig,
    VideoTensor,
    pack,
    tokenize,
    write_raw,
    write_tokens,
)

HERE = Path(__file__).parent

CONFIG = TubeletConfig(patch_x=1, patch_y=1, tubelet_t=1, embed_dim=8)
TAU = 0.1


def two_frame_video() -> VideoTensor:
    # pixel columns (0,0) and (0,1) repeat across frames; (1,0) and (1,1)
    # jump by 0.5, far above tau
    frame0 = [[0.0, 0.125], [0.25, 0.375]]
    frame1 = [[0.0, 0.625], [0.25, 0.875]]
    return VideoTensor(np.array([[frame0, frame1]], dtype=np.float32))


def static_video() -> VideoTensor:
    frame = [[0.0, 0.125], [0.25, 0.375]]
    return VideoTensor(np.array([[frame, frame]], dtype=np.float32))


def main() -> None:
    norm = NormalizationParams.identity(1)
    moving = two_frame_video()
    write_raw(HERE / "video_f32.rltv", moving, dtype="f32")
    write_raw(HERE / "video_u8.rltv", moving, dtype="u8")

    seq = tokenize(moving, CONFIG, norm, tau=TAU)
    assert len(seq) == 6, f"golden tokenization drifted: {len(seq)} tokens"
    write_tokens(HERE / "tokens.rltt", seq)

    sibling = tokenize(static_video(), CONFIG, norm, tau=TAU)
    assert len(sibling) == 4, f"golden sibling drifted: {len(sibling)} tokens"
    write_tokens(HERE / "batch.rltp", pack([seq, sibling], source_ids=["a", "b"]))

    for name in ("video_f32.rltv", "video_u8.rltv", "tokens.rltt", "batch.rltp"):
        print(f"{name}: {(HERE / name).stat().st_size} bytes")


if __name__ == "__main__":
    main()
