"""A small deterministic forward-only transformer over token sequences.

Exists to prove the tokenization mechanism end to end: patch embedding,
additive position and run-length encodings, attention restricted to packed
segments, and mean-pooled per-example classification. All math is float64
and every weight comes from one seeded generator, so identical inputs give
bit-identical logits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .packing import PackedBatch, _dense_from_boundaries
from .tokenizer import TokenSequence
from .video import TubeletConfig

_LN_EPS = 1e-6


@dataclass(frozen=True)
class PatchEmbedder:
    """Affine projection of flattened patches to the embedding width."""

    weight: np.ndarray  # (patch_elems, d_embed)
    bias: np.ndarray  # (d_embed,)

    def apply(self, patches: np.ndarray) -> np.ndarray:
        if patches.ndim != 2 or patches.shape[1] != self.weight.shape[0]:
            raise DataError(
                f"patches must be (n, {self.weight.shape[0]}), got {patches.shape}"
            )
        return patches.astype(np.float64) @ self.weight + self.bias


@dataclass(frozen=True)
class PositionalTables:
    """Additive encodings: one vector per (x, y, t) slot, one per run length.

    length_bias row i belongs to run length i + 1; its row count equals
    grid_t because no run can exceed the clip.
    """

    spatial_temporal: np.ndarray  # (grid_x, grid_y, grid_t, d_embed)
    length_bias: np.ndarray  # (grid_t, d_embed)


@dataclass(frozen=True)
class BlockWeights:
    ln1_gamma: np.ndarray
    ln1_beta: np.ndarray
    qkv_weight: np.ndarray  # (d, 3d)
    qkv_bias: np.ndarray
    proj_weight: np.ndarray  # (d, d)
    proj_bias: np.ndarray
    ln2_gamma: np.ndarray
    ln2_beta: np.ndarray
    fc1_weight: np.ndarray  # (d, mlp_dim)
    fc1_bias: np.ndarray
    fc2_weight: np.ndarray  # (mlp_dim, d)
    fc2_bias: np.ndarray


@dataclass(frozen=True)
class ToyTransformer:
    """Pre-norm ViT blocks over packed token segments.

    Reconstructable from (seed, dims) alone: weights are drawn from a
    single seeded generator in a fixed order.
    """

    config: TubeletConfig
    video_shape: tuple[int, int, int, int]
    depth: int
    heads: int
    num_classes: int
    mlp_ratio: int
    seed: int
    embedder: PatchEmbedder
    tables: PositionalTables
    blocks: tuple[BlockWeights, ...]
    final_gamma: np.ndarray
    final_beta: np.ndarray
    cls_weight: np.ndarray  # (d, num_classes)
    cls_bias: np.ndarray

    @classmethod
    def create(
        cls,
        config: TubeletConfig,
        video_shape: tuple[int, int, int, int],
        *,
        depth: int = 2,
        heads: int = 4,
        num_classes: int = 10,
        mlp_ratio: int = 4,
        seed: int = 0,
    ) -> "ToyTransformer":
        d = config.embed_dim
        if depth < 1 or heads < 1 or num_classes < 1 or mlp_ratio < 1:
            raise ConfigError("depth, heads, num_classes, and mlp_ratio must be >= 1")
        if d % heads:
            raise ConfigError(f"embed_dim {d} not divisible by heads {heads}")
        shape = tuple(int(s) for s in video_shape)
        gx, gy, gt = config.grid_dims(shape)
        in_dim = config.patch_elems(shape[0])
        rng = np.random.default_rng(seed)

        def init(*dims):
            return rng.normal(0.0, 0.02, size=dims)

        embedder = PatchEmbedder(weight=init(in_dim, d), bias=init(d))
        tables = PositionalTables(
            spatial_temporal=init(gx, gy, gt, d), length_bias=init(gt, d)
        )
        mlp_dim = d * mlp_ratio
        blocks = tuple(
            BlockWeights(
                ln1_gamma=np.ones(d),
                ln1_beta=np.zeros(d),
                qkv_weight=init(d, 3 * d),
                qkv_bias=init(3 * d),
                proj_weight=init(d, d),
                proj_bias=init(d),
                ln2_gamma=np.ones(d),
                ln2_beta=np.zeros(d),
                fc1_weight=init(d, mlp_dim),
                fc1_bias=init(mlp_dim),
                fc2_weight=init(mlp_dim, d),
                fc2_bias=init(d),
            )
            for _ in range(depth)
        )
        return cls(
            config=config,
            video_shape=shape,
            depth=depth,
            heads=heads,
            num_classes=num_classes,
            mlp_ratio=mlp_ratio,
            seed=seed,
            embedder=embedder,
            tables=tables,
            blocks=blocks,
            final_gamma=np.ones(d),
            final_beta=np.zeros(d),
            cls_weight=init(d, num_classes),
            cls_bias=init(num_classes),
        )

    def to_snapshot(self) -> dict:
        """JSON-able recipe that reconstructs identical weights."""
        return {
            "seed": self.seed,
            "depth": self.depth,
            "heads": self.heads,
            "num_classes": self.num_classes,
            "mlp_ratio": self.mlp_ratio,
            "embed_dim": self.config.embed_dim,
            "patch_x": self.config.patch_x,
            "patch_y": self.config.patch_y,
            "tubelet_t": self.config.tubelet_t,
            "video_shape": list(self.video_shape),
        }

    @classmethod
    def from_snapshot(cls, snap: dict) -> "ToyTransformer":
        config = TubeletConfig(
            patch_x=snap["patch_x"],
            patch_y=snap["patch_y"],
            tubelet_t=snap["tubelet_t"],
            embed_dim=snap["embed_dim"],
        )
        return cls.create(
            config,
            tuple(snap["video_shape"]),
            depth=snap["depth"],
            heads=snap["heads"],
            num_classes=snap["num_classes"],
            mlp_ratio=snap["mlp_ratio"],
            seed=snap["seed"],
        )


def _embed_arrays(
    xs: np.ndarray,
    ys: np.ndarray,
    ts: np.ndarray,
    run_lengths: np.ndarray,
    patches: np.ndarray,
    embedder: PatchEmbedder,
    tables: PositionalTables,
) -> np.ndarray:
    gx, gy, gt, _ = tables.spatial_temporal.shape
    n_lengths = tables.length_bias.shape[0]
    if len(xs) and (xs.max() >= gx or ys.max() >= gy or ts.max() >= gt):
        raise DataError(
            f"token slots outside the positional table ({gx}, {gy}, {gt})"
        )
    if len(xs) and (run_lengths.min() < 1 or run_lengths.max() > n_lengths):
        raise DataError(
            f"run lengths must lie in [1, {n_lengths}] to index the length table"
        )
    e = embedder.apply(patches)
    pos = tables.spatial_temporal[xs, ys, ts]
    length = tables.length_bias[run_lengths.astype(np.int64) - 1]
    return (e + pos) + length


def embed(
    seq: TokenSequence, embedder: PatchEmbedder, tables: PositionalTables
) -> np.ndarray:
    """Per token: projected patch + slot encoding + run-length encoding."""
    return _embed_arrays(
        seq.xs, seq.ys, seq.ts, seq.run_lengths, seq.patches, embedder, tables
    )


def _layer_norm(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray) -> np.ndarray:
    mean = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mean) / np.sqrt(var + _LN_EPS) * gamma + beta


def _gelu(x: np.ndarray) -> np.ndarray:
    # tanh approximation
    return 0.5 * x * (1.0 + np.tanh(0.7978845608028654 * (x + 0.044715 * x**3)))


def _softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _split_heads(x: np.ndarray, heads: int) -> np.ndarray:
    n, d = x.shape
    return x.reshape(n, heads, d // heads).transpose(1, 0, 2)


def _attention(q: np.ndarray, k: np.ndarray, v: np.ndarray, bias: "np.ndarray | None"):
    # q, k, v: (heads, n, head_dim)
    scale = 1.0 / math.sqrt(q.shape[-1])
    scores = (q @ k.transpose(0, 2, 1)) * scale
    if bias is not None:
        scores = scores + bias
    probs = _softmax(scores)
    return probs @ v, probs


def _attend(
    x: np.ndarray,
    block: BlockWeights,
    heads: int,
    boundaries: np.ndarray,
    dense_mask: "np.ndarray | None",
    collect,
):
    """Masked multi-head attention over packed segments.

    The default path slices each segment out and attends within it, never
    materializing cross-segment scores; with dense_mask given, disallowed
    pairs instead receive a -inf bias on the full score matrix. Both
    express the same block-diagonal structure.
    """
    qkv = x @ block.qkv_weight + block.qkv_bias
    d = x.shape[1]
    q, k, v = qkv[:, :d], qkv[:, d : 2 * d], qkv[:, 2 * d :]
    if dense_mask is not None:
        bias = np.where(dense_mask, 0.0, -np.inf)
        out, probs = _attention(
            _split_heads(q, heads), _split_heads(k, heads), _split_heads(v, heads), bias
        )
        if collect is not None:
            collect.append(probs)
        merged = out.transpose(1, 0, 2).reshape(x.shape[0], d)
    else:
        merged = np.empty_like(x)
        seg_probs = []
        for s, e in zip(boundaries[:-1], boundaries[1:]):
            s, e = int(s), int(e)
            out, probs = _attention(
                _split_heads(q[s:e], heads),
                _split_heads(k[s:e], heads),
                _split_heads(v[s:e], heads),
                None,
            )
            seg_probs.append(probs)
            merged[s:e] = out.transpose(1, 0, 2).reshape(e - s, d)
        if collect is not None:
            collect.append(seg_probs)
    return merged @ block.proj_weight + block.proj_bias


def _forward_core(
    model: ToyTransformer,
    embedded: np.ndarray,
    boundaries: np.ndarray,
    mask_form: str,
    return_attn: bool,
):
    if mask_form not in ("compact", "dense"):
        raise ConfigError(f"mask form must be 'compact' or 'dense', got {mask_form!r}")
    dense_mask = _dense_from_boundaries(boundaries) if mask_form == "dense" else None
    attn_all = [] if return_attn else None
    x = embedded
    for block in model.blocks:
        collect = attn_all if return_attn else None
        x = x + _attend(
            _layer_norm(x, block.ln1_gamma, block.ln1_beta),
            block,
            model.heads,
            boundaries,
            dense_mask,
            collect,
        )
        h = _layer_norm(x, block.ln2_gamma, block.ln2_beta)
        x = x + (_gelu(h @ block.fc1_weight + block.fc1_bias) @ block.fc2_weight + block.fc2_bias)
    x = _layer_norm(x, model.final_gamma, model.final_beta)
    pooled = np.stack(
        [
            x[int(s) : int(e)].mean(axis=0)
            for s, e in zip(boundaries[:-1], boundaries[1:])
        ]
    )
    logits = pooled @ model.cls_weight + model.cls_bias
    if return_attn:
        return logits, attn_all
    return logits


def forward_packed(
    batch: PackedBatch,
    model: ToyTransformer,
    mask_form: str = "compact",
    return_attn: bool = False,
):
    """Per-example logits (B, num_classes) for a packed batch.

    Attention is restricted to each segment; each example's prediction is
    the classifier applied to the mean of its own output tokens.
    """
    embedded = _embed_arrays(
        batch.xs,
        batch.ys,
        batch.ts,
        batch.run_lengths,
        batch.patches,
        model.embedder,
        model.tables,
    )
    return _forward_core(model, embedded, batch.boundaries, mask_form, return_attn)


def forward_single(
    seq: TokenSequence,
    model: ToyTransformer,
    mask_form: str = "compact",
    return_attn: bool = False,
):
    """Logits (num_classes,) for one unpacked sequence."""
    if len(seq) == 0:
        raise DataError("cannot run the model on an empty sequence")
    embedded = embed(seq, model.embedder, model.tables)
    boundaries = np.array([0, len(seq)], dtype=np.int64)
    result = _forward_core(model, embedded, boundaries, mask_form, return_attn)
    if return_attn:
        logits, attn = result
        return logits[0], attn
    return result[0]


def flop_breakdown(item: "TokenSequence | PackedBatch", model: ToyTransformer) -> dict:
    """Analytic multiply-add counts (2 flops each), matmul terms only.

    Attention cost is quadratic per segment — sum of T_i^2 — which is the
    quantity pruning and packing shrink; everything else is linear in the
    total token count.
    """
    if isinstance(item, TokenSequence):
        lengths = [len(item)]
    elif isinstance(item, PackedBatch):
        lengths = [int(v) for v in item.segment_lengths]
    else:
        raise DataError(f"expected a TokenSequence or PackedBatch, got {type(item).__name__}")
    n = sum(lengths)
    sq = sum(t * t for t in lengths)
    b = len(lengths)
    d = model.config.embed_dim
    in_dim = model.embedder.weight.shape[0]
    mlp_dim = d * model.mlp_ratio
    k = model.num_classes
    embed_f = 2 * n * in_dim * d
    qkv = 2 * n * d * 3 * d * model.depth
    attention = 4 * d * sq * model.depth
    proj = 2 * n * d * d * model.depth
    mlp = 4 * n * d * mlp_dim * model.depth
    head = 2 * b * d * k
    return {
        "embed": embed_f,
        "qkv": qkv,
        "attention": attention,
        "proj": proj,
        "mlp": mlp,
        "head": head,
        "total": embed_f + qkv + attention + proj + mlp + head,
    }


def count_flops(item: "TokenSequence | PackedBatch", model: ToyTransformer) -> int:
    """Total analytic flop estimate for one forward pass."""
    return flop_breakdown(item, model)["total"]
