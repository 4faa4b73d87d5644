import dataclasses
import json

import numpy as np
import pytest

from rltok import (
    ConfigError,
    DataError,
    DiffMetric,
    NormalizationParams,
    ToyTransformer,
    TubeletConfig,
    count_flops,
    embed,
    flop_breakdown,
    forward_packed,
    forward_single,
    pack,
    tokenize,
    tokenize_full,
)
from rltok.tokenizer import TokenSequence
from rltok.testkit import SyntheticSpec, gen_video

CFG = TubeletConfig(4, 4, 2, embed_dim=32)
SHAPE = (3, 8, 8, 8)


def make_seq(seed: int, kind: str = "noise", tau: float = 0.1):
    v = gen_video(SyntheticSpec(kind, frames=8, height=8, width=8, seed=seed))
    return tokenize(v, CFG, tau=tau)


def make_model(seed: int = 0, **kw) -> ToyTransformer:
    return ToyTransformer.create(CFG, SHAPE, seed=seed, **kw)


def single_token_seq(length: int, patch: np.ndarray) -> TokenSequence:
    return TokenSequence(
        xs=np.array([0], dtype=np.uint32),
        ys=np.array([0], dtype=np.uint32),
        ts=np.array([0], dtype=np.uint32),
        run_lengths=np.array([length], dtype=np.uint32),
        patches=patch[None, :],
        config=CFG,
        video_shape=SHAPE,
        norm=NormalizationParams.imagenet(),
        tau=0.1,
        metric=DiffMetric.MEAN_ABS,
    )


class TestCreate:
    def test_seed_reproducible(self):
        a, b = make_model(7), make_model(7)
        assert np.array_equal(a.embedder.weight, b.embedder.weight)
        assert np.array_equal(a.blocks[1].fc2_weight, b.blocks[1].fc2_weight)
        assert np.array_equal(a.cls_bias, b.cls_bias)

    def test_seed_sensitive(self):
        assert not np.array_equal(make_model(7).embedder.weight, make_model(8).embedder.weight)

    def test_layer_norm_init(self):
        m = make_model()
        assert (m.blocks[0].ln1_gamma == 1.0).all()
        assert (m.blocks[0].ln2_beta == 0.0).all()
        assert (m.final_gamma == 1.0).all()

    def test_table_shapes_follow_grid(self):
        m = make_model()
        assert m.tables.spatial_temporal.shape == (2, 2, 4, 32)
        assert m.tables.length_bias.shape == (4, 32)

    def test_head_divisibility_gate(self):
        with pytest.raises(ConfigError, match="divisible"):
            make_model(heads=5)

    def test_positive_dims_gate(self):
        with pytest.raises(ConfigError):
            make_model(depth=0)


class TestSnapshot:
    def test_json_round_trip_rebuilds_same_model(self):
        m = make_model(3, depth=1, heads=2, num_classes=7)
        snap = json.loads(json.dumps(m.to_snapshot()))
        n = ToyTransformer.from_snapshot(snap)
        assert np.array_equal(m.embedder.weight, n.embedder.weight)
        seq = make_seq(0)
        assert np.array_equal(forward_single(seq, m), forward_single(seq, n))


class TestEmbed:
    def test_matches_scalar_oracle(self):
        m = make_model(1)
        seq = make_seq(2)
        got = embed(seq, m.embedder, m.tables)
        w, b = m.embedder.weight, m.embedder.bias
        in_dim, d = w.shape
        for i in (0, len(seq) // 2, len(seq) - 1):
            x, y, t = int(seq.xs[i]), int(seq.ys[i]), int(seq.ts[i])
            li = int(seq.run_lengths[i]) - 1
            for j in range(0, d, 7):
                want = sum(float(seq.patches[i, k]) * float(w[k, j]) for k in range(in_dim))
                want += float(b[j])
                want += float(m.tables.spatial_temporal[x, y, t, j])
                want += float(m.tables.length_bias[li, j])
                assert abs(float(got[i, j]) - want) < 1e-9

    def test_zero_tables_reduce_to_projection(self):
        m = make_model(1)
        zeroed = dataclasses.replace(
            m,
            tables=dataclasses.replace(
                m.tables,
                spatial_temporal=np.zeros_like(m.tables.spatial_temporal),
                length_bias=np.zeros_like(m.tables.length_bias),
            ),
        )
        seq = make_seq(3)
        assert np.array_equal(
            embed(seq, zeroed.embedder, zeroed.tables), m.embedder.apply(seq.patches)
        )

    def test_run_length_changes_embedding_by_table_row(self):
        m = make_model(4)
        patch = np.random.default_rng(0).random(CFG.patch_elems(3), dtype=np.float32)
        e1 = embed(single_token_seq(1, patch), m.embedder, m.tables)[0]
        e3 = embed(single_token_seq(3, patch), m.embedder, m.tables)[0]
        want = m.tables.length_bias[2] - m.tables.length_bias[0]
        assert np.allclose(e3 - e1, want, atol=1e-15, rtol=0.0)

    def test_run_length_difference_exact_with_zero_projection(self):
        # with nothing else contributing, the difference is the table rows'
        # difference bit for bit
        m = make_model(4)
        zeroed = dataclasses.replace(
            m,
            embedder=dataclasses.replace(
                m.embedder,
                weight=np.zeros_like(m.embedder.weight),
                bias=np.zeros_like(m.embedder.bias),
            ),
            tables=dataclasses.replace(
                m.tables, spatial_temporal=np.zeros_like(m.tables.spatial_temporal)
            ),
        )
        patch = np.zeros(CFG.patch_elems(3), dtype=np.float32)
        e1 = embed(single_token_seq(1, patch), zeroed.embedder, zeroed.tables)[0]
        e3 = embed(single_token_seq(3, patch), zeroed.embedder, zeroed.tables)[0]
        assert np.array_equal(e3 - e1, m.tables.length_bias[2] - m.tables.length_bias[0])

    def test_out_of_table_slot_rejected(self):
        m = ToyTransformer.create(CFG, (3, 4, 8, 8))  # grid_t = 2 tables
        seq = make_seq(5, tau=0.0)  # ts reach 3
        with pytest.raises(DataError, match="positional table"):
            embed(seq, m.embedder, m.tables)

    def test_out_of_table_length_rejected(self):
        m = make_model()
        patch = np.zeros(CFG.patch_elems(3), dtype=np.float32)
        seq = single_token_seq(4, patch)  # valid for the grid
        short = dataclasses.replace(m.tables, length_bias=m.tables.length_bias[:2])
        with pytest.raises(DataError, match="length"):
            embed(seq, m.embedder, short)


class TestForward:
    def test_packed_matches_singles(self):
        m = make_model(0)
        kinds = ["noise", "two_segment_static", "static", "noise"]
        seqs = [make_seq(i, kind) for i, kind in enumerate(kinds)]
        batch_logits = forward_packed(pack(seqs), m)
        singles = np.stack([forward_single(s, m) for s in seqs])
        assert batch_logits.shape == (4, 10)
        assert np.abs(batch_logits - singles).max() < 1e-9

    def test_dense_mask_matches_compact(self):
        m = make_model(0)
        batch = pack([make_seq(i) for i in range(3)])
        compact = forward_packed(batch, m, mask_form="compact")
        dense = forward_packed(batch, m, mask_form="dense")
        assert np.abs(compact - dense).max() < 1e-9

    def test_batch_order_permutes_rows(self):
        m = make_model(0)
        seqs = [make_seq(i) for i in range(3)]
        base = forward_packed(pack(seqs), m)
        rolled = forward_packed(pack([seqs[2], seqs[0], seqs[1]]), m)
        assert np.allclose(rolled, base[[2, 0, 1]], atol=1e-9, rtol=0.0)

    def test_repeat_call_bit_identical(self):
        m = make_model(0)
        batch = pack([make_seq(0), make_seq(1)])
        assert np.array_equal(forward_packed(batch, m), forward_packed(batch, m))

    def test_logits_finite_across_kinds(self):
        m = make_model(0)
        for seed, kind in enumerate(["static", "noise", "two_segment_static", "brightness_ramp"]):
            spec = SyntheticSpec(kind, frames=8, height=8, width=8, seed=seed, step=0.03125)
            logits = forward_single(tokenize(gen_video(spec), CFG), m)
            assert logits.shape == (10,)
            assert np.isfinite(logits).all()

    def test_empty_sequence_rejected(self):
        m = make_model(0)
        empty = TokenSequence(
            xs=np.array([], dtype=np.uint32),
            ys=np.array([], dtype=np.uint32),
            ts=np.array([], dtype=np.uint32),
            run_lengths=np.array([], dtype=np.uint32),
            patches=np.zeros((0, CFG.patch_elems(3)), dtype=np.float32),
            config=CFG,
            video_shape=SHAPE,
            norm=NormalizationParams.imagenet(),
            tau=0.1,
            metric=DiffMetric.MEAN_ABS,
        )
        with pytest.raises(DataError, match="empty"):
            forward_single(empty, m)

    def test_bad_mask_form_rejected(self):
        m = make_model(0)
        with pytest.raises(ConfigError, match="form"):
            forward_single(make_seq(0), m, mask_form="banded")

    def test_attention_rows_are_distributions(self):
        m = make_model(0)
        batch = pack([make_seq(0), make_seq(1)])
        _, attn = forward_packed(batch, m, return_attn=True)
        assert len(attn) == m.depth
        for per_block in attn:
            for seg_probs in per_block:
                assert (seg_probs >= 0).all()
                assert np.abs(seg_probs.sum(axis=-1) - 1.0).max() < 1e-12

    def test_dense_attention_never_crosses_segments(self):
        m = make_model(0)
        batch = pack([make_seq(0), make_seq(1)])
        _, attn = forward_packed(batch, m, mask_form="dense", return_attn=True)
        split = int(batch.boundaries[1])
        for probs in attn:  # (heads, n, n)
            assert (probs[:, :split, split:] == 0.0).all()
            assert (probs[:, split:, :split] == 0.0).all()
            assert np.abs(probs.sum(axis=-1) - 1.0).max() < 1e-12


class TestDegenerateTokenization:
    def test_tau_zero_equals_full_baseline(self):
        v = gen_video(SyntheticSpec("two_segment_static", frames=8, height=8, width=8, seed=9))
        full = tokenize_full(v, CFG)
        tau0 = tokenize(v, CFG, tau=0.0)
        assert full == tau0
        m = make_model(0)
        assert np.array_equal(forward_single(full, m), forward_single(tau0, m))
        assert flop_breakdown(full, m) == flop_breakdown(tau0, m)


class TestFlops:
    def test_hand_computed_case(self):
        m = make_model(0)  # d=32, depth=2, heads=4, mlp_ratio=4, classes=10
        v = gen_video(SyntheticSpec("static", frames=8, height=8, width=8, seed=0))
        seq = tokenize(v, CFG)
        n = len(seq)
        assert n == 4  # 2x2 spatial grid, single retained slot
        got = flop_breakdown(seq, m)
        in_dim = 3 * 2 * 4 * 4
        assert got["embed"] == 2 * n * in_dim * 32
        assert got["qkv"] == 2 * (2 * n * 32 * 96)
        assert got["attention"] == 2 * (4 * 32 * n * n)
        assert got["proj"] == 2 * (2 * n * 32 * 32)
        assert got["mlp"] == 2 * (4 * n * 32 * 128)
        assert got["head"] == 2 * 32 * 10
        assert got["total"] == sum(v for k, v in got.items() if k != "total")
        assert count_flops(seq, m) == got["total"]

    def test_segment_doubling_scales_attention_quadratically(self):
        m = make_model(0)
        short = [tokenize_full(gen_video(SyntheticSpec("noise", frames=4, height=8, width=8, seed=s)), CFG) for s in (0, 1)]
        long = [tokenize_full(gen_video(SyntheticSpec("noise", frames=8, height=8, width=8, seed=s)), CFG) for s in (0, 1)]
        a = flop_breakdown(pack(short), m)
        b = flop_breakdown(pack(long), m)
        assert b["attention"] == 4 * a["attention"]
        for part in ("embed", "qkv", "proj", "mlp"):
            assert b[part] == 2 * a[part]
        assert b["head"] == a["head"]

    def test_pruning_reduces_total(self):
        m = make_model(0)
        v = gen_video(SyntheticSpec("two_segment_static", frames=8, height=8, width=8, seed=3))
        assert count_flops(tokenize(v, CFG), m) < count_flops(tokenize_full(v, CFG), m)

    def test_rejects_other_types(self):
        with pytest.raises(DataError, match="TokenSequence"):
            flop_breakdown([1, 2, 3], make_model(0))
