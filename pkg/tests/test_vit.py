import numpy as np
import pytest

from glianet.tensor import Tensor
from glianet.vit import (
    ViTConfig,
    WeightShapeError,
    encode_semantic,
    encoder_block,
    init_params,
    load_params,
    parameter_shapes,
    patch_embed,
    save_params,
    trunc_normal,
)

from conftest import random_image
from oracles import mha_ref

TOY = ViTConfig.toy()


def toy_params(seed=0, dtype=np.float64):
    return init_params(TOY, seed=seed, dtype=dtype)


class TestConfig:
    def test_toy_preset(self):
        assert (TOY.img_size, TOY.patch_size, TOY.d_model, TOY.n_layers) == (64, 8, 64, 4)
        assert TOY.n_patches == 64
        assert TOY.d_mlp == 256

    def test_base_preset(self):
        b = ViTConfig.base16()
        assert (b.img_size, b.patch_size, b.d_model, b.n_layers, b.n_heads) == (224, 16, 768, 12, 12)
        assert b.n_patches == 196

    def test_divisibility_enforced(self):
        with pytest.raises(ValueError):
            ViTConfig(img_size=65, patch_size=8)
        with pytest.raises(ValueError):
            ViTConfig(d_model=66, n_heads=4)

    def test_positional_table_length(self):
        shapes = dict((n, s) for n, s in parameter_shapes(TOY))
        assert shapes["pos"] == (1 + TOY.n_patches, TOY.d_model)


class TestInit:
    def test_same_seed_bit_identical(self):
        a = toy_params(seed=5)
        b = toy_params(seed=5)
        assert set(a) == set(b)
        for k in a:
            assert np.array_equal(a[k].data, b[k].data), k

    def test_frozen_by_default(self):
        assert all(not p.requires_grad for p in toy_params().values())

    def test_trunc_normal_bounded(self, rng):
        x = trunc_normal(rng, (4000,), std=0.02)
        assert np.abs(x).max() <= 2.0 * 0.02 + 1e-15
        assert abs(x.std() - 0.02) < 0.005

    def test_ln_gains_ones_biases_zero(self):
        p = toy_params()
        assert np.array_equal(p["blk0.ln1.g"].data, np.ones(64))
        assert np.array_equal(p["blk0.attn.bq"].data, np.zeros(64))


class TestSaveLoad:
    def test_round_trip_bit_exact(self, tmp_path):
        p = toy_params(seed=3, dtype=np.float32)
        path = str(tmp_path / "vit.glia")
        save_params(p, path)
        back = load_params(path, TOY)
        for k in p:
            assert np.array_equal(back[k].data, p[k].data), k

    def test_shape_mismatch_rejected(self, tmp_path):
        p = init_params(ViTConfig(img_size=32, patch_size=8, d_model=32, n_layers=2, n_heads=2), seed=0)
        path = str(tmp_path / "small.glia")
        save_params(p, path)
        with pytest.raises(WeightShapeError):
            load_params(path, TOY)


class TestPatchEmbed:
    def test_token_count(self):
        p = toy_params()
        out = patch_embed(np.zeros((64, 64, 3)), p, TOY)
        assert out.shape == (65, 64)

    def test_zero_image_zero_bias_gives_pos_plus_cls(self):
        p = toy_params()
        p["patch.b"] = Tensor(np.zeros(64))
        out = patch_embed(np.zeros((64, 64, 3)), p, TOY)
        expect = p["pos"].data.copy()
        expect[0] += p["cls"].data[0]
        assert np.allclose(out.data, expect, atol=0)

    def test_basis_pattern_selects_projection_row(self):
        p = toy_params()
        p["patch.b"] = Tensor(np.zeros(64))
        img = np.zeros((64, 64, 3))
        # light up exactly one input coordinate of patch (0, 0): pixel (2, 1),
        # channel 0 flattens to row index (2*8 + 1)*3 + 0 = 51
        img[2, 1, 0] = 1.0
        out = patch_embed(img, p, TOY)
        expect = p["patch.w"].data[51] + p["pos"].data[1]
        assert np.allclose(out.data[1], expect, atol=1e-12)

    def test_size_mismatch_rejected(self):
        with pytest.raises(ValueError):
            patch_embed(np.zeros((32, 32, 3)), toy_params(), TOY)


class TestEncoderBlock:
    def test_zeroed_sublayers_are_identity(self, rng):
        p = toy_params()
        for k in ("blk0.attn.wo", "blk0.attn.bo", "blk0.mlp.w2", "blk0.mlp.b2"):
            p[k] = Tensor(np.zeros_like(p[k].data))
        x = Tensor(rng.standard_normal((9, 64)))
        out = encoder_block(x, p, TOY, prefix="blk0.")
        assert np.array_equal(out.data, x.data)

    def test_single_token_degenerate_attention(self, rng):
        p = toy_params()
        x = Tensor(rng.standard_normal((1, 64)))
        out, w = encoder_block(x, p, TOY, prefix="blk0.", return_attn=True)
        assert out.shape == (1, 64)
        assert np.allclose(w, 1.0, atol=1e-12)  # softmax over one key

    def test_attention_rows_sum_to_one(self, rng):
        p = toy_params()
        x = Tensor(rng.standard_normal((13, 64)))
        _, w = encoder_block(x, p, TOY, prefix="blk0.", return_attn=True)
        assert np.allclose(w.sum(axis=-1), 1.0, atol=1e-12)

    def test_attention_matches_scalar_loop_reference(self, rng):
        p = toy_params()
        x = rng.standard_normal((5, 64))
        normed = x - x.mean(axis=-1, keepdims=True)
        normed = normed / np.sqrt(normed.var(axis=-1, keepdims=True) + 1e-5)
        ref = mha_ref(
            normed,
            normed,
            p["blk0.attn.wq"].data, p["blk0.attn.bq"].data,
            p["blk0.attn.wk"].data, p["blk0.attn.bk"].data,
            p["blk0.attn.wv"].data, p["blk0.attn.bv"].data,
            p["blk0.attn.wo"].data, p["blk0.attn.bo"].data,
            TOY.n_heads,
        )
        # reproduce just the attention sublayer: out = x + attn(ln1(x))
        for k in ("blk0.mlp.w2", "blk0.mlp.b2"):
            p[k] = Tensor(np.zeros_like(p[k].data))
        out = encoder_block(Tensor(x), p, TOY, prefix="blk0.")
        assert np.abs(out.data - (x + ref)).max() < 1e-10

    def test_permutation_equivariance(self, rng):
        p = toy_params()
        x = rng.standard_normal((7, 64))
        perm = np.array([0, 3, 2, 1, 4, 6, 5])
        out = encoder_block(Tensor(x), p, TOY, prefix="blk1.").data
        out_p = encoder_block(Tensor(x[perm]), p, TOY, prefix="blk1.").data
        assert np.allclose(out_p, out[perm], atol=1e-12)

    def test_width_mismatch_rejected(self, rng):
        with pytest.raises(ValueError):
            encoder_block(Tensor(rng.standard_normal((4, 32))), toy_params(), TOY, prefix="blk0.")


class TestEncodeSemantic:
    def test_deterministic(self, rng):
        p = toy_params()
        img = random_image(rng, 64, 64)
        a = encode_semantic(img, p, TOY)
        b = encode_semantic(img, p, TOY)
        assert np.array_equal(a.data, b.data)
        assert a.shape == (65, 64)

    def test_matches_manual_composition(self, rng):
        from glianet.tensor import layer_norm

        cfg = ViTConfig(img_size=64, patch_size=8, d_model=64, n_layers=2, n_heads=4)
        p = init_params(cfg, seed=11, dtype=np.float64)
        img = random_image(rng, 64, 64)
        got = encode_semantic(img, p, cfg)
        x = patch_embed(img, p, cfg)
        x = encoder_block(x, p, cfg, prefix="blk0.")
        x = encoder_block(x, p, cfg, prefix="blk1.")
        want = layer_norm(x, p["ln_f.g"], p["ln_f.b"])
        assert np.array_equal(got.data, want.data)

    def test_equivariance_with_pos_table(self, rng):
        # swapping two non-cls patches of the image AND their positional rows
        # swaps the corresponding output tokens
        p = toy_params()
        img = random_image(rng, 64, 64)
        base = encode_semantic(img, p, TOY).data
        # patch 0 occupies img[0:8, 0:8]; patch 1 occupies img[0:8, 8:16]
        swapped = img.copy()
        swapped[0:8, 0:8], swapped[0:8, 8:16] = img[0:8, 8:16].copy(), img[0:8, 0:8].copy()
        p2 = dict(p)
        pos = p["pos"].data.copy()
        pos[[1, 2]] = pos[[2, 1]]
        p2["pos"] = Tensor(pos)
        out = encode_semantic(swapped, p2, TOY).data
        expect = base.copy()
        expect[[1, 2]] = expect[[2, 1]]
        assert np.allclose(out, expect, atol=1e-10)
