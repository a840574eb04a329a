import numpy as np
import pytest

from layoutsteer.blobworld import BACKGROUND_COLOR, BlobWorld, BlobWorldConfig

from oracles import softmax_loop

TOKENS = ["a", "red", "kite", "over", "a", "field"]


def test_signatures_unit_and_deterministic():
    bw = BlobWorld()
    s = bw.signatures(TOKENS)
    assert s.shape == (6, 8)
    assert np.allclose(np.linalg.norm(s, axis=1), 1.0)
    assert np.array_equal(s, BlobWorld().signatures(TOKENS))
    assert not np.array_equal(s[1], BlobWorld(BlobWorldConfig(signature_seed=1)).signature("red"))


def test_attention_zero_latent_uniform_without_sink():
    bw = BlobWorld(BlobWorldConfig(sink_logit=None))
    a = bw.attention(np.zeros((4, 4, 8)), ["cat", "dog", "sun"])
    assert np.allclose(a, 1 / 3)


def test_attention_saturates_on_aligned_token():
    bw = BlobWorld(BlobWorldConfig(tau=0.02))
    z = np.zeros((3, 3, 8))
    z[1, 1] = 2.0 * bw.signature("kite")
    a = bw.attention(z, ["kite", "field"])
    assert a[1, 1, 0] > 0.999


def test_attention_matches_loop_with_sink():
    bw = BlobWorld()
    z = np.random.default_rng(0).normal(size=(3, 3, 8))
    tokens = ["x", "y", "z"]
    assert np.allclose(bw.attention(z, tokens), softmax_loop(z, bw.signatures(tokens), 0.25, 8.0), atol=1e-12)


def test_step_fixed_point_and_full_step():
    bw = BlobWorld(attn_res=4)
    rng = np.random.default_rng(1)
    z = rng.normal(size=(4, 4, 8))
    clean = bw.predict_clean(z, TOKENS)
    full, _ = bw.step(z, 1, TOKENS, guidance_scale=1000.0)
    assert bw.alpha(1, 1000.0) == 1.0
    assert np.allclose(full, clean, atol=0, rtol=0)
    fixed = np.zeros((4, 4, 8))
    fixed[:] = bw.predict_clean(fixed, TOKENS)
    # iterate the clean map to its fixed point, then one step leaves it in place
    for _ in range(200):
        fixed = bw.predict_clean(fixed, TOKENS)
    nxt, _ = bw.step(fixed, 30, TOKENS)
    assert np.allclose(nxt, fixed, atol=1e-12)


def test_step_reference_formula():
    bw = BlobWorld(attn_res=2)
    rng = np.random.default_rng(2)
    for _ in range(100):
        z = rng.normal(size=(2, 2, 8)) * 2
        t = int(rng.integers(1, 51))
        a = softmax_loop(z, bw.signatures(TOKENS), 0.25, 8.0)
        want = z + bw.alpha(t) * (4.0 * a @ bw.signatures(TOKENS) - z)
        got, stack = bw.step(z, t, TOKENS)
        assert np.allclose(got, want, atol=1e-12)
    with pytest.raises(ValueError):
        bw.step(z, 0, TOKENS)


def test_alpha_schedule():
    bw = BlobWorld()
    assert bw.alpha(50) == pytest.approx(0.06)
    assert bw.alpha(1) == pytest.approx(0.3)
    assert bw.alpha(25) < bw.alpha(24)


def test_pooled_stack_shape_and_mean():
    bw = BlobWorld(attn_res=16)
    z = bw.initial_latent(TOKENS, (64, 64, 8), 0)
    full = bw.attention(z, TOKENS)
    stack = bw.attention_stack(z, TOKENS)
    assert stack.values.shape == (16, 16, 6)
    assert stack.values[0, 0, 2] == pytest.approx(full[:4, :4, 2].mean())


def test_jacobian_product_zero_and_fd():
    bw = BlobWorld(attn_res=4)
    z = bw.initial_latent(["cat", "dog"], (8, 8, 8), 3)
    assert not bw.attention_jacobian_product(z, ["cat", "dog"], np.zeros((4, 4, 2))).any()
    up = np.random.default_rng(4).normal(size=(4, 4, 2))

    def f(zz):
        return float((bw.attention_stack(zz, ["cat", "dog"]).values * up).sum())

    g = bw.attention_jacobian_product(z, ["cat", "dog"], up)
    fd = np.zeros_like(z)
    for idx in np.ndindex(z.shape):
        zp, zm = z.copy(), z.copy()
        zp[idx] += 1e-5
        zm[idx] -= 1e-5
        fd[idx] = (f(zp) - f(zm)) / 2e-5
    assert np.linalg.norm(g - fd) <= 1e-4 * np.linalg.norm(fd)
    with pytest.raises(ValueError):
        bw.attention_jacobian_product(z, ["cat", "dog"], np.zeros((3, 3, 2)))


def test_planted_seeds_skip_function_words_and_digits():
    bw = BlobWorld()
    seeds = bw.planted_seeds(["a", "photo", "of", "2", "cat", "kite"], (64, 64, 8), 0)
    assert {s.word for s in seeds} <= {"cat", "kite"}
    for s in seeds:
        assert 0 <= s.x <= 63 and 0 <= s.y <= 63


def test_blobs_persist_and_background_exists():
    bw = BlobWorld()
    tokens = ["a", "cat", "and", "a", "kite", "and", "a", "tree"]
    z = bw.initial_latent(tokens, (64, 64, 8), 0)
    for t in range(50, 0, -1):
        z, _ = bw.step(z, t, tokens)
    img = bw.decode(z, tokens, upscale=1)
    background = np.all(img == BACKGROUND_COLOR, axis=2).mean()
    assert 0.3 < background < 1.0


def test_decode_examples():
    bw = BlobWorld()
    tokens = ["cat", "dog", "sun"]
    img = bw.decode(np.zeros((8, 8, 8)), tokens)
    assert img.shape == (64, 64, 3) and np.all(img == BACKGROUND_COLOR)
    z = np.zeros((8, 8, 8))
    yy, xx = np.meshgrid(np.arange(8), np.arange(8), indexing="ij")
    disk = (xx - 4) ** 2 + (yy - 4) ** 2 <= 4
    z[disk] = 4.0 * bw.signature("dog")
    img = bw.decode(z, tokens, upscale=1)
    assert np.all(img[disk] == bw.palette(3)[1])
    assert np.all(img[~disk] == BACKGROUND_COLOR)


def test_decode_argmax_oracle():
    bw = BlobWorld()
    tokens = ["cat", "dog", "sun"]
    z = np.random.default_rng(5).normal(size=(6, 6, 8)) * 2
    img = bw.decode(z, tokens, upscale=1)
    sig, pal = bw.signatures(tokens), bw.palette(3)
    for i in range(6):
        for j in range(6):
            proj = [float(z[i, j] @ s) for s in sig]
            best = int(np.argmax(proj))
            want = pal[best] if proj[best] > 2.0 else BACKGROUND_COLOR
            assert tuple(img[i, j]) == tuple(want)


def test_noise_deterministic_and_scaled():
    bw = BlobWorld()
    a = bw.noise((32, 32, 8), 3)
    assert np.array_equal(a, bw.noise((32, 32, 8), 3))
    assert a.std() == pytest.approx(0.25, rel=0.05)


def test_config_validation():
    with pytest.raises(ValueError):
        BlobWorldConfig(tau=0)
    with pytest.raises(ValueError):
        BlobWorldConfig(alpha_min=0.5, alpha_max=0.2)
