import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fmri2vid.diffusion import (CotrainConfig, DenoiserConfig, GeneratorConfig, GuidanceSpec, LatentMap,
                                NoiseSchedule, VideoDenoiser, cotrain, ddim_sample, ddim_step,
                                diffusion_loss, drop_condition, fmri_negative, freeze_for_cotrain,
                                guided_noise, initial_noise, key_frames, model_eps, q_sample, sample_noise,
                                sc_attention, train_generator)
from fmri2vid.encoder import FmriModel, PatchConfig
from fmri2vid.numerics import Tensor, no_grad
from fmri2vid.numerics.gradcheck import grad_check_params
from fmri2vid.numerics.nn import Attention

TINY = DenoiserConfig(frames=4, grid=4, token_patch=2, hidden=8, heads=2, depth=1, cond_tokens=3,
                      cond_dim=5)


def tiny_model(seed=0, cfg=TINY):
    return VideoDenoiser(cfg, np.random.default_rng(seed))


# -- schedule --------------------------------------------------------------------------
def test_schedule_shape():
    s = NoiseSchedule()
    a = s.alphas_cum
    assert a[0] == 1.0 and np.all(np.diff(a) < 0) and a[-1] > 0
    ts = s.ddim_timesteps(7)
    assert ts[0] == s.T - 1 and np.all(np.diff(ts) < 0) and len(ts) == 7
    with pytest.raises(ValueError):
        s.ddim_timesteps(s.T + 1)
    with pytest.raises(ValueError):
        NoiseSchedule(beta_start=0.2, beta_end=0.1)


def test_q_sample_cases(rng):
    s = NoiseSchedule()
    z0, noise = rng.normal(size=(2, 3, 4))
    assert np.array_equal(q_sample(s, z0, 0, noise), z0)
    a = s.alphas_cum[50]
    np.testing.assert_allclose(q_sample(s, z0, 50, noise), np.sqrt(a) * z0 + np.sqrt(1 - a) * noise)
    per_item = q_sample(s, z0, np.array([0, 50, 50]), noise)
    assert np.array_equal(per_item[0], z0[0])
    np.testing.assert_allclose(per_item[1:], np.sqrt(a) * z0[1:] + np.sqrt(1 - a) * noise[1:])
    with pytest.raises(IndexError):
        q_sample(s, z0, s.T, noise)


def test_q_sample_keeps_unit_variance(rng):
    s = NoiseSchedule()
    z0 = rng.normal(size=200_000)
    for t in (10, 60, 99):
        assert np.var(q_sample(s, z0, t, rng.normal(size=z0.size))) == pytest.approx(1.0, abs=0.02)


def test_one_step_inversion_with_true_noise(rng):
    s = NoiseSchedule()
    z0, eps = rng.normal(size=(2, 5, 3))
    t = 70
    zt = q_sample(s, z0, t, eps)
    back, x0 = ddim_step(zt, eps, s.alphas_cum[t], 1.0, clip=None)
    np.testing.assert_allclose(back, z0, atol=1e-12)
    np.testing.assert_allclose(x0, z0, atol=1e-12)


def test_sampler_with_exact_noise_oracle_lands_on_data(rng):
    s = NoiseSchedule()
    z0 = rng.uniform(-0.9, 0.9, size=(2, 4, 4, 4, 4))
    a = s.alphas_cum

    def oracle(z, t, cond):
        at = a[int(t[0])]
        return (z - np.sqrt(at) * z0) / np.sqrt(1 - at)
    out = ddim_sample(oracle, GuidanceSpec(np.zeros((2, 1, 1)), scale=1.0), z0.shape, s, steps=10)
    np.testing.assert_allclose(out, z0, atol=1e-10)


# -- guidance ------------------------------------------------------------------------------
def test_guidance_identities_are_exact(rng):
    model = tiny_model()
    eps = model_eps(model)
    for _ in range(20):
        z = rng.normal(size=(2, 4, 4, 4, 4))
        t = rng.integers(0, 100, size=2)
        c, cbar = rng.normal(size=(2, 2, 3, 5))
        s = float(rng.uniform(0, 20))
        assert np.array_equal(guided_noise(eps, z, t, GuidanceSpec(c, cbar, 1.0)), eps(z, t, c))
        assert np.array_equal(guided_noise(eps, z, t, GuidanceSpec(c, c, s)), eps(z, t, c))
        null = guided_noise(eps, z, t, GuidanceSpec(c, None, s))
        e0, ec = eps(z, t, np.zeros_like(c)), eps(z, t, c)
        assert np.array_equal(null, e0 + s * (ec - e0))
        adv = guided_noise(eps, z, t, GuidanceSpec(c, cbar[:1], s))
        en = eps(z, t, np.broadcast_to(cbar[:1], c.shape))
        assert np.array_equal(adv, en + s * (ec - en))


def test_guidance_scale_must_be_non_negative():
    with pytest.raises(ValueError):
        GuidanceSpec(np.zeros((1, 1, 1)), scale=-1.0)


def test_sampling_is_deterministic_and_per_item(rng):
    model = tiny_model()
    s = NoiseSchedule()
    cond = rng.normal(size=(3, 3, 5))
    spec = GuidanceSpec(cond, None, 3.0)
    shape = (3, 4, 4, 4, 4)
    a = ddim_sample(model_eps(model), spec, shape, s, steps=5, seed=4)
    b = ddim_sample(model_eps(model), spec, shape, s, steps=5, seed=4)
    assert np.array_equal(a, b)
    one = ddim_sample(model_eps(model), GuidanceSpec(cond[1:2], None, 3.0), (1,) + shape[1:], s, steps=5,
                      seed=4, z_init=initial_noise(shape, 4)[1:2])
    np.testing.assert_allclose(one[0], a[1], atol=1e-12)


def test_offset_noise_adds_shared_channel_component():
    g = np.random.default_rng(0)
    x = sample_noise((4000, 3, 2, 5, 5), g, offset=0.5)
    shared = x.mean(axis=(1, 3, 4))
    assert np.var(shared) == pytest.approx(0.25 + 1 / 75, rel=0.1)
    assert np.var(x) == pytest.approx(1.25, rel=0.02)


# -- denoiser ------------------------------------------------------------------------------
def test_key_frames():
    assert key_frames(4) == [(0, 0), (0, 0), (0, 1), (1, 2)]
    assert key_frames(3, "first_anchor") == [(0, 0), (0, 0), (0, 1)]
    with pytest.raises(ValueError):
        key_frames(3, "full")


@given(st.integers(0, 2**31), st.integers(2, 7))
def test_sparse_causal_attention_ignores_later_frames(seed, frames):
    g = np.random.default_rng(seed)
    attn = Attention(4, 2, g)
    x = g.normal(size=(1, frames, 3, 4))
    base = sc_attention(attn, Tensor(x)).data
    for j in range(frames):
        y = x.copy()
        y[:, j] += g.normal(size=(3, 4))
        out = sc_attention(attn, Tensor(y)).data
        for i in range(frames):
            if j != i and j not in key_frames(frames)[i]:
                assert np.array_equal(out[:, i], base[:, i])


def test_tokenize_round_trip(rng):
    model = tiny_model()
    z = rng.normal(size=(2, 4, 4, 4, 4))
    np.testing.assert_array_equal(model.untokenize(Tensor(model.tokenize(z))).data, z)


def test_denoiser_validates_inputs(rng):
    model = tiny_model()
    with pytest.raises(ValueError):
        model(rng.normal(size=(1, 5, 4, 4, 4)), 1, np.zeros((1, 3, 5)))
    with pytest.raises(ValueError):
        model(rng.normal(size=(1, 4, 4, 4, 4)), 1, np.zeros((1, 2, 5)))


def test_untrained_loss_is_near_one(rng):
    model = tiny_model()
    z0 = rng.uniform(-1, 1, size=(16, 4, 4, 4, 4))
    loss = diffusion_loss(model, z0, rng.normal(size=(16, 3, 5)), NoiseSchedule(), rng).item()
    assert 0.8 < loss < 1.3


def test_denoiser_gradients(rng):
    model = tiny_model(3)
    z0 = rng.normal(size=(2, 4, 4, 4, 4))
    cond = rng.normal(size=(2, 3, 5))

    def loss():
        return diffusion_loss(model, z0, cond, NoiseSchedule(), np.random.default_rng(1))
    assert grad_check_params(loss, model.parameters(), max_elements=4) < 1e-4


def test_condition_dropout(rng):
    c = Tensor(rng.normal(size=(50, 3, 5)))
    assert drop_condition(c, 0.0, rng) is c
    dropped = drop_condition(c, 1.0, rng).data
    assert np.all(dropped == 0)
    half = drop_condition(c, 0.5, rng).data
    rows = np.all(half == 0, axis=(1, 2))
    assert 0 < rows.sum() < 50
    assert np.array_equal(half[~rows], c.data[~rows])


def test_generator_training_lowers_probe_loss(rng):
    cfg = DenoiserConfig(frames=4, grid=4, hidden=16, heads=2, depth=1, cond_tokens=3, cond_dim=5)
    model = VideoDenoiser(cfg, rng)
    lat = np.repeat(rng.uniform(-1, 1, size=(32, 1, 4, 1, 1)), 4, axis=1) * np.ones((1, 1, 1, 4, 4))
    cond = rng.normal(size=(32, 3, 5))
    curve = train_generator(model, lat, cond, NoiseSchedule(),
                            GeneratorConfig(steps=80, lr=3e-3, log_every=40, offset_noise=0.0))
    assert curve.probe_loss[-1][1] < 0.8 * curve.probe_loss[0][1]


# -- co-training ----------------------------------------------------------------------------
def _cotrain_setup(small_dataset):
    ds = small_dataset
    pc = PatchConfig(depth=1, embed_dim=16, heads=2, latent_tokens=3, cond_dim=5)
    fm = FmriModel(ds.n_selected, pc, np.random.default_rng(0))
    den = VideoDenoiser(DenoiserConfig(frames=6, grid=8, hidden=8, heads=2, depth=1, cond_tokens=3,
                                       cond_dim=5), np.random.default_rng(1))
    lat = LatentMap().encode(ds.train.clips)
    return ds, fm, den, lat


def test_freeze_contract(small_dataset):
    ds, fm, den, lat = _cotrain_setup(small_dataset)
    trainable = freeze_for_cotrain(fm, den)
    attn = {id(p) for p in den.attention_parameters()}
    assert {id(p) for p in trainable} == attn | {id(p) for p in fm.parameters()}
    before = {id(p): p.data.copy() for p in den.parameters()}
    cotrain(fm, den, ds.train, lat, NoiseSchedule(), CotrainConfig(steps=3, window=1, probe_size=4))
    for p in den.parameters():
        if id(p) in attn:
            continue
        assert np.array_equal(p.data, before[id(p)])
    assert any(not np.array_equal(p.data, before[id(p)]) for p in den.attention_parameters())
    assert all(p.requires_grad for p in den.parameters())


def test_fmri_negative_is_embedding_of_mean_window(small_dataset, rng):
    ds, fm, _, _ = _cotrain_setup(small_dataset)
    win = rng.normal(size=(5, 2, ds.n_selected))
    fm.train()
    neg = fmri_negative(fm, win)
    assert fm.training
    fm.eval()
    with no_grad():
        direct = fm(win.mean(axis=0, keepdims=True)).unpooled.data
    assert neg.shape == (1, 3, 5) and np.array_equal(neg, direct)
    with pytest.raises(ValueError):
        fmri_negative(fm, win[:0])


# -- latent map ---------------------------------------------------------------------------------
def test_latent_basis_orthonormal_and_in_range(rng):
    lm = LatentMap()
    np.testing.assert_allclose(lm.basis @ lm.basis.T, np.eye(4), atol=1e-12)
    frames = rng.uniform(0, 1, size=(3, 32, 32, 3))
    z = lm.encode(frames)
    assert z.shape == (3, 4, 8, 8) and np.abs(z).max() <= 1 + 1e-12
    assert np.abs(lm.encode(np.zeros((8, 8, 3)))).max() == pytest.approx(1.0)


@given(st.integers(0, 2**31))
def test_latent_round_trip_on_basis_span(seed):
    lm = LatentMap()
    z = np.random.default_rng(seed).uniform(-1, 1, size=(2, 4, 3, 5))
    np.testing.assert_allclose(lm.encode(lm.decode(z)), z, atol=1e-12)


def test_decode_is_projection(rng):
    lm = LatentMap()
    frames = rng.uniform(0, 1, size=(16, 16, 3))
    once = lm.decode(lm.encode(frames))
    np.testing.assert_allclose(lm.decode(lm.encode(once)), once, atol=1e-12)
    with pytest.raises(ValueError):
        lm.encode(np.zeros((10, 16, 3)))
