import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats
from scipy.signal import correlate2d

from fmri2vid.encoder import FmriEncoder, PatchConfig
from fmri2vid.eval import (SsimConfig, ablation_stats, attention_report, clip_ssim, default_layers,
                           frame_features, nway_topk, nway_topk_trials, read_csv, received_attention,
                           region_shares, significance_band, ssim, ssim_map, svg_bars,
                           two_way_identification, write_csv)


# -- SSIM -------------------------------------------------------------------------------
def oracle_ssim(a, b, cfg=SsimConfig()):
    k = cfg.kernel()

    def m(x):
        return correlate2d(x, k, mode="valid")
    c1, c2 = (cfg.k1 * cfg.dynamic_range) ** 2, (cfg.k2 * cfg.dynamic_range) ** 2
    ma, mb = m(a), m(b)
    va, vb, cov = m(a * a) - ma ** 2, m(b * b) - mb ** 2, m(a * b) - ma * mb
    return np.mean((2 * ma * mb + c1) * (2 * cov + c2) / ((ma ** 2 + mb ** 2 + c1) * (va + vb + c2)))


def test_ssim_self_is_exactly_one(rng):
    a = rng.uniform(size=(20, 20, 3))
    assert ssim(a, a) == 1.0


def test_ssim_constant_images_match_hand_formula():
    ca, cb = 0.3, 0.7
    c1 = 0.01 ** 2
    expected = (2 * ca * cb + c1) / (ca ** 2 + cb ** 2 + c1)
    got = ssim(np.full((16, 16), ca), np.full((16, 16), cb))
    assert got == pytest.approx(expected, abs=1e-9)


@given(st.integers(0, 2**31))
def test_ssim_matches_convolution_oracle(seed):
    g = np.random.default_rng(seed)
    a, b = g.uniform(size=(2, 15, 17))
    assert ssim(a, b) == pytest.approx(oracle_ssim(a, b), abs=1e-12)
    assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-15)


@given(st.integers(0, 2**31), st.floats(0.1, 255))
def test_ssim_is_consistent_under_range_scaling(seed, scale):
    g = np.random.default_rng(seed)
    a, b = g.uniform(size=(2, 12, 12))
    scaled = ssim(scale * a, scale * b, SsimConfig(dynamic_range=scale))
    assert scaled == pytest.approx(ssim(a, b), abs=1e-9)


def test_ssim_validation(rng):
    with pytest.raises(ValueError):
        ssim_map(np.zeros((5, 5)), np.zeros((5, 5)))
    with pytest.raises(ValueError):
        ssim(np.zeros((12, 12)), np.zeros((12, 13)))
    with pytest.raises(ValueError):
        SsimConfig(window=4)
    with pytest.raises(ValueError):
        SsimConfig(k1=0)


def test_clip_ssim_is_frame_mean(rng):
    p, g = rng.uniform(size=(2, 3, 12, 12, 3))
    assert clip_ssim(p, g) == pytest.approx(np.mean([ssim(a, b) for a, b in zip(p, g)]), abs=1e-15)


# -- N-way top-K ---------------------------------------------------------------------------
def test_perfect_predictor_always_wins(rng):
    p = rng.dirichlet(np.ones(60), size=5)
    assert np.all(nway_topk(p, p, 50, 1, trials=30) == 1.0)


def test_k_equal_to_n_always_wins(rng):
    gt, pred = rng.dirichlet(np.ones(10), size=(2, 4))
    assert np.all(nway_topk(gt, pred, 5, 5, trials=20) == 1.0)


def test_random_predictor_hits_chance(rng):
    # trials within one item share its prediction, so independence comes from many items
    gt = rng.dirichlet(np.ones(60), size=3000)
    pred = rng.dirichlet(np.ones(60), size=3000)
    assert nway_topk(gt, pred, 2, trials=2).mean() == pytest.approx(0.5, abs=0.02)
    assert nway_topk(gt, pred, 50, trials=2).mean() == pytest.approx(0.02, abs=0.008)


@given(st.integers(0, 2**31), st.integers(2, 12))
def test_rate_is_monotone_in_k(seed, n_way):
    g = np.random.default_rng(seed)
    gt, pred = g.dirichlet(np.ones(20), size=2)
    rates = [nway_topk_trials(gt, pred, n_way, k, 30, np.random.default_rng(seed), gt_k=1).mean()
             for k in range(1, n_way + 1)]
    assert all(a <= b for a, b in zip(rates, rates[1:]))


def test_ties_count_against_ground_truth():
    gt = np.array([1.0, 0, 0, 0])
    assert nway_topk(gt, np.full(4, 0.25), 2, trials=10)[0] == 0.0


def test_nway_determinism_and_validation(rng):
    gt, pred = rng.dirichlet(np.ones(20), size=(2, 3))
    assert np.array_equal(nway_topk(gt, pred, 5, seed=3), nway_topk(gt, pred, 5, seed=3))
    with pytest.raises(ValueError):
        nway_topk(gt, pred, 5, 6)
    with pytest.raises(ValueError):
        nway_topk(gt, pred, 21)
    with pytest.raises(ValueError):
        nway_topk(gt, pred[:2], 5)


# -- statistics ----------------------------------------------------------------------------
def test_ablation_stats_matches_student_t(rng):
    a, b = rng.normal(0, 1, 12), rng.normal(0.5, 1, 9)
    sp = np.sqrt(((len(a) - 1) * a.var(ddof=1) + (len(b) - 1) * b.var(ddof=1)) / (len(a) + len(b) - 2))
    t = (a.mean() - b.mean()) / (sp * np.sqrt(1 / len(a) + 1 / len(b)))
    p = 2 * stats.t.sf(abs(t), len(a) + len(b) - 2)
    assert ablation_stats(a, b) == pytest.approx(p, rel=1e-10)


def test_ablation_stats_degenerate_cases(rng):
    a = rng.normal(size=5)
    assert ablation_stats(a, a) == pytest.approx(1.0)
    assert ablation_stats(np.ones(3), np.ones(4)) == 1.0
    assert ablation_stats(np.ones(3), np.zeros(4)) == 0.0
    with pytest.raises(ValueError):
        ablation_stats([1.0], [1.0, 2.0])


def test_significance_bands():
    assert [significance_band(p) for p in (1e-5, 1e-3, 0.03, 0.2)] == ["<0.0001", "<0.01", "<0.05", ">0.05"]


# -- identification ------------------------------------------------------------------------
def test_identification_oracles(rng):
    gt = rng.uniform(size=(8, 2, 4, 4, 3))
    assert np.all(two_way_identification(gt, gt) == 1.0)
    assert np.all(two_way_identification(gt[:, :1].repeat(2, 1) * 0 + 0.5, gt) == 0.5)
    rand = rng.uniform(size=(300, 48))
    assert two_way_identification(rng.uniform(size=(300, 48)), rand).mean() == pytest.approx(0.5, abs=0.02)
    with pytest.raises(ValueError):
        two_way_identification(gt[:1], gt[:1])


@given(st.integers(0, 2**31))
def test_identification_is_permutation_equivariant(seed):
    g = np.random.default_rng(seed)
    pred, gt = g.normal(size=(2, 6, 10))
    perm = g.permutation(6)
    np.testing.assert_allclose(two_way_identification(pred[perm], gt[perm]),
                               two_way_identification(pred, gt)[perm])


# -- attention ----------------------------------------------------------------------------------
def test_received_attention_sums_to_one(rng):
    cfg = PatchConfig(patch_size=4, embed_dim=8, depth=3, heads=2)
    enc = FmriEncoder(30, cfg, rng)
    rec = received_attention(enc, rng.normal(size=(5, 2, 30)), [0, 1, 2], batch_size=2)
    for v in rec.values():
        assert v.sum() == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(IndexError):
        received_attention(enc, rng.normal(size=(2, 30)), [3])
    assert all(a.last_attn is None and not a.keep_attn for a in enc.attention_layers())


def test_uniform_attention_gives_voxel_fractions():
    regions = np.repeat([0, 1, 2], [6, 3, 1])
    received = np.full(3, 1 / 3)                    # 10 voxels, patch 4 -> 3 tokens, 2 pad slots
    labels, shares = region_shares(received, 4, regions)
    np.testing.assert_allclose(shares, [0.6, 0.3, 0.1], atol=1e-12)
    assert labels.tolist() == [0, 1, 2]


def test_attention_report_rows(rng):
    cfg = PatchConfig(patch_size=4, embed_dim=8, depth=4, heads=2)
    enc = FmriEncoder(32, cfg, rng)
    regions = np.repeat(np.arange(4), 8)
    reps = attention_report(enc, rng.normal(size=(4, 32)), regions, "pretrain")
    assert [r.layer for r in reps] == default_layers(4) == [0, 2, 3]
    for r in reps:
        assert sum(s for _, s in r.rows()) == pytest.approx(1.0, abs=1e-9)


# -- tables and charts ------------------------------------------------------------------------
def test_csv_round_trip(tmp_path):
    path = write_csv(tmp_path / "a" / "t.csv", ["x", "y"], [(1, 0.5), ("b", 1 / 3)])
    assert read_csv(path) == [{"x": "1", "y": "0.5"}, {"x": "b", "y": "0.333333"}]


def test_svg_is_well_formed(tmp_path):
    path = svg_bars(tmp_path / "c.svg", ["a", "<b>"], [0.3, 0.7], title="t & u", reference=0.5)
    root = ET.parse(path).getroot()
    rects = root.findall("{http://www.w3.org/2000/svg}rect")
    assert len(rects) == 2
    heights = [float(r.get("height")) for r in rects]
    assert heights[1] > heights[0]


def test_frame_histogram_ignores_translation(rng):
    f = rng.uniform(size=(16, 16, 3))
    a, b = frame_features(f), frame_features(np.roll(f, (3, 5), axis=(0, 1)))
    np.testing.assert_allclose(a, b, atol=1e-12)
