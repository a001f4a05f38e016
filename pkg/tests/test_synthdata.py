import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fmri2vid import io
from fmri2vid.synthdata import (DataConfig, HrfModel, convolve_hrf, distinct_scene_batch, fmri_windows,
                                generate_dataset, load_split, make_scene, render_clip, save_dataset,
                                scene_catalog, select_voxels, simulate_bold, window_scans)
from fmri2vid.synthdata.scenes import CAPTION_LEN, PAD, THEN, caption_for, join_captions, synonym_of
from fmri2vid.synthdata.selection import repeat_reliability


# -- container ----------------------------------------------------------------------
@given(arrays(np.float64, st.tuples(st.integers(0, 4), st.integers(1, 3)),
              elements=st.floats(allow_nan=False)),
       arrays(np.int64, st.integers(0, 5), elements=st.integers(-2**40, 2**40)))
def test_container_round_trip(f, i):
    buf = io.encode({"f": f, "i": i}, {"stage": "x", "note": "ü"})
    tensors, meta = io.decode(buf)
    assert np.array_equal(tensors["f"], f) and tensors["f"].dtype == np.float64
    assert np.array_equal(tensors["i"], i) and tensors["i"].dtype == np.int64
    assert meta == {"stage": "x", "note": "ü"}


def test_container_layout_is_little_endian_nct1():
    buf = io.encode({"a": np.array([1.0])})
    assert buf[:4] == b"NCT1"
    assert int.from_bytes(buf[4:8], "little") == 1
    assert buf[8:12] == (1).to_bytes(4, "little") and buf[12:13] == b"a"
    assert buf[13] == 0 and int.from_bytes(buf[14:18], "little") == 1
    assert np.frombuffer(buf[-8:], "<f8")[0] == 1.0


def test_container_errors():
    with pytest.raises(io.ContainerError):
        io.decode(b"XXXX\x00\x00\x00\x00")
    buf = io.encode({"a": np.arange(10.0)})
    with pytest.raises(io.ContainerError):
        io.decode(buf[:-8])
    with pytest.raises(io.ContainerError):
        io.encode({"c": np.array(["x"])})


def test_key_value_files(tmp_path):
    io.write_kv(tmp_path / "m.txt", {"a": 1, "b": "x y"})
    assert io.read_kv(tmp_path / "m.txt") == {"a": "1", "b": "x y"}
    (tmp_path / "bad.txt").write_text("novalue\n")
    with pytest.raises(ValueError):
        io.read_kv(tmp_path / "bad.txt")


# -- hemodynamics -------------------------------------------------------------------
def test_hrf_kernel_shape():
    h = HrfModel()
    assert abs(h.kernel[0]) < 1e-12
    assert np.isfinite(h.kernel.sum()) and h.kernel.sum() > 0
    peak = h.times[np.argmax(h.kernel)]
    assert abs(peak - h.peak_delay) <= h.dt
    # single global maximum: the second-highest value is a neighbour of the peak
    order = np.argsort(h.kernel)[::-1]
    assert abs(order[1] - order[0]) == 1


def test_impulse_response_peaks_at_peak_delay():
    h = HrfModel()
    drive = np.zeros((96, 1))
    drive[0] = 1.0
    rec = simulate_bold(drive, h, 0.0, tr_seconds=2.0)
    t_peak = np.argmax(rec.voxels[:, 0]) * 2.0
    assert abs(t_peak - h.peak_delay) <= 2.0


def test_convolution_matches_direct_sum(rng):
    h = HrfModel()
    drive = rng.normal(size=(120, 3))
    direct = np.stack([np.convolve(drive[:, v], h.kernel)[:120] for v in range(3)], axis=1)
    np.testing.assert_allclose(convolve_hrf(drive, h.kernel), direct, atol=1e-12)


@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 2**31))
def test_bold_is_linear(a, b, seed):
    g = np.random.default_rng(seed)
    s1, s2 = g.normal(size=(60, 4)), g.normal(size=(60, 4))
    h = HrfModel()
    lhs = simulate_bold(a * s1 + b * s2, h, 0.0).voxels
    rhs = a * simulate_bold(s1, h, 0.0).voxels + b * simulate_bold(s2, h, 0.0).voxels
    np.testing.assert_allclose(lhs, rhs, atol=1e-9)


def test_zero_and_constant_drive():
    h = HrfModel()
    assert np.all(simulate_bold(np.zeros((60, 2)), h, 0.0).voxels == 0)
    steady = simulate_bold(np.full((300, 1), 2.5), h, 0.0).voxels[:, 0]
    transient = int(np.ceil(h.length / 2.0))
    np.testing.assert_allclose(steady[transient:], 2.5 * h.kernel.sum(), rtol=1e-12)


def test_bold_validation():
    h = HrfModel()
    with pytest.raises(ValueError):
        simulate_bold(np.zeros((6, 1)), h, -1.0)
    with pytest.raises(ValueError):
        simulate_bold(np.zeros((7, 1)), h, 0.0)
    with pytest.raises(ValueError):
        simulate_bold(np.zeros((6, 1)), h, 0.0, tr_seconds=0.5)


def test_scans_equal_stimulus_duration():
    rec = simulate_bold(np.zeros((90, 1)), HrfModel(), 0.0, tr_seconds=2.0)
    assert rec.n_scans * rec.tr_seconds == pytest.approx(90 / 3)


# -- voxel selection ------------------------------------------------------------------
def _repeats(rng, n_signal, n_noise, snr=1.0, reps=6, scans=120):
    sig = rng.normal(size=(scans, n_signal))
    out = []
    for _ in range(reps):
        noise = rng.normal(size=(scans, n_signal + n_noise)) / snr
        x = noise.copy()
        x[:, :n_signal] += sig
        out.append(x)
    return out


def test_noiseless_signal_ranks_first(rng):
    sig = rng.normal(size=(60, 8))
    reps = []
    for _ in range(4):
        x = rng.normal(size=(60, 24))
        x[:, :8] = sig
        reps.append(x)
    chosen = select_voxels(reps, keep_fraction=8 / 24)
    assert chosen.tolist() == list(range(8))


def test_pure_noise_selects_almost_nothing():
    counts = [select_voxels(_repeats(np.random.default_rng([s, 3]), 0, 512, scans=96)).size
              for s in range(100)]
    # leave-one-out scores share correlations, so the nominal familywise 1% is
    # not exact; the false-positive count still stays far below one voxel per run
    assert np.mean(counts) < 0.5


def test_constant_voxel_is_excluded(rng):
    reps = _repeats(rng, 4, 4)
    for r in reps:
        r[:, 0] = 3.0
    z, valid = repeat_reliability(reps)
    assert not valid[0] and np.all(z[:, 0] == 0)
    assert 0 not in select_voxels(reps)


@given(st.integers(0, 2**31), st.floats(0.1, 100))
def test_selection_permutation_and_scale_invariant(seed, scale):
    g = np.random.default_rng(seed)
    reps = _repeats(g, 10, 30, snr=1.5, scans=60)
    base = select_voxels(reps)
    perm = g.permutation(40)
    permuted = select_voxels([r[:, perm] * scale for r in reps])
    assert sorted(perm[permuted].tolist()) == base.tolist()


def test_selection_needs_two_repeats(rng):
    with pytest.raises(ValueError):
        select_voxels([rng.normal(size=(10, 3))])


def test_half_signal_recall():
    cfg = DataConfig(n_train=96, n_test=8, region_signal=(1, 1, 1, 1, 0, 0, 0, 0), seed=0)
    ds = generate_dataset(cfg)
    truth = np.flatnonzero(ds.voxels.signal_mask)
    assert np.isin(truth, ds.roi).mean() >= 0.9


# -- scenes and captions --------------------------------------------------------------
def test_static_scene_has_identical_frames(rng):
    scene = make_scene(2, 0, 7, rng)
    clip = render_clip(scene, 5)
    assert all(np.array_equal(clip[0], f) for f in clip[1:])


def test_render_deterministic_and_in_range(rng):
    scene = make_scene(4, 1, 11, rng)
    a, b = render_clip(scene, 6), render_clip(scene, 6)
    assert np.array_equal(a, b)
    assert a.min() >= 0 and a.max() <= 1
    with pytest.raises(ValueError):
        render_clip(scene, 0)


def test_scene_id_changes_content():
    diffs = []
    for s in scene_catalog(n_per_class=2):
        other = type(s)(s.semantic_code, s.motion_code, s.scene_id + 500, s.class_id, s.motion_id)
        diffs.append(np.abs(render_clip(s, 1) - render_clip(other, 1)).mean())
    assert min(diffs) > 0.05


def test_captions_are_deterministic_and_synonym_pairs_alternate(rng):
    s = make_scene(3, 2, 10, rng)
    t = type(s)(s.semantic_code, s.motion_code, 11, s.class_id, s.motion_id)
    a, b = caption_for(s), caption_for(t)
    assert np.array_equal(a, caption_for(s))
    assert a.shape == (CAPTION_LEN,)
    assert [synonym_of(int(x)) for x in a[:4]] == b[:4].tolist()
    assert synonym_of(PAD) == PAD and synonym_of(THEN) == THEN


def test_joined_captions_use_separator(rng):
    a = caption_for(make_scene(0, 0, 0, rng))
    b = caption_for(make_scene(1, 1, 2, rng))
    j = join_captions(a, b)
    assert j[3] == THEN and j[:3].tolist() == a[:3].tolist() and j[4:7].tolist() == b[:3].tolist()


# -- dataset ------------------------------------------------------------------------
def test_dataset_counts(small_dataset):
    ds = small_dataset
    assert ds.train.clips.shape == (64, 6, 32, 32, 3)
    assert ds.test.clips.shape == (24, 6, 32, 32, 3)
    assert ds.train.captions.shape == (64, CAPTION_LEN)
    assert ds.train.fmri.shape == (64 + ds.cfg.pad_clips, ds.n_selected)
    assert ds.n_selected <= ds.cfg.voxels * ds.cfg.keep_fraction


def test_default_config_matches_desk_ratio():
    cfg = DataConfig()
    assert cfg.n_train == 432 and cfg.tr_seconds == 2.0 and cfg.frames_per_clip == 6


def test_dataset_deterministic():
    cfg = DataConfig(n_train=16, n_test=8, seed=5)
    a, b = generate_dataset(cfg), generate_dataset(cfg)
    assert np.array_equal(a.train.fmri, b.train.fmri) and np.array_equal(a.test.clips, b.test.clips)


def test_config_validation():
    with pytest.raises(ValueError):
        DataConfig(fps=4)
    with pytest.raises(ValueError):
        DataConfig(region_signal=(1.0,))


def test_forward_window_indices():
    idx = window_scans(np.array([0, 5]), shift=3, window=2)
    assert idx.tolist() == [[3, 4], [8, 9]]
    assert window_scans(np.array([5]), 3, 2, "backward").tolist() == [[7, 8]]
    with pytest.raises(ValueError):
        window_scans(np.array([0]), 3, 2, "sideways")
    with pytest.raises(IndexError):
        fmri_windows(np.zeros((10, 4)), [8], 3, 2)


def test_distinct_scene_batches_never_share_scenes(small_dataset):
    fs = small_dataset.train.frame_scene
    g = np.random.default_rng(0)
    for _ in range(1000):
        batch = distinct_scene_batch(fs, 16, g)
        ids = [set(fs[i].tolist()) for i in batch]
        assert sum(len(s) for s in ids) == len(set().union(*ids))


def test_dataset_files_round_trip(small_dataset, tmp_path):
    save_dataset(small_dataset, tmp_path)
    for split in ("train", "test"):
        names = sorted(p.name for p in (tmp_path / split).iterdir())
        assert names == ["captions.bin", "clips.bin", "fmri.bin", "meta.txt"]
    back = load_split(tmp_path / "test")
    assert np.array_equal(back.fmri, small_dataset.test.fmri)
    assert np.array_equal(back.captions, small_dataset.test.captions)
    meta = back.meta
    for key in ("tr_seconds", "fps", "window_frames", "voxel_count", "seed"):
        assert key in meta
    assert float(meta["tr_seconds"]) == 2.0 and int(meta["window_frames"]) == 6
