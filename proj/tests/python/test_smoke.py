"""End-to-end smoke of the python module against small inputs."""

import numpy as np
import pytest

import rap


def rng(seed=0):
    return np.random.default_rng(seed)


def tone(seconds=0.8, rate=16000, hz=440.0):
    t = np.arange(int(seconds * rate), dtype=np.float32) / rate
    return (0.5 * np.sin(2 * np.pi * hz * t)).astype(np.float32)


def test_codec_roundtrip():
    video = rng(1).random((3, 9, 8, 8), dtype=np.float32)
    lat = rap.encode_video(video, patch=2, rf=2)
    assert lat.shape == (24, 5, 4, 4)
    back = rap.decode_latents(lat, patch=2, rf=2)
    assert back.shape == video.shape
    np.testing.assert_allclose(back, video, atol=1e-5)

    ref = rap.encode_reference(video[:, 0], patch=2, rf=2, frames=5)
    assert ref.shape == lat.shape

    mask = np.zeros((9, 8, 8), dtype=np.float32)
    mask[:, 2:5, 3:6] = 1.0
    lm = rap.latent_mask(mask, patch=2, rf=2)
    assert lm.shape == lat.shape
    assert lm.min() >= 0.0 and lm.max() <= 1.0


def test_frame_arithmetic():
    assert rap.latent_channels(patch=2, rf=2) == 24
    assert rap.latent_channels(patch=8, rf=4) == 768
    assert rap.latent_frame_count(9, 2) == 5
    assert rap.video_frame_count(5, 2) == 9
    assert rap.trim_drop(4, 2) == 5
    with pytest.raises(ValueError):
        rap.latent_frame_count(10, 4)


def test_audio_features_and_envelope():
    wav = tone()
    feats = rap.audio_features(wav, 16000, bands=5, layers=2, fps=25.0)
    frames = feats["video_frames"]
    assert frames >= 20
    assert feats["rows"].shape == (frames * 2, 5)
    assert np.isfinite(feats["rows"]).all()

    padded = rap.audio_features(wav, 16000, bands=5, layers=2, fps=25.0, min_frames=frames + 10)
    assert padded["padded"] and padded["video_frames"] == frames + 10

    env = rap.envelope(wav, 16000, fps=25.0)
    assert env.shape == (frames,)
    assert env.min() >= 0.0 and env.max() <= 1.0


def test_flow_ops():
    x0 = rng(2).standard_normal((4, 3, 2, 2)).astype(np.float32)
    x1 = rng(3).standard_normal((4, 3, 2, 2)).astype(np.float32)
    np.testing.assert_array_equal(rap.interpolate(x0, x1, 0.0), x0)
    np.testing.assert_array_equal(rap.interpolate(x0, x1, 1.0), x1)
    np.testing.assert_allclose(rap.target_velocity(x0, x1), x1 - x0, rtol=1e-6)

    np.testing.assert_array_equal(rap.cfg_combine(x0, x1, 0.0), x0)
    np.testing.assert_array_equal(rap.cfg_combine(x0, x1, 1.0), x1)
    np.testing.assert_allclose(rap.cfg_combine(x0, x1, 5.0), x0 + 5.0 * (x1 - x0), atol=1e-5)

    mask = np.ones_like(x0)
    zero = rap.flow_loss(x0, x0, mask)
    assert zero["total"] == 0.0 and zero["has_temporal"]
    loss = rap.flow_loss(x1, x0, mask, face_weight=2.0, temporal_weight=0.5)
    assert loss["total"] == pytest.approx(
        loss["diffusion"] + 2.0 * loss["face"] + 0.5 * loss["temporal"]
    )
    single = rap.flow_loss(x0[:, :1], x0[:, :1], mask[:, :1])
    assert not single["has_temporal"]


def test_window_blend():
    assert rap.window_blend(0.0, 0.0, 0, 4) == 0.0
    assert rap.window_blend(0.0, 1.0, 3, 4) == 1.0
    assert rap.window_blend(4.0, 0.0, 3, 4) == 1.0  # clamped
    alphas = [rap.window_blend(1.0, 0.0, i, 4) for i in range(4)]
    assert alphas == sorted(alphas)


def test_synth_sample_and_sync():
    s = rap.synth_sample(seed=7, frames=17)
    assert s["video"].shape == (3, 17, 32, 32)
    assert 0.0 <= s["video"].min() and s["video"].max() <= 1.0
    assert s["mask"].shape == (17, 32, 32)
    assert set(np.unique(s["mask"])) <= {0.0, 1.0}
    assert s["aperture"].shape == (17,)

    corr, degenerate = rap.sync_correlation(
        s["video"], s["fps"], s["audio"], s["sample_rate"], rap.mouth_box()
    )
    assert not degenerate
    assert corr >= 0.95

    again = rap.synth_sample(seed=7, frames=17)
    np.testing.assert_array_equal(again["video"], s["video"])
    other = rap.synth_sample(seed=8, frames=17)
    assert not np.array_equal(other["video"], s["video"])


def test_scaled_layout():
    s = rap.synth_sample(seed=3, frames=9, height=16, width=16)
    assert s["video"].shape == (3, 9, 16, 16)
    r0, r1, c0, c1 = rap.mouth_box(16, 16)
    assert 0 <= r0 < r1 <= 16 and 0 <= c0 < c1 <= 16


def test_metrics():
    s = rap.synth_sample(seed=5, frames=17)
    heat = rap.motion_heatmap(s["video"])
    assert heat.shape == (32, 32)
    assert heat.min() >= 0.0

    drift = rap.drift_curve(s["video"], clip_len=4)
    assert drift[0] == 0.0 and np.isfinite(drift).all()

    ratio = rap.boundary_discontinuity(s["video"], [8])
    assert np.isfinite(ratio) and ratio >= 0.0


def test_io_roundtrip(tmp_path):
    wav = tone(0.2)
    wav_path = str(tmp_path / "t.wav")
    rap.write_wav(wav_path, wav, 16000)
    back, rate = rap.read_wav(wav_path)
    assert rate == 16000
    np.testing.assert_allclose(back, wav, atol=1e-4)  # s16 quantization

    video = rng(4).random((3, 5, 6, 6), dtype=np.float32)
    vid_path = str(tmp_path / "t.rapv")
    rap.write_video(vid_path, video, fps=20.0)
    vback, fps = rap.read_video(vid_path)
    assert fps == 20.0
    np.testing.assert_array_equal(vback, video)

    with pytest.raises(ValueError):
        rap.read_wav(str(tmp_path / "missing.wav"))


def test_pipeline_generate(tmp_path):
    ckpt = str(tmp_path / "tiny.rapc")
    rap.init_checkpoint(
        ckpt, dim=8, layers=2, heads=2, ffn=8, rows=2, cols=2,
        latent_channels=24, audio_bands=3, audio_layers=1, rf=2, seed=11,
    )
    pipe = rap.Pipeline(ckpt)
    cfg = pipe.config
    assert cfg["dim"] == 8 and cfg["rf"] == 2 and cfg["step"] == 0

    ref = rng(5).random((3, 4, 4), dtype=np.float32)
    out = pipe.generate(
        ref, tone(0.5), 16000, clips=2, frames=4, steps=3, cfg_scale=2.0, overlap=2, seed=9
    )
    assert out["video"].shape == (3, 11, 4, 4)
    assert out["boundaries"] == [7]
    assert 0.0 <= out["video"].min() and out["video"].max() <= 1.0
    assert len(out["timing"]) == 2 and out["timing"][0]["clip"] == 1

    again = pipe.generate(
        ref, tone(0.5), 16000, clips=2, frames=4, steps=3, cfg_scale=2.0, overlap=2, seed=9
    )
    np.testing.assert_array_equal(again["video"], out["video"])

    with pytest.raises(ValueError, match="underrun"):
        pipe.generate(ref, tone(0.05), 16000, clips=2, frames=4, steps=3, overlap=2)

    with pytest.raises(ValueError):
        rap.Pipeline(str(tmp_path / "missing.rapc"))
