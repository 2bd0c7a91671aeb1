#include <doctest.h>

#include <cmath>
#include <vector>

#include "rap/common.hpp"
#include "rap/dataset.hpp"
#include "rap/metrics.hpp"

using namespace rap;

namespace {

VideoClip make_video(int T, int H, int W, float fill = 0.0f) {
  VideoClip v;
  v.rgb = Tensor({3, T, H, W});
  for (size_t i = 0; i < v.rgb.numel(); ++i) v.rgb.data()[i] = fill;
  return v;
}

float& at(VideoClip& v, int ch, int t, int r, int c) {
  int T = v.rgb.shape[1], H = v.rgb.shape[2], W = v.rgb.shape[3];
  return v.rgb.data()[((size_t(ch) * T + t) * H + r) * W + c];
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("motion heatmap is zero for static video and localizes a blink") {
  VideoClip v = make_video(7, 4, 5, 0.3f);
  Tensor hm = motion_heatmap(v);
  REQUIRE(hm.shape == std::vector<int>{4, 5});
  for (size_t i = 0; i < hm.numel(); ++i) CHECK(hm.data()[i] == 0.0f);

  // blink one pixel in all channels by 0.4 each transition
  for (int t = 0; t < 7; ++t)
    for (int ch = 0; ch < 3; ++ch) at(v, ch, t, 2, 3) = (t % 2) ? 0.7f : 0.3f;
  hm = motion_heatmap(v);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 5; ++c) {
      float expect = (r == 2 && c == 3) ? 6 * 0.4f : 0.0f;
      CHECK(hm.data()[size_t(r) * 5 + c] == doctest::Approx(expect).epsilon(1e-6));
    }
}

TEST_CASE("motion heatmap rejects single-frame video") {
  VideoClip v = make_video(1, 4, 4);
  CHECK_THROWS_AS(motion_heatmap(v), ContractError);
}

TEST_CASE("toy mouth region out-moves the background") {
  DatasetConfig cfg;
  ToySample s = synth_sample(cfg, Rng(41).derive(0));
  Tensor hm = motion_heatmap(s.video);
  double in_sum = 0, out_sum = 0;
  long in_n = 0, out_n = 0;
  for (int r = 0; r < cfg.height; ++r)
    for (int c = 0; c < cfg.width; ++c) {
      bool in_box = r >= cfg.mouth_r0 && r < cfg.mouth_r1 && c >= cfg.mouth_c0 && c < cfg.mouth_c1;
      double x = hm.data()[size_t(r) * cfg.width + c];
      (in_box ? in_sum : out_sum) += x;
      ++(in_box ? in_n : out_n);
    }
  CHECK(in_sum / double(in_n) > out_sum / double(out_n));
}

TEST_CASE("uniform motion gives boundary ratio one, a cut blows it up") {
  VideoClip v = make_video(10, 3, 3);
  for (int t = 0; t < 10; ++t)
    for (int ch = 0; ch < 3; ++ch)
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) at(v, ch, t, r, c) = 0.05f * float(t);
  CHECK(boundary_discontinuity(v, {5}) == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(boundary_discontinuity(v, {2, 7}) == doctest::Approx(1.0).epsilon(1e-5));

  // hard cut at frame 5 on top of the ramp
  for (int ch = 0; ch < 3; ++ch)
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c)
        for (int t = 5; t < 10; ++t) at(v, ch, t, r, c) += 0.8f;
  CHECK(boundary_discontinuity(v, {5}) > 5.0);
}

TEST_CASE("boundary discontinuity contract errors") {
  VideoClip v = make_video(6, 2, 2, 0.1f);
  CHECK_THROWS_AS(boundary_discontinuity(v, {}), ContractError);
  CHECK_THROWS_AS(boundary_discontinuity(v, {0}), ContractError);
  CHECK_THROWS_AS(boundary_discontinuity(v, {6}), ContractError);
  CHECK_THROWS_AS(boundary_discontinuity(v, {1, 2, 3, 4, 5}), ContractError);
  CHECK_THROWS_AS(boundary_discontinuity(v, {3}), NumericError);  // static interior
}

TEST_CASE("toy sample sync correlation is near perfect") {
  DatasetConfig cfg;
  PixelBox box{cfg.mouth_r0, cfg.mouth_r1, cfg.mouth_c0, cfg.mouth_c1};
  Rng root(43);
  for (int i = 0; i < 3; ++i) {
    ToySample s = synth_sample(cfg, root.derive(uint64_t(i)));
    SyncResult r = sync_correlation(s.video, s.audio, box);
    CHECK(!r.degenerate);
    CHECK(r.correlation >= 0.95);
  }
}

TEST_CASE("sync correlation is invariant to affine intensity rescaling") {
  DatasetConfig cfg;
  PixelBox box{cfg.mouth_r0, cfg.mouth_r1, cfg.mouth_c0, cfg.mouth_c1};
  ToySample s = synth_sample(cfg, Rng(47).derive(0));
  SyncResult a = sync_correlation(s.video, s.audio, box);
  VideoClip scaled;
  scaled.fps = s.video.fps;
  scaled.rgb = Tensor(s.video.rgb.shape);
  for (size_t i = 0; i < scaled.rgb.numel(); ++i)
    scaled.rgb.data()[i] = 0.5f * s.video.rgb.data()[i] + 0.1f;
  SyncResult b = sync_correlation(scaled, s.audio, box);
  CHECK(b.correlation == doctest::Approx(a.correlation).epsilon(1e-5));
}

TEST_CASE("motion matching the envelope exactly correlates to one") {
  DatasetConfig cfg;
  ToySample s = synth_sample(cfg, Rng(53).derive(0));
  std::vector<double> env = envelope(s.audio, cfg.fps);
  // single-pixel video whose value is the running sum of the envelope, so the
  // change into frame t is exactly env[t]
  VideoClip v = make_video(int(env.size()), 1, 1);
  double run = 0;
  for (size_t t = 0; t < env.size(); ++t) {
    if (t > 0) run += env[t];
    for (int ch = 0; ch < 3; ++ch) at(v, ch, int(t), 0, 0) = float(run);
  }
  SyncResult r = sync_correlation(v, s.audio, PixelBox{0, 1, 0, 1});
  CHECK(!r.degenerate);
  CHECK(r.correlation == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("silence against a static frame is degenerate") {
  Waveform w;
  w.sample_rate = 16000;
  w.samples.assign(static_cast<size_t>(16000), 0.0f);
  VideoClip v = make_video(10, 4, 4, 0.5f);
  SyncResult r = sync_correlation(v, w, PixelBox{0, 4, 0, 4});
  CHECK(r.degenerate);
  CHECK(r.correlation == 0.0);
}

TEST_CASE("sync correlation validates the box and audio coverage") {
  DatasetConfig cfg;
  ToySample s = synth_sample(cfg, Rng(59).derive(0));
  CHECK_THROWS_AS(sync_correlation(s.video, s.audio, PixelBox{0, 40, 0, 4}), ContractError);
  CHECK_THROWS_AS(sync_correlation(s.video, s.audio, PixelBox{2, 2, 0, 4}), ContractError);
  Waveform clipped = s.audio;
  clipped.samples.resize(clipped.samples.size() / 2);
  CHECK_THROWS_WITH_AS(sync_correlation(s.video, clipped, PixelBox{16, 26, 11, 21}),
                       doctest::Contains("audio covers"), ContractError);
}

TEST_CASE("drift curve is zero for a periodic stream and grows with brightness") {
  VideoClip v = make_video(24, 3, 3);
  for (int t = 0; t < 24; ++t)
    for (int ch = 0; ch < 3; ++ch)
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) at(v, ch, t, r, c) = float((t % 6) * (r + ch)) * 0.03f;
  auto curve = drift_curve(v, 6);
  REQUIRE(curve.size() == 4);
  for (double d : curve) CHECK(d == 0.0);

  for (int t = 0; t < 24; ++t)
    for (int ch = 0; ch < 3; ++ch)
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) at(v, ch, t, r, c) += 0.02f * float(t);
  curve = drift_curve(v, 6);
  CHECK(curve[0] == 0.0);
  for (size_t k = 1; k < curve.size(); ++k) CHECK(curve[k] > curve[k - 1]);
}

TEST_CASE("drift curve needs at least two whole clips") {
  VideoClip v = make_video(10, 2, 2, 0.2f);
  CHECK_THROWS_AS(drift_curve(v, 8), ContractError);
  CHECK_THROWS_AS(drift_curve(v, 0), ContractError);
}

TEST_CASE("median and bench report") {
  CHECK(median_of({3, 1, 2}) == 2.0);
  CHECK(median_of({4, 1, 3, 2}) == 2.5);
  CHECK_THROWS_AS(median_of({}), ContractError);
  int calls = 0;
  BenchReport r = bench_runs([&] { ++calls; }, 3, 100, 50, 16);
  CHECK(calls == 3);
  CHECK(r.runs == 3);
  CHECK(r.ms_median >= 0.0);
  CHECK(std::isfinite(r.latents_per_s));
  CHECK(r.ms_per_step == doctest::Approx(r.ms_median / 16.0));
}

}  // TEST_SUITE
