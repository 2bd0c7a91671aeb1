#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <vector>

#include "rap/audio.hpp"
#include "rap/codec.hpp"
#include "rap/common.hpp"
#include "rap/dataset.hpp"

using namespace rap;

namespace {

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  size_t n = a.size();
  double ma = 0, mb = 0;
  for (size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= double(n);
  mb /= double(n);
  double num = 0, va = 0, vb = 0;
  for (size_t i = 0; i < n; ++i) {
    num += (a[i] - ma) * (b[i] - mb);
    va += (a[i] - ma) * (a[i] - ma);
    vb += (b[i] - mb) * (b[i] - mb);
  }
  return num / std::sqrt(va * vb);
}

float px(const VideoClip& v, int ch, int t, int r, int c) {
  int T = v.rgb.shape[1], H = v.rgb.shape[2], W = v.rgb.shape[3];
  return v.rgb.data()[((size_t(ch) * T + t) * H + r) * W + c];
}

// cavity pixels are gray (equal channels); lips are red-tinted
std::vector<double> aperture_from_video(const DatasetConfig& cfg, const VideoClip& v) {
  std::vector<double> ap(size_t(v.rgb.shape[1]));
  for (int t = 0; t < v.rgb.shape[1]; ++t) {
    int count = 0;
    for (int r = cfg.mouth_r0; r < cfg.mouth_r1; ++r)
      for (int c = cfg.mouth_c0; c < cfg.mouth_c1; ++c)
        if (std::abs(px(v, 0, t, r, c) - px(v, 1, t, r, c)) < 0.01f) ++count;
    ap[size_t(t)] = double(count) / double(cfg.mouth_c1 - cfg.mouth_c0);
  }
  return ap;
}

}  // namespace

TEST_SUITE("dataset") {

TEST_CASE("synthesis is deterministic in the seed") {
  DatasetConfig cfg;
  ToySample a = synth_sample(cfg, Rng(5).derive(3));
  ToySample b = synth_sample(cfg, Rng(5).derive(3));
  ToySample c = synth_sample(cfg, Rng(5).derive(4));
  CHECK(a.audio.samples == b.audio.samples);
  CHECK(bitwise_equal(a.video.rgb, b.video.rgb));
  CHECK(bitwise_equal(a.mask, b.mask));
  CHECK(a.params.mod_freq == b.params.mod_freq);
  CHECK(a.audio.samples != c.audio.samples);
  CHECK(!bitwise_equal(a.video.rgb, c.video.rgb));
}

TEST_CASE("parameters stay inside their documented ranges") {
  DatasetConfig cfg;
  Rng root(77);
  for (int i = 0; i < 20; ++i) {
    ToySample s = synth_sample(cfg, root.derive(uint64_t(i)));
    CHECK(s.params.mod_freq >= 0.8);
    CHECK(s.params.mod_freq <= 1.5);
    CHECK(s.params.mod_phase >= M_PI / 3.0);
    CHECK(s.params.mod_phase <= 2.0 * M_PI / 3.0);
    CHECK(s.params.drift_freq >= 0.3);
    CHECK(s.params.drift_freq <= 0.7);
    for (float v : s.audio.samples) CHECK(std::abs(v) <= 1.0f);
  }
}

TEST_CASE("mouth aperture tracks the audio envelope") {
  DatasetConfig cfg;
  Rng root(11);
  for (int i = 0; i < 5; ++i) {
    ToySample s = synth_sample(cfg, root.derive(uint64_t(i)));
    std::vector<double> env = envelope(s.audio, cfg.fps);
    std::vector<double> ap = aperture_from_video(cfg, s.video);
    REQUIRE(ap.size() == env.size());
    // the rendered aperture is what synthesis recorded
    for (size_t t = 0; t < ap.size(); ++t) CHECK(ap[t] == s.aperture[t]);
    CHECK(pearson(ap, env) >= 0.99);
    // rounding the envelope is monotone: no aperture inversion between frames
    for (size_t ti = 0; ti < env.size(); ++ti)
      for (size_t tj = 0; tj < env.size(); ++tj)
        if (env[ti] < env[tj]) CHECK(ap[ti] <= ap[tj] + 1e-12);
  }
}

TEST_CASE("the envelope saturates its normalization at the first frame") {
  DatasetConfig cfg;
  ToySample s = synth_sample(cfg, Rng(19).derive(0));
  std::vector<double> env = envelope(s.audio, cfg.fps);
  CHECK(env[0] == doctest::Approx(1.0));
  CHECK(s.aperture[0] == double(cfg.mouth_open_max));
}

TEST_CASE("mask marks exactly the mouth box and sits inside the head") {
  DatasetConfig cfg;
  Rng root(23);
  for (int i = 0; i < 3; ++i) {
    ToySample s = synth_sample(cfg, root.derive(uint64_t(i)));
    for (int t = 0; t < cfg.frames; ++t)
      for (int r = 0; r < cfg.height; ++r)
        for (int c = 0; c < cfg.width; ++c) {
          bool in_box = r >= cfg.mouth_r0 && r < cfg.mouth_r1 && c >= cfg.mouth_c0 &&
                        c < cfg.mouth_c1;
          float m = s.mask.data()[(size_t(t) * cfg.height + r) * cfg.width + c];
          REQUIRE(m == (in_box ? 1.0f : 0.0f));
        }
    // the box plus a 2-pixel margin above and to the sides never shows
    // background through the whole head drift; the bottom edge rides the chin
    for (int t = 0; t < cfg.frames; ++t)
      for (int r = cfg.mouth_r0 - 2; r < cfg.mouth_r1; ++r)
        for (int c = cfg.mouth_c0 - 2; c < cfg.mouth_c1 + 2; ++c) {
          float red = px(s.video, 0, t, r, c);
          REQUIRE(red != doctest::Approx(0.09).epsilon(1e-6));
        }
  }
}

TEST_CASE("cavity shade alternates by global frame parity") {
  DatasetConfig cfg;
  ToySample s = synth_sample(cfg, Rng(31).derive(1));
  // top cavity row is open whenever aperture >= 1
  for (int t = 0; t + 1 < cfg.frames; ++t) {
    if (s.aperture[size_t(t)] < 1 || s.aperture[size_t(t) + 1] < 1) continue;
    float a = px(s.video, 0, t, cfg.mouth_r0, cfg.mouth_c0);
    float b = px(s.video, 0, t + 1, cfg.mouth_r0, cfg.mouth_c0);
    CHECK(std::abs(a - b) == doctest::Approx(0.25).epsilon(1e-6));
  }
}

TEST_CASE("latent mask marks the patches under the mouth box") {
  DatasetConfig cfg;
  ToySample s = synth_sample(cfg, Rng(37).derive(0));
  CodecConfig cc{8, 4};
  Tensor lm = latent_mask(s.mask, cc);
  REQUIRE(lm.shape == std::vector<int>{768, 9, 4, 4});
  // box rows 16..25 cover patch rows 2..3, cols 11..20 cover patch cols 1..2
  for (int f = 0; f < 9; ++f)
    for (int u = 0; u < 4; ++u)
      for (int w = 0; w < 4; ++w) {
        bool expect = (u == 2 || u == 3) && (w == 1 || w == 2);
        for (int ch : {0, 100, 767}) {
          float v = lm.data()[((size_t(ch) * 9 + f) * 4 + u) * 4 + w];
          REQUIRE(v == (expect ? 1.0f : 0.0f));
        }
      }
}

TEST_CASE("corpus files round-trip through the manifest") {
  DatasetConfig cfg;
  cfg.frames = 9;  // small corpus for the test
  std::string dir = "dataset_test_corpus";
  std::filesystem::remove_all(dir);
  auto written = write_corpus(cfg, dir, 3, 99);
  REQUIRE(written.size() == 3);
  auto read = read_manifest(dir);
  REQUIRE(read.size() == 3);
  for (size_t i = 0; i < 3; ++i) {
    CHECK(read[i].wav == written[i].wav);
    CHECK(read[i].params.mod_freq == written[i].params.mod_freq);
    CHECK(read[i].params.drift_phase == written[i].params.drift_phase);
    Waveform w = read_wav(read[i].wav);
    VideoClip v = read_video(read[i].video);
    Tensor m = read_mask(read[i].mask);
    ToySample s = synth_sample(cfg, Rng(99).derive(i));
    CHECK(v.rgb.shape == s.video.rgb.shape);
    CHECK(bitwise_equal(v.rgb, s.video.rgb));
    CHECK(bitwise_equal(m, s.mask));
    REQUIRE(w.samples.size() == s.audio.samples.size());
    double md = 0;
    for (size_t j = 0; j < w.samples.size(); ++j)
      md = std::max(md, std::abs(double(w.samples[j]) - double(s.audio.samples[j])));
    CHECK(md <= 1.0 / 32768.0);  // wav quantization only
  }
  std::filesystem::remove_all(dir);
}

}  // TEST_SUITE
