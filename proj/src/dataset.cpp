#include "rap/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "rap/common.hpp"

namespace rap {

namespace {

constexpr double kCarrierHz = 1000.0;
constexpr double kAmplitude = 0.8;

constexpr float kBackground[3] = {0.09f, 0.10f, 0.12f};
constexpr float kSkin[3] = {0.85f, 0.70f, 0.60f};
constexpr float kEye[3] = {0.10f, 0.10f, 0.12f};
constexpr float kLip[3] = {0.55f, 0.25f, 0.25f};
constexpr float kCavityEven = 0.05f;
constexpr float kCavityOdd = 0.30f;

void put(float* rgb, int H, int W, int r, int c, const float* color) {
  for (int ch = 0; ch < 3; ++ch) rgb[(size_t(ch) * H + r) * W + c] = color[ch];
}

}  // namespace

void render_frame(const DatasetConfig& cfg, double head_row, int aperture_px, bool odd_frame,
                  float* rgb) {
  const int H = cfg.height, W = cfg.width;
  const double r2 = cfg.head_radius * cfg.head_radius;
  for (int r = 0; r < H; ++r)
    for (int c = 0; c < W; ++c) {
      double dr = double(r) - head_row, dc = double(c) - cfg.head_col;
      put(rgb, H, W, r, c, dr * dr + dc * dc <= r2 ? kSkin : kBackground);
    }
  // eyes ride with the head
  for (int side : {-1, 1}) {
    double er = head_row - 5.0, ec = cfg.head_col + side * 4.0;
    for (int r = 0; r < H; ++r)
      for (int c = 0; c < W; ++c) {
        double dr = double(r) - er, dc = double(c) - ec;
        if (dr * dr + dc * dc <= 2.25) put(rgb, H, W, r, c, kEye);
      }
  }
  // the mouth box does not move; the cavity fills its top aperture_px rows
  float cavity = odd_frame ? kCavityOdd : kCavityEven;
  const float cav_color[3] = {cavity, cavity, cavity};
  for (int r = cfg.mouth_r0; r < cfg.mouth_r1; ++r)
    for (int c = cfg.mouth_c0; c < cfg.mouth_c1; ++c)
      put(rgb, H, W, r, c, r - cfg.mouth_r0 < aperture_px ? cav_color : kLip);
}

void validate(const DatasetConfig& cfg) {
  if (cfg.frames < 1) throw FormatError("sample needs at least one frame");
  if (cfg.height < 1 || cfg.width < 1) throw FormatError("frame size must be positive");
  if (!(cfg.fps > 0)) throw FormatError("frame rate must be positive");
  if (cfg.sample_rate < 1) throw FormatError("sample rate must be positive");
  if (cfg.mouth_r0 < 0 || cfg.mouth_r1 > cfg.height || cfg.mouth_c0 < 0 ||
      cfg.mouth_c1 > cfg.width || cfg.mouth_r0 >= cfg.mouth_r1 || cfg.mouth_c0 >= cfg.mouth_c1)
    throw FormatError("mouth box must be nonempty and inside the frame");
  if (cfg.mouth_open_max < 1 || cfg.mouth_open_max > cfg.mouth_r1 - cfg.mouth_r0)
    throw FormatError("mouth aperture exceeds mouth box height");
}

DatasetConfig scaled_dataset(int height, int width) {
  DatasetConfig d;
  const double fr = double(height) / d.height, fc = double(width) / d.width;
  d.mouth_r0 = int(std::lround(d.mouth_r0 * fr));
  d.mouth_r1 = int(std::lround(d.mouth_r1 * fr));
  d.mouth_c0 = int(std::lround(d.mouth_c0 * fc));
  d.mouth_c1 = int(std::lround(d.mouth_c1 * fc));
  d.mouth_open_max =
      std::min(d.mouth_r1 - d.mouth_r0, std::max(1, int(std::lround(d.mouth_open_max * fr))));
  d.head_row *= fr;
  d.head_col *= fc;
  d.head_radius *= std::min(fr, fc);
  d.drift_amp *= fr;
  d.height = height;
  d.width = width;
  validate(d);
  return d;
}

ToySample synth_sample(const DatasetConfig& cfg, const Rng& seed) {
  validate(cfg);
  Rng rng = seed;
  ToySample s;
  s.params.mod_freq = rng.uniform(0.8, 1.5);
  s.params.mod_phase = rng.uniform(M_PI / 3.0, 2.0 * M_PI / 3.0);
  s.params.drift_freq = rng.uniform(0.3, 0.7);
  s.params.drift_phase = rng.uniform(0.0, 2.0 * M_PI);

  const int win = frame_window(cfg.sample_rate, cfg.fps);
  const size_t n = size_t(cfg.frames) * win;
  s.audio.sample_rate = cfg.sample_rate;
  s.audio.samples.resize(n);
  for (size_t i = 0; i < n; ++i) {
    double t = double(i) / cfg.sample_rate;
    double mod = 0.5 + 0.5 * std::sin(2.0 * M_PI * s.params.mod_freq * t + s.params.mod_phase);
    s.audio.samples[i] =
        float(kAmplitude * mod * std::sin(2.0 * M_PI * kCarrierHz * t));
  }

  std::vector<double> env = envelope(s.audio, cfg.fps);
  s.video.fps = float(cfg.fps);
  s.video.rgb = Tensor({3, cfg.frames, cfg.height, cfg.width});
  s.mask = Tensor({cfg.frames, cfg.height, cfg.width});
  s.aperture.resize(size_t(cfg.frames));
  const size_t plane = size_t(cfg.height) * cfg.width;
  std::vector<float> frame(3 * plane);
  for (int t = 0; t < cfg.frames; ++t) {
    double sec = double(t) / cfg.fps;
    double head =
        cfg.head_row +
        cfg.drift_amp * std::sin(2.0 * M_PI * s.params.drift_freq * sec + s.params.drift_phase);
    int ap = int(std::lrint(cfg.mouth_open_max * env[size_t(t)]));
    s.aperture[size_t(t)] = double(ap);
    render_frame(cfg, head, ap, t % 2 == 1, frame.data());
    for (int ch = 0; ch < 3; ++ch)
      std::copy(frame.begin() + ch * plane, frame.begin() + (ch + 1) * plane,
                s.video.rgb.data() + (size_t(ch) * cfg.frames + t) * plane);
    for (int r = cfg.mouth_r0; r < cfg.mouth_r1; ++r)
      for (int c = cfg.mouth_c0; c < cfg.mouth_c1; ++c)
        s.mask.data()[(size_t(t) * cfg.height + r) * cfg.width + c] = 1.0f;
  }
  return s;
}

std::vector<CorpusEntry> write_corpus(const DatasetConfig& cfg, const std::string& dir, int count,
                                      uint64_t seed) {
  std::filesystem::create_directories(dir);
  Rng root(seed);
  std::vector<CorpusEntry> entries;
  std::ofstream manifest(dir + "/manifest.csv");
  if (!manifest) throw FormatError("cannot write " + dir + "/manifest.csv");
  manifest << "id,wav,video,mask,mod_freq,mod_phase,drift_freq,drift_phase\n";
  for (int i = 0; i < count; ++i) {
    ToySample s = synth_sample(cfg, root.derive(uint64_t(i)));
    char base[32];
    std::snprintf(base, sizeof(base), "sample_%05d", i);
    CorpusEntry e;
    e.wav = std::string(base) + ".wav";
    e.video = std::string(base) + ".rapv";
    e.mask = std::string(base) + ".rapm";
    e.params = s.params;
    write_wav(dir + "/" + e.wav, s.audio);
    write_video(dir + "/" + e.video, s.video);
    write_mask(dir + "/" + e.mask, s.mask);
    // frame 0 as a portable reference image for generation
    Tensor ref({3, cfg.height, cfg.width});
    for (int c = 0; c < 3; ++c)
      std::memcpy(ref.data() + size_t(c) * cfg.height * cfg.width,
                  s.video.rgb.data() + size_t(c) * cfg.frames * cfg.height * cfg.width,
                  sizeof(float) * size_t(cfg.height) * cfg.width);
    write_ppm(dir + "/" + std::string(base) + ".ppm", ref);
    manifest << i << ',' << e.wav << ',' << e.video << ',' << e.mask << ','
             << csv_num(s.params.mod_freq) << ',' << csv_num(s.params.mod_phase) << ','
             << csv_num(s.params.drift_freq) << ',' << csv_num(s.params.drift_phase) << "\n";
    e.wav = dir + "/" + e.wav;
    e.video = dir + "/" + e.video;
    e.mask = dir + "/" + e.mask;
    entries.push_back(std::move(e));
  }
  if (!manifest) throw FormatError("short write to " + dir + "/manifest.csv");
  return entries;
}

std::vector<CorpusEntry> read_manifest(const std::string& dir) {
  std::ifstream f(dir + "/manifest.csv");
  if (!f) throw FormatError("cannot read " + dir + "/manifest.csv");
  std::string line;
  if (!std::getline(f, line) || csv_split(line).size() != 8)
    throw FormatError(dir + "/manifest.csv: bad header");
  std::vector<CorpusEntry> entries;
  int lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto parts = csv_split(line);
    if (parts.size() != 8)
      throw FormatError(dir + "/manifest.csv line " + std::to_string(lineno) +
                        ": expected 8 fields, got " + std::to_string(parts.size()));
    CorpusEntry e;
    e.wav = dir + "/" + parts[1];
    e.video = dir + "/" + parts[2];
    e.mask = dir + "/" + parts[3];
    try {
      e.params.mod_freq = std::stod(parts[4]);
      e.params.mod_phase = std::stod(parts[5]);
      e.params.drift_freq = std::stod(parts[6]);
      e.params.drift_phase = std::stod(parts[7]);
    } catch (const std::exception&) {
      throw FormatError(dir + "/manifest.csv line " + std::to_string(lineno) +
                        ": bad numeric field");
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

}  // namespace rap
