#include "rap/audio.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "rap/common.hpp"

namespace rap {

namespace {

uint32_t rd_u32(std::ifstream& f, const char* field) {
  unsigned char b[4];
  if (!f.read(reinterpret_cast<char*>(b), 4))
    throw FormatError(std::string("wav: truncated while reading ") + field);
  return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
}

uint16_t rd_u16(std::ifstream& f, const char* field) {
  unsigned char b[2];
  if (!f.read(reinterpret_cast<char*>(b), 2))
    throw FormatError(std::string("wav: truncated while reading ") + field);
  return uint16_t(b[0]) | uint16_t(b[1]) << 8;
}

void wr_u32(std::ofstream& f, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  f.write(reinterpret_cast<char*>(b), 4);
}

void wr_u16(std::ofstream& f, uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
  f.write(reinterpret_cast<char*>(b), 2);
}

// iterative radix-2 FFT over interleaved re/im pairs
void fft(std::vector<double>& re, std::vector<double>& im) {
  size_t n = re.size();
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) {
      std::swap(re[i], re[j]);
      std::swap(im[i], im[j]);
    }
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    double ang = -6.283185307179586477 / double(len);
    double wr = std::cos(ang), wi = std::sin(ang);
    for (size_t i = 0; i < n; i += len) {
      double cr = 1, ci = 0;
      for (size_t k = 0; k < len / 2; ++k) {
        double ur = re[i + k], ui = im[i + k];
        double vr = re[i + k + len / 2] * cr - im[i + k + len / 2] * ci;
        double vi = re[i + k + len / 2] * ci + im[i + k + len / 2] * cr;
        re[i + k] = ur + vr;
        im[i + k] = ui + vi;
        re[i + k + len / 2] = ur - vr;
        im[i + k + len / 2] = ui - vi;
        double ncr = cr * wr - ci * wi;
        ci = cr * wi + ci * wr;
        cr = ncr;
      }
    }
  }
}

size_t next_pow2(size_t n) {
  size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace

Waveform read_wav(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("wav: cannot open " + path);
  char tag[4];
  if (!f.read(tag, 4) || std::memcmp(tag, "RIFF", 4) != 0)
    throw FormatError("wav: missing RIFF magic in " + path);
  (void)rd_u32(f, "riff size");
  if (!f.read(tag, 4) || std::memcmp(tag, "WAVE", 4) != 0)
    throw FormatError("wav: missing WAVE form type in " + path);

  Waveform w;
  bool have_fmt = false;
  while (f.read(tag, 4)) {
    uint32_t size = rd_u32(f, "chunk size");
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      if (size < 16) throw FormatError("wav: fmt chunk too small");
      uint16_t audio_format = rd_u16(f, "audio format");
      uint16_t channels = rd_u16(f, "channel count");
      uint32_t rate = rd_u32(f, "sample rate");
      (void)rd_u32(f, "byte rate");
      (void)rd_u16(f, "block align");
      uint16_t bits = rd_u16(f, "bits per sample");
      if (audio_format != 1)
        throw FormatError("wav: audio format " + std::to_string(audio_format) +
                          " is not PCM (field: audio format)");
      if (channels != 1)
        throw FormatError("wav: " + std::to_string(channels) +
                          " channels, mono required (field: channel count)");
      if (bits != 16)
        throw FormatError("wav: " + std::to_string(bits) +
                          " bits per sample, 16 required (field: bits per sample)");
      w.sample_rate = int(rate);
      have_fmt = true;
      if (size > 16) f.seekg(size - 16, std::ios::cur);
    } else if (std::memcmp(tag, "data", 4) == 0) {
      if (!have_fmt) throw FormatError("wav: data chunk before fmt chunk");
      size_t count = size / 2;
      w.samples.resize(count);
      std::vector<unsigned char> raw(size);
      if (!f.read(reinterpret_cast<char*>(raw.data()), std::streamsize(size)))
        throw FormatError("wav: truncated data chunk, expected " + std::to_string(size) +
                          " bytes");
      for (size_t i = 0; i < count; ++i) {
        int16_t s = int16_t(uint16_t(raw[2 * i]) | uint16_t(raw[2 * i + 1]) << 8);
        w.samples[i] = float(s) / 32768.0f;
      }
      return w;
    } else {
      f.seekg(size + (size & 1), std::ios::cur);
    }
  }
  throw FormatError("wav: no data chunk in " + path);
}

void write_wav(const std::string& path, const Waveform& w) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("wav: cannot write " + path);
  uint32_t data_bytes = uint32_t(w.samples.size() * 2);
  f.write("RIFF", 4);
  wr_u32(f, 36 + data_bytes);
  f.write("WAVE", 4);
  f.write("fmt ", 4);
  wr_u32(f, 16);
  wr_u16(f, 1);
  wr_u16(f, 1);
  wr_u32(f, uint32_t(w.sample_rate));
  wr_u32(f, uint32_t(w.sample_rate) * 2);
  wr_u16(f, 2);
  wr_u16(f, 16);
  f.write("data", 4);
  wr_u32(f, data_bytes);
  for (float s : w.samples) {
    double c = std::max(-1.0, std::min(1.0, double(s)));
    long q = std::lrint(c * 32768.0);
    q = std::max(-32768L, std::min(32767L, q));
    wr_u16(f, uint16_t(int16_t(q)));
  }
}

int frame_window(int sample_rate, double fps) {
  if (fps <= 0) throw ContractError("frame_window: fps must be positive");
  return int(std::lrint(double(sample_rate) / fps));
}

std::vector<double> band_energies(const float* samples, int n, int sample_rate, int bands) {
  size_t m = next_pow2(size_t(n));
  std::vector<double> re(m, 0.0), im(m, 0.0);
  for (int i = 0; i < n; ++i) re[size_t(i)] = double(samples[i]);
  fft(re, im);
  size_t half = m / 2;
  double nyquist = double(sample_rate) / 2;
  // band b is a triangle over [edge b, edge b+2] with peak at edge b+1,
  // edges uniform over 0..nyquist
  std::vector<double> edges(size_t(bands) + 2);
  for (int i = 0; i < bands + 2; ++i) edges[size_t(i)] = nyquist * double(i) / double(bands + 1);
  std::vector<double> out(size_t(bands), 0.0);
  double norm = 1.0 / (double(n) * double(n));
  for (size_t k = 0; k <= half; ++k) {
    double freq = double(k) * double(sample_rate) / double(m);
    double power = (re[k] * re[k] + im[k] * im[k]) * norm;
    for (int b = 0; b < bands; ++b) {
      double lo = edges[size_t(b)], mid = edges[size_t(b) + 1], hi = edges[size_t(b) + 2];
      if (freq <= lo || freq >= hi) continue;
      double tri = freq <= mid ? (freq - lo) / (mid - lo) : (hi - freq) / (hi - mid);
      out[size_t(b)] += tri * power;
    }
  }
  return out;
}

AudioFeatures extract_features(const Waveform& w, const AudioFeatureConfig& cfg,
                               int min_video_frames) {
  if (cfg.bands < 1 || cfg.layers < 1)
    throw ContractError("extract_features: bands and layers must be positive");
  int win = frame_window(w.sample_rate, cfg.fps);
  int natural = int((w.samples.size() + size_t(win) - 1) / size_t(win));
  int frames = std::max(natural, min_video_frames);
  if (frames == 0) frames = 1;

  std::vector<float> padded(size_t(frames) * size_t(win), 0.0f);
  std::copy(w.samples.begin(), w.samples.end(), padded.begin());

  AudioFeatures out;
  out.video_frames = frames;
  out.layers = cfg.layers;
  out.bands = cfg.bands;
  out.pad_frames = frames - natural;
  out.padded = out.pad_frames > 0;
  out.rows = Tensor({frames * cfg.layers, cfg.bands});

  // layer 0 first, into a scratch stack, then each further layer is a width-3
  // causal mean of the previous one
  std::vector<std::vector<double>> layer(static_cast<size_t>(frames));
  for (int f = 0; f < frames; ++f) {
    auto e = band_energies(padded.data() + size_t(f) * size_t(win), win, w.sample_rate, cfg.bands);
    layer[size_t(f)].resize(size_t(cfg.bands));
    for (int b = 0; b < cfg.bands; ++b)
      layer[size_t(f)][size_t(b)] = std::log(cfg.log_floor + e[size_t(b)]);
  }
  for (int f = 0; f < frames; ++f)
    for (int b = 0; b < cfg.bands; ++b)
      out.rows[size_t(f * cfg.layers) * size_t(cfg.bands) + size_t(b)] =
          float(layer[size_t(f)][size_t(b)]);

  std::vector<std::vector<double>> prev = layer;
  for (int l = 1; l < cfg.layers; ++l) {
    std::vector<std::vector<double>> cur(size_t(frames), std::vector<double>(size_t(cfg.bands)));
    for (int f = 0; f < frames; ++f) {
      int lo = std::max(0, f - 2);
      for (int b = 0; b < cfg.bands; ++b) {
        double s = 0;
        for (int g = lo; g <= f; ++g) s += prev[size_t(g)][size_t(b)];
        cur[size_t(f)][size_t(b)] = s / double(f - lo + 1);
      }
      for (int b = 0; b < cfg.bands; ++b)
        out.rows[(size_t(f) * size_t(cfg.layers) + size_t(l)) * size_t(cfg.bands) + size_t(b)] =
            float(cur[size_t(f)][size_t(b)]);
    }
    prev = std::move(cur);
  }
  return out;
}

std::vector<double> envelope(const Waveform& w, double fps) {
  int win = frame_window(w.sample_rate, fps);
  int frames = int(w.samples.size()) / win;
  std::vector<double> rms(static_cast<size_t>(frames));
  for (int f = 0; f < frames; ++f) {
    double s = 0;
    for (int i = 0; i < win; ++i) {
      double x = double(w.samples[size_t(f) * size_t(win) + size_t(i)]);
      s += x * x;
    }
    rms[size_t(f)] = std::sqrt(s / win);
  }
  std::vector<double> raw(static_cast<size_t>(frames));
  double run_max = 0;
  for (int f = 0; f < frames; ++f) {
    run_max = std::max(run_max, rms[size_t(f)]);
    raw[size_t(f)] = run_max > 1e-12 ? rms[size_t(f)] / run_max : 0.0;
  }
  std::vector<double> out(static_cast<size_t>(frames));
  for (int f = 0; f < frames; ++f) {
    int lo = std::max(0, f - 2);
    double s = 0;
    for (int g = lo; g <= f; ++g) s += raw[size_t(g)];
    out[size_t(f)] = s / double(f - lo + 1);
  }
  return out;
}

}  // namespace rap
