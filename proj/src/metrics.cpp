#include "rap/metrics.hpp"

#include <array>
#include <cmath>

#include "rap/common.hpp"

namespace rap {

namespace {

void check_video(const VideoClip& v, const char* op) {
  if (v.rgb.shape.size() != 4 || v.rgb.shape[0] != 3)
    throw ShapeError(std::string(op) + ": video must be [3,T,H,W], got " + shape_str(v.rgb.shape));
  if (v.rgb.shape[1] < 2) throw ContractError(std::string(op) + ": needs at least 2 frames");
}

// mean over channels and the box of |v[t] - v[t-1]|; full frame if box spans it
double transition_l1(const VideoClip& v, int t, const PixelBox& box) {
  int T = v.rgb.shape[1], H = v.rgb.shape[2], W = v.rgb.shape[3];
  const float* p = v.rgb.data();
  double acc = 0;
  for (int ch = 0; ch < 3; ++ch)
    for (int r = box.r0; r < box.r1; ++r)
      for (int c = box.c0; c < box.c1; ++c) {
        size_t base = ((size_t(ch) * T + t) * H + r) * W + c;
        size_t prev = ((size_t(ch) * T + t - 1) * H + r) * W + c;
        acc += std::abs(double(p[base]) - double(p[prev]));
      }
  return acc / (3.0 * double(box.r1 - box.r0) * double(box.c1 - box.c0));
}

double mean_of(const std::vector<double>& xs) {
  double s = 0;
  for (double x : xs) s += x;
  return s / double(xs.size());
}

}  // namespace

Tensor motion_heatmap(const VideoClip& v) {
  check_video(v, "motion_heatmap");
  int T = v.rgb.shape[1], H = v.rgb.shape[2], W = v.rgb.shape[3];
  Tensor out({H, W});
  const float* p = v.rgb.data();
  for (int t = 1; t < T; ++t)
    for (int r = 0; r < H; ++r)
      for (int c = 0; c < W; ++c) {
        double acc = 0;
        for (int ch = 0; ch < 3; ++ch) {
          size_t cur = ((size_t(ch) * T + t) * H + r) * W + c;
          size_t prev = ((size_t(ch) * T + t - 1) * H + r) * W + c;
          acc += std::abs(double(p[cur]) - double(p[prev]));
        }
        out.data()[size_t(r) * W + c] += float(acc / 3.0);
      }
  return out;
}

double boundary_discontinuity(const VideoClip& v, const std::vector<int>& boundaries) {
  check_video(v, "boundary_discontinuity");
  if (boundaries.empty()) throw ContractError("boundary_discontinuity: empty boundary set");
  int T = v.rgb.shape[1];
  std::vector<char> is_boundary(size_t(T), 0);
  for (int b : boundaries) {
    if (b <= 0 || b >= T)
      throw ContractError("boundary_discontinuity: boundary " + std::to_string(b) +
                          " outside interior frames of T=" + std::to_string(T));
    is_boundary[size_t(b)] = 1;
  }
  PixelBox full{0, v.rgb.shape[2], 0, v.rgb.shape[3]};
  std::vector<double> at_boundary, interior;
  for (int t = 1; t < T; ++t)
    (is_boundary[size_t(t)] ? at_boundary : interior).push_back(transition_l1(v, t, full));
  if (interior.empty())
    throw ContractError("boundary_discontinuity: every transition is a boundary");
  double denom = mean_of(interior);
  if (denom == 0.0) throw NumericError("boundary_discontinuity: interior motion is zero");
  return mean_of(at_boundary) / denom;
}

SyncResult sync_correlation(const VideoClip& v, const Waveform& w, const PixelBox& box) {
  check_video(v, "sync_correlation");
  int T = v.rgb.shape[1], H = v.rgb.shape[2], W = v.rgb.shape[3];
  if (box.r0 < 0 || box.r1 > H || box.c0 < 0 || box.c1 > W || box.r0 >= box.r1 ||
      box.c0 >= box.c1)
    throw ContractError("sync_correlation: box outside frame bounds");
  std::vector<double> env = envelope(w, double(v.fps));
  if (int(env.size()) < T)
    throw ContractError("sync_correlation: audio covers " + std::to_string(env.size()) +
                        " frames, video has " + std::to_string(T));
  std::vector<double> motion, drive;
  for (int t = 1; t < T; ++t) {
    motion.push_back(transition_l1(v, t, box));
    drive.push_back(env[size_t(t)]);
  }
  size_t n = motion.size();
  double ma = mean_of(motion), mb = mean_of(drive);
  double num = 0, va = 0, vb = 0;
  for (size_t i = 0; i < n; ++i) {
    num += (motion[i] - ma) * (drive[i] - mb);
    va += (motion[i] - ma) * (motion[i] - ma);
    vb += (drive[i] - mb) * (drive[i] - mb);
  }
  SyncResult r;
  if (va < 1e-24 || vb < 1e-24) {
    r.degenerate = true;
    return r;
  }
  r.correlation = num / std::sqrt(va * vb);
  return r;
}

std::vector<double> drift_curve(const VideoClip& v, int clip_len) {
  check_video(v, "drift_curve");
  if (clip_len < 1) throw ContractError("drift_curve: clip_len must be positive");
  int T = v.rgb.shape[1], H = v.rgb.shape[2], W = v.rgb.shape[3];
  int clips = T / clip_len;
  if (clips < 2) throw ContractError("drift_curve: stream shorter than 2 clips");
  const float* p = v.rgb.data();
  // summary per chunk: mean and std per channel over all its pixels
  std::vector<std::array<double, 6>> stats(static_cast<size_t>(clips));
  for (int k = 0; k < clips; ++k)
    for (int ch = 0; ch < 3; ++ch) {
      double s = 0, s2 = 0;
      long n = long(clip_len) * H * W;
      for (int t = k * clip_len; t < (k + 1) * clip_len; ++t)
        for (int r = 0; r < H; ++r)
          for (int c = 0; c < W; ++c) {
            double x = p[((size_t(ch) * T + t) * H + r) * W + c];
            s += x;
            s2 += x * x;
          }
      double m = s / double(n);
      stats[size_t(k)][size_t(ch)] = m;
      stats[size_t(k)][size_t(3 + ch)] = std::sqrt(std::max(0.0, s2 / double(n) - m * m));
    }
  std::vector<double> curve(static_cast<size_t>(clips));
  for (int k = 0; k < clips; ++k) {
    double d = 0;
    for (int j = 0; j < 6; ++j)
      d += std::abs(stats[size_t(k)][size_t(j)] - stats[0][size_t(j)]);
    curve[size_t(k)] = d / 6.0;
  }
  return curve;
}

double median_of(std::vector<double> xs) {
  if (xs.empty()) throw ContractError("median_of: empty");
  std::sort(xs.begin(), xs.end());
  size_t n = xs.size();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

}  // namespace rap
