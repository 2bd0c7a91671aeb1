#pragma once
// Evaluation metrics for generated sprite video: accumulated motion maps,
// clip-boundary discontinuity, audio-sync correlation against the mouth
// envelope, long-horizon appearance drift, and wall-clock benchmarking.
// All of these are pure functions of their inputs except bench_runs.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <vector>

#include "rap/audio.hpp"
#include "rap/io.hpp"
#include "rap/tensor.hpp"

namespace rap {

struct PixelBox {
  int r0 = 0, r1 = 0, c0 = 0, c1 = 0;  // half-open row/col ranges
};

// Accumulated inter-frame difference map [H,W]: per pixel, the sum over
// transitions of |frame_{t+1} - frame_t| averaged over channels.
Tensor motion_heatmap(const VideoClip& v);

// Mean L1 frame difference at each boundary divided by the mean over all
// non-boundary transitions.  1.0 means boundaries are as smooth as the
// interior.  Boundaries index the first frame of each new clip.
double boundary_discontinuity(const VideoClip& v, const std::vector<int>& boundaries);

struct SyncResult {
  double correlation = 0.0;
  bool degenerate = false;  // a series had no variance; correlation forced to 0
};

// Pearson correlation between per-frame mean |intensity change| inside the
// box and the audio envelope.  The transition into frame t pairs with the
// envelope at frame t, so both series have T-1 entries.
SyncResult sync_correlation(const VideoClip& v, const Waveform& w, const PixelBox& box);

// Appearance drift: frames are cut into consecutive chunks of clip_len, each
// chunk summarized by per-channel mean and std of its pixels, and entry i is
// the mean absolute difference of chunk i's summary from chunk 0's.
std::vector<double> drift_curve(const VideoClip& v, int clip_len);

struct BenchReport {
  double ms_median = 0.0;  // median wall time of one run
  double latents_per_s = 0.0;
  double frames_per_s = 0.0;
  double ms_per_step = 0.0;
  int runs = 0;
};

double median_of(std::vector<double> xs);

// Times `runs` invocations of f and converts the median wall time using the
// per-run work counts.
template <class F>
BenchReport bench_runs(F&& f, int runs, long latents, long frames, long steps) {
  std::vector<double> ms;
  ms.reserve(size_t(runs));
  for (int i = 0; i < runs; ++i) {
    auto t0 = std::chrono::steady_clock::now();
    f();
    auto t1 = std::chrono::steady_clock::now();
    ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  BenchReport r;
  r.runs = runs;
  r.ms_median = median_of(std::move(ms));
  double s = r.ms_median / 1000.0;
  r.latents_per_s = double(latents) / s;
  r.frames_per_s = double(frames) / s;
  r.ms_per_step = r.ms_median / double(steps);
  return r;
}

}  // namespace rap
