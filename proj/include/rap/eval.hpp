#pragma once
// Held-out evaluation and the ablation driver.  Variants share data and
// noise seeds so rows differ only in the setting under study; each row
// reports envelope sync on a held-out pool plus boundary, drift, and
// throughput from one longer probe stream.

#include <string>
#include <vector>

#include "rap/dataset.hpp"
#include "rap/infer.hpp"
#include "rap/metrics.hpp"
#include "rap/train.hpp"

namespace rap {

struct EvalConfig {
  int samples = 16;           // held-out pool size
  uint64_t data_seed = 4242;  // pool synthesis seed, disjoint from training
  int frames = 6;             // latent frames per generated clip
  int steps = 16;
  double cfg_scale = 5.0;
  int overlap = 2;
  uint64_t gen_seed = 99;
  int probe_clips = 6;        // length of the boundary/drift probe stream
};

void validate(const EvalConfig& c);

PixelBox mouth_box(const DatasetConfig& d);

// reference image for generation: the first frame of a rendered sample
Tensor first_frame(const VideoClip& v);

struct SyncEval {
  double mean = 0;
  std::vector<double> per_sample;  // degenerate entries recorded as 0
  int degenerate = 0;              // excluded from the mean
};

// generates one clip per held-out sample and correlates mouth motion with
// the driving envelope
SyncEval held_out_sync(const ModelConfig& mc, Weights& w, const CodecConfig& cc,
                       const DatasetConfig& dc, const EvalConfig& ec);

struct ProbeResult {
  double boundary_ratio = 0;
  double drift_max = 0;
  double drift_clip2 = 0;  // second chunk, the long-horizon reference point
  double fps = 0;          // emitted frames per second of compute
  std::vector<double> drift;
  std::vector<int> boundaries;
};

// one multi-clip stream over a fresh toy sample long enough to cover it;
// chunking for drift uses the emitted length of the trimmed later clips
ProbeResult probe_stream(const ModelConfig& mc, Weights& w, const CodecConfig& cc,
                         const DatasetConfig& dc, const EvalConfig& ec, int clips);

struct AblateRow {
  std::string name;
  double w = 0, delta = 0;
  int overlap = 0;
  double cfg = 0;
  double sync = 0, boundary_ratio = 0, drift_max = 0, fps = 0;
};

// sync pool plus probe for one configured model
AblateRow evaluate_variant(const std::string& name, const ModelConfig& mc, Weights& w,
                           const CodecConfig& cc, const DatasetConfig& dc, const EvalConfig& ec);

std::string render_report(const std::vector<AblateRow>& rows);

// Loads ckpt_path if it already holds tc.steps completed steps of a matching
// model, resumes it if it holds fewer, and trains from scratch otherwise.
// Training appends to csv_path next to the checkpoint.
Trainer ensure_trained(const ModelConfig& mc, const TrainConfig& tc, const CodecConfig& cc,
                       const std::string& data_dir, const std::string& ckpt_path,
                       const std::string& csv_path);

}  // namespace rap
