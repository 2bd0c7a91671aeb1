#pragma once
// Optimizer loop: static/dynamic window sampling over full-length latent
// clips, flow-time noising, audio dropout against the learned null token,
// the composite velocity loss, and Adam.  Every random draw comes from a
// stream derived from (seed, step, batch element) in a fixed order, so runs
// are bit-reproducible and a resumed run continues the exact same sequence.

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "rap/audio.hpp"
#include "rap/codec.hpp"
#include "rap/dataset.hpp"
#include "rap/flow.hpp"
#include "rap/io.hpp"
#include "rap/model.hpp"
#include "rap/persist.hpp"

namespace rap {

struct TrainConfig {
  double beta = 0.5;          // probability of the static-headed first window
  int window = 6;             // k: latent frames per training window
  double audio_dropout = 0.1; // per-sample chance of the unconditional pass
  double lr = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch = 4;
  int steps = 200;
  uint64_t seed = 1;
  int checkpoint_every = 0;   // extra saves every N steps; 0 saves only at the end
  FlowLossWeights loss;
};

void validate(const TrainConfig& c);

// one corpus sample lifted into model space
struct TrainSample {
  Tensor latents;  // [C,F,H,W] clean video latents, full clip
  Tensor ref;      // [C,F,H,W] reference frame latents
  Tensor audio;    // [F*rf*layers, bands] feature rows covering the clip
  Tensor mask;     // [C,F,H,W] mouth-region latent mask
};

TrainSample prepare_sample(const ModelConfig& mc, const CodecConfig& cc, const Waveform& wav,
                           const VideoClip& video, const Tensor& pixel_mask);

struct SampleWindow {
  Tensor latents, ref, audio, mask;
  bool static_head = false;  // window includes the reference-anchored frame 0
  int start = 0;             // first latent frame of the window
};

// y=1 takes the first k latent frames (static head included), y=0 the last k.
// Audio rows slide with the window.
SampleWindow sample_window(const TrainSample& s, int y, int k);

// With probability p the sample's audio rows are replaced by an empty tensor;
// the model then substitutes its learned null token.
Tensor apply_audio_dropout(const Tensor& audio, double p, Rng& rng);

// One Adam update over n elements.  The moment buffers are read back after
// the float round-trip so a resumed run continues bit-exactly; `step` counts
// completed steps before this one.
void adam_update(float* p, float* m, float* v, const double* g, size_t n, const TrainConfig& tc,
                 int step);

// lazily loaded, memoized corpus view in model space
class SampleStore {
 public:
  SampleStore(std::vector<CorpusEntry> entries, ModelConfig mc, CodecConfig cc);
  const TrainSample& at(size_t i);
  size_t size() const { return entries_.size(); }

 private:
  std::vector<CorpusEntry> entries_;
  ModelConfig mc_;
  CodecConfig cc_;
  std::vector<std::unique_ptr<TrainSample>> cache_;
};

using SampleProvider = std::function<const TrainSample&(size_t)>;

struct StepStats {
  double loss = 0, diffusion = 0, face = 0, temporal = 0;
};

class Trainer {
 public:
  Trainer(const ModelConfig& mc, const TrainConfig& tc);
  static Trainer resume(const std::string& ckpt_path);

  // one optimizer step over a fresh batch drawn from `data`
  StepStats step(const SampleProvider& data, size_t dataset_size);

  void save(const std::string& path) const;

  int step_index() const { return step_; }
  const ModelConfig& model_config() const { return mc_; }
  const TrainConfig& train_config() const { return tc_; }
  void set_total_steps(int steps);  // extends or shortens a resumed run
  Weights& weights() { return w_; }
  const Weights& weights() const { return w_; }

 private:
  Trainer() = default;
  void init_optimizer();

  ModelConfig mc_;
  TrainConfig tc_;
  Weights w_;
  std::vector<Tensor> adam_m_, adam_v_;  // parallel to visit_weights order
  int step_ = 0;
};

// Runs the trainer to tc.steps, appending `step,loss,diffusion,face,temporal`
// rows to csv_path (truncated and headed only when starting from step 0) and
// saving checkpoints to ckpt_path per tc.checkpoint_every plus once at the
// end.  Returns the final step's stats.
StepStats train_loop(Trainer& tr, const SampleProvider& data, size_t dataset_size,
                     const std::string& csv_path, const std::string& ckpt_path);

// config text embedded in checkpoints; exposed for the CLI
std::string render_train_config(const ModelConfig& mc, const TrainConfig& tc, int step);
void parse_train_config(const KvFile& kv, ModelConfig& mc, TrainConfig& tc, int& step);

}  // namespace rap
