#pragma once
// Streaming generation: per-clip Euler denoising with latent-overlap
// inheritance at every timestep, classifier-free guidance, decode trimming,
// and assembly of arbitrarily many clips.  No motion frames: continuity
// comes only from overwriting the first n latent frames of clip i with the
// last n of clip i-1 at the matching timestep.

#include <cstdint>
#include <string>
#include <vector>

#include "rap/audio.hpp"
#include "rap/codec.hpp"
#include "rap/flow.hpp"
#include "rap/io.hpp"
#include "rap/model.hpp"

namespace rap {

struct StreamConfig {
  int clips = 1;          // N
  int frames = 9;         // F: latent frames denoised per clip
  int steps = 16;         // T: Euler steps over t in (0,1]
  double cfg_scale = 5.0; // s; exactly 1 skips the unconditional pass
  int overlap = 2;        // n latent frames inherited between clips
  uint64_t seed = 0;
};

void validate(const StreamConfig& c);

// the codec geometry a trained model implies: C = 3 * patch^2 * rf
CodecConfig codec_for(const ModelConfig& mc);

// slot k holds the last-n latent frames [C,n,H,W] of the previous clip's
// state at step k of the grid (k=0 is t=1, k=steps-1 is t=1/steps)
using OverlapCache = std::vector<Tensor>;

struct DenoiseResult {
  Tensor latents;      // [C,F,H,W] at t=0
  OverlapCache cache;  // this clip's slices for the next one
};

// test and logging hook: per-step state after overlap overwrite, before the
// Euler update
struct DenoiseTrace {
  std::vector<Tensor> states;
  std::vector<double> ts;
  std::vector<double> state_rms;
};

// prev is required for clip_index > 1 and must hold one entry per step
DenoiseResult denoise_clip(const ModelConfig& mc, Weights& w, const Tensor& x_ref,
                           const Tensor& audio_rows, const StreamConfig& sc, int clip_index,
                           const OverlapCache* prev, DenoiseTrace* trace = nullptr);

// video frames dropped from the head of a decoded clip i>1
inline int trim_drop(int rf, int overlap) { return rf * (overlap - 1) + 1; }

// decode to pixels; clip 1 keeps every frame, later clips drop the overlap
VideoClip trim_and_decode(const Tensor& latents, const CodecConfig& cc, int clip_index,
                          int overlap, float fps);

struct ClipTiming {
  int clip = 0;
  double ms_denoise = 0, ms_decode = 0, fps = 0;
};

struct StreamResult {
  VideoClip video;              // concatenated stream, clamped to [0,1]
  std::vector<int> boundaries;  // first frame index of clips 2..N
  std::vector<ClipTiming> timing;
};

StreamResult generate_stream(const ModelConfig& mc, Weights& w, const CodecConfig& cc,
                             const Tensor& ref_image, const Waveform& wav, const StreamConfig& sc,
                             float fps = 25.0f);

}  // namespace rap
