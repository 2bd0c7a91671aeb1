#pragma once

// audio front end: strict mono 16-bit WAV io, per-video-frame triangular
// log-energy filterbank features, and the aperture envelope used both by the
// synthetic data generator and the sync metric. the learned projection from
// feature rows to model tokens lives here too (templated, it trains with the
// model).

#include <string>
#include <vector>

#include "rap/autodiff.hpp"
#include "rap/tensor.hpp"

namespace rap {

struct Waveform {
  std::vector<float> samples;  // [-1, 1]
  int sample_rate = 16000;

  double seconds() const {
    return sample_rate > 0 ? double(samples.size()) / sample_rate : 0.0;
  }
};

// RIFF PCM s16le mono only; anything else raises FormatError naming the
// offending header field
Waveform read_wav(const std::string& path);
void write_wav(const std::string& path, const Waveform& w);

struct AudioFeatureConfig {
  int bands = 16;    // triangular filters spanning 0..Nyquist
  int layers = 2;    // layer 0 raw log energies, layer k is a width-3 causal
                     // moving average of layer k-1
  double fps = 25.0;
  double log_floor = 1e-8;
};

struct AudioFeatures {
  Tensor rows;      // [video_frames * layers, bands], frame-major layer-minor
  int video_frames = 0;
  int layers = 0;
  int bands = 0;
  bool padded = false;   // silence was appended to reach the requested length
  int pad_frames = 0;
};

// window length in samples for one video frame
int frame_window(int sample_rate, double fps);

// features for at least min_video_frames frames; shorter audio is zero-padded
// (silence) before analysis so the causal averages stay consistent across the
// boundary
AudioFeatures extract_features(const Waveform& w, const AudioFeatureConfig& cfg,
                               int min_video_frames = 0);

// per-video-frame aperture envelope in [0,1]: window RMS, normalized by the
// running maximum, then width-3 causal mean. drives the toy mouth and the
// sync metric.
std::vector<double> envelope(const Waveform& w, double fps);

// band energies for one analysis window, exposed for tests
std::vector<double> band_energies(const float* samples, int n, int sample_rate, int bands);

// learned projection of feature rows to model-dimension tokens. two linear
// layers; with square identity weights and zero biases tokens equal inputs,
// which pins the layout contract.
template <class T>
TensorT<T> project_tokens(const TensorT<T>& rows, const TensorT<T>& w1, const TensorT<T>& b1,
                          const TensorT<T>& w2, const TensorT<T>& b2) {
  return add_bias(matmul(add_bias(matmul(rows, w1), b1), w2), b2);
}

}  // namespace rap
