#pragma once

// Synthetic talking-sprite corpus.
//
// Every sample pairs an amplitude-modulated tone with a rendered portrait: a
// drifting head disc with eyes, and a fixed mouth box whose opening height
// tracks the audio envelope frame by frame.  The mouth cavity alternates
// between two shades on even and odd frames, so frame-to-frame intensity
// change inside the mouth region scales with how far the mouth is open; a
// motion-energy probe of that region recovers the envelope.
//
// The tone is a 1 kHz carrier (an integer number of periods per video frame)
// under a slow sinusoidal modulator that starts near its peak, which pins the
// envelope's running-max normalization within the first frames.

#include <cstdint>
#include <string>
#include <vector>

#include "rap/audio.hpp"
#include "rap/io.hpp"
#include "rap/tensor.hpp"

namespace rap {

struct DatasetConfig {
  int frames = 33;
  int height = 32;
  int width = 32;
  double fps = 25.0;
  int sample_rate = 16000;
  int mouth_open_max = 10;  // full aperture in pixels
  // mouth box, half-open pixel ranges
  int mouth_r0 = 16, mouth_r1 = 26;
  int mouth_c0 = 11, mouth_c1 = 21;
  // head disc
  double head_row = 16.0, head_col = 15.0, head_radius = 13.0;
  double drift_amp = 1.5;
};

struct ToySampleParams {
  double mod_freq = 0;     // Hz, modulator
  double mod_phase = 0;    // radians, starts near peak
  double drift_freq = 0;   // Hz, head bob
  double drift_phase = 0;
};

struct ToySample {
  Waveform audio;
  VideoClip video;
  Tensor mask;  // [T,H,W], 1 inside the mouth box
  ToySampleParams params;
  std::vector<double> aperture;  // pixels open per frame, as rendered
};

void validate(const DatasetConfig& cfg);

// stock 32x32 layout scaled to another frame size, for models trained on a
// different grid
DatasetConfig scaled_dataset(int height, int width);

// Deterministic in the seed; the rng draw order is part of the format.
ToySample synth_sample(const DatasetConfig& cfg, const Rng& seed);

// Renders one frame directly; aperture_px in [0, mouth_open_max].
void render_frame(const DatasetConfig& cfg, double head_row, int aperture_px, bool odd_frame,
                  float* rgb /* [3,H,W] */);

struct CorpusEntry {
  std::string wav, video, mask;
  ToySampleParams params;
};

// Writes sample_%05d.{wav,rapv,rapm} under dir plus manifest.csv; returns the
// entries in written order.  Sample i draws from seed.derive(i).
std::vector<CorpusEntry> write_corpus(const DatasetConfig& cfg, const std::string& dir, int count,
                                      uint64_t seed);

// Reads dir/manifest.csv; paths come back joined with dir.
std::vector<CorpusEntry> read_manifest(const std::string& dir);

}  // namespace rap
