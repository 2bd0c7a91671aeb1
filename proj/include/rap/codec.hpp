#pragma once

// Video <-> latent codec.
//
// A video clip [3,T,H,W] maps to a latent grid [C,F,H/p,W/p].  Latent frame 0
// holds the clip's first video frame replicated rf times along the block's
// temporal axis (the "static head"); latent frame j >= 1 covers video frames
// [1 + rf*(j-1), 1 + rf*j).  So T = 1 + rf*(F-1).
//
// Each (rf, p, p) block is transformed by an orthonormal separable Hadamard:
// one butterfly pass per axis, each stage scaled by 1/sqrt(2).  The transform
// is its own inverse, so decode runs the identical passes.  Decoding always
// collapses latent frame 0 back to a single video frame by taking the block's
// first temporal sample.
//
// Channel packing: c-major, then block-temporal, then block-row, block-col:
//   channel = ((c*rf + bt)*p + bi)*p + bj,  C = 3*p*p*rf.

#include "rap/tensor.hpp"

namespace rap {

struct CodecConfig {
  int patch = 8;  // spatial patch side, power of two
  int rf = 4;     // temporal block length, power of two
};

// C = 3 * patch^2 * rf.
int latent_channels(const CodecConfig& cc);

// F for a T-frame video; throws FormatError unless T = 1 + rf*k.
int latent_frame_count(int video_frames, int rf);

// T = 1 + rf*(F-1) for an F-frame latent.
int video_frame_count(int latent_frames, int rf);

// In-place orthonormal Hadamard butterfly over n strided samples; n must be a
// power of two.  Self-inverse.
void hadamard_inplace(float* x, int n, std::ptrdiff_t stride);

// [3,T,H,W] -> [C,F,H/p,W/p].
Tensor encode_video(const Tensor& rgb, const CodecConfig& cc);

// [C,F,h,w] -> [3, 1 + rf*(F-1), h*p, w*p].
Tensor decode_latents(const Tensor& lat, const CodecConfig& cc);

// Single image [3,H,W] -> [C,frames,H/p,W/p]: the static-head encoding of the
// image copied into every latent frame.  Used as the reference channel block.
Tensor encode_reference(const Tensor& img, const CodecConfig& cc, int frames);

// Pixel mask [T,H,W] -> latent mask [C,F,H/p,W/p]: a cell is 1 when any
// masked pixel falls inside its patch during its block's video frames (the
// static head looks only at frame 0).  All channels share the cell value.
Tensor latent_mask(const Tensor& mask, const CodecConfig& cc);

}  // namespace rap
