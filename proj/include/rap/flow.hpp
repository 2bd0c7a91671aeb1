#pragma once

// Rectified-flow training targets and the composite velocity loss.
//
// The forward interpolant runs from data (t=0) to noise (t=1):
//   x_t = t*x1 + (1-t)*x0,   target velocity u = x1 - x0.
// Sampling integrates t from 1 to 0 against the predicted velocity.
//
// The loss adds three mean-square terms, each averaged over its own element
// count: the plain velocity error, the face-masked error (still averaged over
// all elements, so the mask's footprint scales the term), and the error of
// frame-to-frame differences.  Clips with a single latent frame skip the
// temporal term.

#include <vector>

#include "rap/autodiff.hpp"
#include "rap/common.hpp"
#include "rap/tensor.hpp"

namespace rap {

template <class T>
TensorT<T> interpolate(const TensorT<T>& x0, const TensorT<T>& x1, double t) {
  check_same_shape(x0, x1, "interpolate");
  TensorT<T> y(x0.shape);
  for (size_t i = 0; i < y.numel(); ++i)
    y[i] = T(t * double(x1[i]) + (1.0 - t) * double(x0[i]));
  return y;
}

template <class T>
TensorT<T> target_velocity(const TensorT<T>& x0, const TensorT<T>& x1) {
  check_same_shape(x0, x1, "target_velocity");
  TensorT<T> y(x0.shape);
  for (size_t i = 0; i < y.numel(); ++i) y[i] = x1[i] - x0[i];
  return y;
}

struct FlowLossWeights {
  double face = 1.0;      // weight of the masked term
  double temporal = 1.0;  // weight of the frame-difference term
};

template <class T>
struct FlowLossTerms {
  TensorT<T> total;      // taped scalar fed to backward
  TensorT<T> diffusion;  // mean |v - u|^2
  TensorT<T> face;       // mean |m * (v - u)|^2 over all elements
  TensorT<T> temporal;   // mean |dv - du|^2 over frame deltas; zero if skipped
  bool has_temporal = false;
};

// v is the (usually taped) prediction; u and mask are constants shaped like v.
template <class T>
FlowLossTerms<T> composite_loss(const TensorT<T>& v, const TensorT<T>& u, const TensorT<T>& mask,
                                const FlowLossWeights& lw = {}) {
  check_same_shape(v, u, "composite_loss");
  check_same_shape(v, mask, "composite_loss mask");
  if (v.rank() != 4) throw ShapeError("composite_loss: expected [C,F,H,W], got " + shape_str(v.shape));
  FlowLossTerms<T> out;
  auto r = sub(v, u);
  out.diffusion = mean_all(mul(r, r));
  auto mr = mul(mask, r);
  out.face = mean_all(mul(mr, mr));
  auto total = add(out.diffusion, scale(out.face, lw.face));
  out.has_temporal = v.dim(1) > 1;
  if (out.has_temporal) {
    auto dr = sub(frame_delta(v), frame_delta(u));
    out.temporal = mean_all(mul(dr, dr));
    total = add(total, scale(out.temporal, lw.temporal));
  } else {
    out.temporal = TensorT<T>({1});
  }
  out.total = total;
  return out;
}

// v_u + s*(v_c - v_u), combined in double.  s of exactly 0 or 1 returns the
// corresponding input tensor itself.
template <class T>
TensorT<T> cfg_combine(const TensorT<T>& v_uncond, const TensorT<T>& v_cond, double s) {
  if (s == 1.0) return v_cond;
  if (s == 0.0) return v_uncond;
  check_same_shape(v_uncond, v_cond, "cfg_combine");
  TensorT<T> y(v_uncond.shape);
  for (size_t i = 0; i < y.numel(); ++i) {
    double u = double(v_uncond[i]);
    y[i] = T(u + s * (double(v_cond[i]) - u));
  }
  return y;
}

}  // namespace rap
