#pragma once

// Diffusion transformer over latent tokens, conditioned on a reference image
// (channel concat), a scalar flow time (adaptive layer norm), and audio token
// rows (cross attention).
//
// Each block runs three pre-norm sublayers: spatiotemporal self attention,
// audio cross attention, and a gelu MLP.  Every sublayer is wrapped in
// timestep modulation: y = x + gate * sub(norm(x) * (1 + scale) + shift).
//
// Cross attention carries two independent projection sets.  The "full" set
// attends every latent token to every audio row; the "window" set restricts
// each latent frame's tokens to that frame's slice of audio rows.  Block i of
// L blends them as alpha * window + (1 - alpha) * full with
// alpha = clamp(w * i / L + delta, 0, 1); alpha of exactly 0 or 1 skips the
// dead branch entirely, so degenerate schedules reduce bitwise to the
// single-branch model.
//
// Audio rows carry no global position, only a sinusoidal slot code that
// repeats every rf * audio_layers rows.  Full attention therefore cannot tell
// audio frames apart by position; the window branch gets alignment from its
// partition structure instead.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "rap/autodiff.hpp"
#include "rap/common.hpp"
#include "rap/tensor.hpp"

namespace rap {

struct HybridSchedule {
  double w = 0.0;      // per-block slope of the window blend
  double delta = 0.0;  // blend offset
};

// window-branch weight for block i of `layers`
inline double window_blend(const HybridSchedule& h, int block, int layers) {
  double a = h.w * double(block) / double(layers) + h.delta;
  return std::min(1.0, std::max(0.0, a));
}

struct ModelConfig {
  int dim = 64;
  int layers = 6;
  int heads = 4;
  int ffn = 256;
  int rows = 4, cols = 4;    // latent spatial grid
  int latent_channels = 768;
  int audio_bands = 16;
  int audio_layers = 2;
  int rf = 4;                // video frames per latent frame
  HybridSchedule hybrid;

  int audio_rows_per_frame() const { return rf * audio_layers; }
  int tokens_per_frame() const { return rows * cols; }
};

inline void validate(const ModelConfig& c) {
  if (c.dim <= 0 || c.dim % 8 != 0)
    throw FormatError("model dim must be a positive multiple of 8, got " + std::to_string(c.dim));
  if (c.heads <= 0 || c.dim % c.heads != 0)
    throw FormatError("model dim " + std::to_string(c.dim) + " is not divisible by " +
                      std::to_string(c.heads) + " heads");
  if (c.layers <= 0) throw FormatError("layer count must be positive");
  if (c.ffn <= 0) throw FormatError("ffn width must be positive");
  if (c.rows <= 0 || c.cols <= 0) throw FormatError("latent grid must be positive");
  if (c.latent_channels <= 0) throw FormatError("latent channel count must be positive");
  if (c.audio_bands <= 0 || c.audio_layers <= 0 || c.rf <= 0)
    throw FormatError("audio token geometry must be positive");
}

template <class T>
struct AttnW {
  TensorT<T> wq, bq, wk, bk, wv, bv, wo, bo;
};

template <class T>
struct BlockW {
  TensorT<T> mod_w, mod_b;  // [D, 9D], [9D]: scale, shift, gate per sublayer
  AttnW<T> self_attn, cross_full, cross_window;
  TensorT<T> ffn_w1, ffn_b1, ffn_w2, ffn_b2;
};

template <class T>
struct WeightsT {
  TensorT<T> in_w, in_b;  // [2C, D]
  TensorT<T> time_w1, time_b1, time_w2, time_b2;
  TensorT<T> audio_w1, audio_b1, audio_w2, audio_b2;  // [B,D], [D,D]
  TensorT<T> audio_null;                              // [D], stands in for dropped audio
  std::vector<BlockW<T>> blocks;
  TensorT<T> final_mod_w, final_mod_b;  // [D, 2D]
  TensorT<T> out_w, out_b;              // [D, C]
};

using Weights = WeightsT<float>;

namespace detail {

template <class T, class Fn>
void visit_attn(AttnW<T>& a, const std::string& p, Fn&& fn) {
  fn(p + ".q.w", a.wq);
  fn(p + ".q.b", a.bq);
  fn(p + ".k.w", a.wk);
  fn(p + ".k.b", a.bk);
  fn(p + ".v.w", a.wv);
  fn(p + ".v.b", a.bv);
  fn(p + ".o.w", a.wo);
  fn(p + ".o.b", a.bo);
}

}  // namespace detail

// Enumerates every parameter tensor in a fixed order with a stable name.
// Checkpoints, the optimizer, and gradient checks all key off this order.
template <class T, class Fn>
void visit_weights(WeightsT<T>& w, Fn&& fn) {
  fn("in.w", w.in_w);
  fn("in.b", w.in_b);
  fn("time.w1", w.time_w1);
  fn("time.b1", w.time_b1);
  fn("time.w2", w.time_w2);
  fn("time.b2", w.time_b2);
  fn("audio.w1", w.audio_w1);
  fn("audio.b1", w.audio_b1);
  fn("audio.w2", w.audio_w2);
  fn("audio.b2", w.audio_b2);
  fn("audio.null", w.audio_null);
  for (size_t i = 0; i < w.blocks.size(); ++i) {
    std::string p = "blk" + std::to_string(i);
    auto& b = w.blocks[i];
    fn(p + ".mod.w", b.mod_w);
    fn(p + ".mod.b", b.mod_b);
    detail::visit_attn(b.self_attn, p + ".self", fn);
    detail::visit_attn(b.cross_full, p + ".xfull", fn);
    detail::visit_attn(b.cross_window, p + ".xwin", fn);
    fn(p + ".ffn.w1", b.ffn_w1);
    fn(p + ".ffn.b1", b.ffn_b1);
    fn(p + ".ffn.w2", b.ffn_w2);
    fn(p + ".ffn.b2", b.ffn_b2);
  }
  fn("final.mod.w", w.final_mod_w);
  fn("final.mod.b", w.final_mod_b);
  fn("out.w", w.out_w);
  fn("out.b", w.out_b);
}

template <class T>
WeightsT<T> make_weights(const ModelConfig& c) {
  validate(c);
  const int D = c.dim, C = c.latent_channels, B = c.audio_bands, F = c.ffn;
  auto m = [](int r, int cc) { return TensorT<T>({r, cc}); };
  auto v = [](int n) { return TensorT<T>({n}); };
  WeightsT<T> w;
  w.in_w = m(2 * C, D);
  w.in_b = v(D);
  w.time_w1 = m(D, D);
  w.time_b1 = v(D);
  w.time_w2 = m(D, D);
  w.time_b2 = v(D);
  w.audio_w1 = m(B, D);
  w.audio_b1 = v(D);
  w.audio_w2 = m(D, D);
  w.audio_b2 = v(D);
  w.audio_null = v(D);
  w.blocks.resize(size_t(c.layers));
  for (auto& b : w.blocks) {
    b.mod_w = m(D, 9 * D);
    b.mod_b = v(9 * D);
    for (AttnW<T>* a : {&b.self_attn, &b.cross_full, &b.cross_window}) {
      a->wq = m(D, D);
      a->bq = v(D);
      a->wk = m(D, D);
      a->bk = v(D);
      a->wv = m(D, D);
      a->bv = v(D);
      a->wo = m(D, D);
      a->bo = v(D);
    }
    b.ffn_w1 = m(D, F);
    b.ffn_b1 = v(F);
    b.ffn_w2 = m(F, D);
    b.ffn_b2 = v(D);
  }
  w.final_mod_w = m(D, 2 * D);
  w.final_mod_b = v(2 * D);
  w.out_w = m(D, C);
  w.out_b = v(C);
  return w;
}

inline uint64_t fnv1a(const std::string& s) {
  uint64_t h = 1469598103934665603ULL;
  for (char ch : s) {
    h ^= uint8_t(ch);
    h *= 1099511628211ULL;
  }
  return h;
}

// Seeded per-tensor init.  Each tensor draws from a stream derived from its
// name, so values do not depend on enumeration order.  Matrices get
// fan-in-scaled normals; modulation heads and the null audio token start near
// zero but not at zero, keeping every gradient path live from step one;
// biases start at zero.
template <class T>
WeightsT<T> init_weights(const ModelConfig& c, const Rng& seed) {
  WeightsT<T> w = make_weights<T>(c);
  visit_weights(w, [&](const std::string& name, TensorT<T>& t) {
    Rng r = seed.derive(fnv1a(name));
    bool near_zero = name.find("mod.w") != std::string::npos || name == "audio.null";
    if (t.rank() == 2 && !near_zero) {
      double s = 1.0 / std::sqrt(double(t.dim(0)));
      for (size_t i = 0; i < t.numel(); ++i) t[i] = T(r.normal() * s);
    } else if (near_zero) {
      for (size_t i = 0; i < t.numel(); ++i) t[i] = T(r.normal() * 0.02);
    } else {
      for (size_t i = 0; i < t.numel(); ++i) t[i] = T(0);
    }
  });
  return w;
}

inline long long param_count(const ModelConfig& c) {
  long long D = c.dim, C = c.latent_channels, B = c.audio_bands, F = c.ffn, L = c.layers;
  long long attn = 4 * (D * D + D);
  long long blk = D * 9 * D + 9 * D + 3 * attn + D * F + F + F * D + D;
  long long n = 0;
  n += 2 * C * D + D;                      // patch in
  n += 2 * (D * D + D);                    // time mlp
  n += B * D + D + D * D + D + D;          // audio proj + null token
  n += L * blk;
  n += D * 2 * D + 2 * D;                  // final modulation
  n += D * C + C;                          // out head
  return n;
}

struct ForwardOpts {
  bool skip_self_attn = false;  // test hook: isolates the conditioning path
};

namespace detail {

inline void sinusoid_fill(std::vector<double>& row, int off, int d, double pos) {
  for (int i = 0; i < d / 2; ++i) {
    double freq = std::pow(10000.0, -2.0 * double(i) / double(d));
    row[size_t(off + 2 * i)] = std::sin(pos * freq);
    row[size_t(off + 2 * i + 1)] = std::cos(pos * freq);
  }
}

// [F*rows*cols, D] constant: D/2 dims encode frame, D/4 row, D/4 column
template <class T>
TensorT<T> latent_positions(const ModelConfig& c, int frames) {
  const int D = c.dim, HW = c.tokens_per_frame();
  TensorT<T> out({frames * HW, D});
  std::vector<double> row(static_cast<size_t>(D));
  for (int f = 0; f < frames; ++f)
    for (int u = 0; u < c.rows; ++u)
      for (int vv = 0; vv < c.cols; ++vv) {
        sinusoid_fill(row, 0, D / 2, double(f));
        sinusoid_fill(row, D / 2, D / 4, double(u));
        sinusoid_fill(row, 3 * D / 4, D / 4, double(vv));
        T* dst = out.data() + (size_t(f) * HW + size_t(u) * c.cols + vv) * D;
        for (int i = 0; i < D; ++i) dst[i] = T(row[size_t(i)]);
      }
  return out;
}

// [M, D] constant repeating every rf*audio_layers rows
template <class T>
TensorT<T> audio_slot_positions(const ModelConfig& c, int m) {
  const int D = c.dim, period = c.audio_rows_per_frame();
  TensorT<T> out({m, D});
  std::vector<double> row(static_cast<size_t>(D));
  for (int r = 0; r < m; ++r) {
    sinusoid_fill(row, 0, D, double(r % period));
    for (int i = 0; i < D; ++i) out.data()[size_t(r) * D + i] = T(row[size_t(i)]);
  }
  return out;
}

template <class T>
TensorT<T> time_features(double t, int dim) {
  TensorT<T> out({1, dim});
  std::vector<double> row(static_cast<size_t>(dim));
  sinusoid_fill(row, 0, dim, 1000.0 * t);
  for (int i = 0; i < dim; ++i) out[size_t(i)] = T(row[size_t(i)]);
  return out;
}

template <class T>
TensorT<T> linear(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b) {
  return add_bias(matmul(x, w), b);
}

// multi-head scaled dot-product attention on pre-projected q/k/v
template <class T>
TensorT<T> attend(const TensorT<T>& q, const TensorT<T>& k, const TensorT<T>& v, int heads) {
  const int D = q.dim(1), dh = D / heads;
  std::vector<TensorT<T>> outs;
  outs.reserve(size_t(heads));
  for (int h = 0; h < heads; ++h) {
    auto qh = slice_cols(q, h * dh, (h + 1) * dh);
    auto kh = slice_cols(k, h * dh, (h + 1) * dh);
    auto vh = slice_cols(v, h * dh, (h + 1) * dh);
    auto s = scale(matmul(qh, kh, false, true), 1.0 / std::sqrt(double(dh)));
    outs.push_back(matmul(softmax_rows(s), vh));
  }
  return heads == 1 ? outs[0] : concat_cols(outs);
}

}  // namespace detail

// Predicts a velocity field from a noisy latent clip.
//   x_t    [C,F,H,W] noisy latents
//   x_ref  [C,F,H,W] reference image latents (static head in every frame)
//   audio  [F*rf*audio_layers, bands] feature rows, or an empty tensor for
//          the unconditional pass (the learned null token stands in)
//   t      flow time in [0,1]
// Returns [C,F,H,W].  F is free; everything positional is recomputed per call.
template <class T>
TensorT<T> dit_forward(const ModelConfig& cfg, WeightsT<T>& w, const TensorT<T>& x_t,
                       const TensorT<T>& x_ref, const TensorT<T>& audio, double t,
                       const ForwardOpts& opts = {}) {
  validate(cfg);
  const int C = cfg.latent_channels, D = cfg.dim, HW = cfg.tokens_per_frame();
  if (x_t.rank() != 4 || x_t.shape[0] != C || x_t.shape[2] != cfg.rows ||
      x_t.shape[3] != cfg.cols)
    throw ShapeError("expected latents [" + std::to_string(C) + ",F," + std::to_string(cfg.rows) +
                     "," + std::to_string(cfg.cols) + "], got " + shape_str(x_t.shape));
  check_same_shape(x_ref, x_t, "reference latents");
  const int F = x_t.shape[1];
  const int M = F * cfg.audio_rows_per_frame();
  if (audio.numel() != 0 &&
      (audio.rank() != 2 || audio.dim(0) != M || audio.dim(1) != cfg.audio_bands))
    throw ShapeError("expected audio rows [" + std::to_string(M) + "," +
                     std::to_string(cfg.audio_bands) + "], got " + shape_str(audio.shape));

  // token stream with additive positions
  std::vector<TensorT<T>> tok{tokens_from_latent(x_t), tokens_from_latent(x_ref)};
  auto h = detail::linear(concat_cols(tok), w.in_w, w.in_b);
  h = add(h, detail::latent_positions<T>(cfg, F));

  // timestep embedding
  auto temb = detail::linear(
      gelu(detail::linear(detail::time_features<T>(t, D), w.time_w1, w.time_b1)), w.time_w2,
      w.time_b2);

  // audio tokens: projected rows, or the null token in every slot
  TensorT<T> atok;
  if (audio.numel() == 0) {
    atok = add_bias(TensorT<T>({M, D}), w.audio_null);
  } else {
    atok = detail::linear(detail::linear(audio, w.audio_w1, w.audio_b1), w.audio_w2, w.audio_b2);
  }
  atok = add(atok, detail::audio_slot_positions<T>(cfg, M));

  TensorT<T> ln_g = TensorT<T>::full({D}, T(1));
  TensorT<T> ln_b({D});
  const int R = cfg.audio_rows_per_frame();

  for (int i = 0; i < cfg.layers; ++i) {
    auto& bw = w.blocks[size_t(i)];
    auto mod = add_bias(matmul(temb, bw.mod_w), bw.mod_b);  // [1, 9D]
    auto ms = [&](int k) { return reshape(slice_cols(mod, k * D, (k + 1) * D), {D}); };

    if (!opts.skip_self_attn) {
      auto hn = rowwise_mad(layer_norm(h, ln_g, ln_b), ms(0), ms(1));
      auto& a = bw.self_attn;
      auto sa = detail::attend(detail::linear(hn, a.wq, a.bq), detail::linear(hn, a.wk, a.bk),
                               detail::linear(hn, a.wv, a.bv), cfg.heads);
      h = add(h, rowwise_mul(detail::linear(sa, a.wo, a.bo), ms(2)));
    }

    {
      double alpha = window_blend(cfg.hybrid, i, cfg.layers);
      auto hn = rowwise_mad(layer_norm(h, ln_g, ln_b), ms(3), ms(4));
      TensorT<T> cross;
      TensorT<T> full, win;
      if (alpha < 1.0) {
        auto& a = bw.cross_full;
        full = detail::linear(
            detail::attend(detail::linear(hn, a.wq, a.bq), detail::linear(atok, a.wk, a.bk),
                           detail::linear(atok, a.wv, a.bv), cfg.heads),
            a.wo, a.bo);
      }
      if (alpha > 0.0) {
        auto& a = bw.cross_window;
        auto q = detail::linear(hn, a.wq, a.bq);
        auto k = detail::linear(atok, a.wk, a.bk);
        auto v = detail::linear(atok, a.wv, a.bv);
        std::vector<TensorT<T>> per_frame;
        per_frame.reserve(size_t(F));
        for (int f = 0; f < F; ++f)
          per_frame.push_back(detail::attend(slice_rows(q, f * HW, (f + 1) * HW),
                                             slice_rows(k, f * R, (f + 1) * R),
                                             slice_rows(v, f * R, (f + 1) * R), cfg.heads));
        win = detail::linear(F == 1 ? per_frame[0] : concat_rows(per_frame), a.wo, a.bo);
      }
      if (alpha == 0.0)
        cross = full;
      else if (alpha == 1.0)
        cross = win;
      else
        cross = add(scale(win, alpha), scale(full, 1.0 - alpha));
      h = add(h, rowwise_mul(cross, ms(5)));
    }

    {
      auto hn = rowwise_mad(layer_norm(h, ln_g, ln_b), ms(6), ms(7));
      auto f2 = detail::linear(gelu(detail::linear(hn, bw.ffn_w1, bw.ffn_b1)), bw.ffn_w2,
                               bw.ffn_b2);
      h = add(h, rowwise_mul(f2, ms(8)));
    }
  }

  auto fm = add_bias(matmul(temb, w.final_mod_w), w.final_mod_b);  // [1, 2D]
  auto fs = [&](int k) { return reshape(slice_cols(fm, k * D, (k + 1) * D), {D}); };
  auto hn = rowwise_mad(layer_norm(h, ln_g, ln_b), fs(0), fs(1));
  return latent_from_tokens(detail::linear(hn, w.out_w, w.out_b), F, cfg.rows, cfg.cols);
}

}  // namespace rap
