#include "rap/codec.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "rap/common.hpp"

namespace rap {

namespace {

bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

void check_config(const CodecConfig& cc) {
  if (!is_pow2(cc.patch))
    throw FormatError("patch size must be a power of two, got " + std::to_string(cc.patch));
  if (!is_pow2(cc.rf))
    throw FormatError("temporal block length must be a power of two, got " +
                      std::to_string(cc.rf));
}

// Walsh-Hadamard butterfly on a gathered contiguous block laid out [rf,p,p],
// applied separably along all three axes.
void transform_block(std::vector<float>& blk, int rf, int p) {
  for (int bi = 0; bi < p; ++bi)
    for (int bj = 0; bj < p; ++bj)
      hadamard_inplace(blk.data() + bi * p + bj, rf, std::ptrdiff_t(p) * p);
  for (int bt = 0; bt < rf; ++bt) {
    for (int bj = 0; bj < p; ++bj)
      hadamard_inplace(blk.data() + bt * p * p + bj, p, p);
    for (int bi = 0; bi < p; ++bi)
      hadamard_inplace(blk.data() + bt * p * p + bi * p, p, 1);
  }
}

}  // namespace

int latent_channels(const CodecConfig& cc) {
  check_config(cc);
  return 3 * cc.patch * cc.patch * cc.rf;
}

int latent_frame_count(int video_frames, int rf) {
  if (video_frames < 1)
    throw FormatError("video frame count must be positive, got " + std::to_string(video_frames));
  if ((video_frames - 1) % rf != 0)
    throw FormatError("video frame count " + std::to_string(video_frames) +
                      " is not 1 + k*" + std::to_string(rf));
  return 1 + (video_frames - 1) / rf;
}

int video_frame_count(int latent_frames, int rf) {
  if (latent_frames < 1)
    throw FormatError("latent frame count must be positive, got " +
                      std::to_string(latent_frames));
  return 1 + rf * (latent_frames - 1);
}

void hadamard_inplace(float* x, int n, std::ptrdiff_t stride) {
  if (!is_pow2(n))
    throw FormatError("hadamard length must be a power of two, got " + std::to_string(n));
  const float r = float(1.0 / std::sqrt(2.0));
  for (int len = 1; len < n; len <<= 1)
    for (int i = 0; i < n; i += 2 * len)
      for (int j = i; j < i + len; ++j) {
        float a = x[j * stride];
        float b = x[(j + len) * stride];
        x[j * stride] = (a + b) * r;
        x[(j + len) * stride] = (a - b) * r;
      }
}

Tensor encode_video(const Tensor& rgb, const CodecConfig& cc) {
  check_config(cc);
  if (rgb.rank() != 4 || rgb.shape[0] != 3)
    throw ShapeError("expected video [3,T,H,W], got " + shape_str(rgb.shape));
  const int p = cc.patch, rf = cc.rf;
  const int T = rgb.shape[1], H = rgb.shape[2], W = rgb.shape[3];
  if (H % p != 0 || W % p != 0)
    throw FormatError("frame size " + std::to_string(H) + "x" + std::to_string(W) +
                      " is not divisible by patch size " + std::to_string(p));
  const int F = latent_frame_count(T, rf);
  const int hl = H / p, wl = W / p;
  const int C = 3 * p * p * rf;

  Tensor out({C, F, hl, wl});
  std::vector<float> blk(size_t(rf) * p * p);
  const float* v = rgb.data();
  float* o = out.data();
  for (int f = 0; f < F; ++f)
    for (int u = 0; u < hl; ++u)
      for (int w = 0; w < wl; ++w)
        for (int c = 0; c < 3; ++c) {
          for (int bt = 0; bt < rf; ++bt) {
            int t = f == 0 ? 0 : 1 + (f - 1) * rf + bt;
            for (int bi = 0; bi < p; ++bi)
              for (int bj = 0; bj < p; ++bj)
                blk[size_t(bt * p + bi) * p + bj] =
                    v[((size_t(c) * T + t) * H + u * p + bi) * W + w * p + bj];
          }
          transform_block(blk, rf, p);
          for (int bt = 0; bt < rf; ++bt)
            for (int bi = 0; bi < p; ++bi)
              for (int bj = 0; bj < p; ++bj) {
                int ch = ((c * rf + bt) * p + bi) * p + bj;
                o[((size_t(ch) * F + f) * hl + u) * wl + w] = blk[size_t(bt * p + bi) * p + bj];
              }
        }
  return out;
}

Tensor decode_latents(const Tensor& lat, const CodecConfig& cc) {
  check_config(cc);
  const int p = cc.patch, rf = cc.rf;
  const int C = 3 * p * p * rf;
  if (lat.rank() != 4 || lat.shape[0] != C)
    throw ShapeError("expected latents [" + std::to_string(C) + ",F,h,w], got " +
                     shape_str(lat.shape));
  const int F = lat.shape[1], hl = lat.shape[2], wl = lat.shape[3];
  const int T = video_frame_count(F, rf);
  const int H = hl * p, W = wl * p;

  Tensor out({3, T, H, W});
  std::vector<float> blk(size_t(rf) * p * p);
  const float* l = lat.data();
  float* v = out.data();
  for (int f = 0; f < F; ++f)
    for (int u = 0; u < hl; ++u)
      for (int w = 0; w < wl; ++w)
        for (int c = 0; c < 3; ++c) {
          for (int bt = 0; bt < rf; ++bt)
            for (int bi = 0; bi < p; ++bi)
              for (int bj = 0; bj < p; ++bj) {
                int ch = ((c * rf + bt) * p + bi) * p + bj;
                blk[size_t(bt * p + bi) * p + bj] = l[((size_t(ch) * F + f) * hl + u) * wl + w];
              }
          transform_block(blk, rf, p);
          int nbt = f == 0 ? 1 : rf;
          for (int bt = 0; bt < nbt; ++bt) {
            int t = f == 0 ? 0 : 1 + (f - 1) * rf + bt;
            for (int bi = 0; bi < p; ++bi)
              for (int bj = 0; bj < p; ++bj)
                v[((size_t(c) * T + t) * H + u * p + bi) * W + w * p + bj] =
                    blk[size_t(bt * p + bi) * p + bj];
          }
        }
  return out;
}

Tensor latent_mask(const Tensor& mask, const CodecConfig& cc) {
  check_config(cc);
  if (mask.rank() != 3) throw ShapeError("expected mask [T,H,W], got " + shape_str(mask.shape));
  const int p = cc.patch, rf = cc.rf;
  const int T = mask.shape[0], H = mask.shape[1], W = mask.shape[2];
  if (H % p != 0 || W % p != 0)
    throw FormatError("mask size " + std::to_string(H) + "x" + std::to_string(W) +
                      " is not divisible by patch size " + std::to_string(p));
  const int F = latent_frame_count(T, rf);
  const int hl = H / p, wl = W / p;
  const int C = 3 * p * p * rf;
  Tensor out({C, F, hl, wl});
  const float* m = mask.data();
  float* o = out.data();
  for (int f = 0; f < F; ++f)
    for (int u = 0; u < hl; ++u)
      for (int w = 0; w < wl; ++w) {
        bool hit = false;
        int t0 = f == 0 ? 0 : 1 + (f - 1) * rf;
        int nt = f == 0 ? 1 : rf;
        for (int bt = 0; bt < nt && !hit; ++bt)
          for (int bi = 0; bi < p && !hit; ++bi)
            for (int bj = 0; bj < p && !hit; ++bj)
              hit = m[(size_t(t0 + bt) * H + u * p + bi) * W + w * p + bj] != 0.0f;
        if (hit)
          for (int ch = 0; ch < C; ++ch) o[((size_t(ch) * F + f) * hl + u) * wl + w] = 1.0f;
      }
  return out;
}

Tensor encode_reference(const Tensor& img, const CodecConfig& cc, int frames) {
  check_config(cc);
  if (img.rank() != 3 || img.shape[0] != 3)
    throw ShapeError("expected image [3,H,W], got " + shape_str(img.shape));
  if (frames < 1)
    throw FormatError("latent frame count must be positive, got " + std::to_string(frames));
  Tensor one({3, 1, img.shape[1], img.shape[2]}, *img.buf);
  Tensor head = encode_video(one, cc);  // [C,1,h,w]
  const int C = head.shape[0], hl = head.shape[2], wl = head.shape[3];
  Tensor out({C, frames, hl, wl});
  const float* h = head.data();
  float* o = out.data();
  for (int ch = 0; ch < C; ++ch)
    for (int f = 0; f < frames; ++f)
      for (size_t s = 0; s < size_t(hl) * wl; ++s)
        o[(size_t(ch) * frames + f) * hl * wl + s] = h[size_t(ch) * hl * wl + s];
  return out;
}

}  // namespace rap
