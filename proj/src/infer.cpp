#include "rap/infer.hpp"

#include <chrono>
#include <cmath>
#include <cstring>

namespace rap {

void validate(const StreamConfig& c) {
  if (c.clips < 1) throw FormatError("stream needs at least one clip");
  if (c.frames < 1) throw FormatError("clip length must be at least one latent frame");
  if (c.steps < 1) throw FormatError("denoising needs at least one step");
  if (!(c.cfg_scale >= 0) || !std::isfinite(c.cfg_scale))
    throw FormatError("guidance scale must be finite and nonnegative");
  if (c.overlap < 1) throw FormatError("clip overlap must be at least one latent frame");
  if (c.overlap >= c.frames)
    throw FormatError("overlap " + std::to_string(c.overlap) +
                      " must be smaller than the clip length " + std::to_string(c.frames));
}

CodecConfig codec_for(const ModelConfig& mc) {
  CodecConfig cc;
  cc.rf = mc.rf;
  const int pp = mc.latent_channels / (3 * mc.rf);
  const int p = int(std::lround(std::sqrt(double(pp))));
  if (p < 1 || 3 * p * p * mc.rf != mc.latent_channels)
    throw FormatError("latent channel count " + std::to_string(mc.latent_channels) +
                      " does not factor as 3*patch^2*rf with rf=" + std::to_string(mc.rf));
  cc.patch = p;
  return cc;
}

namespace {

// frames [start, start+count) of a [C,F,H,W] tensor
Tensor slice_latent_frames(const Tensor& x, int start, int count) {
  const int C = x.shape[0], F = x.shape[1], H = x.shape[2], W = x.shape[3];
  Tensor out({C, count, H, W});
  const size_t plane = size_t(H) * W;
  for (int c = 0; c < C; ++c)
    std::memcpy(out.data() + size_t(c) * count * plane,
                x.data() + (size_t(c) * F + size_t(start)) * plane,
                sizeof(float) * size_t(count) * plane);
  return out;
}

// overwrite frames [0, count) of x with src [C,count,H,W]
void paste_leading_frames(Tensor& x, const Tensor& src) {
  const int C = x.shape[0], F = x.shape[1], H = x.shape[2], W = x.shape[3];
  const int count = src.shape[1];
  const size_t plane = size_t(H) * W;
  for (int c = 0; c < C; ++c)
    std::memcpy(x.data() + size_t(c) * F * plane, src.data() + size_t(c) * count * plane,
                sizeof(float) * size_t(count) * plane);
}

Tensor slice_token_rows(const Tensor& a, int r0, int r1) {
  const int B = a.shape[1];
  Tensor out({r1 - r0, B});
  std::memcpy(out.data(), a.data() + size_t(r0) * B, sizeof(float) * out.numel());
  return out;
}

double wall_ms(std::chrono::steady_clock::time_point a, std::chrono::steady_clock::time_point b) {
  return std::chrono::duration<double, std::milli>(b - a).count();
}

}  // namespace

DenoiseResult denoise_clip(const ModelConfig& mc, Weights& w, const Tensor& x_ref,
                           const Tensor& audio_rows, const StreamConfig& sc, int clip_index,
                           const OverlapCache* prev, DenoiseTrace* trace) {
  validate(sc);
  if (clip_index < 1) throw ContractError("clip indices start at 1");
  const int C = mc.latent_channels, F = sc.frames, H = mc.rows, W = mc.cols;
  const int n = sc.overlap, T = sc.steps;
  if (clip_index > 1) {
    if (!prev) throw ContractError("clip " + std::to_string(clip_index) + " needs an overlap cache");
    if (int(prev->size()) != T)
      throw ContractError("overlap cache has " + std::to_string(prev->size()) + " entries, need " +
                          std::to_string(T));
  }

  // fresh noise per clip; the stream is reproducible from (seed, clip)
  Rng rng = Rng(sc.seed).derive(uint64_t(clip_index));
  Tensor x({C, F, H, W});
  for (size_t i = 0; i < x.numel(); ++i) x[i] = float(rng.normal());

  OverlapCache cache;
  cache.reserve(size_t(T));
  const Tensor no_audio({0, mc.audio_bands});
  const double dt = 1.0 / T;

  for (int k = 0; k < T; ++k) {
    const int s = T - k;
    const double t = double(s) / T;
    if (clip_index > 1) {
      const Tensor& inherit = (*prev)[size_t(k)];
      if (inherit.rank() != 4 || inherit.shape[0] != C || inherit.shape[1] != n ||
          inherit.shape[2] != H || inherit.shape[3] != W)
        throw ContractError("overlap cache entry for t=" + std::to_string(s) + "/" +
                            std::to_string(T) + " has shape " + shape_str(inherit.shape) +
                            ", need [" + std::to_string(C) + "," + std::to_string(n) + "," +
                            std::to_string(H) + "," + std::to_string(W) + "]");
      paste_leading_frames(x, inherit);
    }
    // snapshot after inheritance so the next clip sees exactly this state
    cache.push_back(slice_latent_frames(x, F - n, n));
    if (trace) {
      trace->states.push_back(x.clone());
      trace->ts.push_back(t);
      double ss = 0;
      for (size_t i = 0; i < x.numel(); ++i) ss += double(x[i]) * x[i];
      trace->state_rms.push_back(std::sqrt(ss / double(x.numel())));
    }

    Tensor v_cond = dit_forward(mc, w, x, x_ref, audio_rows, t);
    Tensor v = sc.cfg_scale == 1.0
                   ? std::move(v_cond)
                   : cfg_combine(dit_forward(mc, w, x, x_ref, no_audio, t), v_cond, sc.cfg_scale);
    for (size_t i = 0; i < x.numel(); ++i) x[i] = float(double(x[i]) - dt * double(v[i]));
  }
  return {std::move(x), std::move(cache)};
}

VideoClip trim_and_decode(const Tensor& latents, const CodecConfig& cc, int clip_index,
                          int overlap, float fps) {
  if (clip_index < 1) throw ContractError("clip indices start at 1");
  Tensor rgb = decode_latents(latents, cc);
  VideoClip out;
  out.fps = fps;
  if (clip_index == 1) {
    out.rgb = std::move(rgb);
    return out;
  }
  // the first overlap latent frames decode to video already emitted by the
  // previous clip: the collapsed static head plus rf frames per extra one
  const int drop = trim_drop(cc.rf, overlap);
  const int Tv = rgb.shape[1], H = rgb.shape[2], W = rgb.shape[3];
  if (drop >= Tv)
    throw ContractError("overlap trim of " + std::to_string(drop) +
                        " frames consumes the whole clip of " + std::to_string(Tv));
  const int keep = Tv - drop;
  out.rgb = Tensor({3, keep, H, W});
  const size_t plane = size_t(H) * W;
  for (int c = 0; c < 3; ++c)
    std::memcpy(out.rgb.data() + size_t(c) * keep * plane,
                rgb.data() + (size_t(c) * Tv + size_t(drop)) * plane,
                sizeof(float) * size_t(keep) * plane);
  return out;
}

StreamResult generate_stream(const ModelConfig& mc, Weights& w, const CodecConfig& cc,
                             const Tensor& ref_image, const Waveform& wav, const StreamConfig& sc,
                             float fps) {
  validate(mc);
  validate(sc);
  if (mc.rf != cc.rf)
    throw FormatError("model rf " + std::to_string(mc.rf) + " vs codec rf " +
                      std::to_string(cc.rf));
  if (mc.latent_channels != latent_channels(cc))
    throw FormatError("model channels " + std::to_string(mc.latent_channels) +
                      " vs codec channels " + std::to_string(latent_channels(cc)));
  if (ref_image.rank() != 3 || ref_image.shape[0] != 3)
    throw ShapeError("expected reference image [3,H,W], got " + shape_str(ref_image.shape));
  if (ref_image.shape[1] != mc.rows * cc.patch || ref_image.shape[2] != mc.cols * cc.patch)
    throw FormatError("reference image " + std::to_string(ref_image.shape[1]) + "x" +
                      std::to_string(ref_image.shape[2]) + " does not match the model grid " +
                      std::to_string(mc.rows * cc.patch) + "x" + std::to_string(mc.cols * cc.patch));
  if (!(fps > 0)) throw FormatError("frame rate must be positive");

  const int N = sc.clips, F = sc.frames, n = sc.overlap, rf = cc.rf;
  // latent frames spanned by the whole stream; clips advance by F-n
  const int span = (N - 1) * (F - n) + F;
  const int total_frames = 1 + rf * (span - 1);

  const int window = frame_window(wav.sample_rate, fps);
  const int have_frames = int(wav.samples.size()) / window;
  if (have_frames < total_frames) {
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "audio underrun: stream needs %.3f s (%d frames), waveform provides %.3f s "
                  "(%d full frames)",
                  double(total_frames) * window / wav.sample_rate, total_frames,
                  double(have_frames) * window / wav.sample_rate, have_frames);
    throw FormatError(buf);
  }

  AudioFeatureConfig ac;
  ac.bands = mc.audio_bands;
  ac.layers = mc.audio_layers;
  ac.fps = double(fps);
  AudioFeatures feat = extract_features(wav, ac, span * rf);
  const int R = mc.audio_rows_per_frame();

  Tensor x_ref = encode_reference(ref_image, cc, F);
  const int H = ref_image.shape[1], W = ref_image.shape[2];

  StreamResult res;
  res.video.fps = fps;
  res.video.rgb = Tensor({3, total_frames, H, W});
  const size_t plane = size_t(H) * W;

  OverlapCache cache;
  int at = 0;  // video frames emitted so far
  for (int i = 1; i <= N; ++i) {
    const int lat0 = (i - 1) * (F - n);
    Tensor rows = slice_token_rows(feat.rows, lat0 * R, (lat0 + F) * R);

    auto t0 = std::chrono::steady_clock::now();
    DenoiseResult d = denoise_clip(mc, w, x_ref, rows, sc, i, i == 1 ? nullptr : &cache);
    auto t1 = std::chrono::steady_clock::now();
    VideoClip clip = trim_and_decode(d.latents, cc, i, n, fps);
    auto t2 = std::chrono::steady_clock::now();
    cache = std::move(d.cache);

    if (i > 1) res.boundaries.push_back(at);
    const int Tc = clip.rgb.shape[1];
    for (int c = 0; c < 3; ++c) {
      float* dst = res.video.rgb.data() + (size_t(c) * total_frames + size_t(at)) * plane;
      const float* src = clip.rgb.data() + size_t(c) * Tc * plane;
      for (size_t j = 0; j < size_t(Tc) * plane; ++j)
        dst[j] = src[j] < 0.f ? 0.f : (src[j] > 1.f ? 1.f : src[j]);
    }
    at += Tc;

    ClipTiming ct;
    ct.clip = i;
    ct.ms_denoise = wall_ms(t0, t1);
    ct.ms_decode = wall_ms(t1, t2);
    const double total_s = (ct.ms_denoise + ct.ms_decode) / 1000.0;
    ct.fps = total_s > 0 ? double(Tc) / total_s : 0.0;
    res.timing.push_back(ct);
  }
  if (at != total_frames)
    throw ContractError("assembled " + std::to_string(at) + " frames, expected " +
                        std::to_string(total_frames));
  return res;
}

}  // namespace rap
