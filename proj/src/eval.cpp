#include "rap/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <sstream>

namespace rap {

void validate(const EvalConfig& c) {
  if (c.samples < 1) throw FormatError("evaluation needs at least one held-out sample");
  if (c.frames < 2) throw FormatError("evaluation clips need at least two latent frames");
  if (c.steps < 1) throw FormatError("evaluation needs at least one denoising step");
  if (!(c.cfg_scale >= 0) || !std::isfinite(c.cfg_scale))
    throw FormatError("guidance scale must be finite and nonnegative");
  if (c.overlap < 1 || c.overlap >= c.frames)
    throw FormatError("evaluation overlap must be in [1, frames)");
  if (c.probe_clips < 2) throw FormatError("the probe stream needs at least two clips");
}

PixelBox mouth_box(const DatasetConfig& d) {
  return PixelBox{d.mouth_r0, d.mouth_r1, d.mouth_c0, d.mouth_c1};
}

Tensor first_frame(const VideoClip& v) {
  const int T = v.rgb.shape[1], H = v.rgb.shape[2], W = v.rgb.shape[3];
  Tensor img({3, H, W});
  for (int c = 0; c < 3; ++c)
    std::memcpy(img.data() + size_t(c) * H * W, v.rgb.data() + size_t(c) * T * H * W,
                sizeof(float) * size_t(H) * W);
  return img;
}

namespace {

StreamConfig stream_for(const EvalConfig& ec, int clips, uint64_t seed) {
  StreamConfig sc;
  sc.clips = clips;
  sc.frames = ec.frames;
  sc.steps = ec.steps;
  sc.cfg_scale = ec.cfg_scale;
  sc.overlap = ec.overlap;
  sc.seed = seed;
  return sc;
}

bool same_model(const ModelConfig& a, const ModelConfig& b) {
  return a.dim == b.dim && a.layers == b.layers && a.heads == b.heads && a.ffn == b.ffn &&
         a.rows == b.rows && a.cols == b.cols && a.latent_channels == b.latent_channels &&
         a.audio_bands == b.audio_bands && a.audio_layers == b.audio_layers && a.rf == b.rf &&
         a.hybrid.w == b.hybrid.w && a.hybrid.delta == b.hybrid.delta;
}

}  // namespace

SyncEval held_out_sync(const ModelConfig& mc, Weights& w, const CodecConfig& cc,
                       const DatasetConfig& dc, const EvalConfig& ec) {
  validate(ec);
  SyncEval out;
  const PixelBox box = mouth_box(dc);
  double sum = 0;
  int counted = 0;
  for (int i = 0; i < ec.samples; ++i) {
    // pool and noise seeds depend only on i, so every variant sees the same
    // samples and the same initial noise
    ToySample s = synth_sample(dc, Rng(ec.data_seed).derive(uint64_t(i)));
    StreamConfig sc = stream_for(ec, 1, Rng(ec.gen_seed).derive(uint64_t(i)).next_u64());
    StreamResult r = generate_stream(mc, w, cc, first_frame(s.video), s.audio, sc, float(dc.fps));
    SyncResult sr = sync_correlation(r.video, s.audio, box);
    if (sr.degenerate) {
      ++out.degenerate;
      out.per_sample.push_back(0);
    } else {
      out.per_sample.push_back(sr.correlation);
      sum += sr.correlation;
      ++counted;
    }
  }
  out.mean = counted > 0 ? sum / counted : 0.0;
  return out;
}

ProbeResult probe_stream(const ModelConfig& mc, Weights& w, const CodecConfig& cc,
                         const DatasetConfig& dc, const EvalConfig& ec, int clips) {
  validate(ec);
  if (clips < 2) throw ContractError("probe streams need at least two clips");
  const int F = ec.frames, n = ec.overlap, rf = cc.rf;
  const int span = (clips - 1) * (F - n) + F;
  const int total = 1 + rf * (span - 1);

  DatasetConfig d2 = dc;
  d2.frames = total;
  ToySample s = synth_sample(d2, Rng(ec.data_seed).derive(fnv1a("probe")));
  StreamConfig sc = stream_for(ec, clips, Rng(ec.gen_seed).derive(fnv1a("probe")).next_u64());
  StreamResult r = generate_stream(mc, w, cc, first_frame(s.video), s.audio, sc, float(dc.fps));

  ProbeResult out;
  out.boundaries = r.boundaries;
  out.boundary_ratio = boundary_discontinuity(r.video, r.boundaries);
  // chunk by the emitted length of a trimmed clip; chunk 1 is then the first
  // stretch past the stream's opening clip
  const int later_len = 1 + rf * (F - 1) - trim_drop(rf, n);
  out.drift = drift_curve(r.video, later_len);
  out.drift_max = *std::max_element(out.drift.begin(), out.drift.end());
  out.drift_clip2 = out.drift.size() > 1 ? out.drift[1] : 0.0;
  double ms = 0;
  for (const ClipTiming& t : r.timing) ms += t.ms_denoise + t.ms_decode;
  out.fps = ms > 0 ? double(r.video.rgb.shape[1]) * 1000.0 / ms : 0.0;
  return out;
}

AblateRow evaluate_variant(const std::string& name, const ModelConfig& mc, Weights& w,
                           const CodecConfig& cc, const DatasetConfig& dc, const EvalConfig& ec) {
  AblateRow row;
  row.name = name;
  row.w = mc.hybrid.w;
  row.delta = mc.hybrid.delta;
  row.overlap = ec.overlap;
  row.cfg = ec.cfg_scale;
  row.sync = held_out_sync(mc, w, cc, dc, ec).mean;
  ProbeResult pr = probe_stream(mc, w, cc, dc, ec, ec.probe_clips);
  row.boundary_ratio = pr.boundary_ratio;
  row.drift_max = pr.drift_max;
  row.fps = pr.fps;
  return row;
}

std::string render_report(const std::vector<AblateRow>& rows) {
  if (rows.empty()) throw ContractError("ablation grid is empty");
  std::ostringstream os;
  os << "name,w,delta,overlap,cfg,sync,boundary_ratio,drift_max,fps\n";
  for (const AblateRow& r : rows)
    os << r.name << ',' << csv_num(r.w) << ',' << csv_num(r.delta) << ',' << r.overlap << ','
       << csv_num(r.cfg) << ',' << csv_num(r.sync) << ',' << csv_num(r.boundary_ratio) << ','
       << csv_num(r.drift_max) << ',' << csv_num(r.fps) << '\n';
  return os.str();
}

Trainer ensure_trained(const ModelConfig& mc, const TrainConfig& tc, const CodecConfig& cc,
                       const std::string& data_dir, const std::string& ckpt_path,
                       const std::string& csv_path) {
  validate(mc);
  validate(tc);
  if (std::filesystem::exists(ckpt_path)) {
    Trainer tr = Trainer::resume(ckpt_path);
    if (!same_model(tr.model_config(), mc))
      throw FormatError("checkpoint " + ckpt_path +
                        " holds a different model; remove it to retrain");
    if (tr.step_index() >= tc.steps) return tr;
    // continue under the stored optimizer settings; only the horizon moves
    tr.set_total_steps(tc.steps);
    SampleStore store(read_manifest(data_dir), mc, cc);
    train_loop(
        tr, [&store](size_t i) -> const TrainSample& { return store.at(i); }, store.size(),
        csv_path, ckpt_path);
    return tr;
  }
  Trainer tr(mc, tc);
  SampleStore store(read_manifest(data_dir), mc, cc);
  train_loop(
      tr, [&store](size_t i) -> const TrainSample& { return store.at(i); }, store.size(), csv_path,
      ckpt_path);
  return tr;
}

}  // namespace rap
