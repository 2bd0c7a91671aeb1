#include "rap/train.hpp"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <map>
#include <set>

#include "rap/autodiff.hpp"

namespace rap {

void validate(const TrainConfig& c) {
  if (c.beta < 0 || c.beta > 1) throw FormatError("static-window probability must be in [0,1]");
  if (c.window < 1) throw FormatError("training window must be at least 1 latent frame");
  if (c.audio_dropout < 0 || c.audio_dropout > 1)
    throw FormatError("audio dropout probability must be in [0,1]");
  if (!(c.lr >= 0) || !std::isfinite(c.lr)) throw FormatError("learning rate must be finite");
  if (c.adam_beta1 < 0 || c.adam_beta1 >= 1 || c.adam_beta2 < 0 || c.adam_beta2 >= 1)
    throw FormatError("adam betas must be in [0,1)");
  if (c.adam_eps <= 0) throw FormatError("adam epsilon must be positive");
  if (c.batch < 1) throw FormatError("batch size must be positive");
  if (c.steps < 0) throw FormatError("step count must be nonnegative");
  if (c.checkpoint_every < 0) throw FormatError("checkpoint interval must be nonnegative");
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

Tensor slice_token_rows(const Tensor& a, int r0, int r1) {
  const int B = a.shape[1];
  Tensor out({r1 - r0, B});
  std::memcpy(out.data(), a.data() + size_t(r0) * B, sizeof(float) * out.numel());
  return out;
}

}  // namespace

TrainSample prepare_sample(const ModelConfig& mc, const CodecConfig& cc, const Waveform& wav,
                           const VideoClip& video, const Tensor& pixel_mask) {
  validate(mc);
  if (mc.rf != cc.rf)
    throw FormatError("model rf " + std::to_string(mc.rf) + " vs codec rf " +
                      std::to_string(cc.rf));
  if (mc.latent_channels != latent_channels(cc))
    throw FormatError("model channels " + std::to_string(mc.latent_channels) +
                      " vs codec channels " + std::to_string(latent_channels(cc)));
  TrainSample s;
  s.latents = encode_video(video.rgb, cc);
  const int F = s.latents.shape[1];
  if (s.latents.shape[2] != mc.rows || s.latents.shape[3] != mc.cols)
    throw FormatError("latent grid " + std::to_string(s.latents.shape[2]) + "x" +
                      std::to_string(s.latents.shape[3]) + " does not match model " +
                      std::to_string(mc.rows) + "x" + std::to_string(mc.cols));

  const int H = video.rgb.shape[2], W = video.rgb.shape[3];
  Tensor frame0({3, H, W});
  for (int ch = 0; ch < 3; ++ch)
    std::memcpy(frame0.data() + size_t(ch) * H * W,
                video.rgb.data() + size_t(ch) * video.rgb.shape[1] * H * W,
                sizeof(float) * size_t(H) * W);
  s.ref = encode_reference(frame0, cc, F);

  AudioFeatureConfig ac;
  ac.bands = mc.audio_bands;
  ac.layers = mc.audio_layers;
  ac.fps = double(video.fps);
  AudioFeatures feat = extract_features(wav, ac, F * mc.rf);
  const int rows = F * mc.audio_rows_per_frame();
  s.audio = feat.rows.shape[0] == rows ? feat.rows : slice_token_rows(feat.rows, 0, rows);

  s.mask = latent_mask(pixel_mask, cc);
  return s;
}

SampleWindow sample_window(const TrainSample& s, int y, int k) {
  const int F = s.latents.shape[1];
  if (k > F)
    throw ContractError("window of " + std::to_string(k) + " latent frames from a clip of " +
                        std::to_string(F));
  const int start = y ? 0 : F - k;
  const int rpf = s.audio.shape[0] / F;
  SampleWindow w;
  w.latents = slice_latent_frames(s.latents, start, k);
  w.ref = slice_latent_frames(s.ref, start, k);
  w.mask = slice_latent_frames(s.mask, start, k);
  w.audio = slice_token_rows(s.audio, start * rpf, (start + k) * rpf);
  w.static_head = start == 0;
  w.start = start;
  return w;
}

Tensor apply_audio_dropout(const Tensor& audio, double p, Rng& rng) {
  if (p < 0 || p > 1) throw ContractError("dropout probability must be in [0,1]");
  if (rng.uniform() < p) return Tensor({0, audio.shape[1]});
  return audio;
}

SampleStore::SampleStore(std::vector<CorpusEntry> entries, ModelConfig mc, CodecConfig cc)
    : entries_(std::move(entries)), mc_(mc), cc_(cc) {
  cache_.resize(entries_.size());
}

const TrainSample& SampleStore::at(size_t i) {
  if (i >= entries_.size()) throw ContractError("sample index out of range");
  if (!cache_[i]) {
    const CorpusEntry& e = entries_[i];
    Waveform wav = read_wav(e.wav);
    VideoClip video = read_video(e.video);
    Tensor mask = read_mask(e.mask);
    cache_[i] = std::make_unique<TrainSample>(prepare_sample(mc_, cc_, wav, video, mask));
  }
  return *cache_[i];
}

Trainer::Trainer(const ModelConfig& mc, const TrainConfig& tc) : mc_(mc), tc_(tc) {
  validate(mc_);
  validate(tc_);
  w_ = init_weights<float>(mc_, Rng(tc_.seed).derive(fnv1a("weights")));
  init_optimizer();
}

void Trainer::init_optimizer() {
  adam_m_.clear();
  adam_v_.clear();
  visit_weights(w_, [&](const std::string&, Tensor& t) {
    adam_m_.emplace_back(t.shape);
    adam_v_.emplace_back(t.shape);
  });
}

StepStats Trainer::step(const SampleProvider& data, size_t dataset_size) {
  if (dataset_size == 0) throw ContractError("train step over an empty dataset");
  Rng stream = Rng(tc_.seed).derive(fnv1a("step")).derive(uint64_t(step_));

  std::vector<Tensor*> params;
  visit_weights(w_, [&](const std::string&, Tensor& t) { params.push_back(&t); });
  std::vector<std::vector<double>> acc(params.size());
  for (size_t i = 0; i < params.size(); ++i)
    acc[i].assign(params[i]->numel(), 0.0);

  StepStats stats;
  for (int b = 0; b < tc_.batch; ++b) {
    Rng eb = stream.derive(uint64_t(b));
    size_t idx = std::min(dataset_size - 1, size_t(eb.uniform() * double(dataset_size)));
    int y = eb.uniform() < tc_.beta ? 1 : 0;
    double t = eb.uniform();
    const TrainSample& sample = data(idx);
    SampleWindow win = sample_window(sample, y, tc_.window);
    Tensor audio = apply_audio_dropout(win.audio, tc_.audio_dropout, eb);

    Tensor x1(win.latents.shape);
    for (size_t i = 0; i < x1.numel(); ++i) x1.data()[i] = float(eb.normal());
    Tensor x_t = interpolate(win.latents, x1, t);
    Tensor u = target_velocity(win.latents, x1);

    Tape tape;
    Weights wc = w_;  // shallow copy, buffers shared with w_
    visit_weights(wc, [&](const std::string&, Tensor& p) { p = tape.watch(p); });
    Tensor v = dit_forward(mc_, wc, x_t, win.ref, audio, t);
    auto loss = composite_loss(v, u, win.mask, tc_.loss);

    double lv = double(loss.total[0]);
    if (!std::isfinite(lv))
      throw NumericError("train step " + std::to_string(step_) + ": non-finite loss (t=" +
                         std::to_string(t) + ", y=" + std::to_string(y) +
                         ", sample=" + std::to_string(idx) + ")");
    stats.loss += lv;
    stats.diffusion += double(loss.diffusion[0]);
    stats.face += double(loss.face[0]);
    if (loss.has_temporal) stats.temporal += double(loss.temporal[0]);

    tape.backward(loss.total);
    size_t pi = 0;
    visit_weights(wc, [&](const std::string&, Tensor& p) {
      Tensor g = tape.grad_for(p);
      double* a = acc[pi].data();
      for (size_t i = 0; i < g.numel(); ++i) a[i] += double(g[i]);
      ++pi;
    });
  }

  const double inv_b = 1.0 / double(tc_.batch);
  stats.loss *= inv_b;
  stats.diffusion *= inv_b;
  stats.face *= inv_b;
  stats.temporal *= inv_b;

  for (size_t pi = 0; pi < params.size(); ++pi) {
    for (double& g : acc[pi]) g *= inv_b;
    adam_update(params[pi]->data(), adam_m_[pi].data(), adam_v_[pi].data(), acc[pi].data(),
                params[pi]->numel(), tc_, step_);
  }
  ++step_;
  return stats;
}

void adam_update(float* p, float* m, float* v, const double* g, size_t n, const TrainConfig& tc,
                 int step) {
  const double bc1 = 1.0 - std::pow(tc.adam_beta1, double(step + 1));
  const double bc2 = 1.0 - std::pow(tc.adam_beta2, double(step + 1));
  for (size_t i = 0; i < n; ++i) {
    m[i] = float(tc.adam_beta1 * double(m[i]) + (1.0 - tc.adam_beta1) * g[i]);
    v[i] = float(tc.adam_beta2 * double(v[i]) + (1.0 - tc.adam_beta2) * g[i] * g[i]);
    p[i] = float(double(p[i]) -
                 tc.lr * (double(m[i]) / bc1) / (std::sqrt(double(v[i]) / bc2) + tc.adam_eps));
  }
}

void Trainer::set_total_steps(int steps) {
  if (steps < step_)
    throw ContractError("total steps " + std::to_string(steps) + " below completed " +
                        std::to_string(step_));
  tc_.steps = steps;
}

std::string render_train_config(const ModelConfig& mc, const TrainConfig& tc, int step) {
  KvFile kv;
  kv.set("dim", std::to_string(mc.dim));
  kv.set("layers", std::to_string(mc.layers));
  kv.set("heads", std::to_string(mc.heads));
  kv.set("ffn", std::to_string(mc.ffn));
  kv.set("rows", std::to_string(mc.rows));
  kv.set("cols", std::to_string(mc.cols));
  kv.set("latent_channels", std::to_string(mc.latent_channels));
  kv.set("audio_bands", std::to_string(mc.audio_bands));
  kv.set("audio_layers", std::to_string(mc.audio_layers));
  kv.set("rf", std::to_string(mc.rf));
  kv.set("hybrid_w", csv_num(mc.hybrid.w));
  kv.set("hybrid_delta", csv_num(mc.hybrid.delta));
  kv.set("beta", csv_num(tc.beta));
  kv.set("window", std::to_string(tc.window));
  kv.set("audio_dropout", csv_num(tc.audio_dropout));
  kv.set("lr", csv_num(tc.lr));
  kv.set("adam_beta1", csv_num(tc.adam_beta1));
  kv.set("adam_beta2", csv_num(tc.adam_beta2));
  kv.set("adam_eps", csv_num(tc.adam_eps));
  kv.set("batch", std::to_string(tc.batch));
  kv.set("steps", std::to_string(tc.steps));
  kv.set("seed", std::to_string(tc.seed));
  kv.set("checkpoint_every", std::to_string(tc.checkpoint_every));
  kv.set("loss_face", csv_num(tc.loss.face));
  kv.set("loss_temporal", csv_num(tc.loss.temporal));
  kv.set("step", std::to_string(step));
  return render_kv(kv);
}

void parse_train_config(const KvFile& kv, ModelConfig& mc, TrainConfig& tc, int& step) {
  mc.dim = int(kv.get_int("dim"));
  mc.layers = int(kv.get_int("layers"));
  mc.heads = int(kv.get_int("heads"));
  mc.ffn = int(kv.get_int("ffn"));
  mc.rows = int(kv.get_int("rows"));
  mc.cols = int(kv.get_int("cols"));
  mc.latent_channels = int(kv.get_int("latent_channels"));
  mc.audio_bands = int(kv.get_int("audio_bands"));
  mc.audio_layers = int(kv.get_int("audio_layers"));
  mc.rf = int(kv.get_int("rf"));
  mc.hybrid.w = kv.get_num("hybrid_w");
  mc.hybrid.delta = kv.get_num("hybrid_delta");
  tc.beta = kv.get_num("beta");
  tc.window = int(kv.get_int("window"));
  tc.audio_dropout = kv.get_num("audio_dropout");
  tc.lr = kv.get_num("lr");
  tc.adam_beta1 = kv.get_num("adam_beta1");
  tc.adam_beta2 = kv.get_num("adam_beta2");
  tc.adam_eps = kv.get_num("adam_eps");
  tc.batch = int(kv.get_int("batch"));
  tc.steps = int(kv.get_int("steps"));
  tc.seed = std::strtoull(kv.get_str("seed").c_str(), nullptr, 10);
  tc.checkpoint_every = int(kv.get_int("checkpoint_every"));
  tc.loss.face = kv.get_num("loss_face");
  tc.loss.temporal = kv.get_num("loss_temporal");
  step = int(kv.get_int("step"));
}

void Trainer::save(const std::string& path) const {
  Checkpoint ck;
  ck.config_text = render_train_config(mc_, tc_, step_);
  auto& self = const_cast<Trainer&>(*this);
  std::vector<std::string> names;
  visit_weights(self.w_, [&](const std::string& name, Tensor& t) {
    names.push_back(name);
    ck.tensors.emplace_back(name, t);
  });
  for (size_t i = 0; i < names.size(); ++i)
    ck.tensors.emplace_back("adam.m." + names[i], self.adam_m_[i]);
  for (size_t i = 0; i < names.size(); ++i)
    ck.tensors.emplace_back("adam.v." + names[i], self.adam_v_[i]);
  save_checkpoint(ck, path);
}

Trainer Trainer::resume(const std::string& ckpt_path) {
  Checkpoint ck = load_checkpoint(ckpt_path);
  Trainer tr;
  parse_train_config(parse_kv(ck.config_text), tr.mc_, tr.tc_, tr.step_);
  validate(tr.mc_);
  validate(tr.tc_);
  tr.w_ = make_weights<float>(tr.mc_);
  tr.init_optimizer();

  std::map<std::string, const Tensor*> table;
  for (const auto& [name, t] : ck.tensors) table[name] = &t;
  std::set<std::string> consumed;
  std::vector<std::string> missing;
  auto take = [&](const std::string& name, Tensor& dst) {
    auto it = table.find(name);
    if (it == table.end()) {
      missing.push_back(name);
      return;
    }
    if (it->second->shape != dst.shape)
      throw ShapeError("checkpoint tensor " + name + " has shape " +
                       shape_str(it->second->shape) + ", model expects " + shape_str(dst.shape));
    std::memcpy(dst.data(), it->second->data(), sizeof(float) * dst.numel());
    consumed.insert(name);
  };
  size_t pi = 0;
  visit_weights(tr.w_, [&](const std::string& name, Tensor& t) {
    take(name, t);
    take("adam.m." + name, tr.adam_m_[pi]);
    take("adam.v." + name, tr.adam_v_[pi]);
    ++pi;
  });

  std::vector<std::string> unexpected;
  for (const auto& [name, t] : ck.tensors)
    if (!consumed.count(name)) unexpected.push_back(name);
  if (!missing.empty() || !unexpected.empty()) {
    auto preview = [](const std::vector<std::string>& xs) {
      std::string s;
      for (size_t i = 0; i < xs.size() && i < 5; ++i) s += (i ? ", " : "") + xs[i];
      if (xs.size() > 5) s += ", ... (" + std::to_string(xs.size()) + " total)";
      return s;
    };
    throw FormatError(ckpt_path + ": checkpoint does not match model, missing [" +
                      preview(missing) + "], unexpected [" + preview(unexpected) + "]");
  }
  return tr;
}

StepStats train_loop(Trainer& tr, const SampleProvider& data, size_t dataset_size,
                     const std::string& csv_path, const std::string& ckpt_path) {
  const TrainConfig& tc = tr.train_config();
  std::ofstream csv;
  if (tr.step_index() == 0) {
    csv.open(csv_path, std::ios::trunc);
    if (csv) csv << "step,loss,diffusion,face,temporal\n";
  } else {
    csv.open(csv_path, std::ios::app);
  }
  if (!csv) throw FormatError("cannot write " + csv_path);

  StepStats last;
  while (tr.step_index() < tc.steps) {
    last = tr.step(data, dataset_size);
    csv << (tr.step_index() - 1) << ',' << csv_num(last.loss) << ',' << csv_num(last.diffusion)
        << ',' << csv_num(last.face) << ',' << csv_num(last.temporal) << '\n';
    if (!csv) throw FormatError("short write to " + csv_path);
    if (tc.checkpoint_every > 0 && tr.step_index() % tc.checkpoint_every == 0 &&
        tr.step_index() < tc.steps)
      tr.save(ckpt_path);
  }
  csv.flush();
  if (!csv) throw FormatError("short write to " + csv_path);
  tr.save(ckpt_path);
  return last;
}

}  // namespace rap
