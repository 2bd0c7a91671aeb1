// rap: one binary for the whole pipeline.  Subcommands synthesize the toy
// corpus, train the denoiser, stream generation, sweep ablations, score
// videos, and benchmark throughput.  Exit codes: 0 ok, 2 usage, 3 data or
// format problem, 4 numeric failure.

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "rap/eval.hpp"

using namespace rap;

namespace {

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  os << text;
  if (!os.flush()) throw FormatError("cannot write " + path);
}

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_num(const std::string& s) {
  const char* c = s.c_str();
  char* end = nullptr;
  double v = std::strtod(c, &end);
  if (end == c || *end != '\0' || !std::isfinite(v))
    throw FormatError("bad number '" + s + "' in list");
  return v;
}

std::string num_tag(double v) {
  std::string t = csv_num(v);
  for (char& ch : t) {
    if (ch == '.') ch = 'p';
    if (ch == '-') ch = 'm';
  }
  return t;
}

// mask [T,H,W] -> tight box around every cell ever set
PixelBox box_from_mask(const Tensor& m) {
  if (m.rank() != 3) throw FormatError("expected mask [T,H,W], got " + shape_str(m.shape));
  const int T = m.shape[0], H = m.shape[1], W = m.shape[2];
  PixelBox b{H, 0, W, 0};
  for (int t = 0; t < T; ++t)
    for (int r = 0; r < H; ++r)
      for (int c = 0; c < W; ++c)
        if (m[(size_t(t) * H + size_t(r)) * W + size_t(c)] != 0.f) {
          b.r0 = std::min(b.r0, r);
          b.r1 = std::max(b.r1, r + 1);
          b.c0 = std::min(b.c0, c);
          b.c1 = std::max(b.c1, c + 1);
        }
  if (b.r1 <= b.r0) throw FormatError("mask selects no pixels");
  return b;
}

void check_thread_env() {
  const char* v = std::getenv("RAP_THREADS");
  if (!v) return;
  char* end = nullptr;
  long n = std::strtol(v, &end, 10);
  if (end == v || *end != '\0' || n < 1)
    throw CLI::ValidationError("RAP_THREADS", "must be a positive integer");
  // every module runs single-threaded, so any cap >= 1 is already honored
}

struct CommonGen {
  int clips = 1, frames = 9, steps = 16, overlap = 3;
  double cfg_scale = 5.0;
  uint64_t seed = 1;
  double fps = 25.0;
};

void add_gen_flags(CLI::App* cmd, CommonGen& g) {
  cmd->add_option("--clips", g.clips, "clips to stream");
  cmd->add_option("--frames", g.frames, "latent frames per clip");
  cmd->add_option("--steps", g.steps, "denoising steps");
  cmd->add_option("--overlap", g.overlap, "latent frames inherited between clips");
  cmd->add_option("--cfg-scale", g.cfg_scale, "guidance scale");
  cmd->add_option("--seed", g.seed, "noise seed");
  cmd->add_option("--fps", g.fps, "output frame rate");
}

StreamConfig to_stream(const CommonGen& g) {
  StreamConfig sc;
  sc.clips = g.clips;
  sc.frames = g.frames;
  sc.steps = g.steps;
  sc.cfg_scale = g.cfg_scale;
  sc.overlap = g.overlap;
  sc.seed = g.seed;
  return sc;
}

int cmd_synth(const std::string& out, int count, uint64_t seed, int frames, double fps, int res) {
  DatasetConfig dc;
  dc.frames = frames;
  dc.fps = fps;
  dc.height = res;
  dc.width = res;
  auto entries = write_corpus(dc, out, count, seed);
  std::cout << "wrote " << entries.size() << " samples to " << out << "\n";
  return 0;
}

int cmd_train(const std::string& config, const std::string& data, const std::string& out,
              const std::string& log, bool resume, int steps_override, long seed_override,
              double lr_override) {
  ModelConfig mc;
  TrainConfig tc;
  int step = 0;
  KvFile kv = read_kv(config);
  if (!kv.has("step")) kv.set("step", "0");
  parse_train_config(kv, mc, tc, step);
  if (steps_override >= 0) tc.steps = steps_override;
  if (seed_override >= 0) tc.seed = uint64_t(seed_override);
  if (lr_override >= 0) tc.lr = lr_override;
  validate(mc);
  validate(tc);

  const std::string csv = log.empty() ? out + ".csv" : log;
  CodecConfig cc = codec_for(mc);
  if (resume && std::filesystem::exists(out)) {
    Trainer tr = Trainer::resume(out);
    tr.set_total_steps(tc.steps);
    SampleStore store(read_manifest(data), tr.model_config(), cc);
    StepStats st = train_loop(
        tr, [&store](size_t i) -> const TrainSample& { return store.at(i); }, store.size(), csv,
        out);
    std::cout << "resumed to step " << tr.step_index() << ", loss " << csv_num(st.loss) << "\n";
    return 0;
  }
  Trainer tr(mc, tc);
  SampleStore store(read_manifest(data), mc, cc);
  StepStats st = train_loop(
      tr, [&store](size_t i) -> const TrainSample& { return store.at(i); }, store.size(), csv,
      out);
  std::cout << "trained " << tr.step_index() << " steps, loss " << csv_num(st.loss) << "\n";
  return 0;
}

int cmd_generate(const std::string& ckpt, const std::string& ref_path, const std::string& wav_path,
                 const std::string& out, const std::string& timing, const CommonGen& g) {
  Trainer tr = Trainer::resume(ckpt);
  ModelConfig mc = tr.model_config();
  CodecConfig cc = codec_for(mc);
  Tensor ref = read_ppm(ref_path);
  Waveform wav = read_wav(wav_path);
  StreamResult r = generate_stream(mc, tr.weights(), cc, ref, wav, to_stream(g), float(g.fps));
  write_video(out, r.video);

  std::ostringstream tcsv;
  tcsv << "clip,ms_denoise,ms_decode,fps\n";
  for (const ClipTiming& t : r.timing)
    tcsv << t.clip << ',' << csv_num(t.ms_denoise) << ',' << csv_num(t.ms_decode) << ','
         << csv_num(t.fps) << '\n';
  write_text(timing.empty() ? out + ".timing.csv" : timing, tcsv.str());

  std::cout << "generated " << r.video.rgb.shape[1] << " frames in " << g.clips << " clip"
            << (g.clips == 1 ? "" : "s") << " -> " << out << "\n";
  if (!r.boundaries.empty()) {
    std::cout << "clip boundaries at frames:";
    for (int b : r.boundaries) std::cout << ' ' << b;
    std::cout << "\n";
  }
  return 0;
}

int cmd_ablate(const std::string& data, const std::string& config, const std::string& ckpt_dir,
               const std::string& ckpt, const std::string& grid, const std::string& overlaps,
               const std::string& cfgs, const std::string& report, EvalConfig ec) {
  validate(ec);
  const int modes = int(!grid.empty()) + int(!overlaps.empty()) + int(!cfgs.empty());
  if (modes != 1)
    throw CLI::ValidationError("ablate", "pass exactly one of --grid, --overlap, --cfg");

  std::vector<AblateRow> rows;
  if (!grid.empty()) {
    if (config.empty() || data.empty() || ckpt_dir.empty())
      throw CLI::ValidationError("ablate", "--grid needs --config, --data, and --ckpt-dir");
    ModelConfig mc;
    TrainConfig tc;
    int step = 0;
    KvFile kv = read_kv(config);
    if (!kv.has("step")) kv.set("step", "0");
    parse_train_config(kv, mc, tc, step);
    CodecConfig cc = codec_for(mc);
    DatasetConfig dc = scaled_dataset(mc.rows * cc.patch, mc.cols * cc.patch);
    std::filesystem::create_directories(ckpt_dir);
    for (const std::string& item : split_on(grid, ';')) {
      auto parts = csv_split(item);
      if (parts.size() != 2) throw FormatError("grid entries are w,delta pairs, got '" + item + "'");
      ModelConfig vm = mc;
      vm.hybrid.w = parse_num(parts[0]);
      vm.hybrid.delta = parse_num(parts[1]);
      const std::string name = "w" + num_tag(vm.hybrid.w) + "_d" + num_tag(vm.hybrid.delta);
      const std::string path = ckpt_dir + "/" + name + ".rapc";
      std::cout << "variant " << name << ": training to " << tc.steps << " steps\n";
      Trainer tr = ensure_trained(vm, tc, cc, data, path, path + ".csv");
      rows.push_back(evaluate_variant(name, vm, tr.weights(), cc, dc, ec));
      std::cout << "variant " << name << ": sync " << csv_num(rows.back().sync) << "\n";
    }
  } else {
    if (ckpt.empty()) throw CLI::ValidationError("ablate", "--overlap/--cfg need --ckpt");
    Trainer tr = Trainer::resume(ckpt);
    ModelConfig mc = tr.model_config();
    CodecConfig cc = codec_for(mc);
    DatasetConfig dc = scaled_dataset(mc.rows * cc.patch, mc.cols * cc.patch);
    const bool by_overlap = !overlaps.empty();
    for (const std::string& item : csv_split(by_overlap ? overlaps : cfgs)) {
      EvalConfig e2 = ec;
      std::string name;
      if (by_overlap) {
        e2.overlap = int(parse_num(item));
        name = "n" + num_tag(e2.overlap);
      } else {
        e2.cfg_scale = parse_num(item);
        name = "s" + num_tag(e2.cfg_scale);
      }
      validate(e2);
      rows.push_back(evaluate_variant(name, mc, tr.weights(), cc, dc, e2));
      std::cout << "setting " << name << ": sync " << csv_num(rows.back().sync) << "\n";
    }
  }
  write_text(report, render_report(rows));
  std::cout << "report -> " << report << "\n";
  return 0;
}

int cmd_metrics(const std::string& video_path, const std::string& wav_path,
                const std::string& mask_path, const std::string& box_spec,
                const std::string& boundary_spec, int clip_len, const std::string& out,
                const std::string& heatmap_path) {
  VideoClip v = read_video(video_path);
  std::ostringstream os;

  Tensor heat = motion_heatmap(v);
  double sum = 0, peak = 0;
  for (size_t i = 0; i < heat.numel(); ++i) {
    sum += heat[i];
    peak = std::max(peak, double(heat[i]));
  }
  os << "metric,value\n";
  os << "motion_sum," << csv_num(sum) << "\n";
  os << "motion_mean," << csv_num(sum / double(heat.numel())) << "\n";
  os << "motion_max," << csv_num(peak) << "\n";

  if (!wav_path.empty()) {
    PixelBox box;
    if (!box_spec.empty()) {
      auto parts = csv_split(box_spec);
      if (parts.size() != 4) throw FormatError("--box wants r0,r1,c0,c1");
      box = PixelBox{int(parse_num(parts[0])), int(parse_num(parts[1])), int(parse_num(parts[2])),
                     int(parse_num(parts[3]))};
    } else if (!mask_path.empty()) {
      box = box_from_mask(read_mask(mask_path));
    } else {
      throw FormatError("sync correlation needs --mask or --box alongside --audio");
    }
    SyncResult sr = sync_correlation(v, read_wav(wav_path), box);
    os << "sync," << csv_num(sr.correlation) << "\n";
    os << "sync_degenerate," << (sr.degenerate ? 1 : 0) << "\n";
  }
  if (!boundary_spec.empty()) {
    std::vector<int> bs;
    for (const std::string& b : csv_split(boundary_spec)) bs.push_back(int(parse_num(b)));
    os << "boundary_ratio," << csv_num(boundary_discontinuity(v, bs)) << "\n";
  }
  if (clip_len > 0) {
    std::vector<double> drift = drift_curve(v, clip_len);
    for (size_t i = 0; i < drift.size(); ++i)
      os << "drift_" << i << ',' << csv_num(drift[i]) << "\n";
    os << "drift_max," << csv_num(*std::max_element(drift.begin(), drift.end())) << "\n";
  }
  if (!heatmap_path.empty()) {
    double scale = peak > 0 ? 1.0 / peak : 1.0;
    Tensor img = heat.clone();
    for (size_t i = 0; i < img.numel(); ++i) img[i] = float(img[i] * scale);
    write_pgm(heatmap_path, img);
  }
  write_text(out, os.str());
  std::cout << "metrics -> " << out << "\n";
  return 0;
}

int cmd_bench(const std::string& ckpt, int runs, const CommonGen& g, const std::string& out) {
  if (runs < 1) throw CLI::ValidationError("bench", "--runs must be positive");
  Trainer tr = Trainer::resume(ckpt);
  ModelConfig mc = tr.model_config();
  CodecConfig cc = codec_for(mc);
  StreamConfig sc = to_stream(g);
  validate(sc);

  const int H = mc.rows * cc.patch, W = mc.cols * cc.patch;
  Tensor ref({3, H, W});
  Rng rr = Rng(sc.seed).derive(fnv1a("bench-ref"));
  for (size_t i = 0; i < ref.numel(); ++i) ref[i] = float(rr.uniform());

  const int span = (sc.clips - 1) * (sc.frames - sc.overlap) + sc.frames;
  const int total = 1 + cc.rf * (span - 1);
  Waveform wav;
  wav.sample_rate = 16000;
  const int need = total * frame_window(wav.sample_rate, g.fps);
  wav.samples.resize(size_t(need));
  for (int i = 0; i < need; ++i)
    wav.samples[size_t(i)] =
        float(0.5 * std::sin(2 * 3.14159265358979 * 440 * double(i) / wav.sample_rate));

  BenchReport rep = bench_runs(
      [&] { generate_stream(mc, tr.weights(), cc, ref, wav, sc, float(g.fps)); }, runs,
      long(sc.clips) * sc.frames, total, long(sc.clips) * sc.steps);

  std::ostringstream os;
  os << "ms_median,latents_per_s,frames_per_s,ms_per_step,runs\n";
  os << csv_num(rep.ms_median) << ',' << csv_num(rep.latents_per_s) << ','
     << csv_num(rep.frames_per_s) << ',' << csv_num(rep.ms_per_step) << ',' << rep.runs << '\n';
  std::cout << os.str();
  if (!out.empty()) write_text(out, os.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"audio-driven sprite animation: synthesis, training, streaming generation"};
  app.require_subcommand(1);

  // synth-data
  std::string sy_out;
  int sy_count = 2000, sy_frames = 33, sy_res = 32;
  uint64_t sy_seed = 1;
  double sy_fps = 25.0;
  auto* sy = app.add_subcommand("synth-data", "write a synthetic talking-sprite corpus");
  sy->add_option("--out", sy_out, "output directory")->required();
  sy->add_option("--count", sy_count, "sample count");
  sy->add_option("--seed", sy_seed, "corpus seed");
  sy->add_option("--frames", sy_frames, "video frames per sample");
  sy->add_option("--fps", sy_fps, "frame rate");
  sy->add_option("--res", sy_res, "square frame size in pixels");

  // train
  std::string trn_config, trn_data, trn_out, trn_log;
  bool trn_resume = false;
  int trn_steps = -1;
  long trn_seed = -1;
  double trn_lr = -1;
  auto* trn = app.add_subcommand("train", "train the denoiser on a corpus");
  trn->add_option("--config", trn_config, "key=value training config")->required();
  trn->add_option("--data", trn_data, "corpus directory")->required();
  trn->add_option("--out", trn_out, "checkpoint path")->required();
  trn->add_option("--log", trn_log, "loss csv path (default: checkpoint + .csv)");
  trn->add_flag("--resume", trn_resume, "continue from an existing checkpoint");
  trn->add_option("--steps", trn_steps, "override config steps");
  trn->add_option("--seed", trn_seed, "override config seed");
  trn->add_option("--lr", trn_lr, "override config learning rate");

  // generate
  std::string gen_ckpt, gen_ref, gen_audio, gen_out, gen_timing;
  CommonGen gen;
  gen.overlap = 3;  // streaming default; training and the desk tests pick their own
  auto* gn = app.add_subcommand("generate", "stream video from a reference image and audio");
  gn->add_option("--ckpt", gen_ckpt, "trained checkpoint")->required();
  gn->add_option("--ref", gen_ref, "reference image (ppm)")->required();
  gn->add_option("--audio", gen_audio, "driving audio (wav)")->required();
  gn->add_option("--out", gen_out, "output video path")->required();
  gn->add_option("--timing", gen_timing, "timing csv path (default: out + .timing.csv)");
  add_gen_flags(gn, gen);

  // ablate
  std::string ab_data, ab_config, ab_ckpt_dir, ab_ckpt, ab_grid, ab_overlap, ab_cfg, ab_report;
  EvalConfig ab_eval;
  auto* ab = app.add_subcommand("ablate", "train or evaluate a grid of settings");
  ab->add_option("--data", ab_data, "corpus directory (grid mode)");
  ab->add_option("--config", ab_config, "training config (grid mode)");
  ab->add_option("--ckpt-dir", ab_ckpt_dir, "checkpoint directory (grid mode)");
  ab->add_option("--ckpt", ab_ckpt, "trained checkpoint (overlap/cfg modes)");
  ab->add_option("--grid", ab_grid, "w,delta pairs separated by ';'");
  ab->add_option("--overlap", ab_overlap, "comma list of overlap values");
  ab->add_option("--cfg", ab_cfg, "comma list of guidance scales");
  ab->add_option("--report", ab_report, "report csv path")->required();
  ab->add_option("--eval-samples", ab_eval.samples, "held-out pool size");
  ab->add_option("--eval-frames", ab_eval.frames, "latent frames per evaluation clip");
  ab->add_option("--eval-steps", ab_eval.steps, "denoising steps during evaluation");
  ab->add_option("--eval-overlap", ab_eval.overlap, "overlap used by grid/cfg rows");
  ab->add_option("--eval-cfg", ab_eval.cfg_scale, "guidance used by grid/overlap rows");
  ab->add_option("--probe-clips", ab_eval.probe_clips, "clips in the drift/boundary probe");
  ab->add_option("--data-seed", ab_eval.data_seed, "held-out pool seed");
  ab->add_option("--gen-seed", ab_eval.gen_seed, "evaluation noise seed");

  // metrics
  std::string mt_video, mt_audio, mt_mask, mt_box, mt_bounds, mt_out, mt_heat;
  int mt_clip_len = 0;
  auto* mt = app.add_subcommand("metrics", "score a video file");
  mt->add_option("--video", mt_video, "video to score")->required();
  mt->add_option("--audio", mt_audio, "driving wav, enables sync correlation");
  mt->add_option("--mask", mt_mask, "mouth mask, locates the sync box");
  mt->add_option("--box", mt_box, "sync box r0,r1,c0,c1 (overrides --mask)");
  mt->add_option("--boundaries", mt_bounds, "comma list of clip boundary frames");
  mt->add_option("--clip-len", mt_clip_len, "chunk length for the drift curve");
  mt->add_option("--out", mt_out, "metrics csv path")->required();
  mt->add_option("--heatmap", mt_heat, "write the motion heatmap as pgm");

  // bench
  std::string bn_ckpt, bn_out;
  int bn_runs = 3;
  CommonGen bn;
  bn.clips = 2;
  bn.overlap = 2;
  auto* bo = app.add_subcommand("bench", "time generation and report throughput");
  bo->add_option("--ckpt", bn_ckpt, "trained checkpoint")->required();
  bo->add_option("--runs", bn_runs, "timed repetitions");
  bo->add_option("--out", bn_out, "also write the report csv here");
  add_gen_flags(bo, bn);

  try {
    app.parse(argc, argv);
    check_thread_env();
    if (sy->parsed()) return cmd_synth(sy_out, sy_count, sy_seed, sy_frames, sy_fps, sy_res);
    if (trn->parsed())
      return cmd_train(trn_config, trn_data, trn_out, trn_log, trn_resume, trn_steps, trn_seed,
                       trn_lr);
    if (gn->parsed()) return cmd_generate(gen_ckpt, gen_ref, gen_audio, gen_out, gen_timing, gen);
    if (ab->parsed())
      return cmd_ablate(ab_data, ab_config, ab_ckpt_dir, ab_ckpt, ab_grid, ab_overlap, ab_cfg,
                        ab_report, ab_eval);
    if (mt->parsed())
      return cmd_metrics(mt_video, mt_audio, mt_mask, mt_box, mt_bounds, mt_clip_len, mt_out,
                         mt_heat);
    if (bo->parsed()) return cmd_bench(bn_ckpt, bn_runs, bn, bn_out);
    return 2;
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
