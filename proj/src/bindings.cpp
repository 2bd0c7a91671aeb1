// Python face of the pipeline: numpy in, numpy out, float32 tensors.
// Heavy calls (training-free generation) drop the GIL while they run.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <climits>
#include <cstring>
#include <string>
#include <vector>

#include "rap/audio.hpp"
#include "rap/codec.hpp"
#include "rap/common.hpp"
#include "rap/dataset.hpp"
#include "rap/eval.hpp"
#include "rap/flow.hpp"
#include "rap/infer.hpp"
#include "rap/io.hpp"
#include "rap/metrics.hpp"
#include "rap/model.hpp"
#include "rap/train.hpp"

namespace py = pybind11;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

rap::Tensor to_tensor(const FloatArray& a, int rank, const char* name) {
  if (rank >= 0 && a.ndim() != rank)
    throw rap::ShapeError(std::string(name) + ": expected a " + std::to_string(rank) +
                          "-d array, got " + std::to_string(a.ndim()) + "-d");
  std::vector<int> shape(size_t(a.ndim()));
  for (py::ssize_t i = 0; i < a.ndim(); ++i) {
    py::ssize_t d = a.shape(i);
    if (d <= 0 || d > INT_MAX)
      throw rap::ShapeError(std::string(name) + ": dim " + std::to_string(i) + " is " +
                            std::to_string(d));
    shape[size_t(i)] = int(d);
  }
  rap::Tensor t(shape);
  std::memcpy(t.data(), a.data(), t.numel() * sizeof(float));
  return t;
}

py::array_t<float> to_array(const rap::Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape.begin(), t.shape.end());
  py::array_t<float> a(shape);
  std::memcpy(a.mutable_data(), t.data(), t.numel() * sizeof(float));
  return a;
}

py::array_t<double> to_array(const std::vector<double>& v) {
  py::array_t<double> a(py::ssize_t(v.size()));
  std::memcpy(a.mutable_data(), v.data(), v.size() * sizeof(double));
  return a;
}

rap::Waveform to_wave(const FloatArray& samples, int sample_rate) {
  if (samples.ndim() != 1) throw rap::ShapeError("audio samples: expected a 1-d array");
  if (sample_rate <= 0)
    throw rap::FormatError("sample rate must be positive, got " + std::to_string(sample_rate));
  rap::Waveform w;
  w.sample_rate = sample_rate;
  w.samples.assign(samples.data(), samples.data() + samples.size());
  return w;
}

rap::VideoClip to_clip(const FloatArray& rgb, double fps) {
  rap::VideoClip v;
  v.rgb = to_tensor(rgb, 4, "video");
  if (v.rgb.dim(0) != 3) throw rap::ShapeError("video: expected [3,T,H,W]");
  v.fps = float(fps);
  return v;
}

rap::CodecConfig codec(int patch, int rf) {
  rap::CodecConfig cc;
  cc.patch = patch;
  cc.rf = rf;
  return cc;
}

rap::PixelBox to_box(const std::vector<int>& b) {
  if (b.size() != 4) throw rap::ShapeError("box: expected (r0, r1, c0, c1)");
  return rap::PixelBox{b[0], b[1], b[2], b[3]};
}

// Checkpoint-backed streaming generator.
class Pipeline {
 public:
  explicit Pipeline(const std::string& ckpt_path) : tr_(rap::Trainer::resume(ckpt_path)) {}

  py::dict config() const {
    const rap::ModelConfig& mc = tr_.model_config();
    py::dict d;
    d["dim"] = mc.dim;
    d["layers"] = mc.layers;
    d["heads"] = mc.heads;
    d["ffn"] = mc.ffn;
    d["rows"] = mc.rows;
    d["cols"] = mc.cols;
    d["latent_channels"] = mc.latent_channels;
    d["audio_bands"] = mc.audio_bands;
    d["audio_layers"] = mc.audio_layers;
    d["rf"] = mc.rf;
    d["hybrid_w"] = mc.hybrid.w;
    d["hybrid_delta"] = mc.hybrid.delta;
    d["step"] = tr_.step_index();
    return d;
  }

  py::dict generate(const FloatArray& reference, const FloatArray& samples, int sample_rate,
                    int clips, int frames, int steps, double cfg_scale, int overlap, uint64_t seed,
                    double fps) {
    rap::Tensor ref = to_tensor(reference, 3, "reference");
    if (ref.dim(0) != 3) throw rap::ShapeError("reference: expected [3,H,W]");
    rap::Waveform wav = to_wave(samples, sample_rate);
    rap::StreamConfig sc;
    sc.clips = clips;
    sc.frames = frames;
    sc.steps = steps;
    sc.cfg_scale = cfg_scale;
    sc.overlap = overlap;
    sc.seed = seed;
    rap::validate(sc);
    const rap::ModelConfig& mc = tr_.model_config();
    rap::CodecConfig cc = rap::codec_for(mc);
    rap::StreamResult res;
    {
      py::gil_scoped_release unlock;
      res = rap::generate_stream(mc, tr_.weights(), cc, ref, wav, sc, float(fps));
    }
    py::dict d;
    d["video"] = to_array(res.video.rgb);
    d["fps"] = res.video.fps;
    d["boundaries"] = res.boundaries;
    py::list timing;
    for (const rap::ClipTiming& ct : res.timing) {
      py::dict row;
      row["clip"] = ct.clip;
      row["ms_denoise"] = ct.ms_denoise;
      row["ms_decode"] = ct.ms_decode;
      row["fps"] = ct.fps;
      timing.append(row);
    }
    d["timing"] = timing;
    return d;
  }

 private:
  rap::Trainer tr_;
};

py::dict features_dict(const rap::AudioFeatures& f) {
  py::dict d;
  d["rows"] = to_array(f.rows);
  d["video_frames"] = f.video_frames;
  d["layers"] = f.layers;
  d["bands"] = f.bands;
  d["padded"] = f.padded;
  d["pad_frames"] = f.pad_frames;
  return d;
}

}  // namespace

PYBIND11_MODULE(_rap, m) {
  m.doc() = "audio-driven portrait animation: codec, features, flow loss, metrics, generation";

  py::register_exception<rap::FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<rap::ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<rap::ContractError>(m, "ContractError", PyExc_RuntimeError);
  py::register_exception<rap::NumericError>(m, "NumericError", PyExc_ArithmeticError);

  // latent codec
  m.def(
      "latent_channels", [](int patch, int rf) { return rap::latent_channels(codec(patch, rf)); },
      py::arg("patch"), py::arg("rf"), "channels of a [C,F,h,w] latent: 3*patch^2*rf");
  m.def("latent_frame_count", &rap::latent_frame_count, py::arg("video_frames"), py::arg("rf"),
        "latent frames F for a (1 + rf*k)-frame video");
  m.def("video_frame_count", &rap::video_frame_count, py::arg("latent_frames"), py::arg("rf"),
        "video frames 1 + rf*(F-1) for an F-frame latent");
  m.def(
      "encode_video",
      [](const FloatArray& rgb, int patch, int rf) {
        return to_array(rap::encode_video(to_tensor(rgb, 4, "video"), codec(patch, rf)));
      },
      py::arg("rgb"), py::arg("patch"), py::arg("rf"), "[3,T,H,W] video to [C,F,h,w] latents");
  m.def(
      "decode_latents",
      [](const FloatArray& lat, int patch, int rf) {
        return to_array(rap::decode_latents(to_tensor(lat, 4, "latents"), codec(patch, rf)));
      },
      py::arg("latents"), py::arg("patch"), py::arg("rf"), "[C,F,h,w] latents back to [3,T,H,W]");
  m.def(
      "encode_reference",
      [](const FloatArray& image, int patch, int rf, int frames) {
        return to_array(rap::encode_reference(to_tensor(image, 3, "image"), codec(patch, rf), frames));
      },
      py::arg("image"), py::arg("patch"), py::arg("rf"), py::arg("frames"),
      "[3,H,W] still held for `frames` latent frames");
  m.def(
      "latent_mask",
      [](const FloatArray& mask, int patch, int rf) {
        return to_array(rap::latent_mask(to_tensor(mask, 3, "mask"), codec(patch, rf)));
      },
      py::arg("mask"), py::arg("patch"), py::arg("rf"),
      "[T,H,W] pixel mask to per-latent coverage, broadcast over channels");

  // audio analysis
  m.def("frame_window", &rap::frame_window, py::arg("sample_rate"), py::arg("fps"),
        "samples per video frame");
  m.def(
      "audio_features",
      [](const FloatArray& samples, int sample_rate, int bands, int layers, double fps,
         int min_frames) {
        rap::AudioFeatureConfig cfg;
        cfg.bands = bands;
        cfg.layers = layers;
        cfg.fps = fps;
        return features_dict(rap::extract_features(to_wave(samples, sample_rate), cfg, min_frames));
      },
      py::arg("samples"), py::arg("sample_rate"), py::arg("bands") = 16, py::arg("layers") = 2,
      py::arg("fps") = 25.0, py::arg("min_frames") = 0,
      "log band energies, [video_frames*layers, bands] frame-major");
  m.def(
      "envelope",
      [](const FloatArray& samples, int sample_rate, double fps) {
        return to_array(rap::envelope(to_wave(samples, sample_rate), fps));
      },
      py::arg("samples"), py::arg("sample_rate"), py::arg("fps") = 25.0,
      "per-frame aperture envelope in [0,1]");

  // flow targets and loss
  m.def(
      "interpolate",
      [](const FloatArray& x0, const FloatArray& x1, double t) {
        return to_array(rap::interpolate(to_tensor(x0, -1, "x0"), to_tensor(x1, -1, "x1"), t));
      },
      py::arg("x0"), py::arg("x1"), py::arg("t"), "t*x1 + (1-t)*x0");
  m.def(
      "target_velocity",
      [](const FloatArray& x0, const FloatArray& x1) {
        return to_array(rap::target_velocity(to_tensor(x0, -1, "x0"), to_tensor(x1, -1, "x1")));
      },
      py::arg("x0"), py::arg("x1"), "x1 - x0");
  m.def(
      "cfg_combine",
      [](const FloatArray& v_uncond, const FloatArray& v_cond, double scale) {
        return to_array(rap::cfg_combine(to_tensor(v_uncond, -1, "v_uncond"),
                                         to_tensor(v_cond, -1, "v_cond"), scale));
      },
      py::arg("v_uncond"), py::arg("v_cond"), py::arg("scale"), "v_u + scale*(v_c - v_u)");
  m.def(
      "flow_loss",
      [](const FloatArray& v, const FloatArray& u, const FloatArray& mask, double face_weight,
         double temporal_weight) {
        rap::FlowLossWeights lw;
        lw.face = face_weight;
        lw.temporal = temporal_weight;
        auto terms = rap::composite_loss(to_tensor(v, 4, "v"), to_tensor(u, 4, "u"),
                                         to_tensor(mask, 4, "mask"), lw);
        py::dict d;
        d["total"] = double(terms.total[0]);
        d["diffusion"] = double(terms.diffusion[0]);
        d["face"] = double(terms.face[0]);
        d["temporal"] = double(terms.temporal[0]);
        d["has_temporal"] = terms.has_temporal;
        return d;
      },
      py::arg("v"), py::arg("u"), py::arg("mask"), py::arg("face_weight") = 1.0,
      py::arg("temporal_weight") = 1.0,
      "diffusion + face-masked + frame-delta mean-square terms on [C,F,H,W]");
  m.def(
      "window_blend",
      [](double w, double delta, int block, int layers) {
        rap::HybridSchedule h;
        h.w = w;
        h.delta = delta;
        return rap::window_blend(h, block, layers);
      },
      py::arg("w"), py::arg("delta"), py::arg("block"), py::arg("layers"),
      "window-attention share for one block: clamp(w*i/L + delta, 0, 1)");

  // toy corpus
  m.def(
      "synth_sample",
      [](uint64_t seed, int frames, int height, int width, double fps) {
        rap::DatasetConfig dc = rap::scaled_dataset(height, width);
        dc.frames = frames;
        dc.fps = fps;
        rap::ToySample s = rap::synth_sample(dc, rap::Rng(seed));
        py::dict d;
        d["audio"] = py::array_t<float>(py::ssize_t(s.audio.samples.size()), s.audio.samples.data());
        d["sample_rate"] = s.audio.sample_rate;
        d["video"] = to_array(s.video.rgb);
        d["fps"] = s.video.fps;
        d["mask"] = to_array(s.mask);
        d["aperture"] = to_array(s.aperture);
        py::dict p;
        p["mod_freq"] = s.params.mod_freq;
        p["mod_phase"] = s.params.mod_phase;
        p["drift_freq"] = s.params.drift_freq;
        p["drift_phase"] = s.params.drift_phase;
        d["params"] = p;
        return d;
      },
      py::arg("seed"), py::arg("frames") = 33, py::arg("height") = 32, py::arg("width") = 32,
      py::arg("fps") = 25.0, "one talking-sprite sample: tone, rendered clip, mouth mask");
  m.def(
      "mouth_box",
      [](int height, int width) {
        rap::PixelBox b = rap::mouth_box(rap::scaled_dataset(height, width));
        return py::make_tuple(b.r0, b.r1, b.c0, b.c1);
      },
      py::arg("height") = 32, py::arg("width") = 32,
      "half-open (r0, r1, c0, c1) mouth region of the toy layout at this frame size");

  // metrics
  m.def(
      "motion_heatmap",
      [](const FloatArray& rgb) { return to_array(rap::motion_heatmap(to_clip(rgb, 25.0))); },
      py::arg("rgb"), "[H,W] mean absolute frame-to-frame change");
  m.def(
      "boundary_discontinuity",
      [](const FloatArray& rgb, const std::vector<int>& boundaries) {
        return rap::boundary_discontinuity(to_clip(rgb, 25.0), boundaries);
      },
      py::arg("rgb"), py::arg("boundaries"),
      "mean frame delta at clip seams over the mean elsewhere");
  m.def(
      "sync_correlation",
      [](const FloatArray& rgb, double fps, const FloatArray& samples, int sample_rate,
         const std::vector<int>& box) {
        rap::SyncResult r = rap::sync_correlation(to_clip(rgb, fps),
                                                  to_wave(samples, sample_rate), to_box(box));
        return py::make_tuple(r.correlation, r.degenerate);
      },
      py::arg("rgb"), py::arg("fps"), py::arg("samples"), py::arg("sample_rate"), py::arg("box"),
      "(correlation, degenerate) of mouth-region motion against the audio envelope");
  m.def(
      "drift_curve",
      [](const FloatArray& rgb, int clip_len) {
        return to_array(rap::drift_curve(to_clip(rgb, 25.0), clip_len));
      },
      py::arg("rgb"), py::arg("clip_len"),
      "per-chunk mean distance from the first frame, first chunk as baseline");
  m.def("trim_drop", &rap::trim_drop, py::arg("rf"), py::arg("overlap"),
        "video frames dropped from the head of every clip after the first");

  // file io
  m.def(
      "read_wav",
      [](const std::string& path) {
        rap::Waveform w = rap::read_wav(path);
        return py::make_tuple(
            py::array_t<float>(py::ssize_t(w.samples.size()), w.samples.data()), w.sample_rate);
      },
      py::arg("path"), "(samples, sample_rate) from mono s16le RIFF");
  m.def(
      "write_wav",
      [](const std::string& path, const FloatArray& samples, int sample_rate) {
        rap::write_wav(path, to_wave(samples, sample_rate));
      },
      py::arg("path"), py::arg("samples"), py::arg("sample_rate"));
  m.def(
      "read_video",
      [](const std::string& path) {
        rap::VideoClip v = rap::read_video(path);
        return py::make_tuple(to_array(v.rgb), v.fps);
      },
      py::arg("path"), "([3,T,H,W], fps) from a raw float clip file");
  m.def(
      "write_video",
      [](const std::string& path, const FloatArray& rgb, double fps) {
        rap::write_video(path, to_clip(rgb, fps));
      },
      py::arg("path"), py::arg("rgb"), py::arg("fps") = 25.0);

  // checkpoint-backed generation
  m.def(
      "init_checkpoint",
      [](const std::string& path, int dim, int layers, int heads, int ffn, int rows, int cols,
         int latent_channels, int audio_bands, int audio_layers, int rf, double hybrid_w,
         double hybrid_delta, uint64_t seed) {
        rap::ModelConfig mc;
        mc.dim = dim;
        mc.layers = layers;
        mc.heads = heads;
        mc.ffn = ffn;
        mc.rows = rows;
        mc.cols = cols;
        mc.latent_channels = latent_channels;
        mc.audio_bands = audio_bands;
        mc.audio_layers = audio_layers;
        mc.rf = rf;
        mc.hybrid.w = hybrid_w;
        mc.hybrid.delta = hybrid_delta;
        rap::validate(mc);
        rap::codec_for(mc);
        rap::TrainConfig tc;
        tc.seed = seed;
        rap::Trainer(mc, tc).save(path);
      },
      py::arg("path"), py::arg("dim") = 64, py::arg("layers") = 6, py::arg("heads") = 4,
      py::arg("ffn") = 256, py::arg("rows") = 4, py::arg("cols") = 4,
      py::arg("latent_channels") = 768, py::arg("audio_bands") = 16, py::arg("audio_layers") = 2,
      py::arg("rf") = 4, py::arg("hybrid_w") = 0.0, py::arg("hybrid_delta") = 0.0,
      py::arg("seed") = 1,
      "write a freshly initialized checkpoint; train it with the CLI or load it as-is");
  py::class_<Pipeline>(m, "Pipeline", "streaming generator loaded from a training checkpoint")
      .def(py::init<const std::string&>(), py::arg("ckpt_path"))
      .def_property_readonly("config", &Pipeline::config)
      .def("generate", &Pipeline::generate, py::arg("reference"), py::arg("samples"),
           py::arg("sample_rate"), py::arg("clips") = 1, py::arg("frames") = 9,
           py::arg("steps") = 16, py::arg("cfg_scale") = 5.0, py::arg("overlap") = 2,
           py::arg("seed") = 0, py::arg("fps") = 25.0,
           "denoise a clip stream against the audio; returns video, boundaries, timing");
}
