#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "rap/common.hpp"
#include "rap/gradcheck.hpp"
#include "rap/model.hpp"
#include "rap/tensor.hpp"

using namespace rap;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.dim = 8;
  c.layers = 2;
  c.heads = 2;
  c.ffn = 8;
  c.rows = 2;
  c.cols = 2;
  c.latent_channels = 6;
  c.audio_bands = 3;
  c.audio_layers = 1;
  c.rf = 1;
  return c;
}

template <class T>
TensorT<T> rand_latent(const ModelConfig& c, int F, Rng& rng) {
  TensorT<T> x({c.latent_channels, F, c.rows, c.cols});
  for (size_t i = 0; i < x.numel(); ++i) x[i] = T(rng.normal() * 0.5);
  return x;
}

template <class T>
TensorT<T> rand_audio(const ModelConfig& c, int F, Rng& rng) {
  TensorT<T> a({F * c.audio_rows_per_frame(), c.audio_bands});
  for (size_t i = 0; i < a.numel(); ++i) a[i] = T(rng.normal());
  return a;
}

template <class T>
void scramble(TensorT<T>& t, Rng& rng) {
  for (size_t i = 0; i < t.numel(); ++i) t[i] = T(rng.normal());
}

template <class T>
void scramble_attn(AttnW<T>& a, Rng& rng) {
  for (auto* t : {&a.wq, &a.bq, &a.wk, &a.bk, &a.wv, &a.bv, &a.wo, &a.bo}) scramble(*t, rng);
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("window blend follows the clamped per-block ramp") {
  CHECK(window_blend({0.0, 0.0}, 0, 6) == 0.0);
  CHECK(window_blend({0.0, 0.0}, 5, 6) == 0.0);
  CHECK(window_blend({0.0, 1.0}, 3, 6) == 1.0);
  CHECK(window_blend({0.0, 0.25}, 2, 6) == 0.25);
  CHECK(window_blend({1.0, 0.0}, 0, 6) == 0.0);
  CHECK(window_blend({1.0, 0.0}, 3, 6) == 0.5);
  CHECK(window_blend({-1.0, 1.0}, 0, 6) == 1.0);
  CHECK(window_blend({-1.0, 1.0}, 3, 6) == 0.5);
  CHECK(window_blend({2.0, 0.0}, 5, 6) == 1.0);    // clamped high
  CHECK(window_blend({-2.0, 0.5}, 5, 6) == 0.0);   // clamped low
  // ablation grid midpoint: delta = 0.5 - w/2 pins alpha = 0.5 at i = L/2
  for (double w : {-1.0, -0.5, 0.5, 1.0}) CHECK(window_blend({w, 0.5 - w / 2}, 3, 6) == 0.5);
}

TEST_CASE("parameter count formula matches the enumerated tensors") {
  for (ModelConfig c : {tiny_config(), ModelConfig{}}) {
    auto w = make_weights<float>(c);
    long long total = 0;
    visit_weights(w, [&](const std::string&, Tensor& t) { total += (long long)t.numel(); });
    CHECK(total == param_count(c));
  }
  CHECK(param_count(ModelConfig{}) > 0);
}

TEST_CASE("weight init is seeded per tensor name") {
  ModelConfig c = tiny_config();
  auto a = init_weights<float>(c, Rng(11));
  auto b = init_weights<float>(c, Rng(11));
  auto d = init_weights<float>(c, Rng(12));
  bool all_same = true, any_diff = false;
  std::vector<Tensor*> av, bv, dv;
  visit_weights(a, [&](const std::string&, Tensor& t) { av.push_back(&t); });
  visit_weights(b, [&](const std::string&, Tensor& t) { bv.push_back(&t); });
  visit_weights(d, [&](const std::string&, Tensor& t) { dv.push_back(&t); });
  for (size_t i = 0; i < av.size(); ++i) {
    all_same = all_same && bitwise_equal(*av[i], *bv[i]);
    any_diff = any_diff || !bitwise_equal(*av[i], *dv[i]);
  }
  CHECK(all_same);
  CHECK(any_diff);
  // biases start at zero, matrices do not
  CHECK(a.in_b.data()[0] == 0.0f);
  bool nonzero = false;
  for (size_t i = 0; i < a.in_w.numel(); ++i) nonzero = nonzero || a.in_w[i] != 0.0f;
  CHECK(nonzero);
}

TEST_CASE("forward produces latent-shaped output at any frame count") {
  ModelConfig c = tiny_config();
  auto w = init_weights<float>(c, Rng(3));
  Rng rng(4);
  for (int F : {1, 2, 5}) {
    Tensor xt = rand_latent<float>(c, F, rng);
    Tensor xr = rand_latent<float>(c, F, rng);
    Tensor au = rand_audio<float>(c, F, rng);
    Tensor y = dit_forward(c, w, xt, xr, au, 0.5);
    CHECK(y.shape == xt.shape);
    for (size_t i = 0; i < y.numel(); ++i) REQUIRE(std::isfinite(double(y[i])));
  }
}

TEST_CASE("forward is bitwise deterministic") {
  ModelConfig c = tiny_config();
  c.hybrid = {0.5, 0.25};
  auto w1 = init_weights<float>(c, Rng(9));
  auto w2 = init_weights<float>(c, Rng(9));
  Rng r1(5), r2(5);
  Tensor y1 = dit_forward(c, w1, rand_latent<float>(c, 3, r1), rand_latent<float>(c, 3, r1),
                          rand_audio<float>(c, 3, r1), 0.7);
  Tensor y2 = dit_forward(c, w2, rand_latent<float>(c, 3, r2), rand_latent<float>(c, 3, r2),
                          rand_audio<float>(c, 3, r2), 0.7);
  CHECK(bitwise_equal(y1, y2));
}

TEST_CASE("dead cross-attention branches do not touch the output") {
  ModelConfig c = tiny_config();
  Rng rng(21);
  Tensor xt = rand_latent<float>(c, 2, rng);
  Tensor xr = rand_latent<float>(c, 2, rng);
  Tensor au = rand_audio<float>(c, 2, rng);

  SUBCASE("pure full ignores window weights") {
    c.hybrid = {0.0, 0.0};
    auto w = init_weights<float>(c, Rng(7));
    Tensor y0 = dit_forward(c, w, xt, xr, au, 0.4);
    Rng s(99);
    for (auto& b : w.blocks) scramble_attn(b.cross_window, s);
    CHECK(bitwise_equal(dit_forward(c, w, xt, xr, au, 0.4), y0));
    Rng s2(100);
    scramble_attn(w.blocks[0].cross_full, s2);
    CHECK(!bitwise_equal(dit_forward(c, w, xt, xr, au, 0.4), y0));
  }

  SUBCASE("pure window ignores full weights") {
    c.hybrid = {0.0, 1.0};
    auto w = init_weights<float>(c, Rng(7));
    Tensor y0 = dit_forward(c, w, xt, xr, au, 0.4);
    Rng s(99);
    for (auto& b : w.blocks) scramble_attn(b.cross_full, s);
    CHECK(bitwise_equal(dit_forward(c, w, xt, xr, au, 0.4), y0));
  }

  SUBCASE("ramp schedule kills exactly the blocks at blend zero") {
    // L=2: alpha(0)=0, alpha(1)=0.5
    c.hybrid = {1.0, 0.0};
    auto w = init_weights<float>(c, Rng(7));
    Tensor y0 = dit_forward(c, w, xt, xr, au, 0.4);
    Rng s(99);
    scramble_attn(w.blocks[0].cross_window, s);
    CHECK(bitwise_equal(dit_forward(c, w, xt, xr, au, 0.4), y0));
    scramble_attn(w.blocks[1].cross_window, s);
    CHECK(!bitwise_equal(dit_forward(c, w, xt, xr, au, 0.4), y0));
  }
}

TEST_CASE("blend degeneracies reduce bitwise to the single-branch model") {
  // a hybrid schedule that lands on 0 and 1 must shortcut to the live branch
  // tensor itself, not a scaled copy
  ModelConfig c = tiny_config();
  Rng rng(31);
  Tensor xt = rand_latent<float>(c, 2, rng);
  Tensor xr = rand_latent<float>(c, 2, rng);
  Tensor au = rand_audio<float>(c, 2, rng);
  auto w = init_weights<float>(c, Rng(8));

  c.hybrid = {0.0, 0.0};
  Tensor y_full = dit_forward(c, w, xt, xr, au, 0.6);
  c.hybrid = {-1.0, 0.0};  // ramp clamps to 0 everywhere
  CHECK(bitwise_equal(dit_forward(c, w, xt, xr, au, 0.6), y_full));

  c.hybrid = {0.0, 1.0};
  Tensor y_win = dit_forward(c, w, xt, xr, au, 0.6);
  c.hybrid = {1.0, 1.0};  // ramp clamps to 1 everywhere
  CHECK(bitwise_equal(dit_forward(c, w, xt, xr, au, 0.6), y_win));

  c.hybrid = {0.0, 0.5};
  Tensor y_mix = dit_forward(c, w, xt, xr, au, 0.6);
  CHECK(!bitwise_equal(y_mix, y_full));
  CHECK(!bitwise_equal(y_mix, y_win));
}

TEST_CASE("null token replaces audio on the unconditional pass") {
  ModelConfig c = tiny_config();
  auto w = init_weights<float>(c, Rng(13));
  Rng rng(41);
  Tensor xt = rand_latent<float>(c, 2, rng);
  Tensor xr = rand_latent<float>(c, 2, rng);
  Tensor au = rand_audio<float>(c, 2, rng);
  Tensor empty;
  Tensor yc = dit_forward(c, w, xt, xr, au, 0.5);
  Tensor yu = dit_forward(c, w, xt, xr, empty, 0.5);
  CHECK(yu.shape == yc.shape);
  CHECK(!bitwise_equal(yu, yc));
  // unconditional output depends on the learned null token
  scramble(w.audio_null, rng);
  CHECK(!bitwise_equal(dit_forward(c, w, xt, xr, empty, 0.5), yu));
  // and the conditional pass does not read it
  CHECK(bitwise_equal(dit_forward(c, w, xt, xr, au, 0.5), yc));
}

TEST_CASE("audio slot code repeats per frame and latent positions do not") {
  ModelConfig c = tiny_config();
  c.rf = 2;
  c.audio_layers = 2;
  const int period = c.audio_rows_per_frame();
  Tensor slots = detail::audio_slot_positions<float>(c, 3 * period);
  const int D = c.dim;
  for (int r = 0; r + period < slots.dim(0); ++r)
    for (int d = 0; d < D; ++d)
      CHECK(slots.data()[size_t(r) * D + d] == slots.data()[size_t(r + period) * D + d]);
  Tensor pos = detail::latent_positions<float>(c, 3);
  const int HW = c.tokens_per_frame();
  bool frames_differ = false;
  for (int d = 0; d < D; ++d)
    frames_differ = frames_differ || pos.data()[d] != pos.data()[size_t(HW) * D + d];
  CHECK(frames_differ);
}

TEST_CASE("self-attention can be bypassed for conditioning tests") {
  ModelConfig c = tiny_config();
  auto w = init_weights<float>(c, Rng(17));
  Rng rng(51);
  Tensor xt = rand_latent<float>(c, 2, rng);
  Tensor xr = rand_latent<float>(c, 2, rng);
  Tensor au = rand_audio<float>(c, 2, rng);
  ForwardOpts skip;
  skip.skip_self_attn = true;
  Tensor ys = dit_forward(c, w, xt, xr, au, 0.5, skip);
  CHECK(ys.shape == xt.shape);
  CHECK(!bitwise_equal(ys, dit_forward(c, w, xt, xr, au, 0.5)));
}

TEST_CASE("shape violations name the expected geometry") {
  ModelConfig c = tiny_config();
  auto w = init_weights<float>(c, Rng(2));
  Rng rng(6);
  Tensor xt = rand_latent<float>(c, 2, rng);
  Tensor xr = rand_latent<float>(c, 2, rng);
  Tensor bad_audio({5, c.audio_bands});
  CHECK_THROWS_WITH_AS(dit_forward(c, w, xt, xr, bad_audio, 0.5), doctest::Contains("audio rows"),
                       ShapeError);
  Tensor bad_lat({c.latent_channels + 1, 2, c.rows, c.cols});
  CHECK_THROWS_WITH_AS(dit_forward(c, w, bad_lat, xr, Tensor{}, 0.5),
                       doctest::Contains("latents"), ShapeError);
  ModelConfig odd = c;
  odd.dim = 12;
  CHECK_THROWS_WITH_AS(make_weights<float>(odd), doctest::Contains("multiple of 8"), FormatError);
  odd = c;
  odd.heads = 3;
  CHECK_THROWS_WITH_AS(make_weights<float>(odd), doctest::Contains("heads"), FormatError);
}

TEST_CASE("analytic gradients match finite differences through the full model") {
  using DT = TensorT<double>;
  ModelConfig c = tiny_config();
  c.hybrid = {0.5, 0.25};  // both branches live in both blocks
  auto w = init_weights<double>(c, Rng(23));
  Rng rng(61);
  DT xt = rand_latent<double>(c, 2, rng);
  DT xr = rand_latent<double>(c, 2, rng);
  DT au = rand_audio<double>(c, 2, rng);

  std::vector<std::pair<std::string, DT*>> params;
  visit_weights(w, [&](const std::string& n, DT& t) { params.emplace_back(n, &t); });

  SUBCASE("conditioned pass") {
    auto f = [&](TapeT<double>* tape) {
      WeightsT<double> wc = w;  // shallow copies share parameter buffers
      if (tape)
        visit_weights(wc, [&](const std::string&, DT& t) { t = tape->watch(t); });
      auto y = dit_forward(c, wc, xt, xr, au, 0.35);
      return mean_all(mul(y, y));
    };
    auto rep = check_gradients<double>(f, params, 1e-5, 1e-6, Rng(71), 3);
    INFO(rep.worst);
    CHECK(rep.failures == 0);
    CHECK(rep.coords_checked >= int(params.size()) * 2);
  }

  SUBCASE("unconditional pass exercises the null token") {
    DT empty;
    auto f = [&](TapeT<double>* tape) {
      WeightsT<double> wc = w;
      if (tape)
        visit_weights(wc, [&](const std::string&, DT& t) { t = tape->watch(t); });
      auto y = dit_forward(c, wc, xt, xr, empty, 0.8);
      return mean_all(mul(y, y));
    };
    std::vector<std::pair<std::string, DT*>> sub;
    for (auto& pr : params)
      if (pr.first == "audio.null" || pr.first == "out.w" || pr.first == "in.w" ||
          pr.first == "blk0.xfull.k.w" || pr.first == "blk1.xwin.v.w" ||
          pr.first == "time.w1")
        sub.push_back(pr);
    auto rep = check_gradients<double>(f, sub, 1e-5, 1e-6, Rng(72), 6);
    INFO(rep.worst);
    CHECK(rep.failures == 0);
    // the null token is actually in the graph
    TapeT<double> tape;
    WeightsT<double> wc = w;
    visit_weights(wc, [&](const std::string&, DT& t) { t = tape.watch(t); });
    auto y = dit_forward(c, wc, xt, xr, empty, 0.8);
    tape.backward(mean_all(mul(y, y)));
    DT g = tape.grad_for(wc.audio_null);
    double mag = 0;
    for (size_t i = 0; i < g.numel(); ++i) mag += std::abs(g[i]);
    CHECK(mag > 0.0);
  }
}

}  // TEST_SUITE
