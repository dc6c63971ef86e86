#include <doctest.h>

#include <cmath>

#include "kws/errors.hpp"
#include "kws/model.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace kws;

namespace {

ModelConfig single_layer() {
  ModelConfig m;
  m.input_bins = 2;
  m.decoder = {{1, 2, 0}};
  return m;
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("svdf two-frame hand trace") {
  const std::vector<double> A{1, -1}, B{0.5, 2}, bias{0.1};
  SvdfLayerParams layer{1, 2, 2, A, B, bias};
  SvdfState state(1, 2);
  std::vector<double> out(1);
  const std::vector<double> x0{1, 0}, x1{0, 1};
  svdf_forward(layer, state, x0, out);
  CHECK(out[0] == doctest::Approx(0.6).epsilon(1e-15));
  svdf_forward(layer, state, x1, out);
  CHECK(out[0] == doctest::Approx(1.6).epsilon(1e-15));
}

TEST_CASE("memoryless svdf is a rank-1 dense layer") {
  const std::vector<double> A{0.3, -0.7, 1.1}, B{-2.0}, bias{0.25};
  SvdfLayerParams layer{1, 3, 1, A, B, bias};
  SvdfState state(1, 1);
  std::vector<double> out(1);
  Rng rng(5);
  for (int t = 0; t < 20; ++t) {
    const ParamVector x = test::random_params(3, rng, 1.0);
    svdf_forward(layer, state, x.span(), out);
    const double s = A[0] * x[0] + A[1] * x[1] + A[2] * x[2];
    CHECK(out[0] == doctest::Approx(std::max(0.0, B[0] * s + bias[0])).epsilon(1e-14));
  }
}

TEST_CASE("svdf zero input and zero bias give zero activations") {
  const std::vector<double> A{1, 2, 3, 4}, B{1, 1, -1, 1}, bias{0, 0};
  SvdfLayerParams layer{2, 2, 2, A, B, bias};
  SvdfState state(2, 2);
  std::vector<double> out(2, 9.0);
  const std::vector<double> zero{0, 0};
  for (int t = 0; t < 4; ++t) {
    svdf_forward(layer, state, zero, out);
    CHECK(out[0] == 0.0);
    CHECK(out[1] == 0.0);
  }
}

TEST_CASE("svdf state starts at zero and holds exactly memory entries") {
  SvdfState s(2, 3);
  for (int lag = 0; lag < 3; ++lag) CHECK(s.at(0, lag) == 0.0);
  s.push(std::vector<double>{1, 10});
  s.push(std::vector<double>{2, 20});
  s.push(std::vector<double>{3, 30});
  s.push(std::vector<double>{4, 40});
  CHECK(s.at(0, 0) == 4);
  CHECK(s.at(1, 2) == 20);
  s.reset();
  CHECK(s.at(1, 0) == 0.0);
}

TEST_CASE("parameter counts") {
  CHECK(param_count(single_layer()) == 7);
  CHECK(param_count(ModelConfig::desk_default()) == 6913);
  const ModelConfig d = ModelConfig::desk_default();
  CHECK(d.encoder.size() == 4);
  CHECK(d.decoder.size() == 3);
  CHECK(d.input_bins == 16);

  // SVDF layer count N*D + N*T + N is linear in N.
  ModelConfig a = single_layer();
  a.decoder[0] = {4, 3, 0};
  ModelConfig b = a;
  b.decoder[0].nodes = 8;
  const auto layer_params = [](const ModelConfig& m) {
    const ModelLayout layout(m);
    const LayerLayout& l = layout.layers()[0];
    return l.biases + l.nodes - l.feature_filters;
  };
  CHECK(layer_params(b) == 2 * layer_params(a));
  CHECK(layer_params(a) == 4 * 2 + 4 * 3 + 4);
}

TEST_CASE("config validation") {
  ModelConfig m = test::tiny_model();
  CHECK_NOTHROW(m.validate());
  m.encoder[0].bottleneck = 0;
  CHECK_THROWS_AS(m.validate(), UsageError);
  m = test::tiny_model();
  m.decoder[0].memory = 0;
  CHECK_THROWS_AS(m.validate(), UsageError);
  m = test::tiny_model();
  m.encoder.clear();
  m.decoder.clear();
  CHECK_THROWS_AS(m.validate(), UsageError);
}

TEST_CASE("forward pass matches the unrolled oracle") {
  Rng rng(11);
  ModelConfig m;
  m.input_bins = 4;
  m.encoder = {{3, 2, 2}, {3, 2, 2}};
  m.decoder = {{2, 3, 0}};
  for (int trial = 0; trial < 10; ++trial) {
    const ParamVector p = test::random_params(param_count(m), rng, 0.8);
    const Spectrogram x = test::random_spec(25, 4, rng);
    const auto oracle = test::unrolled_forward(p, m, x);
    const auto batched = model_forward(p, m, x);
    const auto streamed = model_forward_streaming(p, m, x);
    REQUIRE(batched.size() == oracle.size());
    for (std::size_t t = 0; t < oracle.size(); ++t) {
      CHECK(batched[t] == doctest::Approx(oracle[t]).epsilon(1e-12));
      CHECK(streamed[t] == doctest::Approx(oracle[t]).epsilon(1e-12));
    }
  }
}

TEST_CASE("forward pass is causal") {
  Rng rng(2);
  const ModelConfig m = test::tiny_model(3);
  const ParamVector p = test::random_params(param_count(m), rng);
  const Spectrogram x = test::random_spec(20, 3, rng);
  Spectrogram head = x;
  head.frames = 10;
  head.values.resize(10 * 3);
  const auto full = model_forward(p, m, x);
  const auto prefix = model_forward(p, m, head);
  for (int t = 0; t < 10; ++t) CHECK(full[t] == prefix[t]);
}

TEST_CASE("zero network scores 0.5 everywhere") {
  Rng rng(2);
  const ModelConfig m = ModelConfig::desk_default();
  const ParamVector zero(param_count(m), 0.0);
  for (double s : model_forward(zero, m, test::random_spec(30, 16, rng))) CHECK(s == 0.5);
}

TEST_CASE("scores stay strictly inside (0, 1) under huge logits") {
  const ModelConfig m = single_layer();
  ParamVector p(param_count(m), 0.0);
  const ModelLayout layout(m);
  p[layout.output_bias()] = 1e6;
  Spectrogram x;
  x.frames = 3;
  x.bins = 2;
  x.values.assign(6, 1.0f);
  for (double s : model_forward(p, m, x)) {
    CHECK(s > 0.0);
    CHECK(s < 1.0);
  }
  p[layout.output_bias()] = -1e6;
  for (double s : model_forward(p, m, x)) {
    CHECK(s > 0.0);
    CHECK(s < 1.0);
  }
}

TEST_CASE("streaming model keeps state across frames and resets") {
  Rng rng(9);
  const ModelConfig m = test::tiny_model(3);
  const ParamVector p = test::random_params(param_count(m), rng);
  const Spectrogram x = test::random_spec(12, 3, rng);
  const auto ref = model_forward(p, m, x);
  StreamingModel sm(p, m);
  for (int pass = 0; pass < 2; ++pass) {
    for (int t = 0; t < x.frames; ++t) {
      const std::span<const float> frame(x.values.data() + t * 3, 3);
      CHECK(sm.push_frame(frame) == doctest::Approx(ref[t]).epsilon(1e-12));
    }
    sm.reset();
  }
}

TEST_CASE("frame BCE examples") {
  const std::vector<double> half(7, 0.5);
  const std::vector<std::uint8_t> y{1, 0, 1, 1, 0, 0, 1};
  CHECK(frame_bce_loss(half, y) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  const std::vector<double> sure{0.999999};
  const std::vector<std::uint8_t> one{1};
  CHECK(frame_bce_loss(sure, one) == doctest::Approx(1.0000005e-6).epsilon(1e-6));
  CHECK_THROWS_AS(frame_bce_loss(half, one), UsageError);
  const std::vector<double> bad{1.0};
  CHECK_THROWS_AS(frame_bce_loss(bad, one), UsageError);
}

TEST_CASE("frame BCE matches direct summation") {
  Rng rng(4);
  std::uniform_real_distribution<double> u(0.001, 0.999);
  std::vector<double> p(50);
  for (auto& x : p) x = u(rng);
  const auto y = test::random_targets(50, rng);
  CHECK(frame_bce_loss(p, y) == doctest::Approx(test::naive_bce(p, y)).epsilon(1e-13));
}

TEST_CASE("analytic gradient matches finite differences") {
  Rng rng(21);
  for (int trial = 0; trial < 5; ++trial) {
    const ModelConfig m = test::random_tiny_model(rng);
    const ParamVector p = test::random_params(param_count(m), rng, 0.7);
    const Spectrogram x = test::random_spec(12, m.input_bins, rng);
    const auto y = test::random_targets(12, rng);
    const auto r = test::finite_difference_check(p, m, x, y);
    INFO("params " << p.size() << " worst index " << r.worst_index);
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_CASE("backward loss equals forward loss exactly") {
  Rng rng(8);
  const ModelConfig m = test::tiny_model(3);
  const ParamVector p = test::random_params(param_count(m), rng);
  const Spectrogram x = test::random_spec(15, 3, rng);
  const auto y = test::random_targets(15, rng);
  CHECK(model_backward(p, m, x, y).loss == frame_bce_loss(model_forward(p, m, x), y));
}

TEST_CASE("dead paths carry no gradient") {
  const ModelConfig m = test::tiny_model(3);
  ParamVector p(param_count(m), 0.0);
  const ModelLayout layout(m);
  p[layout.output_bias()] = 0.3;
  Spectrogram x;
  x.frames = 8;
  x.bins = 3;
  x.values.assign(24, 0.0f);
  const std::vector<std::uint8_t> y{0, 1, 1, 0, 1, 0, 0, 1};
  const auto g = model_backward(p, m, x, y).gradient;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (i == layout.output_bias()) {
      CHECK(g[i] != 0.0);
    } else {
      CHECK(g[i] == 0.0);
    }
  }
}

TEST_CASE("logit clamp zeroes the gradient outside its range") {
  const ModelConfig m = single_layer();
  ParamVector p(param_count(m), 0.0);
  const ModelLayout layout(m);
  p[layout.output_bias()] = 40.0;
  Spectrogram x;
  x.frames = 2;
  x.bins = 2;
  x.values.assign(4, 1.0f);
  const std::vector<std::uint8_t> y{0, 0};
  CHECK(model_backward(p, m, x, y).gradient[layout.output_bias()] == 0.0);
}

TEST_CASE("init is deterministic with zero biases") {
  const ModelConfig m = ModelConfig::desk_default();
  Rng a(1), b(1);
  const ParamVector pa = init_params(m, a);
  CHECK(pa == init_params(m, b));
  const ModelLayout layout(m);
  const LayerLayout& l0 = layout.layers()[0];
  for (int n = 0; n < l0.nodes; ++n) CHECK(pa[l0.biases + n] == 0.0);
  CHECK(pa[layout.output_bias()] == 0.0);
  const double limit = std::sqrt(6.0 / (l0.nodes + l0.input_dim));
  for (int i = 0; i < l0.nodes * l0.input_dim; ++i) CHECK(std::abs(pa[l0.feature_filters + i]) <= limit);
}

}
