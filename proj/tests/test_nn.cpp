#include <doctest.h>

#include <cmath>
#include <memory>
#include <vector>

#include "poisonbench/common.hpp"
#include "poisonbench/models.hpp"
#include "poisonbench/nn.hpp"
#include "test_util.hpp"

using namespace poisonbench;
using poisonbench::testutil::TempDir;

namespace {

Tensor random_tensor(int n, int c, int h, int w, uint64_t seed) {
  Tensor t(n, c, h, w);
  Rng rng(seed);
  for (auto& v : t.v) v = static_cast<float>(rng.uniform01());
  return t;
}

double loss_at(Net& net, const Tensor& x, const std::vector<int>& labels) {
  Tensor out = net.forward(x, false);
  return softmax_cross_entropy(out, labels, nullptr);
}

// Central-difference check of analytic parameter gradients at a sample of
// entries. ReLU and max-pool switches make the loss only piecewise smooth,
// so probes whose two one-sided slopes disagree (a switch inside the probe
// interval) are discarded; everywhere else the match must be tight. A
// coverage floor keeps the skip rule from hiding a systematic bug.
void check_param_gradients(Net& net, const Tensor& x,
                           const std::vector<int>& labels) {
  net.zero_grads();
  Tensor out = net.forward(x, true);
  Tensor g;
  softmax_cross_entropy(out, labels, &g);
  net.backward(g, true);

  // small enough that high-fan-out entries (conv biases) rarely sweep a
  // ReLU/pool switch across the whole feature map, large enough that float
  // forward noise stays well inside the absolute tolerance
  const double eps = 2e-3;
  const double l0 = loss_at(net, x, labels);
  Rng pick(123);
  int checked = 0;
  for (auto& p : net.named_params()) {
    const size_t count = p.value->size();
    const int samples = static_cast<int>(std::min<size_t>(5, count));
    for (int s = 0; s < samples; ++s) {
      const size_t j = static_cast<size_t>(pick.uniform_int(count));
      const float keep = (*p.value)[j];
      (*p.value)[j] = keep + static_cast<float>(eps);
      const double lp = loss_at(net, x, labels);
      (*p.value)[j] = keep - static_cast<float>(eps);
      const double lm = loss_at(net, x, labels);
      (*p.value)[j] = keep;
      const double fwd = (lp - l0) / eps;
      const double bwd = (l0 - lm) / eps;
      if (std::abs(fwd - bwd) > 0.2 * (std::abs(fwd) + std::abs(bwd)) + 1e-4)
        continue;  // kinked inside the interval; central difference invalid
      const double fd = (lp - lm) / (2 * eps);
      const double an = (*p.grad)[j];
      const double tol = 2e-3 + 0.05 * std::abs(an);
      INFO("param ", p.name, " index ", j, " fd=", fd, " analytic=", an);
      CHECK(std::abs(fd - an) < tol);
      ++checked;
    }
  }
  CHECK(checked >= 10);
}

}  // namespace

TEST_CASE("batch_from_images scales to [0,1] and keeps layout") {
  Image a(3, 2, 2);
  for (size_t i = 0; i < a.pixels.size(); ++i)
    a.pixels[i] = static_cast<uint8_t>(i * 20);
  Image b(3, 2, 2, 255);
  Tensor t = batch_from_images({&a, &b});
  CHECK(t.n == 2);
  CHECK(t.c == 3);
  CHECK(t.h == 2);
  CHECK(t.w == 2);
  CHECK(t.at(0, 0, 0, 0) == doctest::Approx(0.0f));
  CHECK(t.at(0, 1, 0, 1) == doctest::Approx(100.0f / 255.0f));
  CHECK(t.at(1, 2, 1, 1) == doctest::Approx(1.0f));

  Tensor single = tensor_from_image(a);
  CHECK(single.n == 1);
  CHECK(single.v == std::vector<float>(t.v.begin(), t.v.begin() + 12));
}

TEST_CASE("softmax cross entropy on uniform logits is log K") {
  Tensor logits(2, 5, 1, 1, 0.f);
  double loss = softmax_cross_entropy(logits, {0, 3}, nullptr);
  CHECK(loss == doctest::Approx(std::log(5.0)).epsilon(1e-6));
}

TEST_CASE("softmax cross entropy two-class golden") {
  Tensor logits(1, 2, 1, 1);
  logits.v = {2.f, 0.f};
  Tensor grad;
  double loss = softmax_cross_entropy(logits, {0}, &grad);
  const double p0 = std::exp(2.0) / (std::exp(2.0) + 1.0);
  CHECK(loss == doctest::Approx(-std::log(p0)).epsilon(1e-6));
  CHECK(grad.v[0] == doctest::Approx(p0 - 1.0).epsilon(1e-5));
  CHECK(grad.v[1] == doctest::Approx(1.0 - p0).epsilon(1e-5));
}

TEST_CASE("softmax gradient rows sum to zero") {
  Tensor logits = random_tensor(4, 6, 1, 1, 9);
  Tensor grad;
  softmax_cross_entropy(logits, {1, 0, 5, 2}, &grad);
  for (int i = 0; i < 4; ++i) {
    double s = 0;
    for (int j = 0; j < 6; ++j) s += grad.at(i, j, 0, 0);
    CHECK(std::abs(s) < 1e-6);
  }
}

TEST_CASE("softmax_row normalizes and argmax_row agrees") {
  Tensor logits = random_tensor(3, 7, 1, 1, 11);
  for (int i = 0; i < 3; ++i) {
    auto p = softmax_row(logits, i);
    double s = 0;
    int best = 0;
    for (int j = 0; j < 7; ++j) {
      CHECK(p[j] > 0);
      s += p[j];
      if (p[j] > p[best]) best = j;
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(argmax_row(logits, i) == best);
  }
}

TEST_CASE("softmax cross entropy rejects bad labels") {
  Tensor logits(2, 3, 1, 1, 0.f);
  CHECK_THROWS_AS(softmax_cross_entropy(logits, {0}, nullptr), DimensionError);
  CHECK_THROWS_AS(softmax_cross_entropy(logits, {0, 3}, nullptr), DimensionError);
}

TEST_CASE("conv stack parameter gradients match finite differences") {
  Rng rng(31);
  Net net;
  net.layers.emplace_back(new Conv2d("conv", 3, 4, 3, 1, rng));
  net.layers.emplace_back(new ReLU("relu"));
  net.layers.emplace_back(new MaxPool2("pool"));
  net.layers.emplace_back(new Flatten("flatten"));
  net.layers.emplace_back(new Linear("fc", 4 * 4 * 4, 3, rng));

  Tensor x = random_tensor(2, 3, 8, 8, 5);
  check_param_gradients(net, x, {0, 2});
}

TEST_CASE("input gradients match finite differences") {
  Rng rng(32);
  Net net;
  net.layers.emplace_back(new Conv2d("conv", 2, 3, 3, 1, rng));
  net.layers.emplace_back(new ReLU("relu"));
  net.layers.emplace_back(new Flatten("flatten"));
  net.layers.emplace_back(new Linear("fc", 3 * 6 * 6, 4, rng));

  Tensor x = random_tensor(2, 2, 6, 6, 6);
  const std::vector<int> labels = {1, 3};

  net.zero_grads();
  Tensor out = net.forward(x, true);
  Tensor g;
  softmax_cross_entropy(out, labels, &g);
  Tensor gin = net.backward(g, false);
  REQUIRE(gin.same_shape(x));

  const double eps = 1e-3;
  Rng pick(77);
  for (int s = 0; s < 12; ++s) {
    const size_t j = static_cast<size_t>(pick.uniform_int(x.v.size()));
    Tensor xp = x, xm = x;
    xp.v[j] += static_cast<float>(eps);
    xm.v[j] -= static_cast<float>(eps);
    const double fd = (loss_at(net, xp, labels) - loss_at(net, xm, labels)) / (2 * eps);
    const double an = gin.v[j];
    CHECK(std::abs(fd - an) < 2e-3 + 0.05 * std::abs(an));
  }
}

TEST_CASE("param_grads=false leaves parameter gradients untouched") {
  Rng rng(33);
  Net net;
  net.layers.emplace_back(new Conv2d("conv", 2, 2, 3, 1, rng));
  net.layers.emplace_back(new Flatten("flatten"));
  net.layers.emplace_back(new Linear("fc", 2 * 6 * 6, 3, rng));
  Tensor x = random_tensor(1, 2, 6, 6, 1);
  net.zero_grads();
  Tensor out = net.forward(x, true);
  Tensor g;
  softmax_cross_entropy(out, {0}, &g);
  net.backward(g, false);
  for (auto& p : net.named_params())
    for (float v : *p.grad) CHECK(v == 0.f);
}

TEST_CASE("residual adds the identity and backpropagates") {
  Rng rng_a(44);
  std::vector<std::unique_ptr<Layer>> body;
  body.emplace_back(new Conv2d("rc", 3, 3, 3, 1, rng_a));
  Net net;
  net.layers.emplace_back(new Residual("res", std::move(body)));

  Rng rng_b(44);
  Conv2d plain("rc", 3, 3, 3, 1, rng_b);

  Tensor x = random_tensor(1, 3, 6, 6, 8);
  Tensor res_out = net.forward(x, false);
  Tensor conv_out = plain.forward(x, false);
  REQUIRE(res_out.same_shape(conv_out));
  for (size_t i = 0; i < res_out.v.size(); ++i)
    CHECK(res_out.v[i] == doctest::Approx(conv_out.v[i] + x.v[i]).epsilon(1e-5));

  // gradient check through the skip connection
  Net full;
  Rng rng_c(45);
  std::vector<std::unique_ptr<Layer>> body2;
  body2.emplace_back(new Conv2d("rc2", 2, 2, 3, 1, rng_c));
  body2.emplace_back(new ReLU("rr"));
  full.layers.emplace_back(new Residual("res2", std::move(body2)));
  full.layers.emplace_back(new Flatten("flatten"));
  full.layers.emplace_back(new Linear("fc", 2 * 5 * 5, 3, rng_c));
  Tensor x2 = random_tensor(2, 2, 5, 5, 9);
  check_param_gradients(full, x2, {2, 0});
}

TEST_CASE("maxpool picks maxima and routes gradients to them") {
  MaxPool2 pool("p");
  Tensor x(1, 1, 2, 2);
  x.v = {1.f, 2.f, 3.f, 4.f};
  Tensor out = pool.forward(x, true);
  CHECK(out.h == 1);
  CHECK(out.w == 1);
  CHECK(out.v[0] == 4.f);
  Tensor g(1, 1, 1, 1);
  g.v = {2.5f};
  Tensor gin = pool.backward(g, false);
  CHECK(gin.v == std::vector<float>{0.f, 0.f, 0.f, 2.5f});
}

TEST_CASE("channel mask multiplies channels") {
  ChannelMask mask("m", 3);
  CHECK(mask.channels() == 3);
  Tensor x = random_tensor(2, 3, 4, 4, 10);
  Tensor out = mask.forward(x, true);
  CHECK(out.v == x.v);  // all-ones mask is the identity

  mask.mask()[1] = 0.f;
  out = mask.forward(x, true);
  for (int n = 0; n < 2; ++n)
    for (int y = 0; y < 4; ++y)
      for (int xx = 0; xx < 4; ++xx) {
        CHECK(out.at(n, 0, y, xx) == x.at(n, 0, y, xx));
        CHECK(out.at(n, 1, y, xx) == 0.f);
        CHECK(out.at(n, 2, y, xx) == x.at(n, 2, y, xx));
      }

  Tensor g(2, 3, 4, 4, 1.f);
  Tensor gin = mask.backward(g, false);
  for (int n = 0; n < 2; ++n)
    for (int y = 0; y < 4; ++y)
      for (int xx = 0; xx < 4; ++xx) {
        CHECK(gin.at(n, 0, y, xx) == 1.f);
        CHECK(gin.at(n, 1, y, xx) == 0.f);
      }
}

TEST_CASE("global average pool forward and backward") {
  GlobalAvgPool gap("g");
  Tensor x(1, 2, 2, 2);
  x.v = {1.f, 2.f, 3.f, 4.f, 10.f, 20.f, 30.f, 40.f};
  Tensor out = gap.forward(x, true);
  CHECK(out.h == 1);
  CHECK(out.w == 1);
  CHECK(out.at(0, 0, 0, 0) == doctest::Approx(2.5f));
  CHECK(out.at(0, 1, 0, 0) == doctest::Approx(25.f));
  Tensor g(1, 2, 1, 1);
  g.v = {4.f, 8.f};
  Tensor gin = gap.backward(g, false);
  CHECK(gin.at(0, 0, 1, 1) == doctest::Approx(1.f));
  CHECK(gin.at(0, 1, 0, 0) == doctest::Approx(2.f));
}

TEST_CASE("conv_small forward emits class logits") {
  ModelArch arch;
  arch.name = "conv_small";
  arch.num_classes = 4;
  arch.width = 2;
  arch.image_size = 16;
  Net net = build_model(arch, 1);
  Tensor x = random_tensor(3, 3, 16, 16, 2);
  Tensor out = net.forward(x, false);
  CHECK(out.n == 3);
  CHECK(out.c == 4);
  CHECK(out.h == 1);
  CHECK(out.w == 1);
  CHECK(net.channel_mask() != nullptr);
  CHECK(net.last_conv() != nullptr);
  CHECK(net.last_conv()->name() == "conv3");
  CHECK(net.cam_layer >= 0);
  CHECK(net.param_count() > 0);
}

TEST_CASE("conv_deeper and mlp build and run") {
  ModelArch arch;
  arch.num_classes = 3;
  arch.width = 2;
  arch.image_size = 16;

  arch.name = "conv_deeper";
  Net deeper = build_model(arch, 3);
  Tensor x = random_tensor(2, 3, 16, 16, 4);
  Tensor out = deeper.forward(x, false);
  CHECK(out.c == 3);

  arch.name = "mlp";
  Net mlp = build_model(arch, 3);
  Tensor out2 = mlp.forward(x, false);
  CHECK(out2.c == 3);
  CHECK(mlp.cam_layer == -1);
  CHECK(mlp.channel_mask() == nullptr);
  CHECK(mlp.last_conv() == nullptr);

  arch.name = "transformer";
  CHECK_THROWS_AS(build_model(arch, 0), ConfigError);
  arch.name = "conv_small";
  arch.image_size = 20;
  CHECK_THROWS_AS(build_model(arch, 0), ConfigError);
}

TEST_CASE("build_model is deterministic in the seed") {
  ModelArch arch;
  arch.num_classes = 4;
  arch.width = 2;
  arch.image_size = 16;
  Net a = build_model(arch, 7);
  Net b = build_model(arch, 7);
  Net c = build_model(arch, 8);
  CHECK(model_hash(a) == model_hash(b));
  CHECK(model_hash(a) != model_hash(c));
}

TEST_CASE("clone_model is a deep copy") {
  ModelArch arch;
  arch.num_classes = 4;
  arch.width = 2;
  arch.image_size = 16;
  Net net = build_model(arch, 9);
  net.channel_mask()->mask()[0] = 0.f;
  Net copy = clone_model(net);
  CHECK(model_hash(copy) == model_hash(net));
  CHECK(copy.channel_mask()->mask()[0] == 0.f);

  // mutating the copy leaves the original alone
  const uint64_t before = model_hash(net);
  (*copy.named_params()[0].value)[0] += 1.f;
  CHECK(model_hash(net) == before);
  CHECK(model_hash(copy) != before);
}

TEST_CASE("model save/load round-trip preserves weights and outputs") {
  TempDir tmp;
  ModelArch arch;
  arch.num_classes = 4;
  arch.width = 2;
  arch.image_size = 16;
  Net net = build_model(arch, 13);
  save_model(net, tmp.str("model"));
  Net back = load_model(tmp.str("model"));
  CHECK(model_hash(back) == model_hash(net));
  Tensor x = random_tensor(2, 3, 16, 16, 14);
  Tensor a = net.forward(x, false);
  Tensor b = back.forward(x, false);
  CHECK(a.v == b.v);
  CHECK_THROWS_AS(load_model(tmp.str("missing")), IntegrityError);
}

TEST_CASE("sgd without momentum is plain descent") {
  std::vector<float> w = {1.f, -2.f};
  std::vector<float> g = {0.5f, 0.25f};
  Sgd opt(0.0, 0.0);
  opt.step({{"w", &w, &g}}, 0.1);
  CHECK(w[0] == doctest::Approx(1.0 - 0.1 * 0.5));
  CHECK(w[1] == doctest::Approx(-2.0 - 0.1 * 0.25));
}

TEST_CASE("sgd weight decay pulls weights toward zero") {
  std::vector<float> w = {2.f};
  std::vector<float> g = {0.f};
  Sgd opt(0.0, 0.1);
  opt.step({{"w", &w, &g}}, 1.0);
  // effective gradient 0 + 0.1*2 = 0.2
  CHECK(w[0] == doctest::Approx(1.8));
}

TEST_CASE("sgd momentum accumulates velocity") {
  std::vector<float> w = {1.f};
  std::vector<float> g = {0.5f};
  Sgd opt(0.9, 0.0);
  opt.step({{"w", &w, &g}}, 0.1);
  CHECK(w[0] == doctest::Approx(0.95));
  opt.step({{"w", &w, &g}}, 0.1);
  // velocity = 0.9*(-0.05) - 0.05 = -0.095
  CHECK(w[0] == doctest::Approx(0.855));
}

TEST_CASE("cam capture stores activations and gradient at the hook") {
  ModelArch arch;
  arch.num_classes = 4;
  arch.width = 2;
  arch.image_size = 16;
  Net net = build_model(arch, 21);
  net.capture_cam = true;
  Tensor x = random_tensor(1, 3, 16, 16, 22);
  Tensor out = net.forward(x, false);
  CHECK(net.cam_activations.n == 1);
  CHECK(net.cam_activations.c == 8);  // 4 * width
  CHECK(net.cam_activations.h == 2);  // 16 / 8
  Tensor g(1, 4, 1, 1, 0.f);
  g.v[1] = 1.f;
  net.backward(g, false);
  CHECK(net.cam_gradient.same_shape(net.cam_activations));
}
