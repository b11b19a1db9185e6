#include "doctest.h"

#include <cmath>
#include <cstring>
#include <limits>
#include <random>
#include <vector>

#include "gradcheck.hpp"
#include "scalenet/autograd.hpp"
#include "scalenet/checkpoint.hpp"
#include "scalenet/error.hpp"
#include "scalenet/optim.hpp"
#include "test_util.hpp"

using namespace scalenet;
using namespace scalenet::nn;
using testutil::gradcheck;
using testutil::randn;
using V = Var<double>;
using Vs = std::vector<V>;

namespace {

// Reduces any output to a scalar with fixed random weights.
V project(const V& y, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  return weighted_sum(y, randn(y.shape(), rng));
}

Tensor<double> random_rows(std::size_t n, std::size_t k, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  Tensor<double> t({n, k});
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += t[i * k + j] = u(rng);
    for (std::size_t j = 0; j < k; ++j) t[i * k + j] /= s;
  }
  return t;
}

}  // namespace

TEST_CASE("primitive examples") {
  const auto sm = softmax(constant(Tensor<double>({1, 3}, 0.0)));
  for (double v : sm.value().values()) CHECK(v == doctest::Approx(1.0 / 3.0));

  const auto n = l2_normalize(constant(Tensor<double>({2}, std::vector<double>{3, 4})), 0);
  CHECK(n.value()[0] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(n.value()[1] == doctest::Approx(0.8).epsilon(1e-15));
  const auto z = l2_normalize(constant(Tensor<double>({2}, 0.0)), 0);
  CHECK(z.value()[0] == 0.0);

  const auto r = relu(constant(Tensor<double>({2}, std::vector<double>{-1, 2})));
  CHECK(r.value()[0] == 0.0);
  CHECK(r.value()[1] == 2.0);

  Tensor<double> img({1, 1, 2, 4}, std::vector<double>{1, 5, 2, 0, 3, 4, 7, 8});
  const auto mp = max_pool2(constant(img));
  CHECK(mp.shape() == Shape{1, 1, 1, 2});
  CHECK(mp.value()[0] == 5.0);
  CHECK(mp.value()[1] == 8.0);

  const auto lin = linear(constant(Tensor<double>({1, 2}, std::vector<double>{1, 2})),
                          constant(Tensor<double>({3, 2}, std::vector<double>{1, 0, 0, 1, 1, 1})),
                          constant(Tensor<double>({3}, std::vector<double>{0, 0, 10})));
  CHECK(lin.value() == Tensor<double>({1, 3}, std::vector<double>{1, 2, 13}));

  const auto fl = flatten(constant(Tensor<double>({2, 3, 4})));
  CHECK(fl.shape() == Shape{2, 12});

  Vs parts{constant(Tensor<double>({2, 1}, 1.0)), constant(Tensor<double>({2, 2}, 2.0))};
  const auto cat = concat<double>(parts, 1);
  CHECK(cat.value() == Tensor<double>({2, 3}, std::vector<double>{1, 2, 2, 1, 2, 2}));

  const auto sl = slice_batch(constant(Tensor<double>({3, 2}, std::vector<double>{0, 1, 2, 3, 4, 5})), 1, 3);
  CHECK(sl.value() == Tensor<double>({2, 2}, std::vector<double>{2, 3, 4, 5}));

  const auto kl = kl_div_loss(constant(Tensor<double>({1, 2}, 0.0)),
                              Tensor<double>({1, 2}, std::vector<double>{1, 0}));
  CHECK(kl.value()[0] == doctest::Approx(std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("shape errors") {
  const auto a = constant(Tensor<double>({2, 3}));
  CHECK_THROWS_AS(linear(a, constant(Tensor<double>({4, 2})), constant(Tensor<double>({4}))), ShapeError);
  Vs parts{a, constant(Tensor<double>({3, 3}))};
  CHECK_THROWS_AS(concat<double>(parts, 1), ShapeError);
  CHECK_THROWS_AS(conv2d(constant(Tensor<double>({1, 2, 5, 5})), constant(Tensor<double>({1, 3, 3, 3})), V(), {}),
                  ShapeError);
  CHECK_THROWS_AS(correlate(constant(Tensor<double>({1, 2, 3, 3})), constant(Tensor<double>({1, 2, 3, 4}))),
                  ShapeError);
  CHECK_THROWS_AS(slice_batch(a, 1, 3), ShapeError);
}

TEST_CASE("property: softmax sums to one and is shift invariant") {
  std::mt19937_64 rng(51);
  std::uniform_real_distribution<double> shift(-50.0, 50.0);
  for (int trial = 0; trial < 100; ++trial) {
    auto x = randn({3, 13}, rng, 5.0);
    const auto p = softmax(constant(x)).value();
    const double c = shift(rng);
    for (auto& v : x.values()) v += c;
    const auto q = softmax(constant(x)).value();
    for (std::size_t r = 0; r < 3; ++r) {
      double s = 0.0;
      for (std::size_t j = 0; j < 13; ++j) {
        s += p[r * 13 + j];
        CHECK(std::abs(p[r * 13 + j] - q[r * 13 + j]) < 1e-9);
      }
      CHECK(std::abs(s - 1.0) < 1e-6);
    }
  }
  // float path stays finite on large logits
  Tensor<float> big({1, 3}, std::vector<float>{1e4f, 0.0f, -1e4f});
  const auto pf = softmax(constant(big)).value();
  CHECK(pf[0] == doctest::Approx(1.0f));
}

TEST_CASE("gradient check of every primitive") {
  std::mt19937_64 rng(52);
  constexpr double kTol = 1e-4;

  SUBCASE("conv2d") {
    for (int stride : {1, 2}) {
      for (int dil : {1, 2}) {
        const ConvGeometry g{stride, dil, dil};
        const auto r = gradcheck(
            [&](const Vs& v) { return project(conv2d(v[0], v[1], v[2], g)); },
            {randn({2, 2, 6, 5}, rng), randn({3, 2, 3, 3}, rng), randn({3}, rng)});
        CHECK(r.max_rel < kTol);
      }
    }
    const auto nobias = gradcheck([&](const Vs& v) { return project(conv2d(v[0], v[1], V(), {2, 1, 1})); },
                                  {randn({1, 3, 5, 5}, rng), randn({2, 3, 1, 1}, rng)});
    CHECK(nobias.max_rel < kTol);
  }
  SUBCASE("relu") {
    auto x = randn({4, 7}, rng);
    for (auto& v : x.values()) v += (v > 0 ? 0.1 : -0.1);  // keep away from the kink
    CHECK(gradcheck([](const Vs& v) { return project(relu(v[0])); }, {x}).max_rel < kTol);
  }
  SUBCASE("max_pool2") {
    CHECK(gradcheck([](const Vs& v) { return project(max_pool2(v[0])); }, {randn({2, 2, 5, 6}, rng)})
              .max_rel < kTol);
  }
  SUBCASE("linear") {
    CHECK(gradcheck([](const Vs& v) { return project(linear(v[0], v[1], v[2])); },
                    {randn({3, 5}, rng), randn({4, 5}, rng), randn({4}, rng)})
              .max_rel < kTol);
  }
  SUBCASE("softmax") {
    CHECK(gradcheck([](const Vs& v) { return project(softmax(v[0])); }, {randn({2, 6}, rng)}).max_rel <
          kTol);
  }
  SUBCASE("l2_normalize") {
    for (std::size_t axis : {0u, 1u, 2u}) {
      CHECK(gradcheck([&](const Vs& v) { return project(l2_normalize(v[0], axis)); },
                      {randn({2, 3, 4}, rng)})
                .max_rel < kTol);
    }
  }
  SUBCASE("flatten, concat, slice") {
    CHECK(gradcheck(
              [](const Vs& v) {
                Vs parts{flatten(v[0]), v[1]};
                return project(slice_batch(concat<double>(parts, 1), 1, 3));
              },
              {randn({3, 2, 2}, rng), randn({3, 5}, rng)})
              .max_rel < kTol);
    CHECK(gradcheck(
              [](const Vs& v) {
                Vs parts{v[0], v[1]};
                return project(concat<double>(parts, 0));
              },
              {randn({1, 2, 3}, rng), randn({2, 2, 3}, rng)})
              .max_rel < kTol);
  }
  SUBCASE("batch_norm training") {
    for (const Shape& shape : {Shape{4, 3, 3, 2}, Shape{5, 3}}) {
      const auto r = gradcheck(
          [&](const Vs& v) {
            BatchNormState<double> state(3);
            return project(batch_norm(v[0], v[1], v[2], state, {}));
          },
          {randn(shape, rng), randn({3}, rng), randn({3}, rng)});
      CHECK(r.max_rel < kTol);
    }
  }
  SUBCASE("batch_norm eval") {
    BatchNormState<double> state(3);
    state.running_mean = randn({3}, rng);
    state.running_var = Tensor<double>({3}, std::vector<double>{0.5, 1.5, 2.0});
    const auto r = gradcheck(
        [&](const Vs& v) { return project(batch_norm(v[0], v[1], v[2], state, {false, 0.9, 1e-5})); },
        {randn({2, 3, 2, 2}, rng), randn({3}, rng), randn({3}, rng)});
    CHECK(r.max_rel < kTol);
  }
  SUBCASE("correlate") {
    CHECK(gradcheck([](const Vs& v) { return project(correlate(v[0], v[1])); },
                    {randn({2, 3, 3, 2}, rng), randn({2, 3, 3, 2}, rng)})
              .max_rel < kTol);
    // shared input (self-correlation)
    CHECK(gradcheck([](const Vs& v) { return project(correlate(v[0], v[0])); }, {randn({1, 2, 2, 3}, rng)})
              .max_rel < kTol);
  }
  SUBCASE("kl_div_loss") {
    const auto target = random_rows(3, 5, rng);
    CHECK(gradcheck([&](const Vs& v) { return kl_div_loss(v[0], target); }, {randn({3, 5}, rng)}).max_rel <
          kTol);
    Tensor<double> sparse({2, 4}, std::vector<double>{0, 1, 0, 0, 0.25, 0, 0.75, 0});
    CHECK(gradcheck([&](const Vs& v) { return kl_div_loss(v[0], sparse); }, {randn({2, 4}, rng)}).max_rel <
          kTol);
  }
  SUBCASE("mse_loss") {
    const auto target = randn({4, 1}, rng);
    CHECK(gradcheck([&](const Vs& v) { return mse_loss(v[0], target); }, {randn({4, 1}, rng)}).max_rel < kTol);
  }
  SUBCASE("volume chain: relu, correlate, l2 over the source axis") {
    CHECK(gradcheck([](const Vs& v) { return project(l2_normalize(relu(correlate(v[0], v[1])), 1)); },
                    {randn({2, 4, 3, 3}, rng), randn({2, 4, 3, 3}, rng)})
              .max_rel < kTol);
  }
}

TEST_CASE("backward contracts") {
  std::mt19937_64 rng(53);
  Parameter<double> w("w", randn({4}, rng));
  Parameter<double> unused("unused", randn({3}, rng));
  const auto x = randn({4}, rng);
  const auto loss = weighted_sum(param(w), x);
  backward(loss);
  CHECK(w.grad == x);
  for (double g : unused.grad.values()) CHECK(g == 0.0);

  CHECK_THROWS_AS(backward(param(w)), ShapeError);

  // Gradients accumulate across calls until zeroed.
  backward(weighted_sum(param(w), x));
  for (std::size_t i = 0; i < 4; ++i) CHECK(w.grad[i] == 2 * x[i]);
  w.zero_grad();
  for (double g : w.grad.values()) CHECK(g == 0.0);

  // A parameter used twice in one graph gets the summed gradient.
  Vs twice{param(w), param(w)};
  backward(weighted_sum(concat<double>(twice, 0), Tensor<double>({8}, 1.0)));
  for (double g : w.grad.values()) CHECK(g == 2.0);
}

TEST_CASE("batch norm running statistics") {
  Tensor<double> x({4, 1}, std::vector<double>{1, 2, 3, 6});
  BatchNormState<double> state(1);
  const auto g = constant(Tensor<double>({1}, 1.0)), b = constant(Tensor<double>({1}, 0.0));
  batch_norm(constant(x), g, b, state, {});
  CHECK(state.running_mean[0] == doctest::Approx(0.1 * 3.0));
  // unbiased batch variance 14/3
  CHECK(state.running_var[0] == doctest::Approx(0.9 + 0.1 * 14.0 / 3.0));
  const auto y = batch_norm(constant(x), g, b, state, {false, 0.9, 1e-5});
  CHECK(y.value()[0] == doctest::Approx((1.0 - state.running_mean[0]) / std::sqrt(state.running_var[0] + 1e-5)));

  // a single value per channel leaves the running stats alone
  BatchNormState<double> one(1);
  batch_norm(constant(Tensor<double>({1, 1}, 5.0)), g, b, one, {});
  CHECK(one.running_mean[0] == 0.0);
  CHECK(one.running_var[0] == 1.0);
}

TEST_CASE("adam") {
  OptimizerConfig cfg;
  Parameter<double> p("p", Tensor<double>({1}, 3.0));
  std::vector<Parameter<double>*> ps{&p};

  Adam<double> zero(cfg);
  zero.step(ps, 0);
  CHECK(p.value[0] == 3.0);

  Parameter<double> q("q", Tensor<double>({1}, 3.0));
  std::vector<Parameter<double>*> qs{&q};
  Adam<double> adam(cfg);
  q.grad[0] = 1.0;
  adam.step(qs, 0);
  CHECK(q.value[0] == doctest::Approx(3.0 - 1e-4).epsilon(1e-12));
  CHECK(adam.steps() == 1);

  // identical grads and state, epoch 10 vs epoch 0
  Parameter<double> a("a", Tensor<double>({1}, 0.0)), b("b", Tensor<double>({1}, 0.0));
  a.grad[0] = b.grad[0] = 0.7;
  std::vector<Parameter<double>*> as{&a}, bs{&b};
  Adam<double> o0(cfg), o10(cfg);
  o0.step(as, 0);
  o10.step(bs, 10);
  CHECK(b.value[0] / a.value[0] == doctest::Approx(0.1).epsilon(1e-12));

  CHECK(cfg.effective_rate(9) == cfg.learning_rate);
  CHECK(cfg.effective_rate(25) == doctest::Approx(1e-6).epsilon(1e-12));
  OptimizerConfig bad;
  bad.learning_rate = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("checkpoint container round trip is bit exact") {
  std::mt19937_64 rng(54);
  std::vector<NamedTensor> ts;
  Tensor<float> special({5}, std::vector<float>{0.0f, -0.0f, std::numeric_limits<float>::denorm_min(),
                                               std::numeric_limits<float>::max(), 1.0f / 3.0f});
  ts.push_back({"special", special});
  ts.push_back({"weights/é", randn({2, 3, 4}, rng).cast<float>()});
  ts.push_back({"scalar", Tensor<float>({}, std::vector<float>{42.0f})});
  const auto bytes = encode_checkpoint(ts);
  CHECK(std::memcmp(bytes.data(), "SCNW", 4) == 0);
  const auto back = decode_checkpoint(bytes);
  REQUIRE(back.size() == ts.size());
  for (std::size_t i = 0; i < ts.size(); ++i) {
    CHECK(back[i].name == ts[i].name);
    CHECK(back[i].value.shape() == ts[i].value.shape());
    CHECK(std::memcmp(back[i].value.data(), ts[i].value.data(), ts[i].value.size() * 4) == 0);
  }
  CHECK(std::signbit(back[0].value[1]));
  CHECK(encode_checkpoint(back) == bytes);

  testutil::TempDir dir("ckpt");
  save_checkpoint(dir / "c.scnw", ts);
  CHECK(encode_checkpoint(load_checkpoint(dir / "c.scnw")) == bytes);

  auto truncated = bytes;
  truncated.pop_back();
  CHECK_THROWS_AS(decode_checkpoint(truncated), CheckpointError);
  auto magic = bytes;
  magic[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(magic), CheckpointError);
  auto version = bytes;
  version[4] = 9;
  CHECK_THROWS_AS(decode_checkpoint(version), CheckpointError);
  auto trailing = bytes;
  trailing.push_back(0);
  CHECK_THROWS_AS(decode_checkpoint(trailing), CheckpointError);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing"), Error);
}
