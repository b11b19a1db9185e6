#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "scalenet/error.hpp"
#include "scalenet/scale_space.hpp"

using namespace scalenet;
using namespace scalenet::scale;

namespace {

ScaleDistribution one_hot(int n, int i) {
  ScaleDistribution d{std::vector<double>(n, 0.0)};
  d.p[i] = 1.0;
  return d;
}

ScaleDistribution random_dist(int n, std::mt19937_64& rng, double sparsity = 0.0) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ScaleDistribution d{std::vector<double>(n)};
  for (auto& v : d.p) v = u(rng) < sparsity ? 0.0 : u(rng);
  if (std::accumulate(d.p.begin(), d.p.end(), 0.0) == 0.0) d.p[0] = 1.0;
  const double s = std::accumulate(d.p.begin(), d.p.end(), 0.0);
  for (auto& v : d.p) v /= s;
  return d;
}

}  // namespace

TEST_CASE("make_bins") {
  const auto b = make_bins();
  CHECK(b.count() == 13);
  CHECK(b.scale(6) == 1.0);
  CHECK(b.min_scale() == doctest::Approx(0.125).epsilon(1e-14));
  CHECK(b.max_scale() == doctest::Approx(8.0).epsilon(1e-14));
  for (int i = 1; i < b.count(); ++i) CHECK(b.scale(i) > b.scale(i - 1));

  const auto b3 = make_bins(2.0, 3);
  CHECK(b3.scale(0) == 0.5);
  CHECK(b3.scale(1) == 1.0);
  CHECK(b3.scale(2) == 2.0);

  CHECK_THROWS_AS(make_bins(std::sqrt(2.0), 4), DomainError);
  CHECK_THROWS_AS(make_bins(1.0, 13), DomainError);
  CHECK_THROWS_AS(make_bins(2.0, 1), DomainError);
}

TEST_CASE("bin symmetry") {
  for (double sigma : {std::sqrt(2.0), 1.1, 2.0, 3.7}) {
    for (int n : {3, 5, 13, 21}) {
      const auto b = make_bins(sigma, n);
      for (int i = 0; i < n; ++i) CHECK(std::abs(b.scale(i) * b.scale(n - 1 - i) - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("soft log scale") {
  const auto b = make_bins();
  const auto c = soft_log_scale(one_hot(13, 6), b);
  CHECK(c.log_scale == 0.0);
  CHECK(c.scale == 1.0);
  CHECK(soft_log_scale(one_hot(13, 8), b).scale == doctest::Approx(2.0).epsilon(1e-14));
  ScaleDistribution half{std::vector<double>(13, 0.0)};
  half.p[6] = half.p[8] = 0.5;
  CHECK(soft_log_scale(half, b).scale == doctest::Approx(std::sqrt(2.0)).epsilon(1e-14));
  CHECK_THROWS_AS(soft_log_scale(one_hot(5, 2), b), DomainError);
}

TEST_CASE("one-hot readouts equal the bin scale exactly") {
  for (int n : {3, 13}) {
    const auto b = make_bins(std::sqrt(2.0), n);
    for (int i = 0; i < n; ++i) {
      const auto d = one_hot(n, i);
      CHECK(soft_log_scale(d, b).scale == b.scale(i));
      CHECK(soft_log_scale(d, b).log_scale == b.log_scale(i));
      CHECK(hard_scale(d, b).scale == soft_log_scale(d, b).scale);
      CHECK(natural_soft_scale(d, b).scale == b.scale(i));
    }
  }
}

TEST_CASE("natural soft scale") {
  const auto b3 = make_bins(2.0, 3);
  CHECK(natural_soft_scale(ScaleDistribution{{0.5, 0.0, 0.5}}, b3).scale == 1.25);
  CHECK(natural_soft_scale(ScaleDistribution{{1 / 3.0, 1 / 3.0, 1 / 3.0}}, b3).scale ==
        doctest::Approx(7.0 / 6.0).epsilon(1e-14));
  const auto e = natural_soft_scale(ScaleDistribution{{0.5, 0.0, 0.5}}, b3);
  CHECK(e.log_scale == doctest::Approx(std::log(1.25)).epsilon(1e-14));
}

TEST_CASE("hard scale and ties") {
  const auto b = make_bins();
  CHECK(hard_scale(one_hot(13, 4), b).scale == doctest::Approx(0.5).epsilon(1e-14));
  ScaleDistribution tie{std::vector<double>(13, 0.0)};
  tie.p[5] = tie.p[7] = 0.5;
  CHECK(hard_bin(tie, b) == 5);
  CHECK(hard_scale(tie, b).scale == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-14));
  ScaleDistribution uniform{std::vector<double>(13, 1.0 / 13)};
  CHECK(hard_scale(uniform, b).scale == 1.0);
  ScaleDistribution outer{std::vector<double>(13, 0.0)};
  outer.p[0] = outer.p[2] = 0.5;
  CHECK(hard_bin(outer, b) == 2);
}

TEST_CASE("consistency combine") {
  const double l2 = std::log(2.0);
  CHECK(consistency_combine(ScaleEstimate::from_log(l2), ScaleEstimate::from_log(-l2)).scale ==
        doctest::Approx(2.0).epsilon(1e-14));
  CHECK(consistency_combine(ScaleEstimate::from_log(0), ScaleEstimate::from_log(0)).scale == 1.0);
  CHECK(consistency_combine(ScaleEstimate::from_log(l2), ScaleEstimate::from_log(0)).scale ==
        doctest::Approx(std::sqrt(2.0)).epsilon(1e-14));
}

TEST_CASE("property: consistency antisymmetry is exact") {
  std::mt19937_64 rng(31);
  const auto b = make_bins();
  for (int trial = 0; trial < 500; ++trial) {
    const auto f = soft_log_scale(random_dist(13, rng, 0.3), b);
    const auto r = soft_log_scale(random_dist(13, rng, 0.3), b);
    const auto ab = consistency_combine(f, r), ba = consistency_combine(r, f);
    CHECK(ab.log_scale == -ba.log_scale);
    CHECK(std::abs(ab.scale * ba.scale - 1.0) < 1e-15);
  }
}

TEST_CASE("property: soft log scale is a convex combination and mirror-antisymmetric") {
  std::mt19937_64 rng(32);
  for (int n : {3, 7, 13}) {
    const auto b = make_bins(std::sqrt(2.0), n);
    for (int trial = 0; trial < 200; ++trial) {
      auto d = random_dist(n, rng, 0.2);
      const auto e = soft_log_scale(d, b);
      CHECK(e.log_scale >= b.log_scale(0) - 1e-15);
      CHECK(e.log_scale <= b.log_scale(n - 1) + 1e-15);
      CHECK(std::abs(e.scale - std::exp(e.log_scale)) <= 1e-12 * e.scale);
      std::reverse(d.p.begin(), d.p.end());
      CHECK(std::abs(soft_log_scale(d, b).log_scale + e.log_scale) < 1e-14);
    }
  }
}

TEST_CASE("gt distribution from scalar") {
  const auto b = make_bins();
  CHECK(gt_distribution_from_scalar(1.0, b).p == one_hot(13, 6).p);
  const auto mid = gt_distribution_from_scalar(std::pow(2.0, 0.25), b);
  CHECK(mid.p[6] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(mid.p[7] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(gt_distribution_from_scalar(b.scale(3), b).p == one_hot(13, 3).p);
  CHECK(gt_distribution_from_scalar(b.min_scale(), b).p == one_hot(13, 0).p);
  CHECK(gt_distribution_from_scalar(b.max_scale(), b).p == one_hot(13, 12).p);
  CHECK_THROWS_AS(gt_distribution_from_scalar(9.0, b), DomainError);
  CHECK_THROWS_AS(gt_distribution_from_scalar(0.1, b), DomainError);
  CHECK_THROWS_AS(gt_distribution_from_scalar(0.0, b), DomainError);
}

TEST_CASE("property: scalar round trip within 1e-12") {
  std::mt19937_64 rng(33);
  for (int n : {3, 13, 15}) {
    const auto b = make_bins(std::sqrt(2.0), n);
    std::uniform_real_distribution<double> u(b.log_scale(0), b.log_scale(n - 1));
    for (int trial = 0; trial < 1000; ++trial) {
      const double ls = u(rng);
      const auto d = gt_distribution_from_scalar(std::exp(ls), b);
      CHECK(d.valid(1e-12));
      CHECK(std::abs(soft_log_scale(d, b).log_scale - ls) < 1e-12);
    }
  }
}

TEST_CASE("gt distribution from ratios") {
  const auto b = make_bins();
  CHECK(gt_distribution_from_ratios(std::vector<double>(5, 1.0), b).p == one_hot(13, 6).p);
  const auto two = gt_distribution_from_ratios(std::vector<double>{0.5, 2.0}, b);
  CHECK(two.p[4] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(two.p[8] == doctest::Approx(0.5).epsilon(1e-12));
  const auto clamped = gt_distribution_from_ratios(std::vector<double>{100.0, 1e-4}, b);
  CHECK(clamped.p[0] == 0.5);
  CHECK(clamped.p[12] == 0.5);
  CHECK_THROWS_AS(gt_distribution_from_ratios(std::vector<double>{}, b), DomainError);
  CHECK_THROWS_AS(gt_distribution_from_ratios(std::vector<double>{1.0, -1.0}, b), DomainError);
}

TEST_CASE("ratio histogram matches a brute-force accumulator") {
  // Oracle: for every ratio walk all adjacent bin pairs, find the one that
  // brackets ln r and split the unit mass linearly in log space.
  const auto b = make_bins();
  std::mt19937_64 rng(34);
  std::uniform_real_distribution<double> u(std::log(0.5), std::log(2.0));
  std::vector<double> ratios(100);
  for (auto& r : ratios) r = std::exp(u(rng));

  std::vector<double> hist(13, 0.0);
  for (double r : ratios) {
    const double lr = std::log(r);
    for (int i = 0; i + 1 < 13; ++i) {
      const double lo = i * 0.5 * std::log(2.0) - 3.0 * std::log(2.0);
      const double hi = lo + 0.5 * std::log(2.0);
      if (lr >= lo && lr < hi) {
        const double w = (lr - lo) / (hi - lo);
        hist[i] += 1.0 - w;
        hist[i + 1] += w;
        break;
      }
    }
  }
  for (auto& h : hist) h /= 100.0;

  const auto d = gt_distribution_from_ratios(ratios, b);
  CHECK(d.valid(1e-12));
  for (int i = 0; i < 13; ++i) CHECK(std::abs(d.p[i] - hist[i]) < 1e-12);
}

TEST_CASE("kl divergence") {
  ScaleDistribution p{{0.2, 0.3, 0.5}};
  CHECK(kl_divergence(p, p) == 0.0);
  CHECK(kl_divergence(ScaleDistribution{{1, 0}}, ScaleDistribution{{0.5, 0.5}}) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-14));
  CHECK_THROWS_AS(kl_divergence(p, ScaleDistribution{{0.5, 0.5}}), DomainError);
  // floor inside the log
  CHECK(kl_divergence(ScaleDistribution{{1, 0}}, ScaleDistribution{{0, 1}}) ==
        doctest::Approx(-std::log(1e-12)).epsilon(1e-12));
}

TEST_CASE("kl divergence matches a direct loop on a frozen pair") {
  const ScaleDistribution t{{0.1, 0.0, 0.25, 0.4, 0.25}};
  const ScaleDistribution q{{0.3, 0.2, 0.1, 0.15, 0.25}};
  const double expected = 0.1 * std::log(0.1 / 0.3) + 0.25 * std::log(0.25 / 0.1) +
                          0.4 * std::log(0.4 / 0.15);
  CHECK(kl_divergence(t, q) == doctest::Approx(expected).epsilon(1e-14));
  CHECK(expected == doctest::Approx(0.511543155306).epsilon(1e-11));
}

TEST_CASE("property: kl is nonnegative and zero only on equality") {
  std::mt19937_64 rng(35);
  for (int trial = 0; trial < 500; ++trial) {
    const auto p = random_dist(13, rng, 0.3), q = random_dist(13, rng, 0.0);
    CHECK(kl_divergence(p, q) >= 0.0);
    CHECK(kl_divergence(q, q) == 0.0);
    if (p.p != q.p) CHECK(kl_divergence(p, q) > 0.0);
  }
}
