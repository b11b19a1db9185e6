#include "doctest.h"

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <vector>

#include "scalenet/error.hpp"
#include "scalenet/imaging.hpp"
#include "scalenet/labeling.hpp"
#include "test_util.hpp"

using namespace scalenet;
using namespace scalenet::labeling;

namespace {

std::vector<Point2> random_points(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-200.0, 200.0);
  std::vector<Point2> pts(n);
  for (auto& p : pts) p = {u(rng), u(rng)};
  return pts;
}

std::vector<Point2> similarity(const std::vector<Point2>& pts, double c, double angle_deg,
                               Point2 shift) {
  const double a = angle_deg * std::numbers::pi / 180.0;
  std::vector<Point2> out;
  for (const auto& p : pts) {
    out.push_back({c * (std::cos(a) * p.x - std::sin(a) * p.y) + shift.x,
                   c * (std::sin(a) * p.x + std::cos(a) * p.y) + shift.y});
  }
  return out;
}

std::size_t parse_error_line(std::string_view text) {
  try {
    parse_correspondences(text);
  } catch (const ParseError& e) {
    return e.line();
  }
  return 0;
}

}  // namespace

TEST_CASE("pairwise ratio") {
  CorrespondenceSet cs({{0, 0}, {1, 0}}, {{0, 0}, {2, 0}});
  CHECK(pairwise_ratio(cs, 0, 1) == 2.0);
  CorrespondenceSet same({{0, 0}, {3, 4}, {-1, 7}}, {{0, 0}, {3, 4}, {-1, 7}});
  for (auto [i, j] : all_pairs(3)) CHECK(pairwise_ratio(same, i, j) == 1.0);
  CorrespondenceSet half({{0, 0}, {3, 4}}, {{1, 1}, {2.5, 3}});
  CHECK(pairwise_ratio(half, 0, 1) == 0.5);

  CHECK_THROWS_AS(pairwise_ratio(cs, 1, 1), DomainError);
  CorrespondenceSet degenerate({{0, 0}, {0, 1e-9}}, {{0, 0}, {1, 0}});
  CHECK_THROWS_AS(pairwise_ratio(degenerate, 0, 1), LabelingError);
  CHECK_THROWS_AS(CorrespondenceSet({{0, 0}}, {{0, 0}}), DomainError);
}

TEST_CASE("geometric mean of ratios") {
  CHECK(log_mean_scale(std::vector<double>{1, 4, 1, 4}) == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("similarity transforms are labeled exactly for any seed") {
  std::mt19937_64 gen(41);
  for (double c : {0.25, 0.5, 2.0, 4.0}) {
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
      const auto a = random_points(30, gen);
      CorrespondenceSet cs(a, similarity(a, c, 17.0 * seed, {3.0, -8.0}));
      Rng rng(seed);
      const int samples = 1 + static_cast<int>(seed * 13 % 300);
      const auto label = label_scale(cs, samples, rng);
      CHECK(label.ratios.size() == static_cast<std::size_t>(samples));
      CHECK(std::abs(label.s_gt - c) < 1e-9);
    }
  }
}

TEST_CASE("six point fixture against exhaustive log average") {
  CorrespondenceSet cs({{0, 0}, {10, 0}, {0, 10}, {7, 3}, {2, 9}, {5, 5}},
                       {{1, 2}, {21, 1}, {0, 18}, {15, 9}, {6, 19}, {9, 12}});
  const auto pairs = all_pairs(6);
  REQUIRE(pairs.size() == 15);
  // Frozen from an independent enumeration of the 15 distance ratios.
  CHECK(std::abs(label_from_pairs(cs, pairs).s_gt - 1.9427642214921916) < 1e-12);

  double sum = 0.0;
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t j = i + 1; j < 6; ++j) {
      const auto pa = cs.points_a(), pb = cs.points_b();
      sum += std::log(std::hypot(pb[i].x - pb[j].x, pb[i].y - pb[j].y) /
                      std::hypot(pa[i].x - pa[j].x, pa[i].y - pa[j].y));
    }
  }
  CHECK(std::abs(label_from_pairs(cs, pairs).s_gt - std::exp(sum / 15)) < 1e-12);
}

TEST_CASE("label_scale is reproducible and rejects degenerate pairs") {
  std::mt19937_64 gen(42);
  const auto a = random_points(10, gen);
  const auto b = random_points(10, gen);
  CorrespondenceSet cs(a, b);
  Rng r1(7), r2(7);
  const auto l1 = label_scale(cs, 1, r1), l2 = label_scale(cs, 1, r2);
  CHECK(l1.s_gt == l2.s_gt);
  CHECK(l1.ratios == l2.ratios);

  CorrespondenceSet dup({{1, 1}, {1, 1}, {1, 1}}, {{0, 0}, {1, 0}, {2, 0}});
  Rng r3(1);
  CHECK_THROWS_AS(label_scale(dup, 5, r3), LabelingError);
  CHECK_THROWS_AS(label_scale(cs, 0, r3), DomainError);
}

TEST_CASE("property: labeling equivariance, inversion and rigid invariance") {
  std::mt19937_64 gen(43);
  std::uniform_real_distribution<double> uc(0.2, 5.0), uang(-180.0, 180.0), ut(-50.0, 50.0);
  for (int trial = 0; trial < 100; ++trial) {
    const auto a = random_points(12, gen);
    const auto b = random_points(12, gen);
    const auto pairs = all_pairs(12);
    const double base = label_from_pairs(CorrespondenceSet(a, b), pairs).s_gt;

    const double c = uc(gen);
    auto scaled = b;
    for (auto& p : scaled) p = {p.x * c, p.y * c};
    CHECK(label_from_pairs(CorrespondenceSet(a, scaled), pairs).s_gt ==
          doctest::Approx(base * c).epsilon(1e-12));

    CHECK(label_from_pairs(CorrespondenceSet(b, a), pairs).s_gt ==
          doctest::Approx(1.0 / base).epsilon(1e-12));

    const auto moved = similarity(b, 1.0, uang(gen), {ut(gen), ut(gen)});
    CHECK(std::abs(label_from_pairs(CorrespondenceSet(a, moved), pairs).s_gt - base) < 1e-9);
  }
}

TEST_CASE("local vs global ratio") {
  std::mt19937_64 gen(44);
  const auto a = random_points(20, gen);
  CorrespondenceSet sim(a, similarity(a, 3.0, 10.0, {1, 1}));
  Rng rng(1);
  CHECK(local_global_ratio(sim, {50.0, 200}, rng).ratio == doctest::Approx(1.0).epsilon(1e-12));

  // Cluster one is tight (A-spacing < 20 px) and unscaled; cluster two is
  // spread out (A-spacing >= 30 px) and 4x larger in B. A 20 px radius only
  // sees cluster one.
  std::vector<Point2> pa, pb;
  std::uniform_real_distribution<double> u(0.0, 10.0);
  for (int i = 0; i < 6; ++i) {
    const Point2 p{u(gen), u(gen)};
    pa.push_back(p);
    pb.push_back(p);
  }
  for (int i = 0; i < 6; ++i) {
    const Point2 p{1000.0 + 30.0 * (i % 3), 30.0 * (i / 3)};
    pa.push_back(p);
    pb.push_back({4 * p.x, 4 * p.y});
  }
  CorrespondenceSet clusters(pa, pb);
  double local = 0.0, global = 0.0;
  int nl = 0, ng = 0;
  for (auto [i, j] : all_pairs(12)) {
    const double lr = std::log(pairwise_ratio(clusters, i, j));
    global += lr;
    ++ng;
    if (j < 6) {
      local += lr;
      ++nl;
    }
  }
  const auto res = local_global_ratio(clusters, {20.0, 0}, rng);
  CHECK(res.s_local == doctest::Approx(std::exp(local / nl)).epsilon(1e-12));
  CHECK(res.s_local == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(res.s_global == doctest::Approx(std::exp(global / ng)).epsilon(1e-12));
  CHECK(res.ratio == doctest::Approx(std::exp(global / ng - local / nl)).epsilon(1e-12));
  CHECK(res.ratio > 1.5);

  CorrespondenceSet wide(a, similarity(a, 2.0, 0.0, {}));
  const auto inf = local_global_ratio(wide, {1e12, 0}, rng);
  CHECK(inf.ratio == 1.0);
  CHECK_THROWS_AS(local_global_ratio(sim, {1e-9, 0}, rng), DomainError);
}

TEST_CASE("correspondence csv") {
  const auto cs = parse_correspondences("xa,ya,xb,yb\n0,0,1,1\n2,0,5,1\n");
  CHECK(cs.size() == 2);
  CHECK(cs.points_b()[1] == Point2{5, 1});
  CHECK(parse_error_line("xa,yb,xb,yb\n0,0,1,1\n2,0,5,1\n") == 1);
  CHECK(parse_error_line("xa,ya,xb,yb\n0,0,1,1\n") == 2);
  CHECK(parse_error_line("xa,ya,xb,yb\n0,0,1,1\n2,zero,5,1\n") == 3);
  CHECK(parse_error_line("xa,ya,xb,yb\n0,0,1,1\n2,0,5\n") == 3);
  CHECK(parse_error_line("") == 1);

  testutil::TempDir dir("labeling");
  std::ofstream(dir / "c.csv") << "xa,ya,xb,yb\n0,0,0,0\n1,0,2,0\n";
  CHECK(load_correspondences(dir / "c.csv").size() == 2);
  CHECK_THROWS_AS(load_correspondences(dir / "none.csv"), Error);
}

TEST_CASE("synthetic pairs") {
  const auto bins = scale::make_bins();
  std::mt19937_64 gen(45);
  const auto img = testutil::random_image(40, 32, 3, gen);

  const auto id = make_pair(img, {1.0, 0.0, 0.0}, bins, 24);
  CHECK(id.image_a == id.image_b);
  CHECK(id.s_gt == 1.0);
  CHECK(id.gt_dist.p[6] == 1.0);
  CHECK(id.image_a.width() == 24);

  SynthParams fixed;
  fixed.scale_min = fixed.scale_max = 2.0;
  Rng rng(3);
  for (int i = 0; i < 5; ++i) {
    const auto p = synth_pair(img, fixed, bins, 24, rng);
    CHECK(p.s_gt == 2.0);
    CHECK(p.gt_dist.p[8] == 1.0);
  }

  Rng r1(99), r2(99);
  const auto p1 = synth_pair(img, SynthParams{}, bins, 32, r1);
  const auto p2 = synth_pair(img, SynthParams{}, bins, 32, r2);
  CHECK(p1.image_a == p2.image_a);
  CHECK(p1.image_b == p2.image_b);
  CHECK(p1.s_gt == p2.s_gt);

  // labels outside the lattice clamp into it
  SynthParams big;
  big.scale_min = big.scale_max = 20.0;
  CHECK(synth_pair(img, big, bins, 16, r1).gt_dist.p[12] == 1.0);

  SynthParams bad;
  bad.scale_min = 2.0;
  bad.scale_max = 1.0;
  CHECK_THROWS_AS(synth_pair(img, bad, bins, 16, r1), DomainError);
}

TEST_CASE("property: sampled transforms stay in range") {
  SynthParams p;
  Rng rng(46);
  for (int i = 0; i < 2000; ++i) {
    const auto tf = sample_transform(p, rng);
    CHECK(tf.scale >= p.scale_min);
    CHECK(tf.scale <= p.scale_max);
    CHECK(std::abs(tf.rotation_deg) <= p.rotation_max_deg);
    CHECK(std::abs(tf.skew) <= p.skew_max);
  }
}

TEST_CASE("item seeds differ") {
  CHECK(item_seed(1, 0) != item_seed(1, 1));
  CHECK(item_seed(1, 0) != item_seed(2, 0));
  CHECK(item_seed(5, 7) == item_seed(5, 7));
}
