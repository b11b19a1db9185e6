#include <cmath>
#include <limits>

#include "scalenet/error.hpp"
#include "scalenet/eval.hpp"
#include "scalenet/kernels.hpp"

namespace scalenet::eval {

namespace {

constexpr double kFlatNorm = 1e-6;

struct GridDescriptors {
  std::vector<Point2> points;
  nn::AlignedVector<double> desc;  // points.size() x patch^2, row-major
};

GridDescriptors describe(const ImageBuffer& img, const MatchOptions& o) {
  const ImageBuffer gray = imaging::to_grayscale(img);
  const int half = o.patch / 2, len = o.patch * o.patch;
  GridDescriptors g;
  std::vector<double> patch(len);
  for (int y = half; y + half < gray.height(); y += o.grid_step) {
    for (int x = half; x + half < gray.width(); x += o.grid_step) {
      double mean = 0.0;
      for (int dy = -half, k = 0; dy <= half; ++dy) {
        for (int dx = -half; dx <= half; ++dx, ++k) mean += patch[k] = gray.at(x + dx, y + dy);
      }
      mean /= len;
      double sq = 0.0;
      for (double& v : patch) {
        v -= mean;
        sq += v * v;
      }
      const double norm = std::sqrt(sq);
      if (norm < kFlatNorm) continue;
      g.points.push_back({static_cast<double>(x), static_cast<double>(y)});
      for (double v : patch) g.desc.push_back(v / norm);
    }
  }
  return g;
}

}  // namespace

std::vector<Match> naive_match(const ImageBuffer& a, const ImageBuffer& b, const MatchOptions& o) {
  if (o.patch < 1 || o.patch % 2 == 0 || o.grid_step < 1) {
    throw DomainError("naive_match: patch must be odd and positive, grid step positive");
  }
  for (const ImageBuffer* img : {&a, &b}) {
    if (img->width() < o.patch || img->height() < o.patch) {
      throw DomainError("naive_match: " + std::to_string(img->width()) + "x" +
                        std::to_string(img->height()) + " image is smaller than one " +
                        std::to_string(o.patch) + "px patch");
    }
  }
  const GridDescriptors da = describe(a, o), db = describe(b, o);
  const std::size_t na = da.points.size(), nb = db.points.size();
  if (na == 0 || nb == 0) return {};
  const std::size_t len = static_cast<std::size_t>(o.patch) * o.patch;
  nn::AlignedVector<double> sim(na * nb);
  nn::kernels::gemm_abt(da.desc.data(), db.desc.data(), sim.data(), na, nb, len);

  std::vector<std::size_t> best_b(na, 0), best_a(nb, 0);
  std::vector<double> score_a(nb, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < na; ++i) {
    const double* row = sim.data() + i * nb;
    for (std::size_t j = 0; j < nb; ++j) {
      if (row[j] > row[best_b[i]]) best_b[i] = j;
      if (row[j] > score_a[j]) {
        score_a[j] = row[j];
        best_a[j] = i;
      }
    }
  }
  std::vector<Match> matches;
  for (std::size_t i = 0; i < na; ++i) {
    if (best_a[best_b[i]] == i) matches.push_back({da.points[i], db.points[best_b[i]]});
  }
  return matches;
}

MatchReport mma(std::span<const Match> matches, const AffineTransform& gt, double threshold) {
  MatchReport r;
  r.threshold = threshold;
  r.total = matches.size();
  for (const Match& m : matches) {
    const Point2 p = gt.apply(m.a);
    if (std::hypot(p.x - m.b.x, p.y - m.b.y) <= threshold) ++r.correct;
  }
  r.mma = r.total ? static_cast<double>(r.correct) / static_cast<double>(r.total) : 0.0;
  return r;
}

}  // namespace scalenet::eval
