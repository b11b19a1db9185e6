#include "scalenet/scale_space.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <string>

#include "scalenet/error.hpp"

namespace scalenet::scale {

ScaleBins make_bins(double sigma, int count) {
  if (!(sigma > 1.0) || !std::isfinite(sigma)) {
    throw DomainError("make_bins: sigma must be > 1, got " + std::to_string(sigma));
  }
  if (count < 3 || count % 2 == 0) {
    throw DomainError("make_bins: bin count must be odd and >= 3, got " + std::to_string(count));
  }
  ScaleBins bins;
  bins.sigma_ = sigma;
  const double log_sigma = std::log(sigma);
  const int half = (count - 1) / 2;
  for (int t = -half; t <= half; ++t) {
    bins.exponents_.push_back(t);
    bins.log_scales_.push_back(t * log_sigma);
    bins.scales_.push_back(std::exp(t * log_sigma));
  }
  return bins;
}

bool ScaleDistribution::valid(double tol) const noexcept {
  if (p.empty()) return false;
  double sum = 0.0;
  for (double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v)) return false;
    sum += v;
  }
  return std::abs(sum - 1.0) <= tol;
}

ScaleEstimate ScaleEstimate::from_log(double log_scale) {
  return {log_scale, std::exp(log_scale)};
}

namespace {

void check_length(const ScaleDistribution& dist, const ScaleBins& bins, const char* op) {
  if (dist.size() != static_cast<std::size_t>(bins.count())) {
    throw DomainError(std::string(op) + ": distribution has " + std::to_string(dist.size()) +
                      " entries, lattice has " + std::to_string(bins.count()));
  }
}

// Index k and weight w with ln s = (1 - w) ln s_k + w ln s_{k+1}, k in [0, L-2].
std::pair<int, double> bracket(double log_s, const ScaleBins& bins) {
  const auto logs = bins.log_scales();
  const int last = bins.count() - 1;
  const double u = log_s / std::log(bins.sigma()) + (last / 2);
  int k = static_cast<int>(std::floor(u));
  k = std::clamp(k, 0, last - 1);
  // Correct for rounding in u so that logs[k] <= log_s <= logs[k + 1] whenever possible.
  while (k > 0 && log_s < logs[k]) --k;
  while (k < last - 1 && log_s > logs[k + 1]) ++k;
  double w = (log_s - logs[k]) / (logs[k + 1] - logs[k]);
  w = std::clamp(w, 0.0, 1.0);
  // Lattice hits computed in floating point (e.g. 2 vs sqrt(2)^2) stay one-hot.
  constexpr double kSnap = 1e-13;
  if (w < kSnap) w = 0.0;
  if (w > 1.0 - kSnap) {
    if (k + 1 < last) {
      ++k;
      w = 0.0;
    } else {
      w = 1.0;
    }
  }
  return {k, w};
}

}  // namespace

ScaleEstimate soft_log_scale(const ScaleDistribution& dist, const ScaleBins& bins) {
  check_length(dist, bins, "soft_log_scale");
  double acc = 0.0;
  for (int i = 0; i < bins.count(); ++i) acc += dist.p[i] * bins.log_scale(i);
  return {acc, std::exp(acc)};
}

ScaleEstimate natural_soft_scale(const ScaleDistribution& dist, const ScaleBins& bins) {
  check_length(dist, bins, "natural_soft_scale");
  double acc = 0.0;
  for (int i = 0; i < bins.count(); ++i) acc += dist.p[i] * bins.scale(i);
  return {std::log(acc), acc};
}

int hard_bin(const ScaleDistribution& dist, const ScaleBins& bins) {
  check_length(dist, bins, "hard_scale");
  int best = 0;
  for (int i = 1; i < bins.count(); ++i) {
    if (dist.p[i] > dist.p[best] ||
        (dist.p[i] == dist.p[best] && std::abs(bins.exponent(i)) < std::abs(bins.exponent(best)))) {
      best = i;
    }
  }
  return best;
}

ScaleEstimate hard_scale(const ScaleDistribution& dist, const ScaleBins& bins) {
  const int i = hard_bin(dist, bins);
  return {bins.log_scale(i), bins.scale(i)};
}

ScaleEstimate consistency_combine(const ScaleEstimate& fwd, const ScaleEstimate& bwd) {
  return ScaleEstimate::from_log((fwd.log_scale - bwd.log_scale) / 2.0);
}

ScaleDistribution gt_distribution_from_scalar(double s_gt, const ScaleBins& bins) {
  if (!(s_gt > 0.0) || !std::isfinite(s_gt)) {
    throw DomainError("gt_distribution_from_scalar: scale must be positive");
  }
  const double log_s = std::log(s_gt);
  const auto logs = bins.log_scales();
  constexpr double kTol = 1e-12;
  if (log_s < logs.front() - kTol || log_s > logs.back() + kTol) {
    throw DomainError("gt_distribution_from_scalar: scale " + std::to_string(s_gt) +
                      " outside lattice range [" + std::to_string(bins.min_scale()) + ", " +
                      std::to_string(bins.max_scale()) + "]");
  }
  const auto [k, w] = bracket(log_s, bins);
  ScaleDistribution dist{std::vector<double>(bins.count(), 0.0)};
  dist.p[k] = 1.0 - w;
  dist.p[k + 1] += w;
  return dist;
}

ScaleDistribution gt_distribution_from_ratios(std::span<const double> ratios,
                                              const ScaleBins& bins) {
  if (ratios.empty()) throw DomainError("gt_distribution_from_ratios: empty ratio list");
  const auto logs = bins.log_scales();
  std::vector<double> hist(bins.count(), 0.0);
  for (double r : ratios) {
    if (!(r > 0.0) || !std::isfinite(r)) {
      throw DomainError("gt_distribution_from_ratios: ratios must be positive");
    }
    const double log_r = std::clamp(std::log(r), logs.front(), logs.back());
    const auto [k, w] = bracket(log_r, bins);
    hist[k] += 1.0 - w;
    hist[k + 1] += w;
  }
  const double n = static_cast<double>(ratios.size());
  for (double& h : hist) h /= n;
  return {std::move(hist)};
}

double kl_divergence(const ScaleDistribution& target, const ScaleDistribution& predicted) {
  if (target.size() != predicted.size()) {
    throw DomainError("kl_divergence: length mismatch (" + std::to_string(target.size()) +
                      " vs " + std::to_string(predicted.size()) + ")");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double t = target.p[i];
    if (t == 0.0) continue;
    acc += t * (std::log(t) - std::log(std::max(predicted.p[i], kKlFloor)));
  }
  return acc;
}

}  // namespace scalenet::scale
