#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace scalenet::scale {

// Quantized log-symmetric scale lattice s_i = sigma^t_i,
// t_i = -(L-1)/2 ... (L-1)/2.
class ScaleBins {
 public:
  static constexpr double kDefaultSigma = 1.4142135623730951;  // sqrt(2)
  static constexpr int kDefaultCount = 13;

  int count() const noexcept { return static_cast<int>(exponents_.size()); }
  double sigma() const noexcept { return sigma_; }
  int center() const noexcept { return count() / 2; }
  int exponent(int i) const { return exponents_.at(i); }
  double scale(int i) const { return scales_.at(i); }
  double log_scale(int i) const { return log_scales_.at(i); }
  std::span<const double> scales() const noexcept { return scales_; }
  std::span<const double> log_scales() const noexcept { return log_scales_; }
  double min_scale() const noexcept { return scales_.front(); }
  double max_scale() const noexcept { return scales_.back(); }

  friend bool operator==(const ScaleBins&, const ScaleBins&) = default;

 private:
  friend ScaleBins make_bins(double sigma, int count);
  double sigma_ = 0.0;
  std::vector<int> exponents_;
  std::vector<double> log_scales_;  // t_i * ln(sigma)
  std::vector<double> scales_;      // exp(log_scales_[i])
};

// sigma > 1, count odd and >= 3; DomainError otherwise.
ScaleBins make_bins(double sigma = ScaleBins::kDefaultSigma, int count = ScaleBins::kDefaultCount);

// Probability vector over the bins of a lattice.
struct ScaleDistribution {
  std::vector<double> p;

  std::size_t size() const noexcept { return p.size(); }
  // All entries >= 0 and sum within `tol` of 1.
  bool valid(double tol = 1e-6) const noexcept;
};

struct ScaleEstimate {
  double log_scale = 0.0;
  double scale = 1.0;

  static ScaleEstimate from_log(double log_scale);
};

// exp(sum_i p_i ln s_i)
ScaleEstimate soft_log_scale(const ScaleDistribution& dist, const ScaleBins& bins);
// sum_i p_i s_i, reported with its logarithm.
ScaleEstimate natural_soft_scale(const ScaleDistribution& dist, const ScaleBins& bins);
// s_argmax. Ties go to the bin with the smaller |t|, then to the smaller index.
ScaleEstimate hard_scale(const ScaleDistribution& dist, const ScaleBins& bins);
int hard_bin(const ScaleDistribution& dist, const ScaleBins& bins);

// exp((fwd.log_scale - bwd.log_scale) / 2)
ScaleEstimate consistency_combine(const ScaleEstimate& fwd, const ScaleEstimate& bwd);

// Two-bin log-linear split reproducing ln(s_gt) exactly under soft_log_scale.
// s_gt must lie inside [min_scale, max_scale].
ScaleDistribution gt_distribution_from_scalar(double s_gt, const ScaleBins& bins);

// Normalized histogram of pairwise ratios, each split over its two bracketing
// bins like gt_distribution_from_scalar. Out-of-range ratios clamp to the end bins.
ScaleDistribution gt_distribution_from_ratios(std::span<const double> ratios,
                                              const ScaleBins& bins);

inline constexpr double kKlFloor = 1e-12;

// KL(target || predicted) = sum_i t_i ln(t_i / max(q_i, 1e-12)), in nats.
// Terms with t_i == 0 contribute 0.
double kl_divergence(const ScaleDistribution& target, const ScaleDistribution& predicted);

}  // namespace scalenet::scale
