#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "scalenet/imaging.hpp"
#include "scalenet/scale_space.hpp"

namespace scalenet::labeling {

using imaging::ImageBuffer;
using imaging::Point2;
using Rng = std::mt19937_64;

// Keypoint projections of covisible 3D points: points_a[i] <-> points_b[i].
class CorrespondenceSet {
 public:
  CorrespondenceSet(std::vector<Point2> points_a, std::vector<Point2> points_b);

  std::size_t size() const noexcept { return a_.size(); }
  std::span<const Point2> points_a() const noexcept { return a_; }
  std::span<const Point2> points_b() const noexcept { return b_; }

 private:
  std::vector<Point2> a_;
  std::vector<Point2> b_;
};

using IndexPair = std::pair<std::size_t, std::size_t>;

inline constexpr double kDegenerateDistance = 1e-6;  // px
inline constexpr int kMaxPairRetries = 100;
inline constexpr int kDefaultPairSamples = 200;

// ||k_Bi - k_Bj|| / ||k_Ai - k_Aj||. LabelingError when the source points
// are closer than kDegenerateDistance, DomainError when i == j.
double pairwise_ratio(const CorrespondenceSet& cs, std::size_t i, std::size_t j);

// exp(mean(ln r)).
double log_mean_scale(std::span<const double> ratios);

struct ScaleLabel {
  double s_gt = 1.0;
  std::vector<double> ratios;
};

// Label from an explicit pair list; every pair must be non-degenerate.
ScaleLabel label_from_pairs(const CorrespondenceSet& cs, std::span<const IndexPair> pairs);

// All K(K-1)/2 unordered pairs (i < j).
std::vector<IndexPair> all_pairs(std::size_t count);

// Draws `samples` pairs (i != j) uniformly with replacement, rejecting
// degenerate ones up to kMaxPairRetries times per draw.
ScaleLabel label_scale(const CorrespondenceSet& cs, int samples, Rng& rng);

struct LocalGlobalOptions {
  double radius = 50.0;  // px, measured in image A
  int samples = kDefaultPairSamples;  // 0 = use every eligible pair
};

struct LocalGlobalResult {
  double s_local = 1.0;
  double s_global = 1.0;
  double ratio = 1.0;  // max / min, >= 1
};

// Global label vs. a label restricted to pairs whose A-distance <= radius.
LocalGlobalResult local_global_ratio(const CorrespondenceSet& cs, const LocalGlobalOptions& opt,
                                     Rng& rng);

// CSV with header `xa,ya,xb,yb`. ParseError carries the 1-based line number.
CorrespondenceSet load_correspondences(const std::filesystem::path& path);
CorrespondenceSet parse_correspondences(std::string_view text);

// ---------------------------------------------------------------------------
// Synthetic pairs

struct SynthParams {
  double scale_min = 0.16;
  double scale_max = 6.0;
  double rotation_max_deg = 30.0;  // rotation ~ U[-max, max]
  double skew_max = 0.2;           // skew ~ U[-max, max]
  float fill = 0.0f;

  void validate() const;
};

struct LabeledPair {
  ImageBuffer image_a;
  ImageBuffer image_b;
  double s_gt = 1.0;
  scale::ScaleDistribution gt_dist;
};

struct SynthTransform {
  double scale = 1.0;
  double rotation_deg = 0.0;
  double skew = 0.0;
};

// scale log-uniform in [scale_min, scale_max], rotation and skew uniform.
SynthTransform sample_transform(const SynthParams& params, Rng& rng);

// Builds the pair for an explicit transform: the grayscale center square of
// `img` is A, its warp about the center is B, both resized to input_size.
LabeledPair make_pair(const ImageBuffer& img, const SynthTransform& tf, const scale::ScaleBins& bins,
                      int input_size, float fill = 0.0f);

LabeledPair synth_pair(const ImageBuffer& img, const SynthParams& params,
                       const scale::ScaleBins& bins, int input_size, Rng& rng);

// Independent per-item seed from (base, index).
std::uint64_t item_seed(std::uint64_t base, std::uint64_t index);

}  // namespace scalenet::labeling
