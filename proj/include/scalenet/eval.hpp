#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "scalenet/imaging.hpp"
#include "scalenet/model.hpp"

namespace scalenet::eval {

using imaging::AffineTransform;
using imaging::ImageBuffer;
using imaging::Point2;
using Rng = std::mt19937_64;

// ---------------------------------------------------------------------------
// Procedural texture corpus

struct TextureOptions {
  int width = 256;
  int height = 256;
  int octaves = 5;
  int min_shapes = 8;
  int max_shapes = 24;
};

// Seeded multi-octave value noise with random filled shapes on top,
// stretched to span [0, 1]. Grayscale.
ImageBuffer procedural_texture(std::uint64_t seed, const TextureOptions& options = {});

// ---------------------------------------------------------------------------
// Scale accuracy

struct ScaleAccuracyReport {
  double mean_ratio = 1.0;
  std::vector<double> ratios;  // max(gt, pred) / min(gt, pred), each >= 1
  std::string tag;
};

ScaleAccuracyReport scale_accuracy(std::span<const double> preds, std::span<const double> gts,
                                   std::string tag = {});

enum class Baseline { random, constant };

inline constexpr double kRandomScaleMin = 0.16;
inline constexpr double kRandomScaleMax = 6.0;

// random: log-uniform in [kRandomScaleMin, kRandomScaleMax]; constant: 1.0.
std::vector<double> baseline_predict(Baseline kind, std::size_t n, Rng& rng);

// ---------------------------------------------------------------------------
// Rectification and matching

// B resized by s: (round(w_b * s), round(h_b * s)). s == 1 returns b unchanged.
std::pair<ImageBuffer, ImageBuffer> rectify(const ImageBuffer& a, const ImageBuffer& b, double s);

struct Match {
  Point2 a;
  Point2 b;
  friend bool operator==(const Match&, const Match&) = default;
};

struct MatchOptions {
  int grid_step = 4;
  int patch = 15;  // odd side length
};

// Grid keypoints in both images, zero-mean L2-normalized patch descriptors,
// dot-product nearest neighbour with a mutual check. Flat patches are skipped.
std::vector<Match> naive_match(const ImageBuffer& a, const ImageBuffer& b, const MatchOptions& options);

struct MatchReport {
  double threshold = 5.0;
  std::size_t correct = 0;
  std::size_t total = 0;
  double mma = 0.0;  // correct / total, 0 when total == 0
};

inline constexpr double kDefaultMatchThreshold = 5.0;

// (p, q) is correct iff ||gt(p) - q|| <= threshold.
MatchReport mma(std::span<const Match> matches, const AffineTransform& gt,
                double threshold = kDefaultMatchThreshold);

// ---------------------------------------------------------------------------
// MMA under synthetic scale

enum class Predictor { none, scalenet, oracle };

struct SweepOptions {
  MatchOptions match;
  double threshold = kDefaultMatchThreshold;
  model::Mode mode = model::Mode::scalenet;
};

struct SweepRow {
  double scale = 1.0;
  double mma_none = 0.0;
  double mma_pred = 0.0;    // NaN when no model was supplied
  double mma_oracle = 0.0;
};

// B is `image` zoomed by s about its top-left corner, on the same canvas. Matches are
// scored in A's frame: points found in a rectified B are mapped back through
// the exact inverse of the resize and of the synthetic transform.
double sweep_item(const ImageBuffer& image, double s, Predictor predictor,
                  const model::ScaleNet<float>* net, const SweepOptions& options);

// Mean MMA per scale over all images; `net` may be null (prediction column is NaN).
std::vector<SweepRow> mma_scale_sweep(std::span<const ImageBuffer> images, std::span<const double> scales,
                                      const model::ScaleNet<float>* net, const SweepOptions& options);

}  // namespace scalenet::eval
