#include "scalenet/labeling.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>

#include "scalenet/error.hpp"

namespace scalenet::labeling {

CorrespondenceSet::CorrespondenceSet(std::vector<Point2> points_a, std::vector<Point2> points_b)
    : a_(std::move(points_a)), b_(std::move(points_b)) {
  if (a_.size() != b_.size()) {
    throw DomainError("CorrespondenceSet: point lists differ in length");
  }
  if (a_.size() < 2) throw DomainError("CorrespondenceSet: need at least 2 correspondences");
}

namespace {

double distance(Point2 p, Point2 q) { return std::hypot(p.x - q.x, p.y - q.y); }

bool degenerate(const CorrespondenceSet& cs, std::size_t i, std::size_t j) {
  return !(distance(cs.points_a()[i], cs.points_a()[j]) > kDegenerateDistance);
}

}  // namespace

double pairwise_ratio(const CorrespondenceSet& cs, std::size_t i, std::size_t j) {
  if (i >= cs.size() || j >= cs.size()) throw DomainError("pairwise_ratio: index out of range");
  if (i == j) throw DomainError("pairwise_ratio: i == j");
  const double da = distance(cs.points_a()[i], cs.points_a()[j]);
  if (!(da > kDegenerateDistance)) {
    throw LabelingError("pairwise_ratio: degenerate pair (" + std::to_string(i) + ", " +
                        std::to_string(j) + "): source points coincide");
  }
  return distance(cs.points_b()[i], cs.points_b()[j]) / da;
}

double log_mean_scale(std::span<const double> ratios) {
  if (ratios.empty()) throw DomainError("log_mean_scale: empty ratio list");
  double acc = 0.0;
  for (double r : ratios) {
    if (!(r > 0.0)) throw LabelingError("log_mean_scale: non-positive ratio");
    acc += std::log(r);
  }
  return std::exp(acc / static_cast<double>(ratios.size()));
}

ScaleLabel label_from_pairs(const CorrespondenceSet& cs, std::span<const IndexPair> pairs) {
  ScaleLabel label;
  label.ratios.reserve(pairs.size());
  for (const auto& [i, j] : pairs) label.ratios.push_back(pairwise_ratio(cs, i, j));
  label.s_gt = log_mean_scale(label.ratios);
  return label;
}

std::vector<IndexPair> all_pairs(std::size_t count) {
  std::vector<IndexPair> pairs;
  pairs.reserve(count * (count - 1) / 2);
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t j = i + 1; j < count; ++j) pairs.emplace_back(i, j);
  }
  return pairs;
}

ScaleLabel label_scale(const CorrespondenceSet& cs, int samples, Rng& rng) {
  if (samples < 1) throw DomainError("label_scale: sample count must be >= 1");
  const std::size_t k = cs.size();
  std::uniform_int_distribution<std::size_t> first(0, k - 1);
  std::uniform_int_distribution<std::size_t> second(0, k - 2);
  std::vector<IndexPair> pairs;
  pairs.reserve(samples);
  for (int s = 0; s < samples; ++s) {
    bool found = false;
    for (int attempt = 0; attempt <= kMaxPairRetries && !found; ++attempt) {
      const std::size_t i = first(rng);
      std::size_t j = second(rng);
      if (j >= i) ++j;
      if (!degenerate(cs, i, j)) {
        pairs.emplace_back(i, j);
        found = true;
      }
    }
    if (!found) {
      throw LabelingError("label_scale: no non-degenerate pair found after " +
                          std::to_string(kMaxPairRetries) + " retries");
    }
  }
  return label_from_pairs(cs, pairs);
}

LocalGlobalResult local_global_ratio(const CorrespondenceSet& cs, const LocalGlobalOptions& opt,
                                     Rng& rng) {
  if (!(opt.radius > 0.0)) throw DomainError("local_global_ratio: radius must be positive");
  if (opt.samples < 0) throw DomainError("local_global_ratio: negative sample count");
  std::vector<IndexPair> local;
  std::vector<IndexPair> global;
  for (const auto& [i, j] : all_pairs(cs.size())) {
    if (degenerate(cs, i, j)) continue;
    global.emplace_back(i, j);
    if (distance(cs.points_a()[i], cs.points_a()[j]) <= opt.radius) local.emplace_back(i, j);
  }
  if (local.empty()) {
    throw DomainError("local_global_ratio: no keypoint pairs within radius " +
                      std::to_string(opt.radius));
  }
  auto draw = [&](const std::vector<IndexPair>& pool) {
    if (opt.samples == 0) return pool;
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    std::vector<IndexPair> out;
    out.reserve(opt.samples);
    for (int s = 0; s < opt.samples; ++s) out.push_back(pool[pick(rng)]);
    return out;
  };
  LocalGlobalResult res;
  res.s_local = label_from_pairs(cs, draw(local)).s_gt;
  res.s_global = label_from_pairs(cs, draw(global)).s_gt;
  res.ratio = std::max(res.s_local, res.s_global) / std::min(res.s_local, res.s_global);
  return res;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  return s;
}

double parse_field(std::string_view field, std::size_t line, const char* name) {
  field = trim(field);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size() || field.empty()) {
    throw ParseError(line, std::string("field ") + name + " is not a number: '" +
                               std::string(field) + "'");
  }
  if (!std::isfinite(value)) throw ParseError(line, std::string("field ") + name + " is not finite");
  return value;
}

}  // namespace

CorrespondenceSet parse_correspondences(std::string_view text) {
  std::vector<Point2> a, b;
  std::size_t line_no = 0, last_row = 1;
  bool header_seen = false;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    const std::string_view line = trim(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (!header_seen) {
      if (line != "xa,ya,xb,yb") {
        throw ParseError(line_no, "expected header 'xa,ya,xb,yb', got '" + std::string(line) + "'");
      }
      header_seen = true;
      continue;
    }
    if (line.empty()) continue;
    last_row = line_no;
    std::array<std::string_view, 4> fields;
    std::size_t start = 0;
    for (int f = 0; f < 4; ++f) {
      const std::size_t comma = line.find(',', start);
      if ((f < 3 && comma == std::string_view::npos) || (f == 3 && comma != std::string_view::npos)) {
        throw ParseError(line_no, "expected 4 comma-separated fields");
      }
      fields[f] = line.substr(start, f < 3 ? comma - start : std::string_view::npos);
      start = comma + 1;
    }
    a.push_back({parse_field(fields[0], line_no, "xa"), parse_field(fields[1], line_no, "ya")});
    b.push_back({parse_field(fields[2], line_no, "xb"), parse_field(fields[3], line_no, "yb")});
  }
  if (!header_seen) throw ParseError(1, "empty file");
  if (a.size() < 2) {
    throw ParseError(last_row, "too few points: need at least 2 correspondences, found " +
                                  std::to_string(a.size()));
  }
  return CorrespondenceSet(std::move(a), std::move(b));
}

CorrespondenceSet load_correspondences(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open correspondence file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_correspondences(ss.str());
}

// ---------------------------------------------------------------------------
// Synthetic pairs

void SynthParams::validate() const {
  if (!(scale_min > 0.0) || !(scale_max >= scale_min)) {
    throw DomainError("SynthParams: need 0 < scale_min <= scale_max");
  }
  if (!(rotation_max_deg >= 0.0) || !(skew_max >= 0.0)) {
    throw DomainError("SynthParams: rotation and skew bounds must be >= 0");
  }
}

SynthTransform sample_transform(const SynthParams& params, Rng& rng) {
  params.validate();
  SynthTransform tf;
  if (params.scale_min == params.scale_max) {
    tf.scale = params.scale_min;
    (void)rng();  // keep the draw count independent of the range
  } else {
    std::uniform_real_distribution<double> log_scale(std::log(params.scale_min),
                                                     std::log(params.scale_max));
    tf.scale = std::exp(log_scale(rng));
  }
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  tf.rotation_deg = params.rotation_max_deg * unit(rng);
  tf.skew = params.skew_max * unit(rng);
  return tf;
}

LabeledPair make_pair(const ImageBuffer& img, const SynthTransform& tf, const scale::ScaleBins& bins,
                      int input_size, float fill) {
  if (img.empty()) throw DomainError("synth_pair: empty image");
  if (input_size < 1) throw DomainError("synth_pair: input size must be positive");
  const ImageBuffer gray = imaging::to_grayscale(imaging::center_crop_square(img));
  const int side = gray.width();
  const Point2 center{(side - 1) / 2.0, (side - 1) / 2.0};
  const auto t = imaging::make_affine(tf.scale, tf.rotation_deg, tf.skew, {0.0, 0.0}, center);
  const ImageBuffer warped = imaging::warp_image(gray, t, side, side, fill);

  LabeledPair pair;
  pair.image_a = imaging::resize(gray, input_size, input_size);
  pair.image_b = imaging::resize(warped, input_size, input_size);
  pair.s_gt = tf.scale;
  pair.gt_dist = scale::gt_distribution_from_scalar(
      std::clamp(tf.scale, bins.min_scale(), bins.max_scale()), bins);
  return pair;
}

LabeledPair synth_pair(const ImageBuffer& img, const SynthParams& params,
                       const scale::ScaleBins& bins, int input_size, Rng& rng) {
  return make_pair(img, sample_transform(params, rng), bins, input_size, params.fill);
}

std::uint64_t item_seed(std::uint64_t base, std::uint64_t index) {
  // splitmix64 finalizer over a combination of both inputs
  std::uint64_t z = base + 0x9E3779B97F4A7C15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace scalenet::labeling
