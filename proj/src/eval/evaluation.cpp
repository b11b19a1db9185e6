#include <cmath>
#include <limits>

#include "scalenet/error.hpp"
#include "scalenet/eval.hpp"

namespace scalenet::eval {

ScaleAccuracyReport scale_accuracy(std::span<const double> preds, std::span<const double> gts,
                                   std::string tag) {
  if (preds.empty() || preds.size() != gts.size()) {
    throw DomainError("scale_accuracy: need equal, nonempty prediction and ground-truth lists (got " +
                      std::to_string(preds.size()) + " and " + std::to_string(gts.size()) + ")");
  }
  ScaleAccuracyReport r;
  r.tag = std::move(tag);
  double sum = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double p = preds[i], g = gts[i];
    if (!(p > 0) || !(g > 0) || !std::isfinite(p) || !std::isfinite(g)) {
      throw DomainError("scale_accuracy: entry " + std::to_string(i) + " is not a positive scale");
    }
    const double ratio = std::max(p, g) / std::min(p, g);
    r.ratios.push_back(ratio);
    sum += ratio;
  }
  r.mean_ratio = sum / static_cast<double>(preds.size());
  return r;
}

std::vector<double> baseline_predict(Baseline kind, std::size_t n, Rng& rng) {
  if (n < 1) throw DomainError("baseline_predict: n must be >= 1");
  if (kind == Baseline::constant) return std::vector<double>(n, 1.0);
  std::uniform_real_distribution<double> u(std::log(kRandomScaleMin), std::log(kRandomScaleMax));
  std::vector<double> out(n);
  for (double& v : out) v = std::clamp(std::exp(u(rng)), kRandomScaleMin, kRandomScaleMax);
  return out;
}

std::pair<ImageBuffer, ImageBuffer> rectify(const ImageBuffer& a, const ImageBuffer& b, double s) {
  if (!(s > 0) || !std::isfinite(s)) throw DomainError("rectify: scale must be positive and finite");
  if (s == 1.0) return {a, b};
  const long w = std::lround(b.width() * s), h = std::lround(b.height() * s);
  if (w < 1 || h < 1) {
    throw DomainError("rectify: scaling " + std::to_string(b.width()) + "x" + std::to_string(b.height()) +
                      " by " + std::to_string(s) + " leaves no pixels");
  }
  return {a, imaging::resize(b, static_cast<int>(w), static_cast<int>(h))};
}

double sweep_item(const ImageBuffer& image, double s, Predictor predictor,
                  const model::ScaleNet<float>* net, const SweepOptions& options) {
  const ImageBuffer a = imaging::to_grayscale(image);
  // Zoom about the outer corner of pixel (0,0): resize uses the same pixel-area
  // convention, so rectified B lands on A's grid with no sub-pixel phase.
  const AffineTransform t = imaging::make_affine(s, 0.0, 0.0, {0.0, 0.0}, {-0.5, -0.5});
  const ImageBuffer b = imaging::warp_image(a, t, a.width(), a.height(), 0.0f);

  double factor = 1.0;
  switch (predictor) {
    case Predictor::none: break;
    case Predictor::oracle: factor = 1.0 / s; break;
    case Predictor::scalenet:
      if (!net) throw DomainError("sweep: the scalenet predictor needs a model");
      factor = 1.0 / net->predict_scale(a, b, options.mode).scale;
      break;
  }
  const auto [ra, rb] = rectify(a, b, factor);
  // rectified B -> B -> A
  const AffineTransform back =
      t.inverse() * AffineTransform::resize_map(b.width(), b.height(), rb.width(), rb.height()).inverse();
  std::vector<Match> matches = naive_match(ra, rb, options.match);
  for (Match& m : matches) m.b = back.apply(m.b);
  return mma(matches, AffineTransform(), options.threshold).mma;
}

std::vector<SweepRow> mma_scale_sweep(std::span<const ImageBuffer> images, std::span<const double> scales,
                                      const model::ScaleNet<float>* net, const SweepOptions& options) {
  if (images.empty()) throw DomainError("sweep: no images");
  std::vector<SweepRow> rows;
  for (double s : scales) {
    SweepRow row;
    row.scale = s;
    for (const ImageBuffer& img : images) {
      row.mma_none += sweep_item(img, s, Predictor::none, net, options);
      row.mma_oracle += sweep_item(img, s, Predictor::oracle, net, options);
      if (net) row.mma_pred += sweep_item(img, s, Predictor::scalenet, net, options);
    }
    const double n = static_cast<double>(images.size());
    row.mma_none /= n;
    row.mma_oracle /= n;
    row.mma_pred = net ? row.mma_pred / n : std::numeric_limits<double>::quiet_NaN();
    rows.push_back(row);
  }
  return rows;
}

}  // namespace scalenet::eval
