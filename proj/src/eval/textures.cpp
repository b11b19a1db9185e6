#include <algorithm>
#include <cmath>
#include <numbers>

#include "scalenet/error.hpp"
#include "scalenet/eval.hpp"

namespace scalenet::eval {

namespace {

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

void add_value_noise(std::vector<double>& acc, int w, int h, double cell, double amp, Rng& rng) {
  const int gw = static_cast<int>(std::ceil(w / cell)) + 2;
  const int gh = static_cast<int>(std::ceil(h / cell)) + 2;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> lattice(static_cast<std::size_t>(gw) * gh);
  for (double& v : lattice) v = u(rng);
  const double ox = u(rng), oy = u(rng);  // sub-cell phase
  for (int y = 0; y < h; ++y) {
    const double fy = y / cell + oy;
    const int iy = static_cast<int>(fy);
    const double ty = smoothstep(fy - iy);
    for (int x = 0; x < w; ++x) {
      const double fx = x / cell + ox;
      const int ix = static_cast<int>(fx);
      const double tx = smoothstep(fx - ix);
      const double* r0 = &lattice[static_cast<std::size_t>(iy) * gw + ix];
      const double* r1 = r0 + gw;
      const double top = r0[0] + (r0[1] - r0[0]) * tx;
      const double bot = r1[0] + (r1[1] - r1[0]) * tx;
      acc[static_cast<std::size_t>(y) * w + x] += amp * (top + (bot - top) * ty);
    }
  }
}

// Filled ellipse or rotated rectangle, alpha-blended toward `value`.
void add_shape(std::vector<double>& acc, int w, int h, double lo, double hi, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const bool ellipse = u(rng) < 0.5;
  const double cx = u(rng) * w, cy = u(rng) * h;
  const double max_r = std::max(4.0, std::min(w, h) / 5.0);
  const double rx = std::exp(std::log(3.0) + u(rng) * (std::log(max_r) - std::log(3.0)));
  const double ry = rx * (0.3 + 0.7 * u(rng));
  const double angle = u(rng) * std::numbers::pi;
  const double value = lo + (hi - lo) * u(rng);
  const double alpha = 0.5 + 0.5 * u(rng);
  const double c = std::cos(angle), s = std::sin(angle);
  const double reach = std::max(rx, ry) * std::numbers::sqrt2;
  const int x0 = std::max(0, static_cast<int>(cx - reach)), x1 = std::min(w - 1, static_cast<int>(cx + reach));
  const int y0 = std::max(0, static_cast<int>(cy - reach)), y1 = std::min(h - 1, static_cast<int>(cy + reach));
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double dx = x - cx, dy = y - cy;
      const double u_ = (c * dx + s * dy) / rx, v_ = (-s * dx + c * dy) / ry;
      const bool inside = ellipse ? u_ * u_ + v_ * v_ <= 1.0 : std::abs(u_) <= 1.0 && std::abs(v_) <= 1.0;
      if (inside) {
        double& p = acc[static_cast<std::size_t>(y) * w + x];
        p += alpha * (value - p);
      }
    }
  }
}

}  // namespace

ImageBuffer procedural_texture(std::uint64_t seed, const TextureOptions& o) {
  if (o.width < 1 || o.height < 1 || o.octaves < 1 || o.min_shapes < 0 || o.max_shapes < o.min_shapes) {
    throw DomainError("procedural_texture: invalid options");
  }
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int w = o.width, h = o.height;
  std::vector<double> acc(static_cast<std::size_t>(w) * h, 0.0);

  double cell = 16.0 + 32.0 * u(rng);
  double amp = 1.0;
  for (int oct = 0; oct < o.octaves && cell >= 1.5; ++oct) {
    add_value_noise(acc, w, h, cell, amp, rng);
    cell /= 2.0;
    amp *= 0.55;
  }
  const auto [lo_it, hi_it] = std::minmax_element(acc.begin(), acc.end());
  const double lo = *lo_it, hi = *hi_it;
  const int shapes = std::uniform_int_distribution<int>(o.min_shapes, o.max_shapes)(rng);
  for (int i = 0; i < shapes; ++i) add_shape(acc, w, h, lo, hi, rng);

  const auto [mn, mx] = std::minmax_element(acc.begin(), acc.end());
  const double span = *mx - *mn;
  ImageBuffer img(w, h, 1);
  auto out = img.data();
  for (std::size_t i = 0; i < acc.size(); ++i) {
    out[i] = span > 0 ? static_cast<float>((acc[i] - *mn) / span) : 0.5f;
  }
  return img;
}

}  // namespace scalenet::eval
