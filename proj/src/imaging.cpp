#include "scalenet/imaging.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <string>

#include "scalenet/error.hpp"

namespace scalenet::imaging {

ImageBuffer::ImageBuffer(int width, int height, int channels, float value)
    : width_(width), height_(height), channels_(channels) {
  if (width < 0 || height < 0 || (channels != 1 && channels != 3)) {
    throw DomainError("ImageBuffer: invalid dimensions");
  }
  data_.assign(static_cast<std::size_t>(width) * height * channels, value);
}

ImageBuffer::ImageBuffer(int width, int height, int channels, std::vector<float> data)
    : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
  if (width < 0 || height < 0 || (channels != 1 && channels != 3)) {
    throw DomainError("ImageBuffer: invalid dimensions");
  }
  if (data_.size() != static_cast<std::size_t>(width) * height * channels) {
    throw DomainError("ImageBuffer: data length does not match width*height*channels");
  }
}

// ---------------------------------------------------------------------------
// AffineTransform

AffineTransform::AffineTransform() : m_{1.0, 0.0, 0.0, 0.0, 1.0, 0.0} {}

AffineTransform::AffineTransform(const std::array<double, 6>& m) : m_(m) {
  for (double v : m_) {
    if (!std::isfinite(v)) throw DomainError("AffineTransform: non-finite entry");
  }
}

Point2 AffineTransform::apply(Point2 p) const noexcept {
  return {m_[0] * p.x + m_[1] * p.y + m_[2], m_[3] * p.x + m_[4] * p.y + m_[5]};
}

AffineTransform AffineTransform::inverse() const {
  const double det = determinant();
  if (det == 0.0 || !std::isfinite(1.0 / det)) {
    throw DomainError("AffineTransform: matrix is not invertible");
  }
  const double a = m_[4] / det, b = -m_[1] / det;
  const double c = -m_[3] / det, d = m_[0] / det;
  return AffineTransform({a, b, -(a * m_[2] + b * m_[5]), c, d, -(c * m_[2] + d * m_[5])});
}

AffineTransform AffineTransform::operator*(const AffineTransform& o) const {
  const auto& a = m_;
  const auto& b = o.m_;
  return AffineTransform({a[0] * b[0] + a[1] * b[3], a[0] * b[1] + a[1] * b[4],
                          a[0] * b[2] + a[1] * b[5] + a[2], a[3] * b[0] + a[4] * b[3],
                          a[3] * b[1] + a[4] * b[4], a[3] * b[2] + a[4] * b[5] + a[5]});
}

AffineTransform AffineTransform::resize_map(int src_w, int src_h, int dst_w, int dst_h) {
  if (src_w < 1 || src_h < 1 || dst_w < 1 || dst_h < 1) {
    throw DomainError("resize_map: zero dimension");
  }
  // x' = (x + 0.5) * dst/src - 0.5
  const double sx = static_cast<double>(dst_w) / src_w;
  const double sy = static_cast<double>(dst_h) / src_h;
  return AffineTransform({sx, 0.0, 0.5 * sx - 0.5, 0.0, sy, 0.5 * sy - 0.5});
}

// ---------------------------------------------------------------------------
// PNM

namespace {

class HeaderReader {
 public:
  explicit HeaderReader(std::span<const unsigned char> bytes) : bytes_(bytes) {}

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const unsigned char c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(c)) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  int read_int(const char* field) {
    skip_space_and_comments();
    if (pos_ >= bytes_.size()) throw FormatError(field, "unexpected end of header");
    long value = 0;
    std::size_t digits = 0;
    while (pos_ < bytes_.size() && bytes_[pos_] >= '0' && bytes_[pos_] <= '9') {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > 1'000'000) throw FormatError(field, "value too large");
      ++pos_;
      ++digits;
    }
    if (digits == 0) throw FormatError(field, "expected a decimal integer");
    return static_cast<int>(value);
  }

  std::size_t pos() const noexcept { return pos_; }
  void advance() noexcept { ++pos_; }

 private:
  std::span<const unsigned char> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

ImageBuffer decode_pnm(std::span<const unsigned char> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw FormatError("magic", "expected P5 or P6");
  }
  const int channels = bytes[1] == '5' ? 1 : 3;
  HeaderReader reader(bytes.subspan(2));
  const int width = reader.read_int("width");
  const int height = reader.read_int("height");
  const int maxval = reader.read_int("maxval");
  if (width < 1) throw FormatError("width", "must be positive");
  if (height < 1) throw FormatError("height", "must be positive");
  if (maxval != 255) {
    throw FormatError("maxval", "unsupported maxval " + std::to_string(maxval) + " (need 255)");
  }
  const std::size_t header_end = 2 + reader.pos();
  if (header_end >= bytes.size() || !std::isspace(bytes[header_end])) {
    throw FormatError("maxval", "missing whitespace after maxval");
  }
  const std::size_t payload_begin = header_end + 1;
  const std::size_t expected = static_cast<std::size_t>(width) * height * channels;
  const std::size_t available = bytes.size() - payload_begin;
  if (available < expected) {
    throw FormatError("payload", "truncated: expected " + std::to_string(expected) +
                                     " bytes, found " + std::to_string(available));
  }
  std::vector<float> data(expected);
  for (std::size_t i = 0; i < expected; ++i) {
    data[i] = static_cast<float>(bytes[payload_begin + i]) / 255.0f;
  }
  return ImageBuffer(width, height, channels, std::move(data));
}

ImageBuffer read_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open image " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return decode_pnm(bytes);
}

std::vector<unsigned char> encode_pnm(const ImageBuffer& img) {
  if (img.empty()) throw DomainError("encode_pnm: empty image");
  const std::string header = std::string(img.channels() == 1 ? "P5" : "P6") + "\n" +
                             std::to_string(img.width()) + " " + std::to_string(img.height()) +
                             "\n255\n";
  std::vector<unsigned char> out(header.begin(), header.end());
  out.reserve(header.size() + img.size());
  for (float v : img.data()) {
    const float clamped = std::clamp(v, 0.0f, 1.0f);
    out.push_back(static_cast<unsigned char>(std::lround(clamped * 255.0f)));
  }
  return out;
}

void write_image(const std::filesystem::path& path, const ImageBuffer& img) {
  const auto bytes = encode_pnm(img);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write image " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

// ---------------------------------------------------------------------------
// Pixel operations

ImageBuffer to_grayscale(const ImageBuffer& img) {
  if (img.channels() == 1) return img;
  ImageBuffer out(img.width(), img.height(), 1);
  const auto src = img.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    const double y = 0.299 * src[3 * i] + 0.587 * src[3 * i + 1] + 0.114 * src[3 * i + 2];
    dst[i] = static_cast<float>(std::clamp(y, 0.0, 1.0));
  }
  return out;
}

AffineTransform make_affine(double scale, double rotation_deg, double skew, Point2 translation,
                            Point2 center) {
  if (!(scale > 0.0) || !std::isfinite(scale)) {
    throw DomainError("make_affine: scale must be positive");
  }
  const double a = rotation_deg * std::numbers::pi / 180.0;
  const double c = std::cos(a), s = std::sin(a);
  // S * R * K
  const double m00 = scale * c, m01 = scale * (c * skew - s);
  const double m10 = scale * s, m11 = scale * (s * skew + c);
  const double tx = translation.x + center.x - (m00 * center.x + m01 * center.y);
  const double ty = translation.y + center.y - (m10 * center.x + m11 * center.y);
  return AffineTransform({m00, m01, tx, m10, m11, ty});
}

std::vector<Point2> transform_points(std::span<const Point2> pts, const AffineTransform& t) {
  std::vector<Point2> out;
  out.reserve(pts.size());
  for (const auto& p : pts) out.push_back(t.apply(p));
  return out;
}

ImageBuffer warp_image(const ImageBuffer& img, const AffineTransform& t, int out_w, int out_h,
                       float fill) {
  if (out_w < 1 || out_h < 1) throw DomainError("warp_image: zero output dimension");
  if (img.empty()) throw DomainError("warp_image: empty input");
  const AffineTransform inv = t.inverse();
  const int w = img.width(), h = img.height(), ch = img.channels();
  constexpr double kSlack = 1e-9;
  const double lo_x = -0.5 - kSlack, hi_x = w - 0.5 + kSlack;
  const double lo_y = -0.5 - kSlack, hi_y = h - 0.5 + kSlack;
  const auto& m = inv.matrix();

  ImageBuffer out(out_w, out_h, ch);
  const auto src = img.data();
  auto dst = out.data();
#pragma omp parallel for schedule(static)
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      const double sx = m[0] * x + m[1] * y + m[2];
      const double sy = m[3] * x + m[4] * y + m[5];
      float* px = &dst[(static_cast<std::size_t>(y) * out_w + x) * ch];
      if (!(sx >= lo_x && sx <= hi_x && sy >= lo_y && sy <= hi_y)) {
        for (int c = 0; c < ch; ++c) px[c] = fill;
        continue;
      }
      const double cx = std::clamp(sx, 0.0, static_cast<double>(w - 1));
      const double cy = std::clamp(sy, 0.0, static_cast<double>(h - 1));
      const int x0 = static_cast<int>(std::floor(cx));
      const int y0 = static_cast<int>(std::floor(cy));
      const int x1 = std::min(x0 + 1, w - 1);
      const int y1 = std::min(y0 + 1, h - 1);
      const double fx = cx - x0, fy = cy - y0;
      const double w00 = (1.0 - fx) * (1.0 - fy), w10 = fx * (1.0 - fy);
      const double w01 = (1.0 - fx) * fy, w11 = fx * fy;
      const std::size_t r0 = static_cast<std::size_t>(y0) * w, r1 = static_cast<std::size_t>(y1) * w;
      for (int c = 0; c < ch; ++c) {
        const double v = w00 * src[(r0 + x0) * ch + c] + w10 * src[(r0 + x1) * ch + c] +
                         w01 * src[(r1 + x0) * ch + c] + w11 * src[(r1 + x1) * ch + c];
        px[c] = static_cast<float>(v);
      }
    }
  }
  return out;
}

ImageBuffer resize(const ImageBuffer& img, int out_w, int out_h) {
  if (out_w < 1 || out_h < 1) throw DomainError("resize: zero output dimension");
  return warp_image(img, AffineTransform::resize_map(img.width(), img.height(), out_w, out_h),
                    out_w, out_h);
}

ImageBuffer center_crop_square(const ImageBuffer& img) {
  const int side = std::min(img.width(), img.height());
  if (side == img.width() && side == img.height()) return img;
  const int x0 = (img.width() - side) / 2, y0 = (img.height() - side) / 2;
  ImageBuffer out(side, side, img.channels());
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      for (int c = 0; c < img.channels(); ++c) out.at(x, y, c) = img.at(x0 + x, y0 + y, c);
    }
  }
  return out;
}

}  // namespace scalenet::imaging
