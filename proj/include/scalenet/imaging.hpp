#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace scalenet::imaging {

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2&, const Point2&) = default;
};

// H x W x C float image, row-major, channel-interleaved, values in [0, 1].
//
// Pixel-center convention used everywhere in this library: pixel (x, y)
// has its center at integer coordinates (x, y) and covers the square
// [x - 0.5, x + 0.5] x [y - 0.5, y + 0.5].
class ImageBuffer {
 public:
  ImageBuffer() = default;
  ImageBuffer(int width, int height, int channels, float value = 0.0f);
  ImageBuffer(int width, int height, int channels, std::vector<float> data);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int channels() const noexcept { return channels_; }
  bool empty() const noexcept { return data_.empty(); }
  std::size_t size() const noexcept { return data_.size(); }

  float& at(int x, int y, int c = 0) { return data_[index(x, y, c)]; }
  float at(int x, int y, int c = 0) const { return data_[index(x, y, c)]; }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }

  friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;

 private:
  std::size_t index(int x, int y, int c) const noexcept {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<float> data_;
};

// 2x3 matrix mapping source coordinates (x, y, 1) to target coordinates.
class AffineTransform {
 public:
  // Identity.
  AffineTransform();
  explicit AffineTransform(const std::array<double, 6>& m);

  const std::array<double, 6>& matrix() const noexcept { return m_; }
  double operator()(int row, int col) const { return m_[row * 3 + col]; }

  Point2 apply(Point2 p) const noexcept;
  double determinant() const noexcept { return m_[0] * m_[4] - m_[1] * m_[3]; }
  AffineTransform inverse() const;  // DomainError when singular

  // (this * other)(p) == this->apply(other.apply(p))
  AffineTransform operator*(const AffineTransform& other) const;

  // Maps target pixel centers of a (dst_w x dst_h) raster onto a
  // (src_w x src_h) raster so both rasters cover the same extent.
  // Direction: source -> target.
  static AffineTransform resize_map(int src_w, int src_h, int dst_w, int dst_h);

 private:
  std::array<double, 6> m_;
};

// Binary PGM (P5) / PPM (P6), 8-bit, maxval 255.
ImageBuffer read_image(const std::filesystem::path& path);
ImageBuffer decode_pnm(std::span<const unsigned char> bytes);
void write_image(const std::filesystem::path& path, const ImageBuffer& img);
std::vector<unsigned char> encode_pnm(const ImageBuffer& img);

// Luma y = 0.299 r + 0.587 g + 0.114 b. Single-channel input is returned as is.
ImageBuffer to_grayscale(const ImageBuffer& img);

// T(p) = translation + center + S * R * K * (p - center)
// with S = scale * I, R = [[cos a, -sin a], [sin a, cos a]] for a = rotation_deg
// and K = [[1, skew], [0, 1]]. The composition order S * R * K is fixed.
AffineTransform make_affine(double scale, double rotation_deg, double skew,
                            Point2 translation, Point2 center);

std::vector<Point2> transform_points(std::span<const Point2> pts, const AffineTransform& t);

// Inverse-mapping bilinear warp. A target pixel whose preimage falls outside
// the source pixel area [-0.5, w - 0.5] x [-0.5, h - 0.5] takes `fill`;
// preimages inside it sample with edge-clamped bilinear interpolation.
ImageBuffer warp_image(const ImageBuffer& img, const AffineTransform& t, int out_w, int out_h,
                       float fill = 0.0f);

// Bilinear resampling; identical to warp_image with resize_map.
ImageBuffer resize(const ImageBuffer& img, int out_w, int out_h);

// Largest centered square.
ImageBuffer center_crop_square(const ImageBuffer& img);

}  // namespace scalenet::imaging
