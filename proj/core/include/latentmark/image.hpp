#pragma once

// Image representation, lossless file I/O and fidelity metrics.
//
// Pixels are stored planar (channel-major): data[c * H * W + y * W + x],
// three channels in RGB order, values in [0, 1].

#include <filesystem>
#include <span>
#include <vector>

namespace latentmark {

inline constexpr int kChannels = 3;

/// Real-valued array with the shape of an image and no range restriction.
/// Used for watermark deltas, gradients and cotangents.
struct PixelDelta {
  int height = 0;
  int width = 0;
  std::vector<double> data;

  PixelDelta() = default;
  PixelDelta(int h, int w) : height(h), width(w), data(static_cast<std::size_t>(h) * w * kChannels, 0.0) {}
  PixelDelta(int h, int w, std::vector<double> values);

  std::size_t size() const { return data.size(); }
  std::size_t plane_size() const { return static_cast<std::size_t>(height) * width; }
  double& at(int c, int y, int x) { return data[c * plane_size() + static_cast<std::size_t>(y) * width + x]; }
  double at(int c, int y, int x) const { return data[c * plane_size() + static_cast<std::size_t>(y) * width + x]; }

  PixelDelta& operator+=(const PixelDelta& other);
  PixelDelta& operator*=(double s);
  bool same_shape(const PixelDelta& other) const { return height == other.height && width == other.width; }
};

double dot(const PixelDelta& a, const PixelDelta& b);

/// Immutable RGB image with values in [0, 1].
class Image {
 public:
  Image() = default;
  /// Constant image.
  Image(int height, int width, double value = 0.0);
  /// Takes planar values; throws InvalidArgument when any value is outside [0, 1] or not finite.
  Image(int height, int width, std::vector<double> planar);

  /// Builds an image from arbitrary values, clamping into [0, 1].
  static Image clamped(const PixelDelta& values);
  static Image clamped(int height, int width, std::vector<double> planar);

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return data_.size(); }
  std::size_t plane_size() const { return static_cast<std::size_t>(height_) * width_; }
  bool empty() const { return data_.empty(); }

  std::span<const double> data() const { return data_; }
  std::span<const double> channel(int c) const {
    return std::span<const double>(data_).subspan(c * plane_size(), plane_size());
  }
  double at(int c, int y, int x) const {
    return data_[c * plane_size() + static_cast<std::size_t>(y) * width_ + x];
  }

  bool same_shape(const Image& other) const { return height_ == other.height_ && width_ == other.width_; }
  bool same_shape(const PixelDelta& other) const { return height_ == other.height && width_ == other.width; }

  PixelDelta as_delta() const { return PixelDelta(height_, width_, data_); }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<double> data_;
};

/// a - b.
PixelDelta difference(const Image& a, const Image& b);
/// clamp(base + delta) into [0, 1].
Image apply_delta(const Image& base, const PixelDelta& delta);

/// u8 quantization: round half away from zero of v * 255, clamped to [0, 255].
unsigned char quantize_sample(double v);
/// Round-trips every sample through the u8 quantizer.
Image quantize(const Image& img);

/// Reads PNG (8-bit gray, gray+alpha rejected, RGB, palette) or PPM P6/P5.
/// Grayscale input is replicated to three channels.
Image load_image(const std::filesystem::path& path);
/// Writes PNG or PPM (P6) depending on the extension (.png / .ppm / .pnm).
void save_image(const Image& img, const std::filesystem::path& path);

/// Writes a single-channel map as an 8-bit grayscale PNG, values scaled by 1 / max.
void save_heatmap_png(std::span<const double> values, int height, int width,
                      const std::filesystem::path& path);

/// Mean squared error on the 8-bit scale: mean of (255 (a - b))^2.
double mse(const Image& a, const Image& b);
double mse(const PixelDelta& delta);
/// 10 log10(255^2 / mse). Identical inputs give +infinity.
double psnr(const Image& a, const Image& b);
double psnr(const PixelDelta& delta);

}  // namespace latentmark
