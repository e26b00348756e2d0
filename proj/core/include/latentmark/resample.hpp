#pragma once

// Sparse linear resampling operators shared by marking-time augmentations
// and evaluation-time attacks. Every operator acts identically on each
// channel plane; `apply` gathers and `adjoint` scatters with the same taps,
// so the pair is exactly transposed.

#include <cstdint>
#include <vector>

#include "latentmark/image.hpp"

namespace latentmark {

class LinearMap {
 public:
  LinearMap(int in_h, int in_w, int out_h, int out_w);

  int in_height() const { return in_h_; }
  int in_width() const { return in_w_; }
  int out_height() const { return out_h_; }
  int out_width() const { return out_w_; }

  /// Appends a tap to the most recently started output pixel.
  void add_tap(int src_index, double weight);
  /// Starts the next output pixel (row-major over the output plane).
  void next_output();

  PixelDelta apply(const PixelDelta& in) const;
  PixelDelta adjoint(const PixelDelta& out) const;

 private:
  int in_h_, in_w_, out_h_, out_w_;
  std::vector<std::uint32_t> row_start_;
  std::vector<std::uint32_t> src_;
  std::vector<double> weight_;
};

/// Chain of linear maps applied in order.
class LinearPipeline {
 public:
  LinearPipeline(int height, int width) : in_h_(height), in_w_(width) {}

  void push(LinearMap map);
  int out_height() const { return maps_.empty() ? in_h_ : maps_.back().out_height(); }
  int out_width() const { return maps_.empty() ? in_w_ : maps_.back().out_width(); }
  bool empty() const { return maps_.empty(); }

  PixelDelta apply(const PixelDelta& in) const;
  PixelDelta adjoint(const PixelDelta& out) const;

 private:
  int in_h_, in_w_;
  std::vector<LinearMap> maps_;
};

struct Window {
  int y = 0;
  int x = 0;
  int height = 0;
  int width = 0;
};

/// Bilinear resize of `window` of an in_h x in_w plane onto out_h x out_w
/// (half-pixel centers, edge clamped).
LinearMap bilinear_resize(int in_h, int in_w, const Window& window, int out_h, int out_w);
/// Rotation by `angle` radians (counter-clockwise on screen) about the image
/// center, inverse-mapped bilinear sampling, zero outside the source.
LinearMap rotation(int h, int w, double angle);
/// 1-D Gaussian blur along rows (horizontal = true) or columns, reflect padding.
LinearMap gaussian_blur_1d(int h, int w, int kernel_size, double sigma, bool horizontal);
LinearMap horizontal_flip(int h, int w);
/// Extracts `window` at native resolution.
LinearMap crop_window(int h, int w, const Window& window);

/// Normalized Gaussian taps of odd length kernel_size.
std::vector<double> gaussian_kernel(int kernel_size, double sigma);
/// Mirror index into [0, n) without repeating the edge sample.
int reflect_index(int i, int n);

}  // namespace latentmark
