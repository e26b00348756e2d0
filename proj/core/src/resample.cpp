#include "latentmark/resample.hpp"

#include <algorithm>
#include <cmath>

#include "latentmark/error.hpp"

namespace latentmark {

LinearMap::LinearMap(int in_h, int in_w, int out_h, int out_w)
    : in_h_(in_h), in_w_(in_w), out_h_(out_h), out_w_(out_w) {
  if (in_h < 1 || in_w < 1 || out_h < 1 || out_w < 1) throw InvalidArgument("degenerate resampling shape");
  row_start_.reserve(static_cast<std::size_t>(out_h) * out_w + 1);
  row_start_.push_back(0);
}

void LinearMap::add_tap(int src_index, double weight) {
  if (weight == 0.0) return;
  src_.push_back(static_cast<std::uint32_t>(src_index));
  weight_.push_back(weight);
}

void LinearMap::next_output() { row_start_.push_back(static_cast<std::uint32_t>(src_.size())); }

PixelDelta LinearMap::apply(const PixelDelta& in) const {
  if (in.height != in_h_ || in.width != in_w_) throw InvalidArgument("LinearMap::apply shape mismatch");
  const std::size_t in_plane = in.plane_size();
  const std::size_t out_plane = static_cast<std::size_t>(out_h_) * out_w_;
  PixelDelta out(out_h_, out_w_);
  for (int c = 0; c < kChannels; ++c) {
    const double* src = in.data.data() + c * in_plane;
    double* dst = out.data.data() + c * out_plane;
    for (std::size_t o = 0; o < out_plane; ++o) {
      double s = 0.0;
      for (auto k = row_start_[o]; k < row_start_[o + 1]; ++k) s += weight_[k] * src[src_[k]];
      dst[o] = s;
    }
  }
  return out;
}

PixelDelta LinearMap::adjoint(const PixelDelta& out) const {
  if (out.height != out_h_ || out.width != out_w_) throw InvalidArgument("LinearMap::adjoint shape mismatch");
  const std::size_t in_plane = static_cast<std::size_t>(in_h_) * in_w_;
  const std::size_t out_plane = out.plane_size();
  PixelDelta in(in_h_, in_w_);
  for (int c = 0; c < kChannels; ++c) {
    double* dst = in.data.data() + c * in_plane;
    const double* src = out.data.data() + c * out_plane;
    for (std::size_t o = 0; o < out_plane; ++o) {
      const double g = src[o];
      for (auto k = row_start_[o]; k < row_start_[o + 1]; ++k) dst[src_[k]] += weight_[k] * g;
    }
  }
  return in;
}

void LinearPipeline::push(LinearMap map) {
  if (map.in_height() != out_height() || map.in_width() != out_width()) {
    throw InvalidArgument("LinearPipeline: stage shape mismatch");
  }
  maps_.push_back(std::move(map));
}

PixelDelta LinearPipeline::apply(const PixelDelta& in) const {
  PixelDelta x = in;
  for (const auto& m : maps_) x = m.apply(x);
  return x;
}

PixelDelta LinearPipeline::adjoint(const PixelDelta& out) const {
  PixelDelta g = out;
  for (auto it = maps_.rbegin(); it != maps_.rend(); ++it) g = it->adjoint(g);
  return g;
}

int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

std::vector<double> gaussian_kernel(int kernel_size, double sigma) {
  if (kernel_size < 1 || kernel_size % 2 == 0) throw InvalidArgument("blur kernel size must be odd and positive");
  if (!(sigma > 0.0)) throw InvalidArgument("blur sigma must be positive");
  const int r = kernel_size / 2;
  std::vector<double> k(kernel_size);
  double sum = 0.0;
  for (int i = 0; i < kernel_size; ++i) {
    const double d = i - r;
    k[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    sum += k[i];
  }
  for (auto& v : k) v /= sum;
  return k;
}

LinearMap bilinear_resize(int in_h, int in_w, const Window& win, int out_h, int out_w) {
  if (win.height < 1 || win.width < 1 || win.y < 0 || win.x < 0 || win.y + win.height > in_h ||
      win.x + win.width > in_w) {
    throw InvalidArgument("resize window outside the source image");
  }
  LinearMap map(in_h, in_w, out_h, out_w);
  const double sy = static_cast<double>(win.height) / out_h;
  const double sx = static_cast<double>(win.width) / out_w;
  for (int oy = 0; oy < out_h; ++oy) {
    const double fy = std::clamp((oy + 0.5) * sy - 0.5, 0.0, win.height - 1.0);
    const int y0 = std::min(static_cast<int>(fy), win.height - 1);
    const int y1 = std::min(y0 + 1, win.height - 1);
    const double wy = fy - y0;
    for (int ox = 0; ox < out_w; ++ox) {
      const double fx = std::clamp((ox + 0.5) * sx - 0.5, 0.0, win.width - 1.0);
      const int x0 = std::min(static_cast<int>(fx), win.width - 1);
      const int x1 = std::min(x0 + 1, win.width - 1);
      const double wx = fx - x0;
      auto idx = [&](int y, int x) { return (win.y + y) * in_w + win.x + x; };
      map.add_tap(idx(y0, x0), (1 - wy) * (1 - wx));
      map.add_tap(idx(y0, x1), (1 - wy) * wx);
      map.add_tap(idx(y1, x0), wy * (1 - wx));
      map.add_tap(idx(y1, x1), wy * wx);
      map.next_output();
    }
  }
  return map;
}

LinearMap rotation(int h, int w, double angle) {
  LinearMap map(h, w, h, w);
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  const double cy = (h - 1) / 2.0;
  const double cx = (w - 1) / 2.0;
  for (int oy = 0; oy < h; ++oy) {
    for (int ox = 0; ox < w; ++ox) {
      // Forward rotation maps (dx, dy) to (dx c + dy s, -dx s + dy c); invert it.
      const double dx = ox - cx;
      const double dy = oy - cy;
      const double fx = cx + dx * c - dy * s;
      const double fy = cy + dx * s + dy * c;
      const double x0f = std::floor(fx);
      const double y0f = std::floor(fy);
      const double wx = fx - x0f;
      const double wy = fy - y0f;
      const int x0 = static_cast<int>(x0f);
      const int y0 = static_cast<int>(y0f);
      auto tap = [&](int y, int x, double wgt) {
        if (y >= 0 && y < h && x >= 0 && x < w) map.add_tap(y * w + x, wgt);
      };
      tap(y0, x0, (1 - wy) * (1 - wx));
      tap(y0, x0 + 1, (1 - wy) * wx);
      tap(y0 + 1, x0, wy * (1 - wx));
      tap(y0 + 1, x0 + 1, wy * wx);
      map.next_output();
    }
  }
  return map;
}

LinearMap gaussian_blur_1d(int h, int w, int kernel_size, double sigma, bool horizontal) {
  const auto k = gaussian_kernel(kernel_size, sigma);
  const int r = kernel_size / 2;
  LinearMap map(h, w, h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int i = -r; i <= r; ++i) {
        // Taps reflected onto the same source pixel are accumulated by repetition.
        const int src = horizontal ? y * w + reflect_index(x + i, w) : reflect_index(y + i, h) * w + x;
        map.add_tap(src, k[i + r]);
      }
      map.next_output();
    }
  }
  return map;
}

LinearMap horizontal_flip(int h, int w) {
  LinearMap map(h, w, h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      map.add_tap(y * w + (w - 1 - x), 1.0);
      map.next_output();
    }
  }
  return map;
}

LinearMap crop_window(int h, int w, const Window& win) {
  if (win.height < 1 || win.width < 1 || win.y < 0 || win.x < 0 || win.y + win.height > h ||
      win.x + win.width > w) {
    throw InvalidArgument("crop window outside the source image");
  }
  LinearMap map(h, w, win.height, win.width);
  for (int y = 0; y < win.height; ++y) {
    for (int x = 0; x < win.width; ++x) {
      map.add_tap((win.y + y) * w + win.x + x, 1.0);
      map.next_output();
    }
  }
  return map;
}

}  // namespace latentmark
