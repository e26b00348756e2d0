#include "latentmark/perceptual.hpp"

#include <algorithm>
#include <cmath>

#include "latentmark/error.hpp"

namespace latentmark {
namespace {

// Box sums over window x window 'valid' positions; output is (h-window+1) x (w-window+1).
std::vector<double> box_sum_valid(const std::vector<double>& plane, int h, int w, int window) {
  const int oh = h - window + 1;
  const int ow = w - window + 1;
  std::vector<double> rows(static_cast<std::size_t>(h) * ow);
  for (int y = 0; y < h; ++y) {
    const double* src = plane.data() + static_cast<std::size_t>(y) * w;
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int k = 0; k < window; ++k) s += src[x + k];
      rows[static_cast<std::size_t>(y) * ow + x] = s;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow, 0.0);
  for (int y = 0; y < oh; ++y) {
    double* dst = out.data() + static_cast<std::size_t>(y) * ow;
    for (int k = 0; k < window; ++k) {
      const double* src = rows.data() + static_cast<std::size_t>(y + k) * ow;
      for (int x = 0; x < ow; ++x) dst[x] += src[x];
    }
  }
  return out;
}

}  // namespace

double Heatmap::max() const {
  double m = 0.0;
  for (double v : values) m = std::max(m, v);
  return m;
}

Heatmap ssim_heatmap(const Image& image, const Image& reference, const SsimParams& params) {
  if (!image.same_shape(reference)) throw InvalidArgument("ssim_heatmap: shape mismatch");
  const int h = image.height();
  const int w = image.width();
  const int win = params.window;
  if (win < 1 || h < win || w < win) throw InvalidArgument("ssim_heatmap: image smaller than window");

  const int oh = h - win + 1;
  const int ow = w - win + 1;
  const double norm = 1.0 / (static_cast<double>(win) * win);
  const std::size_t plane = image.plane_size();
  std::vector<double> valid(static_cast<std::size_t>(oh) * ow, 0.0);
  std::vector<double> x(plane), y(plane), xx(plane), yy(plane), xy(plane);

  for (int c = 0; c < kChannels; ++c) {
    auto a = image.channel(c);
    auto b = reference.channel(c);
    for (std::size_t i = 0; i < plane; ++i) {
      x[i] = a[i];
      y[i] = b[i];
      xx[i] = a[i] * a[i];
      yy[i] = b[i] * b[i];
      xy[i] = a[i] * b[i];
    }
    const auto sx = box_sum_valid(x, h, w, win);
    const auto sy = box_sum_valid(y, h, w, win);
    const auto sxx = box_sum_valid(xx, h, w, win);
    const auto syy = box_sum_valid(yy, h, w, win);
    const auto sxy = box_sum_valid(xy, h, w, win);
    for (std::size_t i = 0; i < valid.size(); ++i) {
      const double mx = sx[i] * norm;
      const double my = sy[i] * norm;
      const double vx = sxx[i] * norm - mx * mx;
      const double vy = syy[i] * norm - my * my;
      const double cxy = sxy[i] * norm - mx * my;
      const double num = (2.0 * mx * my + params.c1) * (2.0 * cxy + params.c2);
      const double den = (mx * mx + my * my + params.c1) * (vx + vy + params.c2);
      valid[i] += num / den;
    }
  }

  Heatmap map{h, w, std::vector<double>(plane)};
  const int pad = (win - 1) / 2;
  for (int yy_ = 0; yy_ < h; ++yy_) {
    const int sy_ = std::clamp(yy_ - pad, 0, oh - 1);
    for (int xx_ = 0; xx_ < w; ++xx_) {
      const int sx_ = std::clamp(xx_ - pad, 0, ow - 1);
      map.values[static_cast<std::size_t>(yy_) * w + xx_] =
          std::max(0.0, valid[static_cast<std::size_t>(sy_) * ow + sx_]);
    }
  }
  return map;
}

PixelDelta clamp_psnr(const PixelDelta& delta, double target_psnr) {
  if (!std::isfinite(target_psnr)) throw InvalidArgument("target PSNR must be finite");
  const double current = psnr(delta);
  if (current >= target_psnr) return delta;
  PixelDelta out = delta;
  out *= std::pow(10.0, (current - target_psnr) / 20.0);
  return out;
}

PixelDelta apply_constraints(const PixelDelta& delta, const Image& original, double target_psnr,
                             const SsimParams& params) {
  if (!original.same_shape(delta)) throw InvalidArgument("apply_constraints: shape mismatch");
  if (!std::isfinite(target_psnr)) throw InvalidArgument("target PSNR must be finite");
  if (std::all_of(delta.data.begin(), delta.data.end(), [](double v) { return v == 0.0; })) {
    return delta;
  }

  const Heatmap heat = ssim_heatmap(apply_delta(original, delta), original, params);
  const double peak = heat.max();
  PixelDelta attenuated = delta;
  const std::size_t plane = attenuated.plane_size();
  for (int c = 0; c < kChannels; ++c) {
    for (std::size_t p = 0; p < plane; ++p) {
      attenuated.data[c * plane + p] *= peak > 0.0 ? heat.values[p] / peak : 0.0;
    }
  }

  PixelDelta out = clamp_psnr(attenuated, target_psnr);
  auto base = original.data();
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    out.data[i] = std::clamp(base[i] + out.data[i], 0.0, 1.0) - base[i];
  }
  return out;
}

}  // namespace latentmark
