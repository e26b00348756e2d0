#include "latentmark/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "latentmark/rng.hpp"

namespace latentmark {
namespace {

// Bilinearly interpolated lattice noise with `cells` cells across the image.
std::vector<double> value_noise(CounterRng& rng, int h, int w, int cells) {
  const int gh = cells + 2;
  const int gw = cells + 2;
  std::vector<double> grid(static_cast<std::size_t>(gh) * gw);
  for (auto& g : grid) g = rng.uniform(-1.0, 1.0);
  std::vector<double> out(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y) {
    const double gy = static_cast<double>(y) / h * cells;
    const int y0 = static_cast<int>(gy);
    const double fy = gy - y0;
    const double sy = fy * fy * (3 - 2 * fy);
    for (int x = 0; x < w; ++x) {
      const double gx = static_cast<double>(x) / w * cells;
      const int x0 = static_cast<int>(gx);
      const double fx = gx - x0;
      const double sx = fx * fx * (3 - 2 * fx);
      auto g = [&](int yy, int xx) { return grid[static_cast<std::size_t>(yy) * gw + xx]; };
      const double top = g(y0, x0) * (1 - sx) + g(y0, x0 + 1) * sx;
      const double bot = g(y0 + 1, x0) * (1 - sx) + g(y0 + 1, x0 + 1) * sx;
      out[static_cast<std::size_t>(y) * w + x] = top * (1 - sy) + bot * sy;
    }
  }
  return out;
}

}  // namespace

Image synthetic_image(std::uint64_t seed, int height, int width) {
  CounterRng rng(seed, 0x73796e7468);
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  std::vector<double> px(plane * 3);

  // Background: linear gradient between two colors.
  double c0[3], c1[3];
  for (int c = 0; c < 3; ++c) {
    c0[c] = rng.uniform(0.1, 0.9);
    c1[c] = rng.uniform(0.1, 0.9);
  }
  const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double ca = std::cos(angle), sa = std::sin(angle);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double t = 0.5 + 0.5 * ((x / double(width) - 0.5) * ca + (y / double(height) - 0.5) * sa) * 1.4;
      const double tt = std::clamp(t, 0.0, 1.0);
      for (int c = 0; c < 3; ++c) px[c * plane + y * width + x] = c0[c] * (1 - tt) + c1[c] * tt;
    }
  }

  // Shapes with flat, striped or checkered fills.
  const int shapes = 4 + static_cast<int>(rng.below(9));
  for (int s = 0; s < shapes; ++s) {
    const bool ellipse = rng.bernoulli(0.5);
    const double cy = rng.uniform(0.0, height);
    const double cx = rng.uniform(0.0, width);
    const double ry = rng.uniform(0.08, 0.35) * height;
    const double rx = rng.uniform(0.08, 0.35) * width;
    const int fill = static_cast<int>(rng.below(3));
    const double freq = rng.uniform(0.15, 0.9);
    const double fa = rng.uniform(0.0, std::numbers::pi);
    double col[3], col2[3];
    for (int c = 0; c < 3; ++c) {
      col[c] = rng.uniform(0.0, 1.0);
      col2[c] = rng.uniform(0.0, 1.0);
    }
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const double dy = (y - cy) / ry;
        const double dx = (x - cx) / rx;
        const bool inside = ellipse ? dx * dx + dy * dy <= 1.0 : std::fabs(dx) <= 1.0 && std::fabs(dy) <= 1.0;
        if (!inside) continue;
        double mixw = 0.0;
        if (fill == 1) {
          mixw = 0.5 + 0.5 * std::sin(freq * (x * std::cos(fa) + y * std::sin(fa)));
        } else if (fill == 2) {
          const int period = 2 + static_cast<int>(6 * freq);
          mixw = ((x / period + y / period) % 2) ? 1.0 : 0.0;
        }
        for (int c = 0; c < 3; ++c) px[c * plane + y * width + x] = col[c] * (1 - mixw) + col2[c] * mixw;
      }
    }
  }

  // Multi-octave luminance noise and a little per-channel grain.
  const double amp = rng.uniform(0.03, 0.12);
  for (int octave = 0, cells = 4; octave < 4; ++octave, cells *= 2) {
    const auto n = value_noise(rng, height, width, std::min(cells, std::max(height, width)));
    const double a = amp / (1 << octave);
    for (std::size_t p = 0; p < plane; ++p) {
      for (int c = 0; c < 3; ++c) px[c * plane + p] += a * n[p];
    }
  }
  const double grain = rng.uniform(0.0, 0.03);
  for (auto& v : px) v += grain * rng.uniform(-1.0, 1.0);

  for (auto& v : px) v = quantize_sample(std::clamp(v, 0.0, 1.0)) / 255.0;
  return Image(height, width, std::move(px));
}

std::vector<Image> synthetic_corpus(std::uint64_t seed, int count, int height, int width) {
  std::vector<Image> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) out.push_back(synthetic_image(CounterRng::mix(seed + 0x1000 * (i + 1)), height, width));
  return out;
}

Image noise_image(std::uint64_t seed, int height, int width) {
  CounterRng rng(seed, 0x6e6f697365);
  std::vector<double> px(static_cast<std::size_t>(height) * width * 3);
  for (auto& v : px) v = static_cast<double>(rng.below(256)) / 255.0;
  return Image(height, width, std::move(px));
}

}  // namespace latentmark
