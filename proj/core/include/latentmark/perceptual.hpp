#pragma once

#include <vector>

#include "latentmark/image.hpp"

namespace latentmark {

/// Single-channel non-negative map with the spatial shape of its image.
struct Heatmap {
  int height = 0;
  int width = 0;
  std::vector<double> values;

  double at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
  double max() const;
};

struct SsimParams {
  int window = 17;
  double c1 = 0.01 * 0.01;
  double c2 = 0.03 * 0.03;
};

/// Local SSIM between `image` and `reference` over sliding uniform windows,
/// summed over the three channels and clamped at zero. The window only visits
/// 'valid' positions; border rows/columns replicate the nearest interior value.
/// Throws InvalidArgument when shapes differ or the image is smaller than the window.
Heatmap ssim_heatmap(const Image& image, const Image& reference, const SsimParams& params = {});

/// Rescales delta so that psnr(delta) == target_psnr when it is currently below it.
/// Deltas already at or above the target are returned unchanged.
PixelDelta clamp_psnr(const PixelDelta& delta, double target_psnr);

/// Projection onto the admissible set around `original`:
///   1. delta is scaled pixel-wise by the SSIM heatmap of (original + delta)
///      against original, normalized by its maximum;
///   2. the result is rescaled to meet the minimum PSNR;
///   3. original + delta is clamped to [0, 1].
PixelDelta apply_constraints(const PixelDelta& delta, const Image& original, double target_psnr,
                             const SsimParams& params = {});

}  // namespace latentmark
