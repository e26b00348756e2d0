#pragma once

// Marking-time augmentations: random sampling of a transformation and its
// differentiable application with an exact vector-Jacobian product.

#include <string>
#include <string_view>

#include "latentmark/image.hpp"
#include "latentmark/resample.hpp"
#include "latentmark/rng.hpp"

namespace latentmark {

enum class TransformKind { kIdentity = 0, kRotation, kBlur, kCrop, kResize };

inline constexpr int kTransformKindCount = 5;

std::string_view to_string(TransformKind kind);

struct TransformSample {
  TransformKind kind = TransformKind::kIdentity;
  double angle = 0.0;          // radians, counter-clockwise, in [-pi/2, pi/2]
  double crop_scale = 1.0;     // area fraction in [0.2, 1]
  double crop_aspect = 1.0;    // width / height in [3/4, 4/3]
  double crop_u = 0.5;         // window position along x, fraction of the free range
  double crop_v = 0.5;         // window position along y
  double resize_scale = 1.0;   // in [0.2, 1]
  int blur_size = 1;           // odd, in [1, 15]
  double blur_sigma = 0.5;     // 0.15 * blur_size + 0.35
  bool hflip = false;

  friend bool operator==(const TransformSample&, const TransformSample&) = default;
};

/// Distribution over marking-time transformations. `kinds` restricts the
/// uniform choice of kind (e.g. identity only, or identity + rotation).
struct AugmentationPolicy {
  std::vector<TransformKind> kinds = {TransformKind::kIdentity, TransformKind::kRotation,
                                      TransformKind::kBlur, TransformKind::kCrop,
                                      TransformKind::kResize};
  bool allow_hflip = true;

  static AugmentationPolicy identity_only();
  /// Parses a comma list such as "identity,rotation" or "all".
  static AugmentationPolicy parse(const std::string& spec);
  std::string to_string() const;
};

/// Von Mises variate on [-pi, pi] (Best-Fisher rejection sampler).
double sample_von_mises(CounterRng& rng, double mu, double kappa);

TransformSample sample_transform(CounterRng& rng, const AugmentationPolicy& policy = {});

/// Linear operator realizing `t` on an h x w image (output has the same shape).
/// Throws InvalidArgument on a degenerate crop window.
LinearPipeline transform_pipeline(const TransformSample& t, int h, int w);

/// Tr(img, t), clamped to [0, 1].
Image apply_transform(const Image& img, const TransformSample& t);
/// Transposed Jacobian of apply_transform at img applied to `cotangent`
/// (clamp treated as identity).
PixelDelta transform_vjp(const Image& img, const TransformSample& t, const PixelDelta& cotangent);

}  // namespace latentmark
