#include "latentmark/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "latentmark/error.hpp"

namespace latentmark {

std::string_view to_string(TransformKind kind) {
  switch (kind) {
    case TransformKind::kIdentity: return "identity";
    case TransformKind::kRotation: return "rotation";
    case TransformKind::kBlur: return "blur";
    case TransformKind::kCrop: return "crop";
    case TransformKind::kResize: return "resize";
  }
  return "unknown";
}

AugmentationPolicy AugmentationPolicy::identity_only() {
  return AugmentationPolicy{{TransformKind::kIdentity}, false};
}

AugmentationPolicy AugmentationPolicy::parse(const std::string& spec) {
  if (spec.empty() || spec == "all") return {};
  AugmentationPolicy policy{{}, true};
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item == "noflip") {
      policy.allow_hflip = false;
      continue;
    }
    bool found = false;
    for (int k = 0; k < kTransformKindCount; ++k) {
      if (item == latentmark::to_string(static_cast<TransformKind>(k))) {
        policy.kinds.push_back(static_cast<TransformKind>(k));
        found = true;
      }
    }
    if (!found) throw InvalidArgument("unknown augmentation kind '" + item + "'");
  }
  if (policy.kinds.empty()) throw InvalidArgument("augmentation policy has no kinds");
  return policy;
}

std::string AugmentationPolicy::to_string() const {
  std::string out;
  for (auto k : kinds) {
    if (!out.empty()) out += ',';
    out += latentmark::to_string(k);
  }
  if (!allow_hflip) out += ",noflip";
  return out;
}

double sample_von_mises(CounterRng& rng, double mu, double kappa) {
  if (kappa < 1e-8) return mu + std::numbers::pi * (2.0 * rng.uniform() - 1.0);
  const double a = 1.0 + std::sqrt(1.0 + 4.0 * kappa * kappa);
  const double b = (a - std::sqrt(2.0 * a)) / (2.0 * kappa);
  const double r = (1.0 + b * b) / (2.0 * b);
  double f = 0.0;
  for (;;) {
    const double u1 = rng.uniform();
    const double u2 = 1.0 - rng.uniform();  // (0, 1]
    const double z = std::cos(std::numbers::pi * u1);
    f = (1.0 + r * z) / (r + z);
    const double c = kappa * (r - f);
    if (c * (2.0 - c) - u2 > 0.0 || std::log(c / u2) + 1.0 - c >= 0.0) break;
  }
  const double theta = std::acos(std::clamp(f, -1.0, 1.0));
  double out = mu + (rng.uniform() < 0.5 ? -theta : theta);
  if (out > std::numbers::pi) out -= 2.0 * std::numbers::pi;
  if (out < -std::numbers::pi) out += 2.0 * std::numbers::pi;
  return out;
}

TransformSample sample_transform(CounterRng& rng, const AugmentationPolicy& policy) {
  if (policy.kinds.empty()) throw InvalidArgument("augmentation policy has no kinds");
  TransformSample t;
  t.kind = policy.kinds[rng.below(policy.kinds.size())];
  switch (t.kind) {
    case TransformKind::kIdentity:
      break;
    case TransformKind::kRotation:
      t.angle = sample_von_mises(rng, 0.0, 1.0) / 2.0;
      break;
    case TransformKind::kBlur:
      t.blur_size = 1 + 2 * static_cast<int>(rng.below(8));
      t.blur_sigma = 0.15 * t.blur_size + 0.35;
      break;
    case TransformKind::kCrop:
      t.crop_scale = rng.uniform(0.2, 1.0);
      t.crop_aspect = rng.uniform(3.0 / 4.0, 4.0 / 3.0);
      t.crop_u = rng.uniform();
      t.crop_v = rng.uniform();
      break;
    case TransformKind::kResize:
      t.resize_scale = rng.uniform(0.2, 1.0);
      break;
  }
  t.hflip = policy.allow_hflip && rng.bernoulli(0.5);
  return t;
}

LinearPipeline transform_pipeline(const TransformSample& t, int h, int w) {
  LinearPipeline pipe(h, w);
  switch (t.kind) {
    case TransformKind::kIdentity:
      break;
    case TransformKind::kRotation:
      if (t.angle != 0.0) pipe.push(rotation(h, w, t.angle));
      break;
    case TransformKind::kBlur:
      if (t.blur_size > 1) {
        pipe.push(gaussian_blur_1d(h, w, t.blur_size, t.blur_sigma, true));
        pipe.push(gaussian_blur_1d(h, w, t.blur_size, t.blur_sigma, false));
      }
      break;
    case TransformKind::kCrop: {
      const double area = t.crop_scale * h * w;
      const int cw = std::min(w, static_cast<int>(std::lround(std::sqrt(area * t.crop_aspect))));
      const int ch = std::min(h, static_cast<int>(std::lround(std::sqrt(area / t.crop_aspect))));
      if (cw < 1 || ch < 1) throw InvalidArgument("degenerate crop window");
      Window win;
      win.width = cw;
      win.height = ch;
      win.x = std::min(w - cw, static_cast<int>(t.crop_u * (w - cw + 1)));
      win.y = std::min(h - ch, static_cast<int>(t.crop_v * (h - ch + 1)));
      pipe.push(bilinear_resize(h, w, win, h, w));
      break;
    }
    case TransformKind::kResize: {
      const int rh = std::max(1, static_cast<int>(std::lround(t.resize_scale * h)));
      const int rw = std::max(1, static_cast<int>(std::lround(t.resize_scale * w)));
      if (rh != h || rw != w) {
        pipe.push(bilinear_resize(h, w, Window{0, 0, h, w}, rh, rw));
        pipe.push(bilinear_resize(rh, rw, Window{0, 0, rh, rw}, h, w));
      }
      break;
    }
  }
  if (t.hflip) pipe.push(horizontal_flip(h, w));
  return pipe;
}

Image apply_transform(const Image& img, const TransformSample& t) {
  const auto pipe = transform_pipeline(t, img.height(), img.width());
  if (pipe.empty()) return img;
  return Image::clamped(pipe.apply(img.as_delta()));
}

PixelDelta transform_vjp(const Image& img, const TransformSample& t, const PixelDelta& cotangent) {
  const auto pipe = transform_pipeline(t, img.height(), img.width());
  if (!img.same_shape(cotangent)) throw InvalidArgument("transform_vjp: cotangent shape mismatch");
  return pipe.adjoint(cotangent);
}

}  // namespace latentmark
