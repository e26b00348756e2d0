#include "latentmark/watermark.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "latentmark/error.hpp"
#include "latentmark/perceptual.hpp"
#include "latentmark/rng.hpp"
#include "latentmark/stats.hpp"

namespace latentmark {
namespace {

constexpr std::uint64_t kAugmentStream = 0x61756720;
constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;
constexpr int kMaxRoundingRetries = 32;
// Per-channel std of the usual ImageNet input normalization.
constexpr double kChannelStd[kChannels] = {0.229, 0.224, 0.225};

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void check_dims(std::size_t x, int key_dim) {
  if (x != static_cast<std::size_t>(key_dim)) {
    throw InvalidArgument("feature dimension " + std::to_string(x) + " does not match key dimension " +
                          std::to_string(key_dim));
  }
}

double key_theta(const EmbedConfig& cfg, int d) {
  if (!cfg.target_fpr) throw InvalidArgument("zero-bit key requires a target FPR");
  return angle_of_fpr(*cfg.target_fpr, d);
}

// Watermark functional and its gradient at feature x.
double watermark_loss(std::span<const double> x, const Key& key, const EmbedConfig& cfg, double theta,
                      std::span<double> grad) {
  if (const auto* z = std::get_if<ZeroBitKey>(&key)) return zero_bit_loss(x, *z, theta, grad);
  const auto& m = std::get<MultiBitKey>(key);
  if (!cfg.message) throw InvalidArgument("multi-bit key requires a message");
  return multi_bit_loss(x, m, *cfg.message, cfg.margin, grad);
}

int key_dim(const Key& key) {
  return std::visit([](const auto& k) { return k.dim(); }, key);
}

double theta_for(const Key& key, const EmbedConfig& cfg) {
  return std::holds_alternative<ZeroBitKey>(key) ? key_theta(cfg, key_dim(key)) : 0.0;
}

LossAndGradient loss_and_gradient(const FeatureModel& model, const Image& img, const Image& orig,
                                  const TransformSample& t, const EmbedConfig& cfg, const Key& key,
                                  double theta, bool want_gradient) {
  if (!img.same_shape(orig)) throw InvalidArgument("image and original differ in shape");
  check_dims(static_cast<std::size_t>(model.dim()), key_dim(key));

  const Image transformed = apply_transform(img, t);
  Tape tape;
  const RawFeature raw = model.extractor().forward(transformed, tape);
  const FeatureVector x = model.whitening().apply(raw);
  std::vector<double> gx(want_gradient ? x.size() : 0);
  const double lw = watermark_loss(x, key, cfg, theta, gx);
  const PixelDelta diff = difference(img, orig);
  LossAndGradient out{cfg.lambda * lw + mse(diff), {}};
  if (!want_gradient) return out;

  for (auto& g : gx) g *= cfg.lambda;
  const PixelDelta g_transformed = model.extractor().backward(tape, model.whitening().transpose_apply(gx));
  out.gradient = transform_vjp(img, t, g_transformed);
  const double mse_scale = 2.0 * 255.0 * 255.0 / static_cast<double>(diff.size());
  for (std::size_t i = 0; i < diff.size(); ++i) out.gradient.data[i] += mse_scale * diff.data[i];
  return out;
}

class Adam {
 public:
  // `scale[i]` converts a unit of the optimized variable into pixel units;
  // `grad` is taken with respect to pixels.
  Adam(std::vector<double> scale, double lr)
      : m_(scale.size(), 0.0), v_(scale.size(), 0.0), scale_(std::move(scale)), lr_(lr) {}

  void step(std::vector<double>& params, const std::vector<double>& grad) {
    ++t_;
    const double c1 = 1.0 - std::pow(kAdamBeta1, t_);
    const double c2 = 1.0 - std::pow(kAdamBeta2, t_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double g = grad[i] * scale_[i];
      m_[i] = kAdamBeta1 * m_[i] + (1.0 - kAdamBeta1) * g;
      v_[i] = kAdamBeta2 * v_[i] + (1.0 - kAdamBeta2) * g * g;
      const double mhat = m_[i] / c1;
      const double vhat = v_[i] / c2;
      params[i] -= scale_[i] * lr_ * mhat / (std::sqrt(vhat) + kAdamEps);
    }
  }

 private:
  std::vector<double> m_, v_, scale_;
  double lr_;
  int t_ = 0;
};

// Rounds to u8 and, if rounding pushed PSNR under the target, shrinks the
// delta and retries until the rounded image satisfies it.
Image quantize_within_budget(const Image& orig, const PixelDelta& delta, double target_psnr, int& retries) {
  PixelDelta d = delta;
  Image out = quantize(apply_delta(orig, d));
  double p = psnr(out, orig);
  retries = 0;
  while (p < target_psnr && retries < kMaxRoundingRetries) {
    ++retries;
    const double shortfall = target_psnr - p;
    d *= std::pow(10.0, -(shortfall + 1e-3 * retries) / 20.0);
    out = quantize(apply_delta(orig, d));
    p = psnr(out, orig);
  }
  return out;
}

}  // namespace

EmbedConfig EmbedConfig::zero_bit(double fpr) {
  EmbedConfig cfg;
  cfg.target_fpr = fpr;
  cfg.lambda = kZeroBitLambda;
  return cfg;
}

EmbedConfig EmbedConfig::multi_bit(Message message) {
  EmbedConfig cfg;
  cfg.message = std::move(message);
  cfg.lambda = kMultiBitLambda;
  return cfg;
}

void EmbedConfig::validate() const {
  if (iterations < 1) throw InvalidArgument("iterations must be at least 1");
  if (!(target_psnr > 0.0) || !std::isfinite(target_psnr)) throw InvalidArgument("target PSNR must be positive");
  if (target_fpr.has_value() == message.has_value()) {
    throw InvalidArgument("exactly one of target FPR (zero-bit) or message (multi-bit) must be set");
  }
  if (target_fpr && !(*target_fpr > 0.0 && *target_fpr < 1.0)) throw InvalidArgument("target FPR must be in (0, 1)");
  if (message && message->bits.empty()) throw InvalidArgument("message is empty");
  if (!(lambda >= 0.0)) throw InvalidArgument("lambda must be non-negative");
  if (!(margin >= 0.0)) throw InvalidArgument("margin must be non-negative");
  if (!(learning_rate > 0.0)) throw InvalidArgument("learning rate must be positive");
  if (augmentations_per_iter < 1) throw InvalidArgument("augmentations per iteration must be at least 1");
  if (augmentation.kinds.empty()) throw InvalidArgument("augmentation policy has no kinds");
}

double robustness_score(std::span<const double> x, std::span<const double> carrier, double theta) {
  if (x.size() != carrier.size()) throw InvalidArgument("robustness_score: dimension mismatch");
  const double proj = dot(x, carrier);
  const double c = std::cos(theta);
  return proj * proj - dot(x, x) * c * c;
}

double zero_bit_loss(std::span<const double> x, const ZeroBitKey& key, double theta, std::span<double> grad) {
  check_dims(x.size(), key.dim());
  const double proj = dot(x, key.carrier);
  const double c2 = std::cos(theta) * std::cos(theta);
  if (!grad.empty()) {
    for (std::size_t i = 0; i < x.size(); ++i) grad[i] = -(2.0 * proj * key.carrier[i] - 2.0 * c2 * x[i]);
  }
  return -(proj * proj - dot(x, x) * c2);
}

double multi_bit_loss(std::span<const double> x, const MultiBitKey& key, const Message& m, double mu,
                      std::span<double> grad) {
  check_dims(x.size(), key.dim());
  if (m.size() != key.k) {
    throw InvalidArgument("message length " + std::to_string(m.size()) + " does not match key k=" +
                          std::to_string(key.k));
  }
  if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0);
  double total = 0.0;
  const double inv_k = 1.0 / key.k;
  for (int i = 0; i < key.k; ++i) {
    const auto a = key.carrier(i);
    const double hinge = mu - dot(x, a) * m.bits[i];
    if (hinge > 0.0) {
      total += hinge;
      if (!grad.empty()) {
        for (std::size_t j = 0; j < x.size(); ++j) grad[j] -= inv_k * m.bits[i] * a[j];
      }
    }
  }
  return total * inv_k;
}

DetectResult detect_feature(std::span<const double> x, const ZeroBitKey& key, double theta) {
  check_dims(x.size(), key.dim());
  DetectResult r;
  r.score = robustness_score(x, key.carrier, theta);
  r.detected = r.score > 0.0;
  r.p_value = dot(x, x) > 0.0 ? p_value(x, key.carrier) : 1.0;
  return r;
}

Message decode_feature(std::span<const double> x, const MultiBitKey& key) {
  check_dims(x.size(), key.dim());
  Message m;
  m.bits.reserve(key.k);
  for (int i = 0; i < key.k; ++i) m.bits.push_back(dot(x, key.carrier(i)) >= 0.0 ? 1 : -1);
  return m;
}

double total_loss(const FeatureModel& model, const Image& img, const Image& orig, const TransformSample& t,
                  const EmbedConfig& cfg, const Key& key) {
  return loss_and_gradient(model, img, orig, t, cfg, key, theta_for(key, cfg), false).loss;
}

LossAndGradient total_loss_gradient(const FeatureModel& model, const Image& img, const Image& orig,
                                    const TransformSample& t, const EmbedConfig& cfg, const Key& key) {
  return loss_and_gradient(model, img, orig, t, cfg, key, theta_for(key, cfg), true);
}

EmbedResult embed(const FeatureModel& model, const Image& orig, const Key& key, const EmbedConfig& cfg) {
  cfg.validate();
  const bool zero_bit = std::holds_alternative<ZeroBitKey>(key);
  if (zero_bit != cfg.target_fpr.has_value()) {
    throw InvalidArgument(zero_bit ? "zero-bit key needs a target FPR" : "multi-bit key needs a message");
  }
  check_dims(static_cast<std::size_t>(model.dim()), key_dim(key));
  const SsimParams ssim;
  const int min_size = std::max(ssim.window, model.extractor().spec().min_input_size());
  if (orig.height() < min_size || orig.width() < min_size) {
    throw InvalidArgument("image must be at least " + std::to_string(min_size) + "x" + std::to_string(min_size));
  }
  const double theta = theta_for(key, cfg);

  CounterRng rng(cfg.seed, kAugmentStream);
  EmbedReport report;
  report.mode = zero_bit ? "zero" : "multi";
  report.theta = theta;

  std::vector<double> params(orig.data().begin(), orig.data().end());
  // The variable is optimized in channel-normalized units (v - mean) / std, as
  // backbones usually expect; Adam is invariant to the gradient's scale, so this
  // amounts to a per-channel step of lr * std in pixel units.
  std::vector<double> step_scale(params.size());
  for (int c = 0; c < kChannels; ++c) {
    std::fill_n(step_scale.begin() + c * orig.plane_size(), orig.plane_size(), kChannelStd[c]);
  }
  Adam adam(std::move(step_scale), cfg.learning_rate);
  const auto base = orig.data();
  auto constrained = [&](const std::vector<double>& p) {
    PixelDelta delta(orig.height(), orig.width());
    for (std::size_t i = 0; i < p.size(); ++i) delta.data[i] = p[i] - base[i];
    return apply_constraints(delta, orig, cfg.target_psnr, ssim);
  };

  for (int it = 0; it < cfg.iterations; ++it) {
    const Image current = apply_delta(orig, constrained(params));
    params.assign(current.data().begin(), current.data().end());

    std::vector<double> grad(params.size(), 0.0);
    double loss = 0.0;
    for (int s = 0; s < cfg.augmentations_per_iter; ++s) {
      const TransformSample t = sample_transform(rng, cfg.augmentation);
      auto lg = loss_and_gradient(model, current, orig, t, cfg, key, theta, true);
      loss += lg.loss;
      for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += lg.gradient.data[i];
    }
    const double inv = 1.0 / cfg.augmentations_per_iter;
    for (auto& g : grad) g *= inv;
    report.loss_trace.push_back(loss * inv);
    adam.step(params, grad);
  }

  // The optimizer's last step is not yet admissible; project once more before rounding.
  const PixelDelta final_delta = constrained(params);
  Image marked = quantize_within_budget(orig, final_delta, cfg.target_psnr, report.rounding_retries);
  report.final_psnr = psnr(marked, orig);

  const FeatureVector x = model.extract(marked);
  if (zero_bit) {
    const auto r = detect_feature(x, std::get<ZeroBitKey>(key), theta);
    report.score = r.score;
    report.p_value = r.p_value;
    report.in_region = r.detected;
  } else {
    const auto& mk = std::get<MultiBitKey>(key);
    report.decoded = decode_feature(x, mk);
    for (int i = 0; i < mk.k; ++i) report.margins.push_back(dot(x, mk.carrier(i)) * cfg.message->bits[i]);
    report.in_region = report.decoded == *cfg.message;
  }
  return {std::move(marked), std::move(report)};
}

DetectResult detect(const FeatureModel& model, const Image& img, const ZeroBitKey& key, double theta) {
  return detect_feature(model.extract(img), key, theta);
}

Message decode(const FeatureModel& model, const Image& img, const MultiBitKey& key) {
  return decode_feature(model.extract(img), key);
}

std::string report_to_json(const EmbedReport& report, const EmbedConfig& config) {
  using nlohmann::json;
  auto finite_or_null = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  json j;
  j["mode"] = report.mode;
  j["final_psnr"] = finite_or_null(report.final_psnr);
  j["in_region"] = report.in_region;
  j["rounding_retries"] = report.rounding_retries;
  if (report.mode == "zero") {
    j["score"] = report.score;
    j["p_value"] = report.p_value;
    j["theta"] = report.theta;
  } else {
    j["margins"] = report.margins;
    j["decoded"] = report.decoded.to_bit_string();
  }
  j["loss_trace"] = report.loss_trace;
  json c;
  c["target_psnr"] = config.target_psnr;
  if (config.target_fpr) c["target_fpr"] = *config.target_fpr;
  if (config.message) c["message"] = config.message->to_bit_string();
  c["lambda"] = config.lambda;
  c["margin"] = config.margin;
  c["iterations"] = config.iterations;
  c["learning_rate"] = config.learning_rate;
  c["augmentations_per_iter"] = config.augmentations_per_iter;
  c["augmentation"] = config.augmentation.to_string();
  c["seed"] = config.seed;
  j["config"] = c;
  return j.dump(2);
}

}  // namespace latentmark
