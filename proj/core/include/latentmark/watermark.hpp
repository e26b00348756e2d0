#pragma once

// Embedding, detection and decoding in the whitened feature space.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "latentmark/augment.hpp"
#include "latentmark/features.hpp"
#include "latentmark/image.hpp"
#include "latentmark/keys.hpp"

namespace latentmark {

struct EmbedConfig {
  double target_psnr = 40.0;
  std::optional<double> target_fpr;   // zero-bit
  std::optional<Message> message;     // multi-bit
  double lambda = 1.0;
  double margin = 5.0;
  int iterations = 100;
  double learning_rate = 0.01;
  int augmentations_per_iter = 1;
  AugmentationPolicy augmentation;
  std::uint64_t seed = 0;

  static constexpr double kZeroBitLambda = 1.0;
  static constexpr double kMultiBitLambda = 5e4;

  static EmbedConfig zero_bit(double fpr = 1e-6);
  static EmbedConfig multi_bit(Message message);

  /// Throws InvalidArgument on violated invariants.
  void validate() const;
};

struct EmbedReport {
  std::string mode;                 // "zero" or "multi"
  double final_psnr = 0.0;
  bool in_region = false;           // detection fires / message decodes after rounding
  double score = 0.0;               // zero-bit robustness estimate
  double p_value = 1.0;             // zero-bit
  double theta = 0.0;               // zero-bit
  std::vector<double> margins;      // multi-bit: (x^T a_i) m_i
  Message decoded;                  // multi-bit
  std::vector<double> loss_trace;   // total loss per iteration
  int rounding_retries = 0;         // PSNR re-projections needed after u8 rounding
};

/// Serializes a report (and the resolved config) as a JSON document.
std::string report_to_json(const EmbedReport& report, const EmbedConfig& config);

struct DetectResult {
  bool detected = false;
  double score = 0.0;
  double p_value = 1.0;
};

// --- Feature-space functionals ---------------------------------------------

/// (x^T a)^2 - |x|^2 cos^2 theta; positive exactly inside the dual hypercone.
double robustness_score(std::span<const double> x, std::span<const double> carrier, double theta);
/// -robustness_score. Fills `grad` (same size as x) when non-empty.
double zero_bit_loss(std::span<const double> x, const ZeroBitKey& key, double theta,
                     std::span<double> grad = {});
/// (1/k) sum_i max(0, mu - (x^T a_i) m_i). Fills `grad` when non-empty.
double multi_bit_loss(std::span<const double> x, const MultiBitKey& key, const Message& m, double mu,
                      std::span<double> grad = {});

DetectResult detect_feature(std::span<const double> x, const ZeroBitKey& key, double theta);
/// Signs of the projections; sign(0) = +1.
Message decode_feature(std::span<const double> x, const MultiBitKey& key);

// --- Image-space -----------------------------------------------------------

struct LossAndGradient {
  double loss = 0.0;
  PixelDelta gradient;
};

/// lambda * L_w(extract(Tr(img, t))) + mse(img, orig). Uses cfg.target_fpr and
/// cfg.lambda for zero-bit keys, cfg.message, cfg.margin and cfg.lambda for multi-bit keys.
double total_loss(const FeatureModel& model, const Image& img, const Image& orig, const TransformSample& t,
                  const EmbedConfig& cfg, const Key& key);
LossAndGradient total_loss_gradient(const FeatureModel& model, const Image& img, const Image& orig,
                                    const TransformSample& t, const EmbedConfig& cfg, const Key& key);

struct EmbedResult {
  Image image;
  EmbedReport report;
};

/// Projected Adam descent on the pixels followed by u8 rounding.
/// Deterministic for fixed (orig, key, cfg, model).
EmbedResult embed(const FeatureModel& model, const Image& orig, const Key& key, const EmbedConfig& cfg);

DetectResult detect(const FeatureModel& model, const Image& img, const ZeroBitKey& key, double theta);
Message decode(const FeatureModel& model, const Image& img, const MultiBitKey& key);

}  // namespace latentmark
