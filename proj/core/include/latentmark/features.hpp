#pragma once

// Differentiable feature extractor: a small convolutional backbone with
// global average pooling, followed by a PCA-whitening layer.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "latentmark/image.hpp"

namespace latentmark {

using RawFeature = std::vector<double>;
using FeatureVector = std::vector<double>;

struct LayerSpec {
  enum class Type { kConv = 0, kRelu = 1, kAvgPool = 2, kGlobalAvgPool = 3 };
  Type type = Type::kRelu;
  int out_channels = 0;  // conv only
  int kernel = 0;        // conv / avgpool
  int stride = 1;        // conv
  int padding = 0;       // conv

  static LayerSpec conv(int out, int kernel, int stride, int padding) {
    return {Type::kConv, out, kernel, stride, padding};
  }
  static LayerSpec relu() { return {Type::kRelu, 0, 0, 1, 0}; }
  static LayerSpec avg_pool(int k) { return {Type::kAvgPool, 0, k, k, 0}; }
  static LayerSpec global_avg_pool() { return {Type::kGlobalAvgPool, 0, 0, 1, 0}; }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct ExtractorSpec {
  int in_channels = kChannels;
  std::vector<LayerSpec> layers;

  /// Four 3x3 stride-2 conv + ReLU blocks (16/32/64/128) and global average pooling.
  static ExtractorSpec desk();
  /// Parses "conv:16:3:2:1,relu,avgpool:2,gap" style descriptions.
  static ExtractorSpec parse(const std::string& text);
  std::string to_string() const;

  /// Throws InvalidArgument unless the chain is non-empty and ends in global average pooling.
  void validate() const;
  int output_dim() const;
  /// Smallest square input for which every layer still has a non-empty output.
  int min_input_size() const;

  friend bool operator==(const ExtractorSpec&, const ExtractorSpec&) = default;
};

struct ConvParams {
  int out_channels = 0;
  int in_channels = 0;
  int kernel = 0;
  std::vector<double> weight;  // [out][in][ky][kx]
  std::vector<double> bias;    // [out]
};

/// Channel-major activation tensor.
struct Activation {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> data;
};

/// Intermediate activations recorded by a forward pass for reverse mode.
struct Tape {
  std::vector<Activation> inputs;  // input of each layer
  Activation output;
};

class Extractor {
 public:
  Extractor(ExtractorSpec spec, std::vector<ConvParams> params);

  const ExtractorSpec& spec() const { return spec_; }
  const std::vector<ConvParams>& params() const { return params_; }
  int output_dim() const { return spec_.output_dim(); }

  /// Raw feature of an image. Throws InvalidArgument for undersized input.
  RawFeature forward(const Image& img) const;
  RawFeature forward(const Image& img, Tape& tape) const;
  /// Gradient of <forward(img), cotangent> with respect to the pixels.
  PixelDelta input_gradient(const Image& img, std::span<const double> cotangent) const;
  PixelDelta backward(const Tape& tape, std::span<const double> cotangent) const;

 private:
  ExtractorSpec spec_;
  std::vector<ConvParams> params_;  // one per conv layer, in order
};

/// Deterministic He-initialized weights; values are rounded to f32 so that
/// the weights file round-trips exactly.
Extractor build_extractor(const ExtractorSpec& spec, std::uint64_t seed);
void save_extractor(const Extractor& extractor, const std::filesystem::path& path);
Extractor load_extractor(const std::filesystem::path& path);

class WhiteningTransform {
 public:
  WhiteningTransform() = default;
  /// matrix is row-major, dim x mean.size().
  WhiteningTransform(std::vector<double> mean, std::vector<double> matrix, int dim);

  int dim() const { return dim_; }
  int raw_dim() const { return static_cast<int>(mean_.size()); }
  const std::vector<double>& mean() const { return mean_; }
  const std::vector<double>& matrix() const { return matrix_; }

  /// W (raw - mean).
  FeatureVector apply(std::span<const double> raw) const;
  /// W^T g.
  RawFeature transpose_apply(std::span<const double> g) const;

 private:
  std::vector<double> mean_;
  std::vector<double> matrix_;
  int dim_ = 0;
};

/// PCA-whitening from raw samples: mean, covariance (1/n normalization),
/// top-`dim` eigenpairs with eigenvalues floored at eps, W = diag(lambda)^-1/2 U^T.
/// Throws InvalidArgument with "insufficient samples" when samples.size() <= dim,
/// and on a rank-deficient covariance when eps == 0.
WhiteningTransform fit_whitening(const std::vector<RawFeature>& samples, int dim, double eps = 1e-6);
void save_whitening(const WhiteningTransform& w, const std::filesystem::path& path);
WhiteningTransform load_whitening(const std::filesystem::path& path);

/// Backbone followed by whitening: the marking space.
class FeatureModel {
 public:
  FeatureModel(Extractor extractor, WhiteningTransform whitening);

  const Extractor& extractor() const { return extractor_; }
  const WhiteningTransform& whitening() const { return whitening_; }
  int dim() const { return whitening_.dim(); }

  FeatureVector extract(const Image& img) const;
  /// Gradient of <extract(img), cotangent> with respect to the pixels.
  PixelDelta extract_gradient(const Image& img, std::span<const double> cotangent) const;

 private:
  Extractor extractor_;
  WhiteningTransform whitening_;
};

}  // namespace latentmark
