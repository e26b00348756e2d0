#include "latentmark/features.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "latentmark/error.hpp"
#include "latentmark/rng.hpp"
#include "latentmark/tensor_file.hpp"

namespace latentmark {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

int conv_out(int n, int kernel, int stride, int padding) {
  const int span = n + 2 * padding - kernel;
  return span < 0 ? 0 : span / stride + 1;
}

// Output spatial size of a layer, 0 when the input is too small.
int layer_out(const LayerSpec& l, int n) {
  switch (l.type) {
    case LayerSpec::Type::kConv: return conv_out(n, l.kernel, l.stride, l.padding);
    case LayerSpec::Type::kAvgPool: return n / l.kernel;
    case LayerSpec::Type::kRelu: return n;
    case LayerSpec::Type::kGlobalAvgPool: return n > 0 ? 1 : 0;
  }
  return 0;
}

RowMatrix im2col(const Activation& in, int kernel, int stride, int padding, int oh, int ow) {
  RowMatrix col(static_cast<Eigen::Index>(in.channels) * kernel * kernel,
                static_cast<Eigen::Index>(oh) * ow);
  for (int c = 0; c < in.channels; ++c) {
    const double* src = in.data.data() + static_cast<std::size_t>(c) * in.height * in.width;
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        double* row = col.data() + ((static_cast<std::size_t>(c) * kernel + ky) * kernel + kx) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride + ky - padding;
          double* dst = row + static_cast<std::size_t>(oy) * ow;
          if (iy < 0 || iy >= in.height) {
            std::fill(dst, dst + ow, 0.0);
            continue;
          }
          const double* line = src + static_cast<std::size_t>(iy) * in.width;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride + kx - padding;
            dst[ox] = (ix >= 0 && ix < in.width) ? line[ix] : 0.0;
          }
        }
      }
    }
  }
  return col;
}

void col2im(const RowMatrix& col, Activation& grad, int kernel, int stride, int padding, int oh, int ow) {
  for (int c = 0; c < grad.channels; ++c) {
    double* dst = grad.data.data() + static_cast<std::size_t>(c) * grad.height * grad.width;
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        const double* row = col.data() + ((static_cast<std::size_t>(c) * kernel + ky) * kernel + kx) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride + ky - padding;
          if (iy < 0 || iy >= grad.height) continue;
          double* line = dst + static_cast<std::size_t>(iy) * grad.width;
          const double* src = row + static_cast<std::size_t>(oy) * ow;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride + kx - padding;
            if (ix >= 0 && ix < grad.width) line[ix] += src[ox];
          }
        }
      }
    }
  }
}

Activation conv_forward(const Activation& in, const LayerSpec& l, const ConvParams& p) {
  const int oh = conv_out(in.height, l.kernel, l.stride, l.padding);
  const int ow = conv_out(in.width, l.kernel, l.stride, l.padding);
  const RowMatrix col = im2col(in, l.kernel, l.stride, l.padding, oh, ow);
  Eigen::Map<const RowMatrix> w(p.weight.data(), p.out_channels,
                                static_cast<Eigen::Index>(p.in_channels) * p.kernel * p.kernel);
  Activation out{p.out_channels, oh, ow, std::vector<double>(static_cast<std::size_t>(p.out_channels) * oh * ow)};
  Eigen::Map<RowMatrix> result(out.data.data(), p.out_channels, static_cast<Eigen::Index>(oh) * ow);
  result.noalias() = w * col;
  for (int o = 0; o < p.out_channels; ++o) result.row(o).array() += p.bias[o];
  return out;
}

Activation conv_backward(const Activation& in, const LayerSpec& l, const ConvParams& p, const Activation& gout) {
  const int oh = gout.height;
  const int ow = gout.width;
  Eigen::Map<const RowMatrix> w(p.weight.data(), p.out_channels,
                                static_cast<Eigen::Index>(p.in_channels) * p.kernel * p.kernel);
  Eigen::Map<const RowMatrix> g(gout.data.data(), p.out_channels, static_cast<Eigen::Index>(oh) * ow);
  const RowMatrix gcol = w.transpose() * g;
  Activation gin{in.channels, in.height, in.width, std::vector<double>(in.data.size(), 0.0)};
  col2im(gcol, gin, l.kernel, l.stride, l.padding, oh, ow);
  return gin;
}

Activation avgpool_forward(const Activation& in, int k) {
  const int oh = in.height / k;
  const int ow = in.width / k;
  Activation out{in.channels, oh, ow, std::vector<double>(static_cast<std::size_t>(in.channels) * oh * ow, 0.0)};
  const double norm = 1.0 / (k * k);
  for (int c = 0; c < in.channels; ++c) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        double s = 0.0;
        for (int dy = 0; dy < k; ++dy) {
          for (int dx = 0; dx < k; ++dx) {
            s += in.data[(static_cast<std::size_t>(c) * in.height + oy * k + dy) * in.width + ox * k + dx];
          }
        }
        out.data[(static_cast<std::size_t>(c) * oh + oy) * ow + ox] = s * norm;
      }
    }
  }
  return out;
}

Activation avgpool_backward(const Activation& in, int k, const Activation& gout) {
  Activation gin{in.channels, in.height, in.width, std::vector<double>(in.data.size(), 0.0)};
  const double norm = 1.0 / (k * k);
  for (int c = 0; c < in.channels; ++c) {
    for (int oy = 0; oy < gout.height; ++oy) {
      for (int ox = 0; ox < gout.width; ++ox) {
        const double g = gout.data[(static_cast<std::size_t>(c) * gout.height + oy) * gout.width + ox] * norm;
        for (int dy = 0; dy < k; ++dy) {
          for (int dx = 0; dx < k; ++dx) {
            gin.data[(static_cast<std::size_t>(c) * in.height + oy * k + dy) * in.width + ox * k + dx] += g;
          }
        }
      }
    }
  }
  return gin;
}

std::vector<double> arch_table(const ExtractorSpec& spec) {
  std::vector<double> t{static_cast<double>(spec.in_channels), 0, 0, 0, 0};
  for (const auto& l : spec.layers) {
    t.insert(t.end(), {static_cast<double>(l.type), static_cast<double>(l.out_channels),
                       static_cast<double>(l.kernel), static_cast<double>(l.stride),
                       static_cast<double>(l.padding)});
  }
  return t;
}

ExtractorSpec spec_from_arch_table(const TensorRecord& t) {
  if (t.dims.size() != 2 || t.dims[1] != 5 || t.dims[0] < 2) throw FormatError("malformed 'arch' tensor");
  ExtractorSpec spec;
  spec.in_channels = static_cast<int>(t.real[0]);
  for (std::uint64_t r = 1; r < t.dims[0]; ++r) {
    const double* row = t.real.data() + r * 5;
    const int type = static_cast<int>(row[0]);
    if (type < 0 || type > 3) throw FormatError("unknown layer type in 'arch'");
    spec.layers.push_back({static_cast<LayerSpec::Type>(type), static_cast<int>(row[1]),
                           static_cast<int>(row[2]), static_cast<int>(row[3]), static_cast<int>(row[4])});
  }
  return spec;
}

}  // namespace

// --- ExtractorSpec ---------------------------------------------------------

ExtractorSpec ExtractorSpec::desk() {
  ExtractorSpec spec;
  for (int width : {16, 32, 64, 128}) {
    spec.layers.push_back(LayerSpec::conv(width, 3, 2, 1));
    spec.layers.push_back(LayerSpec::relu());
  }
  spec.layers.push_back(LayerSpec::global_avg_pool());
  return spec;
}

ExtractorSpec ExtractorSpec::parse(const std::string& text) {
  ExtractorSpec spec;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::vector<std::string> parts;
    std::stringstream is(item);
    std::string p;
    while (std::getline(is, p, ':')) parts.push_back(p);
    if (parts.empty()) continue;
    auto num = [&](std::size_t i) {
      if (i >= parts.size()) throw InvalidArgument("layer '" + item + "' is missing parameters");
      return std::stoi(parts[i]);
    };
    if (parts[0] == "conv") {
      spec.layers.push_back(LayerSpec::conv(num(1), num(2), num(3), num(4)));
    } else if (parts[0] == "relu") {
      spec.layers.push_back(LayerSpec::relu());
    } else if (parts[0] == "avgpool") {
      spec.layers.push_back(LayerSpec::avg_pool(num(1)));
    } else if (parts[0] == "gap") {
      spec.layers.push_back(LayerSpec::global_avg_pool());
    } else {
      throw InvalidArgument("unknown layer '" + parts[0] + "'");
    }
  }
  spec.validate();
  return spec;
}

std::string ExtractorSpec::to_string() const {
  std::string out;
  for (const auto& l : layers) {
    if (!out.empty()) out += ',';
    switch (l.type) {
      case LayerSpec::Type::kConv:
        out += "conv:" + std::to_string(l.out_channels) + ":" + std::to_string(l.kernel) + ":" +
               std::to_string(l.stride) + ":" + std::to_string(l.padding);
        break;
      case LayerSpec::Type::kRelu: out += "relu"; break;
      case LayerSpec::Type::kAvgPool: out += "avgpool:" + std::to_string(l.kernel); break;
      case LayerSpec::Type::kGlobalAvgPool: out += "gap"; break;
    }
  }
  return out;
}

void ExtractorSpec::validate() const {
  if (layers.empty()) throw InvalidArgument("extractor spec has no layers");
  if (in_channels < 1) throw InvalidArgument("extractor spec needs at least one input channel");
  if (layers.back().type != LayerSpec::Type::kGlobalAvgPool) {
    throw InvalidArgument("extractor spec must end with global average pooling");
  }
  for (std::size_t i = 0; i + 1 < layers.size(); ++i) {
    const auto& l = layers[i];
    switch (l.type) {
      case LayerSpec::Type::kConv:
        if (l.out_channels < 1 || l.kernel < 1 || l.stride < 1 || l.padding < 0) {
          throw InvalidArgument("invalid conv layer parameters");
        }
        break;
      case LayerSpec::Type::kAvgPool:
        if (l.kernel < 1) throw InvalidArgument("invalid average-pool size");
        break;
      case LayerSpec::Type::kGlobalAvgPool:
        throw InvalidArgument("global average pooling must be the final layer");
      case LayerSpec::Type::kRelu:
        break;
    }
  }
}

int ExtractorSpec::output_dim() const {
  int c = in_channels;
  for (const auto& l : layers) {
    if (l.type == LayerSpec::Type::kConv) c = l.out_channels;
  }
  return c;
}

int ExtractorSpec::min_input_size() const {
  for (int n = 1; n < 1 << 16; ++n) {
    int m = n;
    for (const auto& l : layers) m = layer_out(l, m);
    if (m > 0) return n;
  }
  throw InvalidArgument("extractor spec accepts no input size");
}

// --- Extractor -------------------------------------------------------------

Extractor::Extractor(ExtractorSpec spec, std::vector<ConvParams> params)
    : spec_(std::move(spec)), params_(std::move(params)) {
  spec_.validate();
  int c = spec_.in_channels;
  std::size_t pi = 0;
  for (const auto& l : spec_.layers) {
    if (l.type != LayerSpec::Type::kConv) continue;
    if (pi >= params_.size()) throw InvalidArgument("missing conv parameters");
    const auto& p = params_[pi++];
    if (p.out_channels != l.out_channels || p.in_channels != c || p.kernel != l.kernel ||
        p.weight.size() != static_cast<std::size_t>(p.out_channels) * c * l.kernel * l.kernel ||
        p.bias.size() != static_cast<std::size_t>(p.out_channels)) {
      throw InvalidArgument("conv parameters do not match the layer description");
    }
    c = l.out_channels;
  }
  if (pi != params_.size()) throw InvalidArgument("too many conv parameter sets");
}

RawFeature Extractor::forward(const Image& img) const {
  Tape tape;
  return forward(img, tape);
}

RawFeature Extractor::forward(const Image& img, Tape& tape) const {
  if (spec_.in_channels != kChannels) throw InvalidArgument("extractor expects " + std::to_string(spec_.in_channels) + " channels");
  const int min_size = spec_.min_input_size();
  if (img.height() < min_size || img.width() < min_size) {
    throw InvalidArgument("image smaller than the extractor's minimum input size " + std::to_string(min_size));
  }
  tape.inputs.clear();
  Activation x{kChannels, img.height(), img.width(), std::vector<double>(img.data().begin(), img.data().end())};
  std::size_t pi = 0;
  for (const auto& l : spec_.layers) {
    tape.inputs.push_back(x);
    switch (l.type) {
      case LayerSpec::Type::kConv:
        x = conv_forward(x, l, params_[pi++]);
        break;
      case LayerSpec::Type::kRelu:
        for (auto& v : x.data) v = v > 0.0 ? v : 0.0;
        break;
      case LayerSpec::Type::kAvgPool:
        x = avgpool_forward(x, l.kernel);
        break;
      case LayerSpec::Type::kGlobalAvgPool: {
        Activation pooled{x.channels, 1, 1, std::vector<double>(x.channels)};
        const std::size_t plane = static_cast<std::size_t>(x.height) * x.width;
        for (int c = 0; c < x.channels; ++c) {
          double s = 0.0;
          for (std::size_t i = 0; i < plane; ++i) s += x.data[c * plane + i];
          pooled.data[c] = s / static_cast<double>(plane);
        }
        x = std::move(pooled);
        break;
      }
    }
  }
  tape.output = x;
  return x.data;
}

PixelDelta Extractor::backward(const Tape& tape, std::span<const double> cotangent) const {
  if (cotangent.size() != tape.output.data.size()) throw InvalidArgument("cotangent size mismatch");
  Activation g{tape.output.channels, 1, 1, std::vector<double>(cotangent.begin(), cotangent.end())};
  std::size_t pi = params_.size();
  for (std::size_t li = spec_.layers.size(); li-- > 0;) {
    const auto& l = spec_.layers[li];
    const Activation& in = tape.inputs[li];
    switch (l.type) {
      case LayerSpec::Type::kConv:
        g = conv_backward(in, l, params_[--pi], g);
        break;
      case LayerSpec::Type::kRelu:
        for (std::size_t i = 0; i < g.data.size(); ++i) {
          if (!(in.data[i] > 0.0)) g.data[i] = 0.0;
        }
        break;
      case LayerSpec::Type::kAvgPool:
        g = avgpool_backward(in, l.kernel, g);
        break;
      case LayerSpec::Type::kGlobalAvgPool: {
        Activation spread{in.channels, in.height, in.width, std::vector<double>(in.data.size())};
        const std::size_t plane = static_cast<std::size_t>(in.height) * in.width;
        for (int c = 0; c < in.channels; ++c) {
          const double v = g.data[c] / static_cast<double>(plane);
          std::fill(spread.data.begin() + c * plane, spread.data.begin() + (c + 1) * plane, v);
        }
        g = std::move(spread);
        break;
      }
    }
  }
  return PixelDelta(g.height, g.width, std::move(g.data));
}

PixelDelta Extractor::input_gradient(const Image& img, std::span<const double> cotangent) const {
  Tape tape;
  forward(img, tape);
  return backward(tape, cotangent);
}

Extractor build_extractor(const ExtractorSpec& spec, std::uint64_t seed) {
  spec.validate();
  CounterRng rng(seed, 0x6578747261637472ULL);
  std::vector<ConvParams> params;
  int c = spec.in_channels;
  for (const auto& l : spec.layers) {
    if (l.type != LayerSpec::Type::kConv) continue;
    ConvParams p;
    p.out_channels = l.out_channels;
    p.in_channels = c;
    p.kernel = l.kernel;
    const int fan_in = c * l.kernel * l.kernel;
    const double stddev = std::sqrt(2.0 / fan_in);
    p.weight.resize(static_cast<std::size_t>(l.out_channels) * fan_in);
    for (auto& w : p.weight) w = static_cast<float>(stddev * rng.normal());
    p.bias.resize(l.out_channels);
    for (auto& b : p.bias) b = static_cast<float>(0.05 * rng.normal());
    params.push_back(std::move(p));
    c = l.out_channels;
  }
  return Extractor(spec, std::move(params));
}

void save_extractor(const Extractor& extractor, const std::filesystem::path& path) {
  std::vector<TensorRecord> tensors;
  const auto table = arch_table(extractor.spec());
  tensors.push_back(TensorRecord::f32("arch", {table.size() / 5, 5}, table));
  for (std::size_t i = 0; i < extractor.params().size(); ++i) {
    const auto& p = extractor.params()[i];
    const std::string prefix = "conv" + std::to_string(i);
    tensors.push_back(TensorRecord::f32(prefix + ".weight",
                                        {static_cast<std::uint64_t>(p.out_channels),
                                         static_cast<std::uint64_t>(p.in_channels),
                                         static_cast<std::uint64_t>(p.kernel),
                                         static_cast<std::uint64_t>(p.kernel)},
                                        p.weight));
    tensors.push_back(TensorRecord::f32(prefix + ".bias", {static_cast<std::uint64_t>(p.out_channels)}, p.bias));
  }
  write_tensor_file(path, tensors);
}

Extractor load_extractor(const std::filesystem::path& path) {
  const auto tensors = read_tensor_file(path);
  ExtractorSpec spec = spec_from_arch_table(find_tensor(tensors, "arch"));
  try {
    spec.validate();
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("weights file architecture invalid: ") + e.what());
  }
  std::vector<ConvParams> params;
  int c = spec.in_channels;
  int index = 0;
  for (const auto& l : spec.layers) {
    if (l.type != LayerSpec::Type::kConv) continue;
    const std::string prefix = "conv" + std::to_string(index++);
    const auto& w = find_tensor(tensors, prefix + ".weight");
    const auto& b = find_tensor(tensors, prefix + ".bias");
    const std::vector<std::uint64_t> wdims{static_cast<std::uint64_t>(l.out_channels),
                                           static_cast<std::uint64_t>(c),
                                           static_cast<std::uint64_t>(l.kernel),
                                           static_cast<std::uint64_t>(l.kernel)};
    if (w.dims != wdims || b.dims != std::vector<std::uint64_t>{static_cast<std::uint64_t>(l.out_channels)} ||
        w.real.empty() || b.real.empty()) {
      throw FormatError("tensor shapes in '" + path.string() + "' do not match the architecture");
    }
    params.push_back({l.out_channels, c, l.kernel, w.real, b.real});
    c = l.out_channels;
  }
  return Extractor(spec, std::move(params));
}

// --- FeatureModel ----------------------------------------------------------

FeatureModel::FeatureModel(Extractor extractor, WhiteningTransform whitening)
    : extractor_(std::move(extractor)), whitening_(std::move(whitening)) {
  if (whitening_.raw_dim() != extractor_.output_dim()) {
    throw InvalidArgument("whitening input dimension " + std::to_string(whitening_.raw_dim()) +
                          " does not match extractor output " + std::to_string(extractor_.output_dim()));
  }
}

FeatureVector FeatureModel::extract(const Image& img) const {
  return whitening_.apply(extractor_.forward(img));
}

PixelDelta FeatureModel::extract_gradient(const Image& img, std::span<const double> cotangent) const {
  if (cotangent.size() != static_cast<std::size_t>(dim())) throw InvalidArgument("cotangent dimension mismatch");
  return extractor_.input_gradient(img, whitening_.transpose_apply(cotangent));
}

}  // namespace latentmark
