#include <gtest/gtest.h>

#include <cmath>

#include "latentmark/error.hpp"
#include "latentmark/features.hpp"
#include "test_support.hpp"

using namespace latentmark;

namespace {

// Straightforward nested-loop forward pass, independent of the im2col path.
std::vector<double> reference_forward(const Extractor& ex, const Image& img) {
  int ch = 3, h = img.height(), w = img.width();
  std::vector<double> x(img.data().begin(), img.data().end());
  std::size_t pi = 0;
  for (const auto& l : ex.spec().layers) {
    switch (l.type) {
      case LayerSpec::Type::kConv: {
        const auto& p = ex.params()[pi++];
        const int oh = (h + 2 * l.padding - l.kernel) / l.stride + 1;
        const int ow = (w + 2 * l.padding - l.kernel) / l.stride + 1;
        std::vector<double> y(static_cast<std::size_t>(l.out_channels) * oh * ow);
        for (int o = 0; o < l.out_channels; ++o)
          for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
              double s = p.bias[o];
              for (int c = 0; c < ch; ++c)
                for (int ky = 0; ky < l.kernel; ++ky)
                  for (int kx = 0; kx < l.kernel; ++kx) {
                    const int iy = oy * l.stride + ky - l.padding, ix = ox * l.stride + kx - l.padding;
                    if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                    s += p.weight[((o * ch + c) * l.kernel + ky) * l.kernel + kx] * x[(c * h + iy) * w + ix];
                  }
              y[(o * oh + oy) * ow + ox] = s;
            }
        x = std::move(y);
        ch = l.out_channels;
        h = oh;
        w = ow;
        break;
      }
      case LayerSpec::Type::kRelu:
        for (auto& v : x) v = std::max(v, 0.0);
        break;
      case LayerSpec::Type::kAvgPool: {
        const int oh = h / l.kernel, ow = w / l.kernel;
        std::vector<double> y(static_cast<std::size_t>(ch) * oh * ow, 0.0);
        for (int c = 0; c < ch; ++c)
          for (int y0 = 0; y0 < oh * l.kernel; ++y0)
            for (int x0 = 0; x0 < ow * l.kernel; ++x0)
              y[(c * oh + y0 / l.kernel) * ow + x0 / l.kernel] += x[(c * h + y0) * w + x0] / (l.kernel * l.kernel);
        x = std::move(y);
        h = oh;
        w = ow;
        break;
      }
      case LayerSpec::Type::kGlobalAvgPool: {
        std::vector<double> y(ch, 0.0);
        for (int c = 0; c < ch; ++c)
          for (int i = 0; i < h * w; ++i) y[c] += x[c * h * w + i] / (h * w);
        x = std::move(y);
        h = w = 1;
        break;
      }
    }
  }
  return x;
}

double inner(const std::vector<double>& a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

TEST(ExtractorSpec, DeskShapeAndParsing) {
  const auto desk = ExtractorSpec::desk();
  EXPECT_EQ(desk.output_dim(), 128);
  EXPECT_EQ(desk.min_input_size(), 1);  // padded stride-2 convs never vanish
  EXPECT_EQ(ExtractorSpec::parse("conv:4:5:1:0,avgpool:2,gap").min_input_size(), 6);
  EXPECT_EQ(ExtractorSpec::parse(desk.to_string()), desk);
  EXPECT_EQ(ExtractorSpec::parse("conv:4:3:1:0,relu,avgpool:2,conv:6:3:1:1,gap").output_dim(), 6);
  EXPECT_THROW(ExtractorSpec::parse(""), InvalidArgument);
  EXPECT_THROW(ExtractorSpec::parse("conv:4:3:1:0,relu"), InvalidArgument);
  EXPECT_THROW(ExtractorSpec::parse("gap,conv:4:3:1:0,gap"), InvalidArgument);
  EXPECT_THROW(ExtractorSpec::parse("pool:2,gap"), InvalidArgument);
}

TEST(Extractor, SeedDeterminesWeights) {
  const auto spec = ExtractorSpec::desk();
  const Image img = lmtest::random_image(1, 32, 32);
  EXPECT_EQ(build_extractor(spec, 3).forward(img), build_extractor(spec, 3).forward(img));
  EXPECT_NE(build_extractor(spec, 3).forward(img), build_extractor(spec, 4).forward(img));
}

TEST(Extractor, MatchesNestedLoopReference) {
  const auto mixed = ExtractorSpec::parse("conv:5:3:1:1,relu,avgpool:2,conv:7:3:2:0,relu,gap");
  for (const auto& spec : {ExtractorSpec::desk(), mixed}) {
    const Extractor ex = build_extractor(spec, 7);
    for (const Image& img : {Image(24, 30, 0.0), lmtest::random_image(2, 24, 30)}) {
      const auto got = ex.forward(img);
      const auto ref = reference_forward(ex, img);
      ASSERT_EQ(got.size(), ref.size());
      for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(got[i], ref[i], 1e-12 * std::max(1.0, std::abs(ref[i])));
    }
  }
}

// Without padding effects a 1x1 stack maps a constant image to the same
// feature at any resolution.
TEST(Extractor, ConstantImageIsResolutionInvariantForPointwiseStack) {
  const Extractor ex = build_extractor(ExtractorSpec::parse("conv:8:1:1:0,relu,conv:6:1:1:0,relu,gap"), 5);
  const auto a = ex.forward(Image(16, 16, 0.42)), b = ex.forward(Image(33, 21, 0.42));
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

TEST(Extractor, InputGradientMatchesFiniteDifferences) {
  const Extractor ex = build_extractor(ExtractorSpec::desk(), 1);
  const Image img = lmtest::random_image(3, 24, 24, 0.1, 0.9);
  const auto cot = lmtest::random_vector(4, ex.output_dim());
  const PixelDelta g = ex.input_gradient(img, cot);
  CounterRng rng(5);
  const double eps = 1e-5;
  for (int t = 0; t < 30; ++t) {
    const std::size_t i = rng.below(img.size());
    std::vector<double> plus(img.data().begin(), img.data().end()), minus = plus;
    plus[i] += eps;
    minus[i] -= eps;
    const double fd = (inner(ex.forward(Image(24, 24, plus)), cot) - inner(ex.forward(Image(24, 24, minus)), cot)) / (2 * eps);
    EXPECT_NEAR(fd, g.data[i], 1e-4 * std::max(std::abs(fd), 1e-3)) << "pixel " << i;
  }
}

TEST(Extractor, GradientIsLinearInCotangent) {
  const Extractor ex = build_extractor(ExtractorSpec::desk(), 2);
  const Image img = lmtest::random_image(6, 20, 20);
  const auto u = lmtest::random_vector(7, 128), v = lmtest::random_vector(8, 128);
  std::vector<double> mix(128);
  for (int i = 0; i < 128; ++i) mix[i] = 2.0 * u[i] - 0.5 * v[i];
  const PixelDelta gu = ex.input_gradient(img, u), gv = ex.input_gradient(img, v), gm = ex.input_gradient(img, mix);
  for (std::size_t i = 0; i < gm.size(); ++i) EXPECT_NEAR(gm.data[i], 2.0 * gu.data[i] - 0.5 * gv.data[i], 1e-12);
}

TEST(Extractor, WeightsFileRoundTripsExactly) {
  lmtest::TempDir dir("weights");
  const Extractor ex = build_extractor(ExtractorSpec::parse("conv:4:3:2:1,relu,avgpool:2,conv:6:3:1:1,gap"), 9);
  save_extractor(ex, dir / "w.lmwt");
  const Extractor back = load_extractor(dir / "w.lmwt");
  EXPECT_EQ(back.spec(), ex.spec());
  for (std::size_t i = 0; i < ex.params().size(); ++i) {
    EXPECT_EQ(back.params()[i].weight, ex.params()[i].weight);
    EXPECT_EQ(back.params()[i].bias, ex.params()[i].bias);
  }
  const Image img = lmtest::random_image(10, 20, 20);
  EXPECT_EQ(back.forward(img), ex.forward(img));
}

TEST(Extractor, InvalidInputsAreRejected) {
  const Extractor ex = build_extractor(ExtractorSpec::desk(), 1);
  const Extractor unpadded = build_extractor(ExtractorSpec::parse("conv:4:5:1:0,avgpool:2,gap"), 1);
  EXPECT_THROW(unpadded.forward(Image(5, 40, 0.5)), InvalidArgument);
  EXPECT_NO_THROW(unpadded.forward(Image(6, 6, 0.5)));
  EXPECT_THROW(ex.input_gradient(Image(16, 16, 0.5), std::vector<double>(3, 0.0)), InvalidArgument);
  EXPECT_THROW(Extractor(ExtractorSpec::desk(), {}), InvalidArgument);
  EXPECT_THROW(build_extractor(ExtractorSpec{}, 1), InvalidArgument);
}

TEST(FeatureModel, ExtractComposesBackboneAndWhitening) {
  const Extractor ex = build_extractor(ExtractorSpec::parse("conv:6:3:2:1,relu,gap"), 3);
  const std::vector<double> mean = lmtest::random_vector(1, 6);
  const std::vector<double> mat = lmtest::random_vector(2, 4 * 6);
  const FeatureModel model(ex, WhiteningTransform(mean, mat, 4));
  const Image img = lmtest::random_image(4, 16, 16);
  const auto raw = ex.forward(img);
  const auto got = model.extract(img);
  ASSERT_EQ(got.size(), 4u);
  for (int r = 0; r < 4; ++r) {
    double s = 0.0;
    for (int c = 0; c < 6; ++c) s += mat[r * 6 + c] * (raw[c] - mean[c]);
    EXPECT_NEAR(got[r], s, 1e-12);
  }

  const auto cot = lmtest::random_vector(5, 4);
  std::vector<double> pulled(6, 0.0);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 6; ++c) pulled[c] += mat[r * 6 + c] * cot[r];
  EXPECT_EQ(model.extract_gradient(img, cot).data, ex.input_gradient(img, pulled).data);
  EXPECT_THROW(FeatureModel(ex, WhiteningTransform(lmtest::random_vector(1, 5), lmtest::random_vector(2, 20), 4)),
               InvalidArgument);
}
