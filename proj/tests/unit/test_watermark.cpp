#include <gtest/gtest.h>

#include <json.hpp>

#include <cmath>
#include <numbers>

#include "latentmark/error.hpp"
#include "latentmark/stats.hpp"
#include "latentmark/watermark.hpp"
#include "test_support.hpp"

using namespace latentmark;
using std::numbers::pi;

namespace {

const FeatureModel& model() {
  static const FeatureModel m = lmtest::small_model();
  return m;
}

MultiBitKey identity_key2() { return MultiBitKey{{1, 0, 0, 1}, 2, 2, 0}; }

TransformSample sample_of_kind(int k, std::uint64_t seed) {
  CounterRng rng(seed);
  return sample_transform(rng, AugmentationPolicy{{static_cast<TransformKind>(k)}, true});
}

}  // namespace

TEST(Losses, ZeroBitWorkedExample) {
  const ZeroBitKey key{{1.0, 0.0}, 0};
  const std::vector<double> x = {3.0, 4.0};
  std::vector<double> g(2);
  // cos^2(pi/3) = 1/4: score = 9 - 25/4.
  EXPECT_NEAR(robustness_score(x, key.carrier, pi / 3), 2.75, 1e-12);
  EXPECT_NEAR(zero_bit_loss(x, key, pi / 3, g), -2.75, 1e-12);
  EXPECT_NEAR(g[0], -4.5, 1e-12);
  EXPECT_NEAR(g[1], 2.0, 1e-12);
  EXPECT_TRUE(detect_feature(x, key, pi / 3).detected);
  EXPECT_FALSE(detect_feature(std::vector<double>{1.0, 4.0}, key, pi / 3).detected);
}

TEST(Losses, MultiBitWorkedExample) {
  const auto key = identity_key2();
  const std::vector<double> x = {0.5, -3.0};
  std::vector<double> g(2);
  EXPECT_NEAR(multi_bit_loss(x, key, Message::from_bits("11"), 1.0, g), 2.25, 1e-12);
  EXPECT_NEAR(g[0], -0.5, 1e-12);
  EXPECT_NEAR(g[1], -0.5, 1e-12);
  EXPECT_NEAR(multi_bit_loss(x, key, Message::from_bits("10"), 1.0, g), 0.25, 1e-12);
  EXPECT_NEAR(g[0], -0.5, 1e-12);
  EXPECT_EQ(g[1], 0.0);
  EXPECT_EQ(multi_bit_loss(x, key, Message::from_bits("10"), 0.0, g), 0.0);
  EXPECT_EQ(decode_feature(x, key), Message::from_bits("10"));
  EXPECT_THROW(multi_bit_loss(x, key, Message::from_bits("101"), 1.0), InvalidArgument);
}

TEST(Losses, ScoreVanishesOnTheConeBoundary) {
  const auto key = gen_zero_bit_key(3, 8);
  const double theta = 0.8;
  // x = cos(theta) a + sin(theta) b with b a unit vector orthogonal to a.
  auto b = lmtest::random_vector(4, 8);
  double p = 0, n = 0;
  for (int i = 0; i < 8; ++i) p += b[i] * key.carrier[i];
  for (int i = 0; i < 8; ++i) b[i] -= p * key.carrier[i];
  for (double v : b) n += v * v;
  std::vector<double> x(8);
  for (int i = 0; i < 8; ++i) x[i] = 2.5 * (std::cos(theta) * key.carrier[i] + std::sin(theta) * b[i] / std::sqrt(n));
  EXPECT_NEAR(robustness_score(x, key.carrier, theta), 0.0, 1e-13);
  EXPECT_NEAR(p_value(x, key.carrier), fpr_of_angle(theta, 8), 1e-12);
}

TEST(Losses, ScaleAndSignBehaviour) {
  const auto key = gen_zero_bit_key(5, 16);
  const auto mk = gen_multi_bit_key(6, 5, 16);
  const auto x = lmtest::random_vector(7, 16);
  std::vector<double> scaled(16), neg(16);
  for (int i = 0; i < 16; ++i) {
    scaled[i] = 3.0 * x[i];
    neg[i] = -x[i];
  }
  EXPECT_NEAR(robustness_score(scaled, key.carrier, 1.0), 9.0 * robustness_score(x, key.carrier, 1.0), 1e-10);
  EXPECT_EQ(detect_feature(neg, key, 1.0).detected, detect_feature(x, key, 1.0).detected);
  EXPECT_NEAR(detect_feature(neg, key, 1.0).p_value, detect_feature(x, key, 1.0).p_value, 1e-14);
  EXPECT_EQ(decode_feature(scaled, mk), decode_feature(x, mk));
  auto flipped = decode_feature(x, mk);
  for (auto& b : flipped.bits) b = -b;
  EXPECT_EQ(decode_feature(neg, mk), flipped);
}

TEST(TotalLoss, GradientMatchesFiniteDifferencesForEveryKind) {
  const int n = 24;
  const Image orig = lmtest::random_image(1, n, n, 0.3, 0.7);
  PixelDelta shift = lmtest::random_delta(2, n, n, 0.01);
  const Image img = apply_delta(orig, shift);
  const PixelDelta dir = lmtest::random_delta(3, n, n, 1.0);
  const Key zero = gen_zero_bit_key(4, model().dim());
  const Key multi = gen_multi_bit_key(5, 8, model().dim());
  EmbedConfig zcfg = EmbedConfig::zero_bit(1e-3);
  EmbedConfig mcfg = EmbedConfig::multi_bit(Message::random(6, 8));
  mcfg.margin = 1.0;
  const double eps = 1e-6;
  for (const auto& [key, cfg] : {std::pair{zero, zcfg}, std::pair{multi, mcfg}}) {
    for (int k = 0; k < kTransformKindCount; ++k) {
      const TransformSample t = sample_of_kind(k, 10 + k);
      const auto lg = total_loss_gradient(model(), img, orig, t, cfg, key);
      std::vector<double> plus(img.data().begin(), img.data().end()), minus = plus;
      for (std::size_t i = 0; i < plus.size(); ++i) {
        plus[i] += eps * dir.data[i];
        minus[i] -= eps * dir.data[i];
      }
      const double fd = (total_loss(model(), Image(n, n, plus), orig, t, cfg, key) -
                         total_loss(model(), Image(n, n, minus), orig, t, cfg, key)) / (2 * eps);
      const double an = dot(lg.gradient, dir);
      EXPECT_NEAR(fd, an, 1e-4 * std::max(std::abs(an), 1e-6)) << "kind " << k;
      EXPECT_NEAR(lg.loss, total_loss(model(), img, orig, t, cfg, key), 1e-12 * std::max(1.0, std::abs(lg.loss)));
    }
  }
}

TEST(TotalLoss, ZeroLambdaLeavesTheMseTerm) {
  const Image orig = lmtest::random_image(7, 20, 20);
  const Image img = apply_delta(orig, lmtest::random_delta(8, 20, 20, 0.02));
  EmbedConfig cfg = EmbedConfig::zero_bit();
  cfg.lambda = 0.0;
  const Key key = gen_zero_bit_key(1, model().dim());
  EXPECT_NEAR(total_loss(model(), img, orig, TransformSample{}, cfg, key), mse(img, orig), 1e-12);
}

TEST(Embed, ZeroLambdaSingleStepReturnsTheOriginal) {
  const Image orig = synthetic_image(3, 32, 32);
  EmbedConfig cfg = EmbedConfig::zero_bit();
  cfg.lambda = 0.0;
  cfg.iterations = 1;
  const auto r = embed(model(), orig, gen_zero_bit_key(2, model().dim()), cfg);
  EXPECT_EQ(r.image, orig);
  EXPECT_TRUE(std::isinf(r.report.final_psnr));
}

TEST(Embed, ZeroBitRunIsDeterministicAndMeetsBudget) {
  const Image orig = synthetic_image(4, 32, 32);
  const Key key = gen_zero_bit_key(3, model().dim());
  EmbedConfig cfg = EmbedConfig::zero_bit(1e-3);
  cfg.iterations = 40;
  cfg.augmentation = AugmentationPolicy::identity_only();
  const auto a = embed(model(), orig, key, cfg);
  const auto b = embed(model(), orig, key, cfg);
  EXPECT_EQ(a.image, b.image);
  EXPECT_EQ(a.report.loss_trace, b.report.loss_trace);
  ASSERT_EQ(a.report.loss_trace.size(), 40u);
  EXPECT_LT(a.report.loss_trace.back(), a.report.loss_trace.front());
  EXPECT_GE(a.report.final_psnr, cfg.target_psnr);
  EXPECT_EQ(a.report.final_psnr, psnr(a.image, orig));
  EXPECT_EQ(a.image, quantize(a.image));
  EXPECT_EQ(a.report.in_region, detect(model(), a.image, std::get<ZeroBitKey>(key), a.report.theta).detected);

  cfg.seed = 1;
  cfg.augmentation = AugmentationPolicy{};
  EXPECT_NE(embed(model(), orig, key, cfg).report.loss_trace, embed(model(), orig, key, [&] {
              auto c = cfg;
              c.seed = 2;
              return c;
            }()).report.loss_trace);
}

TEST(Embed, MultiBitRunMeetsBudgetAndReportsMargins) {
  const Image orig = synthetic_image(5, 32, 32);
  const auto key = gen_multi_bit_key(4, 6, model().dim());
  const auto msg = Message::random(9, 6);
  EmbedConfig cfg = EmbedConfig::multi_bit(msg);
  cfg.iterations = 30;
  cfg.margin = 1.0;
  cfg.target_psnr = 36.0;
  cfg.augmentation = AugmentationPolicy::identity_only();
  const auto r = embed(model(), orig, key, cfg);
  EXPECT_GE(r.report.final_psnr, 36.0);
  ASSERT_EQ(r.report.margins.size(), 6u);
  const auto decoded = decode(model(), r.image, key);
  EXPECT_EQ(decoded, r.report.decoded);
  for (int i = 0; i < 6; ++i) EXPECT_EQ(r.report.margins[i] > 0, decoded.bits[i] == msg.bits[i]);
}

TEST(Embed, ConfigurationIsValidated) {
  const Image orig = synthetic_image(6, 32, 32);
  const Key zkey = gen_zero_bit_key(1, model().dim());
  const Key mkey = gen_multi_bit_key(1, 4, model().dim());
  auto expect_invalid = [&](EmbedConfig cfg, const Key& key) {
    cfg.iterations = std::min(cfg.iterations, 2);
    EXPECT_THROW(embed(model(), orig, key, cfg), InvalidArgument);
  };
  EmbedConfig c = EmbedConfig::zero_bit();
  c.iterations = 0;
  expect_invalid(c, zkey);
  c = EmbedConfig::zero_bit(1.5);
  expect_invalid(c, zkey);
  c = EmbedConfig::zero_bit();
  c.lambda = -1;
  expect_invalid(c, zkey);
  c = EmbedConfig::zero_bit();
  c.message = Message::from_bits("1010");
  expect_invalid(c, zkey);
  expect_invalid(EmbedConfig::zero_bit(), mkey);
  expect_invalid(EmbedConfig::multi_bit(Message::from_bits("1010")), zkey);
  expect_invalid(EmbedConfig::multi_bit(Message::from_bits("101")), mkey);
  expect_invalid(EmbedConfig::zero_bit(), gen_zero_bit_key(1, model().dim() + 1));
  c = EmbedConfig::zero_bit();
  c.iterations = 1;
  EXPECT_THROW(embed(model(), Image(16, 40, 0.5), zkey, c), InvalidArgument);
}

TEST(Embed, JsonReportCarriesResultAndConfig) {
  const Image orig = synthetic_image(7, 32, 32);
  EmbedConfig cfg = EmbedConfig::zero_bit(1e-2);
  cfg.iterations = 3;
  const auto r = embed(model(), orig, gen_zero_bit_key(8, model().dim()), cfg);
  const auto j = nlohmann::json::parse(report_to_json(r.report, cfg));
  EXPECT_EQ(j["mode"], "zero");
  EXPECT_EQ(j["in_region"].get<bool>(), r.report.in_region);
  EXPECT_EQ(j["loss_trace"].size(), 3u);
  EXPECT_DOUBLE_EQ(j["config"]["target_fpr"].get<double>(), 1e-2);
  EXPECT_EQ(j["config"]["augmentation"], cfg.augmentation.to_string());
  EXPECT_NEAR(j["theta"].get<double>(), angle_of_fpr(1e-2, model().dim()), 1e-15);
}
