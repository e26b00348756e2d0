#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <cmath>
#include <fstream>

#include "latentmark/error.hpp"
#include "latentmark/keys.hpp"
#include "latentmark/tensor_file.hpp"
#include "test_support.hpp"

using namespace latentmark;

TEST(ZeroBitKeys, CarrierIsUnitAndSeeded) {
  const auto a = gen_zero_bit_key(5, 64);
  double n2 = 0;
  for (double v : a.carrier) n2 += v * v;
  EXPECT_NEAR(n2, 1.0, 1e-12);
  EXPECT_EQ(a.seed, 5u);
  EXPECT_EQ(gen_zero_bit_key(5, 64).carrier, a.carrier);
  EXPECT_NE(gen_zero_bit_key(6, 64).carrier, a.carrier);
  EXPECT_THROW(gen_zero_bit_key(1, 1), InvalidArgument);
}

TEST(ZeroBitKeys, CarriersAreUniformOnTheSphere) {
  const int d = 16, n = 20000;
  std::vector<double> mean(d, 0.0);
  double first_sq = 0.0;
  for (int s = 0; s < n; ++s) {
    const auto k = gen_zero_bit_key(1000 + s, d);
    for (int j = 0; j < d; ++j) mean[j] += k.carrier[j] / n;
    first_sq += k.carrier[0] * k.carrier[0] / n;
  }
  // Each coordinate has mean 0 and variance 1/d; sd of the mean is sqrt(1/(d n)).
  for (double m : mean) EXPECT_NEAR(m, 0.0, 5 * std::sqrt(1.0 / (d * n)));
  EXPECT_NEAR(first_sq, 1.0 / d, 0.005);
}

TEST(MultiBitKeys, CarriersAreOrthonormal) {
  for (auto [k, d] : {std::pair{30, 64}, std::pair{64, 64}, std::pair{1, 5}}) {
    const auto key = gen_multi_bit_key(11, k, d);
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> a(key.carriers.data(), k, d);
    EXPECT_LT((a * a.transpose() - Eigen::MatrixXd::Identity(k, k)).cwiseAbs().maxCoeff(), 1e-12);
    if (k == d) EXPECT_NEAR(std::abs(a.determinant()), 1.0, 1e-10);
  }
  EXPECT_EQ(gen_multi_bit_key(11, 30, 64).carriers, gen_multi_bit_key(11, 30, 64).carriers);
}

TEST(MultiBitKeys, TooManyBitsAreRejected) {
  try {
    gen_multi_bit_key(1, 65, 64);
    FAIL() << "k > d accepted";
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("k <= d"), std::string::npos);
  }
  EXPECT_THROW(gen_multi_bit_key(1, 0, 64), InvalidArgument);
}

TEST(Messages, HexIsMostSignificantBitFirst) {
  const auto m = Message::from_hex("a5", 8);
  EXPECT_EQ(m.bits, (std::vector<int>{1, -1, 1, -1, -1, 1, -1, 1}));
  EXPECT_EQ(m.to_hex(), "a5");
  EXPECT_EQ(Message::from_hex("0xF", 3).bits, (std::vector<int>{1, 1, 1}));
  EXPECT_EQ(Message::from_hex("8", 2).to_bit_string(), "10");
  EXPECT_THROW(Message::from_hex("a", 5), InvalidArgument);
  EXPECT_THROW(Message::from_hex("abc", 8), InvalidArgument);
  EXPECT_THROW(Message::from_hex("zz", 8), InvalidArgument);
}

TEST(Messages, BitStringsAndRandom) {
  const auto m = Message::from_bits("0110");
  EXPECT_EQ(m.bits, (std::vector<int>{-1, 1, 1, -1}));
  EXPECT_EQ(m.to_bit_string(), "0110");
  EXPECT_THROW(Message::from_bits("01x"), InvalidArgument);

  const auto r = Message::random(3, 30);
  EXPECT_EQ(r.size(), 30);
  EXPECT_EQ(r, Message::random(3, 30));
  EXPECT_EQ(Message::from_hex(r.to_hex(), 30), r);
  for (int b : r.bits) EXPECT_TRUE(b == 1 || b == -1);
}

TEST(KeyFiles, RoundTripBothKinds) {
  lmtest::TempDir dir("keys");
  const auto z = gen_zero_bit_key(7, 64);
  save_key(z, dir / "z.lmwt");
  const auto zb = std::get<ZeroBitKey>(load_key(dir / "z.lmwt"));
  EXPECT_EQ(zb.carrier, z.carrier);
  EXPECT_EQ(zb.seed, 7u);

  const auto m = gen_multi_bit_key(0xfedcba9876543210ull, 30, 64);
  save_key(m, dir / "m.lmwt");
  const auto mb = std::get<MultiBitKey>(load_key(dir / "m.lmwt"));
  EXPECT_EQ(mb.carriers, m.carriers);
  EXPECT_EQ(mb.k, 30);
  EXPECT_EQ(mb.d, 64);
  EXPECT_EQ(mb.seed, 0xfedcba9876543210ull);
}

TEST(KeyFiles, DamagedFilesAreRejected) {
  lmtest::TempDir dir("badkeys");
  save_key(gen_zero_bit_key(1, 8), dir / "k.lmwt");
  std::filesystem::resize_file(dir / "k.lmwt", std::filesystem::file_size(dir / "k.lmwt") - 3);
  EXPECT_THROW(load_key(dir / "k.lmwt"), FormatError);

  std::ofstream(dir / "magic.lmwt", std::ios::binary) << "NOPE and some bytes";
  EXPECT_THROW(load_key(dir / "magic.lmwt"), FormatError);

  write_tensor_file(dir / "kind.lmwt", {TensorRecord::text("kind", "other"),
                                        TensorRecord::f64("carriers", {1, 2}, std::vector<double>{1, 0})});
  EXPECT_THROW(load_key(dir / "kind.lmwt"), FormatError);
}
