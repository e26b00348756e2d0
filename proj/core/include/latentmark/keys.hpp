#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace latentmark {

/// Unit carrier for zero-bit marking.
struct ZeroBitKey {
  std::vector<double> carrier;
  std::uint64_t seed = 0;

  int dim() const { return static_cast<int>(carrier.size()); }
};

/// Orthonormal carrier family a_1..a_k, stored row-major k x d.
struct MultiBitKey {
  std::vector<double> carriers;
  int k = 0;
  int d = 0;
  std::uint64_t seed = 0;

  int dim() const { return d; }
  std::span<const double> carrier(int i) const {
    return std::span<const double>(carriers).subspan(static_cast<std::size_t>(i) * d, d);
  }
};

using Key = std::variant<ZeroBitKey, MultiBitKey>;

/// Message bits as +1 / -1.
struct Message {
  std::vector<int> bits;

  int size() const { return static_cast<int>(bits.size()); }
  /// MSB-first hex: each hex digit contributes 4 bits, bit b maps to 2b - 1.
  /// Only the first `k` bits are kept; the string must cover at least k bits.
  static Message from_hex(const std::string& hex, int k);
  /// '0'/'1' string, '1' -> +1.
  static Message from_bits(const std::string& bits);
  static Message random(std::uint64_t seed, int k);
  std::string to_bit_string() const;
  std::string to_hex() const;

  friend bool operator==(const Message&, const Message&) = default;
};

/// Uniform direction on the unit sphere from a normalized Gaussian vector.
ZeroBitKey gen_zero_bit_key(std::uint64_t seed, int d);
/// Modified Gram-Schmidt with one reorthogonalization pass on a k x d Gaussian matrix.
MultiBitKey gen_multi_bit_key(std::uint64_t seed, int k, int d);

void save_key(const Key& key, const std::filesystem::path& path);
Key load_key(const std::filesystem::path& path);

}  // namespace latentmark
