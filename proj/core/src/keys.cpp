#include "latentmark/keys.hpp"

#include <cctype>
#include <cmath>

#include "latentmark/error.hpp"
#include "latentmark/rng.hpp"
#include "latentmark/tensor_file.hpp"

namespace latentmark {
namespace {

constexpr std::uint64_t kZeroStream = 0x7a65726f;
constexpr std::uint64_t kMultiStream = 0x6d756c7469;
constexpr std::uint64_t kMessageStream = 0x6d7367;

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

ZeroBitKey gen_zero_bit_key(std::uint64_t seed, int d) {
  if (d < 2) throw InvalidArgument("zero-bit key dimension must be at least 2");
  CounterRng rng(seed, kZeroStream);
  ZeroBitKey key{std::vector<double>(d), seed};
  double n = 0.0;
  while (n == 0.0) {
    for (auto& v : key.carrier) v = rng.normal();
    n = norm(key.carrier);
  }
  for (auto& v : key.carrier) v /= n;
  return key;
}

MultiBitKey gen_multi_bit_key(std::uint64_t seed, int k, int d) {
  if (d < 1 || k < 1) throw InvalidArgument("multi-bit key needs k >= 1 and d >= 1");
  if (k > d) throw InvalidArgument("multi-bit key needs k <= d (got k=" + std::to_string(k) + ", d=" + std::to_string(d) + ")");
  CounterRng rng(seed, kMultiStream);
  MultiBitKey key{std::vector<double>(static_cast<std::size_t>(k) * d), k, d, seed};
  for (int i = 0; i < k; ++i) {
    double* row = key.carriers.data() + static_cast<std::size_t>(i) * d;
    for (;;) {
      for (int j = 0; j < d; ++j) row[j] = rng.normal();
      for (int pass = 0; pass < 2; ++pass) {
        for (int p = 0; p < i; ++p) {
          const double* prev = key.carriers.data() + static_cast<std::size_t>(p) * d;
          double proj = 0.0;
          for (int j = 0; j < d; ++j) proj += row[j] * prev[j];
          for (int j = 0; j < d; ++j) row[j] -= proj * prev[j];
        }
      }
      const double n = norm(std::span<const double>(row, d));
      if (n > 1e-8) {
        for (int j = 0; j < d; ++j) row[j] /= n;
        break;
      }
    }
  }
  return key;
}

Message Message::from_bits(const std::string& bits) {
  Message m;
  for (char c : bits) {
    if (c == '0') {
      m.bits.push_back(-1);
    } else if (c == '1') {
      m.bits.push_back(1);
    } else {
      throw InvalidArgument(std::string("invalid bit character '") + c + "'");
    }
  }
  return m;
}

Message Message::from_hex(const std::string& hex, int k) {
  std::string s = hex;
  if (s.size() >= 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) s = s.substr(2);
  if (static_cast<int>(s.size()) * 4 < k) {
    throw InvalidArgument("hex message has " + std::to_string(s.size() * 4) + " bits, key needs " + std::to_string(k));
  }
  if (static_cast<int>(s.size()) > (k + 3) / 4) {
    throw InvalidArgument("hex message longer than " + std::to_string(k) + " bits");
  }
  Message m;
  for (char c : s) {
    if (!std::isxdigit(static_cast<unsigned char>(c))) throw InvalidArgument(std::string("invalid hex digit '") + c + "'");
    const int v = std::isdigit(static_cast<unsigned char>(c)) ? c - '0' : std::tolower(c) - 'a' + 10;
    for (int b = 3; b >= 0; --b) {
      if (m.size() < k) m.bits.push_back(((v >> b) & 1) ? 1 : -1);
    }
  }
  return m;
}

Message Message::random(std::uint64_t seed, int k) {
  CounterRng rng(seed, kMessageStream);
  Message m;
  for (int i = 0; i < k; ++i) m.bits.push_back(rng.bernoulli(0.5) ? 1 : -1);
  return m;
}

std::string Message::to_bit_string() const {
  std::string s;
  for (int b : bits) s += b > 0 ? '1' : '0';
  return s;
}

std::string Message::to_hex() const {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s;
  for (std::size_t i = 0; i < bits.size(); i += 4) {
    int v = 0;
    for (std::size_t j = 0; j < 4; ++j) {
      v <<= 1;
      if (i + j < bits.size() && bits[i + j] > 0) v |= 1;
    }
    s += kDigits[v];
  }
  return s;
}

void save_key(const Key& key, const std::filesystem::path& path) {
  std::vector<TensorRecord> tensors;
  if (const auto* z = std::get_if<ZeroBitKey>(&key)) {
    tensors.push_back(TensorRecord::text("kind", "zero"));
    tensors.push_back(TensorRecord::f64("carriers", {1, z->carrier.size()}, z->carrier));
    const std::uint64_t seed[] = {z->seed};
    tensors.push_back(TensorRecord::u64("seed", seed));
  } else {
    const auto& m = std::get<MultiBitKey>(key);
    tensors.push_back(TensorRecord::text("kind", "multi"));
    tensors.push_back(TensorRecord::f64("carriers", {static_cast<std::uint64_t>(m.k), static_cast<std::uint64_t>(m.d)},
                                        m.carriers));
    const std::uint64_t seed[] = {m.seed};
    tensors.push_back(TensorRecord::u64("seed", seed));
  }
  write_tensor_file(path, tensors);
}

Key load_key(const std::filesystem::path& path) {
  const auto tensors = read_tensor_file(path);
  const std::string kind = find_tensor(tensors, "kind").as_text();
  const auto& carriers = find_tensor(tensors, "carriers");
  if (carriers.dims.size() != 2 || carriers.real.empty()) throw FormatError("key carriers must be a k x d matrix");
  std::uint64_t seed = 0;
  for (const auto& t : tensors) {
    if (t.name == "seed" && t.words.size() == 1) seed = t.words[0];
  }
  const int k = static_cast<int>(carriers.dims[0]);
  const int d = static_cast<int>(carriers.dims[1]);
  if (kind == "zero") {
    if (k != 1) throw FormatError("zero-bit key must hold exactly one carrier");
    return ZeroBitKey{carriers.real, seed};
  }
  if (kind == "multi") return MultiBitKey{carriers.real, k, d, seed};
  throw FormatError("unknown key kind '" + kind + "'");
}

}  // namespace latentmark
