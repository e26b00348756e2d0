#include "latentmark/tensor_file.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "latentmark/error.hpp"

namespace latentmark {
namespace {

constexpr char kMagic[4] = {'L', 'M', 'W', 'T'};
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 34;

static_assert(std::endian::native == std::endian::little ||
                  std::endian::native == std::endian::big,
              "mixed-endian platforms are not supported");

template <typename T>
void put(std::vector<std::uint8_t>& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::uint8_t raw[sizeof(T)];
  std::memcpy(raw, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
  out.insert(out.end(), raw, raw + sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> buffer) : buffer_(buffer) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    std::uint8_t raw[sizeof(T)];
    std::memcpy(raw, buffer_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
    pos_ += sizeof(T);
    T value;
    std::memcpy(&value, raw, sizeof(T));
    return value;
  }

  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto out = buffer_.subspan(pos_, n);
    pos_ += n;
    return out;
  }

  bool done() const { return pos_ == buffer_.size(); }

 private:
  void need(std::size_t n) const {
    if (buffer_.size() - pos_ < n) throw FormatError("tensor file truncated");
  }

  std::span<const std::uint8_t> buffer_;
  std::size_t pos_ = 0;
};

std::uint64_t product(const std::vector<std::uint64_t>& dims) {
  std::uint64_t n = 1;
  for (auto d : dims) {
    if (d != 0 && n > kMaxElements / d) throw FormatError("tensor too large");
    n *= d;
  }
  return n;
}

}  // namespace

std::uint64_t TensorRecord::element_count() const { return product(dims); }

TensorRecord TensorRecord::f32(std::string name, std::vector<std::uint64_t> dims,
                               std::span<const double> values) {
  TensorRecord t{std::move(name), DType::kF32, std::move(dims), {}, {}, {}};
  if (t.element_count() != values.size()) throw InvalidArgument("tensor dims do not match payload");
  t.real.assign(values.begin(), values.end());
  return t;
}

TensorRecord TensorRecord::f64(std::string name, std::vector<std::uint64_t> dims,
                               std::span<const double> values) {
  TensorRecord t = f32(std::move(name), std::move(dims), values);
  t.dtype = DType::kF64;
  return t;
}

TensorRecord TensorRecord::text(std::string name, const std::string& value) {
  TensorRecord t{std::move(name), DType::kU8, {value.size()}, {}, {}, {}};
  t.bytes.assign(value.begin(), value.end());
  return t;
}

TensorRecord TensorRecord::u64(std::string name, std::span<const std::uint64_t> values) {
  TensorRecord t{std::move(name), DType::kU64, {values.size()}, {}, {}, {}};
  t.words.assign(values.begin(), values.end());
  return t;
}

std::string TensorRecord::as_text() const {
  if (dtype != DType::kU8) throw FormatError("tensor '" + name + "' is not text");
  return std::string(bytes.begin(), bytes.end());
}

std::vector<std::uint8_t> encode_tensors(const std::vector<TensorRecord>& tensors) {
  const bool v1 = std::all_of(tensors.begin(), tensors.end(),
                              [](const TensorRecord& t) { return t.dtype == DType::kF32; });
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put<std::uint32_t>(out, v1 ? 1 : 2);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out.insert(out.end(), t.name.begin(), t.name.end());
    if (!v1) put<std::uint8_t>(out, static_cast<std::uint8_t>(t.dtype));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.dims.size()));
    for (auto d : t.dims) put<std::uint64_t>(out, d);
    const auto n = t.element_count();
    switch (t.dtype) {
      case DType::kF32:
        if (t.real.size() != n) throw InvalidArgument("tensor '" + t.name + "' payload size");
        for (double v : t.real) put<float>(out, static_cast<float>(v));
        break;
      case DType::kF64:
        if (t.real.size() != n) throw InvalidArgument("tensor '" + t.name + "' payload size");
        for (double v : t.real) put<double>(out, v);
        break;
      case DType::kU8:
        if (t.bytes.size() != n) throw InvalidArgument("tensor '" + t.name + "' payload size");
        out.insert(out.end(), t.bytes.begin(), t.bytes.end());
        break;
      case DType::kU64:
        if (t.words.size() != n) throw InvalidArgument("tensor '" + t.name + "' payload size");
        for (auto v : t.words) put<std::uint64_t>(out, v);
        break;
    }
  }
  return out;
}

std::vector<TensorRecord> decode_tensors(std::span<const std::uint8_t> buffer) {
  Reader in(buffer);
  auto magic = in.take(4);
  if (!std::equal(magic.begin(), magic.end(), kMagic)) throw FormatError("bad magic, not an LMWT file");
  const auto version = in.get<std::uint32_t>();
  if (version != 1 && version != 2) {
    throw FormatError("unsupported LMWT version " + std::to_string(version));
  }
  const auto count = in.get<std::uint32_t>();
  std::vector<TensorRecord> tensors;
  for (std::uint32_t i = 0; i < count; ++i) {
    TensorRecord t;
    const auto name_len = in.get<std::uint32_t>();
    auto name = in.take(name_len);
    t.name.assign(name.begin(), name.end());
    if (version == 2) {
      const auto code = in.get<std::uint8_t>();
      if (code > 3) throw FormatError("unknown dtype code " + std::to_string(code));
      t.dtype = static_cast<DType>(code);
    }
    const auto rank = in.get<std::uint32_t>();
    if (rank > 8) throw FormatError("tensor rank too large");
    for (std::uint32_t r = 0; r < rank; ++r) t.dims.push_back(in.get<std::uint64_t>());
    const auto n = t.element_count();
    switch (t.dtype) {
      case DType::kF32:
        t.real.reserve(n);
        for (std::uint64_t k = 0; k < n; ++k) t.real.push_back(in.get<float>());
        break;
      case DType::kF64:
        t.real.reserve(n);
        for (std::uint64_t k = 0; k < n; ++k) t.real.push_back(in.get<double>());
        break;
      case DType::kU8: {
        auto raw = in.take(n);
        t.bytes.assign(raw.begin(), raw.end());
        break;
      }
      case DType::kU64:
        t.words.reserve(n);
        for (std::uint64_t k = 0; k < n; ++k) t.words.push_back(in.get<std::uint64_t>());
        break;
    }
    tensors.push_back(std::move(t));
  }
  if (!in.done()) throw FormatError("trailing bytes after last tensor");
  return tensors;
}

void write_tensor_file(const std::filesystem::path& path,
                       const std::vector<TensorRecord>& tensors) {
  const auto bytes = encode_tensors(tensors);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

std::vector<TensorRecord> read_tensor_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_tensors(bytes);
}

const TensorRecord& find_tensor(const std::vector<TensorRecord>& tensors,
                                const std::string& name) {
  auto it = std::find_if(tensors.begin(), tensors.end(),
                         [&](const TensorRecord& t) { return t.name == name; });
  if (it == tensors.end()) throw FormatError("missing tensor '" + name + "'");
  return *it;
}

}  // namespace latentmark
