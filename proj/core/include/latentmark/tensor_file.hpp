#pragma once

// LMWT tensor container shared by weights, whitening and key files.
//
// Layout (all integers little-endian):
//   magic      4 bytes  "LMWT"
//   version    u32      1 or 2
//   count      u32      number of tensors
//   per tensor:
//     name_len u32, name bytes (UTF-8)
//     [v2 only] dtype u8   (0 = f32, 1 = f64, 2 = u8, 3 = u64)
//     rank     u32, dims u64 x rank
//     payload  product(dims) elements of dtype
//
// Version 1 files carry f32 payloads only. The writer emits version 1
// whenever every tensor is f32, so plain weight files stay in that form.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace latentmark {

enum class DType : std::uint8_t { kF32 = 0, kF64 = 1, kU8 = 2, kU64 = 3 };

struct TensorRecord {
  std::string name;
  DType dtype = DType::kF32;
  std::vector<std::uint64_t> dims;
  // Exactly one of these is populated, matching dtype. f32 tensors are held
  // as doubles in memory and narrowed on write.
  std::vector<double> real;
  std::vector<std::uint8_t> bytes;
  std::vector<std::uint64_t> words;

  std::uint64_t element_count() const;

  static TensorRecord f32(std::string name, std::vector<std::uint64_t> dims,
                          std::span<const double> values);
  static TensorRecord f64(std::string name, std::vector<std::uint64_t> dims,
                          std::span<const double> values);
  static TensorRecord text(std::string name, const std::string& value);
  static TensorRecord u64(std::string name, std::span<const std::uint64_t> values);

  std::string as_text() const;
};

std::vector<std::uint8_t> encode_tensors(const std::vector<TensorRecord>& tensors);
std::vector<TensorRecord> decode_tensors(std::span<const std::uint8_t> buffer);

void write_tensor_file(const std::filesystem::path& path,
                       const std::vector<TensorRecord>& tensors);
std::vector<TensorRecord> read_tensor_file(const std::filesystem::path& path);

/// Looks up a tensor by name; throws FormatError when absent.
const TensorRecord& find_tensor(const std::vector<TensorRecord>& tensors,
                                const std::string& name);

}  // namespace latentmark
