#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <unistd.h>

#include "latentmark/features.hpp"
#include "latentmark/image.hpp"
#include "latentmark/rng.hpp"
#include "latentmark/synthetic.hpp"

namespace lmtest {

inline latentmark::Image random_image(std::uint64_t seed, int h, int w, double lo = 0.0, double hi = 1.0) {
  latentmark::CounterRng rng(seed, 17);
  std::vector<double> v(static_cast<std::size_t>(h) * w * latentmark::kChannels);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return latentmark::Image(h, w, std::move(v));
}

inline latentmark::PixelDelta random_delta(std::uint64_t seed, int h, int w, double scale = 1.0) {
  latentmark::CounterRng rng(seed, 23);
  latentmark::PixelDelta d(h, w);
  for (auto& x : d.data) x = scale * rng.normal();
  return d;
}

inline std::vector<double> random_vector(std::uint64_t seed, int n) {
  latentmark::CounterRng rng(seed, 29);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

// Desk backbone whitened to `dim` on small synthetic images; cheap enough for unit tests.
inline latentmark::FeatureModel small_model(int dim = 16, int samples = 96, int size = 32) {
  auto ex = latentmark::build_extractor(latentmark::ExtractorSpec::desk(), 1);
  std::vector<latentmark::RawFeature> raw;
  for (int i = 0; i < samples; ++i) raw.push_back(ex.forward(latentmark::synthetic_image(50000 + i, size, size)));
  auto w = latentmark::fit_whitening(raw, dim);
  return latentmark::FeatureModel(std::move(ex), std::move(w));
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("latentmark_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace lmtest
