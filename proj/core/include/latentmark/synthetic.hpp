#pragma once

// Deterministic procedural images used as fixtures and whitening corpora.

#include <cstdint>
#include <vector>

#include "latentmark/image.hpp"

namespace latentmark {

/// Smooth background, random shapes with textured fills and multi-octave
/// value noise, quantized to 8 bits.
Image synthetic_image(std::uint64_t seed, int height, int width);
std::vector<Image> synthetic_corpus(std::uint64_t seed, int count, int height, int width);

/// i.i.d. uniform 8-bit noise.
Image noise_image(std::uint64_t seed, int height, int width);

}  // namespace latentmark
