#pragma once

// Evaluation-time image attacks. Attacks never see key material.

#include <string>

#include "latentmark/image.hpp"

namespace latentmark {

enum class AttackKind { kIdentity, kRotation, kCrop, kResize, kBlur, kJpeg, kBrightness, kContrast, kHue };

struct AttackSpec {
  AttackKind kind = AttackKind::kIdentity;
  // rotation: degrees (counter-clockwise); crop: kept area fraction p in (0, 1];
  // resize: scale s in (0, 1]; blur: sigma > 0; jpeg: quality Q in [1, 100];
  // brightness B >= 0; contrast C >= 0; hue H in [-0.5, 0.5] turns.
  double param = 0.0;

  /// "identity", "rotation:25", "jpeg:50", ...
  static AttackSpec parse(const std::string& text);
  std::string name() const;
  std::string to_string() const;
  /// Throws InvalidArgument when the parameter is outside its range.
  void validate() const;

  friend bool operator==(const AttackSpec&, const AttackSpec&) = default;
};

/// Applies the attack. Crop keeps a centered window at native resolution and
/// resize keeps the reduced resolution; blur uses the odd kernel size closest
/// to (sigma - 0.35) / 0.15.
Image attack(const Image& img, const AttackSpec& spec);

/// Baseline JPEG encode/decode round trip with 4:4:4 sampling.
Image jpeg_roundtrip(const Image& img, int quality);

int blur_kernel_for_sigma(double sigma);

}  // namespace latentmark
