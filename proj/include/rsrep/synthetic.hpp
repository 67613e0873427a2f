#pragma once

#include <cstdint>

#include <nlohmann/json_fwd.hpp>

#include "rsrep/source.hpp"

namespace rsrep {

/// Procedural scenes for desk-scale experiments: one cluster of grating
/// orientations per class. Spatial frequency, phase, and pixel noise vary
/// per image and carry no label signal; optional tint and brightness
/// offsets add colour nuisance.
struct SyntheticSpec {
  int num_classes = 2;
  int images_per_class = 100;
  int image_size = 16;
  /// Peak-to-peak grating amplitude relative to the mean intensity.
  double contrast = 1.0;
  /// Spatial frequency range in cycles per pixel, sampled log-uniformly.
  double frequency_min = 0.06;
  double frequency_max = 0.42;
  /// Half-width of the per-channel multiplicative tint.
  double tint = 0.0;
  /// Half-width of the per-image brightness offset around 0.5.
  double brightness = 0.0;
  /// Standard deviation of independent per-pixel Gaussian noise.
  double noise = 0.15;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const SyntheticSpec&) const = default;
};

void to_json(nlohmann::json& j, const SyntheticSpec& s);
void from_json(const nlohmann::json& j, SyntheticSpec& s);

Image synthetic_image(const SyntheticSpec& spec, int label, int index);
InMemorySource make_synthetic(const SyntheticSpec& spec, const std::string& name = "synthetic");

}  // namespace rsrep
