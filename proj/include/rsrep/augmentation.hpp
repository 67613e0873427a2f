#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "rsrep/image.hpp"

namespace rsrep {

/// Two-view augmentation recipe for self-supervised pre-training. The
/// defaults follow the SimSiam reference pipeline.
struct SslRecipe {
  int crop_size = 224;
  std::pair<double, double> crop_scale_range{0.2, 1.0};
  std::pair<double, double> crop_ratio_range{3.0 / 4.0, 4.0 / 3.0};
  double flip_prob = 0.5;
  /// Multiples of 90 degrees, drawn uniformly.
  std::vector<int> rotation_choices{0};
  /// Scales the (0.4, 0.4, 0.4, 0.1) brightness/contrast/saturation/hue jitter.
  double color_jitter_strength = 1.0;
  double color_jitter_prob = 0.8;
  double grayscale_prob = 0.2;
  double blur_prob = 0.5;
  std::pair<double, double> blur_sigma_range{0.1, 2.0};
  Normalization normalization;

  void validate() const;
  bool operator==(const SslRecipe&) const = default;
};

/// Downstream pipeline: resize, optional flips on the training split,
/// center crop, normalize.
struct EvalRecipe {
  int resize_to = 256;
  int center_crop = 224;
  bool train_flip = true;
  Normalization normalization;
  /// Datasets fed straight to center_crop x center_crop without the
  /// intermediate resize and crop (matched after canonicalization).
  std::set<std::string> skip_resize_for{"eurosat"};

  void validate() const;
  bool operator==(const EvalRecipe&) const = default;
};

void to_json(nlohmann::json& j, const Normalization& n);
void from_json(const nlohmann::json& j, Normalization& n);
void to_json(nlohmann::json& j, const SslRecipe& r);
void from_json(const nlohmann::json& j, SslRecipe& r);
void to_json(nlohmann::json& j, const EvalRecipe& r);
void from_json(const nlohmann::json& j, EvalRecipe& r);

enum class Split { kTrain, kVal, kTest };
std::string to_string(Split s);

/// One independently augmented view. Pure function of (image, recipe, seed).
Tensor make_ssl_view(const Image& image, const SslRecipe& recipe, std::uint64_t seed);

/// Both views for one source image: [3, S, S] each. The seed fully
/// determines both draws.
std::pair<Tensor, Tensor> make_ssl_views(const Image& image, const SslRecipe& recipe,
                                         std::uint64_t seed);

struct FlipDraw {
  bool horizontal = false;
  bool vertical = false;
  /// Index in [0, 4) identifying the flip combination.
  int index() const { return (horizontal ? 1 : 0) + (vertical ? 2 : 0); }
};

/// Independent horizontal and vertical flips with probability 0.5 each on
/// the training split when enabled; no flips otherwise.
FlipDraw eval_flip_draw(const EvalRecipe& recipe, Split split, std::uint64_t seed);

/// Resize, the given flips, center crop, normalize.
Tensor eval_transform(const Image& image, const EvalRecipe& recipe, const std::string& dataset_name,
                      FlipDraw flips);

/// Downstream transform; for val/test splits the result does not depend on
/// the seed.
Tensor eval_transform(const Image& image, const EvalRecipe& recipe, Split split,
                      const std::string& dataset_name, std::uint64_t seed);

struct ChannelStats {
  std::array<double, 3> mean{};
  std::array<double, 3> std{};
  std::size_t pixel_count = 0;
  Normalization as_normalization() const { return {mean, std}; }
};

/// Streaming per-channel mean and population std (Chan et al. merge).
class ChannelStatsAccumulator {
 public:
  void add(const Image& image);
  ChannelStats result() const;
  std::size_t images() const { return images_; }

 private:
  std::size_t images_ = 0;
  std::size_t count_ = 0;
  std::array<double, 3> mean_{};
  std::array<double, 3> m2_{};
};

/// Throws ValidationError on an empty input.
ChannelStats channel_stats(std::span<const Image> images);

}  // namespace rsrep
