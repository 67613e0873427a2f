#include "rsrep/augmentation.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>

#include "rsrep/dataset.hpp"
#include "rsrep/errors.hpp"
#include "rsrep/random.hpp"

namespace rsrep {
namespace {

void check_probability(double p, const char* field) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string(field) + " must lie in [0, 1]");
}

struct CropWindow {
  int top, left, height, width;
};

// torchvision RandomResizedCrop window sampling.
CropWindow sample_crop(const Image& img, const SslRecipe& r, Rng& rng) {
  const double area = static_cast<double>(img.height) * img.width;
  const double log_lo = std::log(r.crop_ratio_range.first);
  const double log_hi = std::log(r.crop_ratio_range.second);
  for (int attempt = 0; attempt < 10; ++attempt) {
    const double target = area * rng.uniform(r.crop_scale_range.first, r.crop_scale_range.second);
    const double ratio = std::exp(rng.uniform(log_lo, log_hi));
    const int w = static_cast<int>(std::lround(std::sqrt(target * ratio)));
    const int h = static_cast<int>(std::lround(std::sqrt(target / ratio)));
    if (w > 0 && h > 0 && w <= img.width && h <= img.height) {
      const int top = static_cast<int>(rng.index(static_cast<std::size_t>(img.height - h + 1)));
      const int left = static_cast<int>(rng.index(static_cast<std::size_t>(img.width - w + 1)));
      return {top, left, h, w};
    }
  }
  // Fallback: largest central crop within the ratio range.
  const double in_ratio = static_cast<double>(img.width) / img.height;
  int w = img.width, h = img.height;
  if (in_ratio < r.crop_ratio_range.first) {
    h = static_cast<int>(std::lround(w / r.crop_ratio_range.first));
  } else if (in_ratio > r.crop_ratio_range.second) {
    w = static_cast<int>(std::lround(h * r.crop_ratio_range.second));
  }
  return {(img.height - h) / 2, (img.width - w) / 2, h, w};
}

Image color_jitter(const Image& img, double strength, Rng& rng) {
  const double b = 0.4 * strength, c = 0.4 * strength, s = 0.4 * strength;
  const double h = std::min(0.5, 0.1 * strength);
  const double fb = rng.uniform(std::max(0.0, 1.0 - b), 1.0 + b);
  const double fc = rng.uniform(std::max(0.0, 1.0 - c), 1.0 + c);
  const double fs = rng.uniform(std::max(0.0, 1.0 - s), 1.0 + s);
  const double fh = rng.uniform(-h, h);
  std::vector<int> order{0, 1, 2, 3};
  rng.shuffle(order);
  Image out = img;
  for (int op : order) {
    switch (op) {
      case 0: out = adjust_brightness(out, fb); break;
      case 1: out = adjust_contrast(out, fc); break;
      case 2: out = adjust_saturation(out, fs); break;
      default: out = adjust_hue(out, fh); break;
    }
  }
  return out;
}

}  // namespace

void SslRecipe::validate() const {
  if (crop_size <= 0) throw ConfigError("ssl_recipe.crop_size must be positive");
  const auto [lo, hi] = crop_scale_range;
  if (!(lo > 0.0 && lo <= hi && hi <= 1.0)) {
    throw ConfigError("ssl_recipe.crop_scale_range must satisfy 0 < min <= max <= 1");
  }
  if (!(crop_ratio_range.first > 0.0 && crop_ratio_range.first <= crop_ratio_range.second)) {
    throw ConfigError("ssl_recipe.crop_ratio_range must satisfy 0 < min <= max");
  }
  check_probability(flip_prob, "ssl_recipe.flip_prob");
  check_probability(color_jitter_prob, "ssl_recipe.color_jitter_prob");
  check_probability(grayscale_prob, "ssl_recipe.grayscale_prob");
  check_probability(blur_prob, "ssl_recipe.blur_prob");
  if (color_jitter_strength < 0.0) throw ConfigError("ssl_recipe.color_jitter_strength must be >= 0");
  if (rotation_choices.empty()) throw ConfigError("ssl_recipe.rotation_choices must not be empty");
  for (int deg : rotation_choices)
    if (deg % 90 != 0) throw ConfigError("ssl_recipe.rotation_choices must be multiples of 90");
  if (!(blur_sigma_range.first > 0.0 && blur_sigma_range.first <= blur_sigma_range.second)) {
    throw ConfigError("ssl_recipe.blur_sigma_range must satisfy 0 < min <= max");
  }
}

void EvalRecipe::validate() const {
  if (resize_to <= 0 || center_crop <= 0) throw ConfigError("eval_recipe sizes must be positive");
  if (center_crop > resize_to) throw ConfigError("eval_recipe.center_crop must not exceed resize_to");
}

void to_json(nlohmann::json& j, const Normalization& n) { j = {{"mean", n.mean}, {"std", n.std}}; }

void from_json(const nlohmann::json& j, Normalization& n) {
  n.mean = j.at("mean").get<std::array<double, 3>>();
  n.std = j.at("std").get<std::array<double, 3>>();
}

void to_json(nlohmann::json& j, const SslRecipe& r) {
  j = {{"crop_size", r.crop_size},
       {"crop_scale_range", {r.crop_scale_range.first, r.crop_scale_range.second}},
       {"crop_ratio_range", {r.crop_ratio_range.first, r.crop_ratio_range.second}},
       {"flip_prob", r.flip_prob},
       {"rotation_choices", r.rotation_choices},
       {"color_jitter_strength", r.color_jitter_strength},
       {"color_jitter_prob", r.color_jitter_prob},
       {"grayscale_prob", r.grayscale_prob},
       {"blur_prob", r.blur_prob},
       {"blur_sigma_range", {r.blur_sigma_range.first, r.blur_sigma_range.second}},
       {"normalization", r.normalization}};
}

void from_json(const nlohmann::json& j, SslRecipe& r) {
  auto range = [&](const char* key) {
    const auto v = j.at(key).get<std::vector<double>>();
    if (v.size() != 2) throw ConfigError(std::string("ssl_recipe.") + key + " needs two values");
    return std::pair{v[0], v[1]};
  };
  r.crop_size = j.at("crop_size").get<int>();
  r.crop_scale_range = range("crop_scale_range");
  r.crop_ratio_range = range("crop_ratio_range");
  r.flip_prob = j.at("flip_prob").get<double>();
  r.rotation_choices = j.at("rotation_choices").get<std::vector<int>>();
  r.color_jitter_strength = j.at("color_jitter_strength").get<double>();
  r.color_jitter_prob = j.at("color_jitter_prob").get<double>();
  r.grayscale_prob = j.at("grayscale_prob").get<double>();
  r.blur_prob = j.at("blur_prob").get<double>();
  r.blur_sigma_range = range("blur_sigma_range");
  r.normalization = j.at("normalization").get<Normalization>();
}

void to_json(nlohmann::json& j, const EvalRecipe& r) {
  j = {{"resize_to", r.resize_to},
       {"center_crop", r.center_crop},
       {"train_flip", r.train_flip},
       {"normalization", r.normalization},
       {"skip_resize_for", r.skip_resize_for}};
}

void from_json(const nlohmann::json& j, EvalRecipe& r) {
  r.resize_to = j.at("resize_to").get<int>();
  r.center_crop = j.at("center_crop").get<int>();
  r.train_flip = j.at("train_flip").get<bool>();
  r.normalization = j.at("normalization").get<Normalization>();
  r.skip_resize_for.clear();
  for (const auto& name : j.at("skip_resize_for").get<std::vector<std::string>>())
    r.skip_resize_for.insert(canonicalize_class_name(name));
}

std::string to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    default: return "test";
  }
}

Tensor make_ssl_view(const Image& image, const SslRecipe& recipe, std::uint64_t seed) {
  if (image.height < recipe.crop_size || image.width < recipe.crop_size) {
    throw DimensionError("image " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                         " is smaller than crop_size " + std::to_string(recipe.crop_size));
  }
  Rng rng(seed);
  const CropWindow win = sample_crop(image, recipe, rng);
  Image view = resize_bilinear(crop(image, win.top, win.left, win.height, win.width), recipe.crop_size,
                               recipe.crop_size);
  if (rng.bernoulli(recipe.flip_prob)) view = flip_horizontal(view);
  const int degrees = recipe.rotation_choices[rng.index(recipe.rotation_choices.size())];
  view = rotate_quarter_turns(view, degrees / 90);
  if (rng.bernoulli(recipe.color_jitter_prob)) view = color_jitter(view, recipe.color_jitter_strength, rng);
  if (rng.bernoulli(recipe.grayscale_prob)) view = to_grayscale(view);
  if (rng.bernoulli(recipe.blur_prob)) {
    view = gaussian_blur(view, rng.uniform(recipe.blur_sigma_range.first, recipe.blur_sigma_range.second));
  }
  return to_tensor(view, recipe.normalization);
}

std::pair<Tensor, Tensor> make_ssl_views(const Image& image, const SslRecipe& recipe,
                                         std::uint64_t seed) {
  return {make_ssl_view(image, recipe, derive_seed(seed, 1)),
          make_ssl_view(image, recipe, derive_seed(seed, 2))};
}

FlipDraw eval_flip_draw(const EvalRecipe& recipe, Split split, std::uint64_t seed) {
  FlipDraw draw;
  if (split == Split::kTrain && recipe.train_flip) {
    Rng rng(seed);
    draw.horizontal = rng.bernoulli(0.5);
    draw.vertical = rng.bernoulli(0.5);
  }
  return draw;
}

Tensor eval_transform(const Image& image, const EvalRecipe& recipe, const std::string& dataset_name,
                      FlipDraw flips) {
  const bool skip_resize = recipe.skip_resize_for.contains(canonicalize_class_name(dataset_name));
  Image img = skip_resize ? resize_bilinear(image, recipe.center_crop, recipe.center_crop)
                          : resize_bilinear(image, recipe.resize_to, recipe.resize_to);
  if (flips.horizontal) img = flip_horizontal(img);
  if (flips.vertical) img = flip_vertical(img);
  if (!skip_resize) img = center_crop(img, recipe.center_crop);
  return to_tensor(img, recipe.normalization);
}

Tensor eval_transform(const Image& image, const EvalRecipe& recipe, Split split,
                      const std::string& dataset_name, std::uint64_t seed) {
  return eval_transform(image, recipe, dataset_name, eval_flip_draw(recipe, split, seed));
}

void ChannelStatsAccumulator::add(const Image& image) {
  const std::size_t n = static_cast<std::size_t>(image.height) * image.width;
  if (n == 0) return;
  for (int c = 0; c < 3; ++c) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += image.pixels[i * 3 + c];
    const double mean = sum / static_cast<double>(n);
    double m2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = image.pixels[i * 3 + c] - mean;
      m2 += d * d;
    }
    const double total = static_cast<double>(count_ + n);
    const double delta = mean - mean_[c];
    mean_[c] += delta * static_cast<double>(n) / total;
    m2_[c] += m2 + delta * delta * static_cast<double>(count_) * static_cast<double>(n) / total;
  }
  count_ += n;
  ++images_;
}

ChannelStats ChannelStatsAccumulator::result() const {
  if (count_ == 0) throw ValidationError("channel statistics of an empty dataset");
  ChannelStats s;
  s.pixel_count = count_;
  for (int c = 0; c < 3; ++c) {
    s.mean[c] = mean_[c];
    s.std[c] = std::sqrt(m2_[c] / static_cast<double>(count_));
  }
  return s;
}

ChannelStats channel_stats(std::span<const Image> images) {
  ChannelStatsAccumulator acc;
  for (const Image& img : images) acc.add(img);
  return acc.result();
}

}  // namespace rsrep
