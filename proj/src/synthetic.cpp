#include "rsrep/synthetic.hpp"

#include <cmath>
#include <nlohmann/json.hpp>

#include "rsrep/errors.hpp"
#include "rsrep/random.hpp"

namespace rsrep {

void SyntheticSpec::validate() const {
  if (num_classes < 2) throw ConfigError("synthetic.num_classes must be at least 2");
  if (images_per_class < 1) throw ConfigError("synthetic.images_per_class must be positive");
  if (image_size < 4) throw ConfigError("synthetic.image_size must be at least 4");
  if (!(contrast >= 0.0 && contrast <= 1.0)) throw ConfigError("synthetic.contrast must lie in [0, 1]");
  if (!(tint >= 0.0 && tint < 1.0)) throw ConfigError("synthetic.tint must lie in [0, 1)");
  if (!(brightness >= 0.0 && brightness < 0.5)) throw ConfigError("synthetic.brightness must lie in [0, 0.5)");
  if (!(frequency_min > 0.0 && frequency_min <= frequency_max && frequency_max <= 0.5)) {
    throw ConfigError("synthetic.frequency_min/max must satisfy 0 < min <= max <= 0.5");
  }
  if (!(noise >= 0.0)) throw ConfigError("synthetic.noise must be non-negative");
}

void to_json(nlohmann::json& j, const SyntheticSpec& s) {
  j = {{"num_classes", s.num_classes}, {"images_per_class", s.images_per_class}, {"image_size", s.image_size},
       {"contrast", s.contrast},       {"frequency_min", s.frequency_min},       {"frequency_max", s.frequency_max},
       {"tint", s.tint},               {"brightness", s.brightness},             {"noise", s.noise},
       {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, SyntheticSpec& s) {
  s.num_classes = j.at("num_classes").get<int>();
  s.images_per_class = j.at("images_per_class").get<int>();
  s.image_size = j.at("image_size").get<int>();
  s.contrast = j.at("contrast").get<double>();
  s.frequency_min = j.at("frequency_min").get<double>();
  s.frequency_max = j.at("frequency_max").get<double>();
  s.tint = j.at("tint").get<double>();
  s.brightness = j.at("brightness").get<double>();
  s.noise = j.at("noise").get<double>();
  s.seed = j.at("seed").get<std::uint64_t>();
}

Image synthetic_image(const SyntheticSpec& spec, int label, int index) {
  Rng rng(derive_seed(spec.seed, label, index));
  const double spread = M_PI / spec.num_classes;
  const double theta = label * spread + rng.uniform(-0.25, 0.25) * spread;
  const double freq = std::exp(rng.uniform(std::log(spec.frequency_min), std::log(spec.frequency_max)));
  const double phase = rng.uniform(0.0, 2.0 * M_PI);
  const double brightness = 0.5 + rng.uniform(-spec.brightness, spec.brightness);
  std::array<double, 3> tint;
  for (double& t : tint) t = 1.0 + rng.uniform(-spec.tint, spec.tint);
  const double cx = std::cos(theta), sy = std::sin(theta);
  Image img(spec.image_size, spec.image_size);
  for (int y = 0; y < spec.image_size; ++y)
    for (int x = 0; x < spec.image_size; ++x) {
      const double wave = std::sin(2.0 * M_PI * freq * (x * cx + y * sy) + phase);
      const double v = brightness * (1.0 + 0.5 * spec.contrast * wave);
      for (int c = 0; c < 3; ++c)
        img.at(y, x, c) = static_cast<float>(std::clamp(v * tint[c] + spec.noise * rng.normal(), 0.0, 1.0));
    }
  return img;
}

InMemorySource make_synthetic(const SyntheticSpec& spec, const std::string& name) {
  spec.validate();
  std::vector<std::string> classes;
  std::vector<Image> images;
  std::vector<int> labels;
  for (int c = 0; c < spec.num_classes; ++c) {
    classes.push_back("orientation_" + std::to_string(c));
    for (int i = 0; i < spec.images_per_class; ++i) {
      images.push_back(synthetic_image(spec, c, i));
      labels.push_back(c);
    }
  }
  return InMemorySource(name, std::move(classes), std::move(images), std::move(labels));
}

}  // namespace rsrep
