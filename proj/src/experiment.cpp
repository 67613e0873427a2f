#include "rsrep/experiment.hpp"

#include <cstdlib>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "rsrep/errors.hpp"

namespace rsrep {

void to_json(nlohmann::json& j, const DatasetRef& d) {
  if (d.synthetic) {
    j = {{"synthetic", *d.synthetic}};
  } else if (!d.manifest.empty()) {
    j = {{"manifest", d.manifest.string()}};
  } else {
    j = nullptr;
  }
}

void from_json(const nlohmann::json& j, DatasetRef& d) {
  d = DatasetRef{};
  if (j.is_null()) return;
  if (!j.is_object() || j.size() != 1 || (!j.contains("manifest") && !j.contains("synthetic"))) {
    throw ConfigError("a dataset is {\"manifest\": path} or {\"synthetic\": {...}}");
  }
  if (j.contains("manifest")) d.manifest = expand_env(j.at("manifest").get<std::string>());
  if (j.contains("synthetic")) d.synthetic = j.at("synthetic").get<SyntheticSpec>();
}

std::unique_ptr<ImageSource> open_dataset(const DatasetRef& ref, const std::filesystem::path& base_dir) {
  if (ref.synthetic) return std::make_unique<InMemorySource>(make_synthetic(*ref.synthetic));
  if (ref.manifest.empty()) throw ConfigError("no dataset given");
  const auto path = ref.manifest.is_absolute() ? ref.manifest : base_dir / ref.manifest;
  return std::make_unique<ManifestSource>(load_manifest(path));
}

std::string expand_env(const std::string& text) {
  std::string out;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '$' && i + 1 < text.size() && text[i + 1] == '{') {
      const std::size_t close = text.find('}', i + 2);
      if (close == std::string::npos) throw ConfigError("unterminated ${ in \"" + text + "\"");
      const std::string name = text.substr(i + 2, close - i - 2);
      const char* value = std::getenv(name.c_str());
      if (!value) throw ConfigError("environment variable " + name + " is not set (used in \"" + text + "\")");
      out += value;
      i = close;
    } else {
      out += text[i];
    }
  }
  return out;
}

void ExperimentConfig::validate() const {
  if (experiment_id.empty()) throw ConfigError("experiment_id must not be empty");
  if (experiment_id.find_first_of("/\\") != std::string::npos || experiment_id == "." || experiment_id == "..") {
    throw ConfigError("experiment_id must be a plain directory name");
  }
  if (seeds.empty()) throw ConfigError("seeds must not be empty");
  double sum = 0.0;
  for (double r : split_ratios) {
    if (!(r >= 0.0)) throw ConfigError("split.ratios must be non-negative");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("split.ratios must sum to 1");
  const auto within = [](const std::string& path, const auto& check) {
    try {
      check();
    } catch (const ConfigError& e) {
      const std::string what = e.what();
      throw ConfigError(what.rfind(path, 0) == 0 ? what : path + ": " + what);
    }
  };
  within("datasets.pretrain.synthetic", [&] {
    if (pretrain_dataset.synthetic) pretrain_dataset.synthetic->validate();
  });
  within("datasets.downstream.synthetic", [&] {
    if (downstream_dataset.synthetic) downstream_dataset.synthetic->validate();
  });
  within("model.encoder", [&] { encoder.validate(); });
  within("model.predictor", [&] { predictor.validate(); });
  if (predictor.in_dim != encoder.proj_out_dim || predictor.out_dim != encoder.proj_out_dim) {
    throw ConfigError("model.predictor.in_dim and out_dim must equal model.encoder.proj_out_dim (" +
                      std::to_string(encoder.proj_out_dim) + ")");
  }
  within("ssl_recipe", [&] { ssl_recipe.validate(); });
  if (ssl_recipe.crop_size != encoder.backbone.input_size) {
    throw ConfigError("ssl_recipe.crop_size must equal model.encoder.backbone.input_size (" +
                      std::to_string(encoder.backbone.input_size) + ")");
  }
  within("pretrain", [&] { pretrain.validate(); });
  within("finetune", [&] { finetune.validate(); });
  within("linear_eval", [&] { linear_eval.validate(); });
}

std::filesystem::path ExperimentConfig::resolve(const std::filesystem::path& p) const {
  return p.is_absolute() ? p : base_dir / p;
}

std::filesystem::path ExperimentConfig::experiment_dir() const { return output_dir / experiment_id; }

std::filesystem::path ExperimentConfig::store_path() const {
  return metrics_store.empty() ? output_dir / "metrics.jsonl" : metrics_store;
}

nlohmann::json to_json(const ExperimentConfig& c) {
  return {{"experiment_id", c.experiment_id},
          {"output_dir", c.output_dir.string()},
          {"metrics_store", c.metrics_store.string()},
          {"seeds", c.seeds},
          {"datasets",
           {{"pretrain", c.pretrain_dataset}, {"downstream", c.downstream_dataset}, {"aliases", c.aliases.string()}}},
          {"split", {{"ratios", c.split_ratios}, {"seed", c.split_seed}}},
          {"model", {{"encoder", c.encoder}, {"predictor", c.predictor}}},
          {"ssl_recipe", c.ssl_recipe},
          {"pretrain", c.pretrain},
          {"finetune", c.finetune},
          {"linear_eval", c.linear_eval}};
}

namespace {

bool is_dataset_path(const std::string& path) {
  return path == "datasets.pretrain" || path == "datasets.downstream";
}

std::string type_name(const nlohmann::json& j) {
  if (j.is_number_float()) return "number";
  if (j.is_number()) return "integer";
  return j.type_name();
}

bool compatible(const nlohmann::json& def, const nlohmann::json& user) {
  if (def.is_number_float()) return user.is_number();
  if (def.is_number_unsigned()) return user.is_number_unsigned() || (user.is_number_integer() && user.get<std::int64_t>() >= 0);
  if (def.is_number_integer()) return user.is_number_integer();
  return def.type() == user.type();
}

void overlay(nlohmann::json& target, const nlohmann::json& user, const std::string& path) {
  if (!user.is_object()) throw ConfigError((path.empty() ? std::string("config") : path) + ": expected an object");
  for (const auto& [key, value] : user.items()) {
    const std::string field = path.empty() ? key : path + "." + key;
    if (!target.contains(key)) throw ConfigError(field + ": unknown key");
    nlohmann::json& slot = target[key];
    if (is_dataset_path(field)) {
      nlohmann::json resolved = value;
      if (value.is_object() && value.size() == 1 && value.contains("synthetic")) {
        resolved = {{"synthetic", SyntheticSpec{}}};
        overlay(resolved, value, field);
      }
      try {
        (void)resolved.get<DatasetRef>();
      } catch (const ConfigError& e) {
        throw ConfigError(field + ": " + e.what());
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError(field + ": " + e.what());
      }
      slot = resolved;
      continue;
    }
    if (slot.is_object()) {
      overlay(slot, value, field);
    } else if (slot.is_null() || compatible(slot, value)) {
      slot = value;
    } else if (slot.is_array() && !value.is_array()) {
      throw ConfigError(field + ": expected an array, got " + type_name(value));
    } else {
      throw ConfigError(field + ": expected " + type_name(slot) + ", got " + type_name(value));
    }
  }
}

}  // namespace

ExperimentConfig parse_experiment_config(const nlohmann::json& user, const std::filesystem::path& base_dir) {
  nlohmann::json merged = to_json(ExperimentConfig{});
  overlay(merged, user, "");
  ExperimentConfig c;
  try {
    c.experiment_id = merged.at("experiment_id").get<std::string>();
    c.output_dir = expand_env(merged.at("output_dir").get<std::string>());
    c.metrics_store = expand_env(merged.at("metrics_store").get<std::string>());
    c.seeds = merged.at("seeds").get<std::vector<std::uint64_t>>();
    const auto& ds = merged.at("datasets");
    c.pretrain_dataset = ds.at("pretrain").get<DatasetRef>();
    c.downstream_dataset = ds.at("downstream").get<DatasetRef>();
    c.aliases = expand_env(ds.at("aliases").get<std::string>());
    const auto ratios = merged.at("split").at("ratios").get<std::vector<double>>();
    if (ratios.size() != 3) throw ConfigError("split.ratios needs three values (train, val, test)");
    c.split_ratios = {ratios[0], ratios[1], ratios[2]};
    c.split_seed = merged.at("split").at("seed").get<std::uint64_t>();
    c.encoder = merged.at("model").at("encoder").get<EncoderSpec>();
    c.predictor = merged.at("model").at("predictor").get<PredictorSpec>();
    c.ssl_recipe = merged.at("ssl_recipe").get<SslRecipe>();
    c.pretrain = merged.at("pretrain").get<PretrainConfig>();
    c.finetune = merged.at("finetune").get<FinetuneConfig>();
    c.linear_eval = merged.at("linear_eval").get<LinearEvalConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  // Milestones given relative to the default were written resolved; an
  // explicit empty list keeps the default.
  if (!user.contains("pretrain") || !user.at("pretrain").contains("milestones")) c.pretrain.milestones.clear();
  c.base_dir = base_dir;
  c.validate();
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  nlohmann::json user;
  try {
    user = nlohmann::json::parse(buf.str());
  } catch (const nlohmann::json::parse_error& e) {
    // Translate the byte offset into a line and column.
    const std::string text = buf.str();
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ConfigError(path.string() + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " + e.what());
  }
  const auto dir = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  try {
    return parse_experiment_config(user, dir);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

}  // namespace rsrep
