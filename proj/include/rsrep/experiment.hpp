#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "rsrep/augmentation.hpp"
#include "rsrep/dataset.hpp"
#include "rsrep/pretrain.hpp"
#include "rsrep/simsiam.hpp"
#include "rsrep/source.hpp"
#include "rsrep/synthetic.hpp"
#include "rsrep/transfer.hpp"

namespace rsrep {

/// Either a dataset manifest on disk or a procedurally generated set.
struct DatasetRef {
  std::filesystem::path manifest;
  std::optional<SyntheticSpec> synthetic;

  bool empty() const { return manifest.empty() && !synthetic; }
  bool operator==(const DatasetRef&) const = default;
};

void to_json(nlohmann::json& j, const DatasetRef& d);
void from_json(const nlohmann::json& j, DatasetRef& d);

/// Opens the dataset, resolving relative manifest paths against `base_dir`.
/// Throws ConfigError when the reference is empty.
std::unique_ptr<ImageSource> open_dataset(const DatasetRef& ref, const std::filesystem::path& base_dir);

/// Everything one experiment needs, loaded from a single JSON file.
struct ExperimentConfig {
  std::string experiment_id = "experiment";
  std::filesystem::path output_dir = "out";
  /// Empty means <output_dir>/metrics.jsonl.
  std::filesystem::path metrics_store;
  /// One transfer run per seed; the seed replaces finetune.seed and
  /// linear_eval.seed.
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  DatasetRef pretrain_dataset;
  DatasetRef downstream_dataset;
  /// Optional class-name synonym table for similarity.
  std::filesystem::path aliases;
  SplitRatios split_ratios{0.6, 0.2, 0.2};
  std::uint64_t split_seed = 0;
  EncoderSpec encoder;
  PredictorSpec predictor;
  SslRecipe ssl_recipe;
  PretrainConfig pretrain;
  FinetuneConfig finetune;
  LinearEvalConfig linear_eval;
  /// Directory that relative input paths (manifests, aliases, external
  /// weights) resolve against; output paths stay relative to the working
  /// directory. Not serialized.
  std::filesystem::path base_dir = ".";

  void validate() const;
  std::filesystem::path resolve(const std::filesystem::path& p) const;
  std::filesystem::path experiment_dir() const;
  std::filesystem::path store_path() const;
  bool operator==(const ExperimentConfig&) const = default;
};

/// Fully expanded form: every defaulted field is present.
nlohmann::json to_json(const ExperimentConfig& c);

/// Overlays `user` on the defaults. Unknown keys and type mismatches raise
/// ConfigError naming the field path; so does any failed validation.
ExperimentConfig parse_experiment_config(const nlohmann::json& user,
                                         const std::filesystem::path& base_dir = ".");
/// Reads a JSON file; syntax errors report line and column. Relative paths
/// in the file resolve against its directory.
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Replaces ${NAME} with the environment variable NAME; an unset variable is
/// a ConfigError.
std::string expand_env(const std::string& text);

}  // namespace rsrep
