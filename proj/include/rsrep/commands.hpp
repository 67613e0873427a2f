#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "rsrep/experiment.hpp"
#include "rsrep/reporting.hpp"

namespace rsrep {

/// Writes <experiment_dir>/resolved_config.json; returns its path.
std::filesystem::path write_resolved_config(const ExperimentConfig& config);

struct PretrainOutcome {
  std::filesystem::path checkpoint;
  std::string checkpoint_hash;
  double final_loss = 0.0;
  std::filesystem::path trace;
};

/// SimSiam pre-training on the configured (or overriding) dataset; outputs go
/// to <experiment_dir>/pretrain/.
PretrainOutcome cmd_pretrain(const ExperimentConfig& config,
                             const std::optional<std::filesystem::path>& dataset_manifest, std::ostream& log);

struct TransferOutcome {
  std::vector<MetricsRecord> records;
  std::filesystem::path output_dir;
};

/// Fine-tunes the checkpoint once per configured seed, aggregates, and
/// persists one record. Throws ConfigError if the checkpoint is missing.
TransferOutcome cmd_finetune(const ExperimentConfig& config, const std::filesystem::path& checkpoint,
                             const std::optional<std::filesystem::path>& dataset_manifest, int jobs,
                             std::ostream& log);

/// Linear evaluation for each shot count (the config's grid when `shots` is
/// empty), one aggregated record per count.
TransferOutcome cmd_lineval(const ExperimentConfig& config, const std::filesystem::path& checkpoint,
                            const std::optional<std::filesystem::path>& dataset_manifest,
                            const std::vector<int>& shots, int jobs, std::ostream& log);

struct SimilarityOutcome {
  std::string pretrain_dataset;
  std::string downstream_dataset;
  std::vector<std::string> shared;
  std::size_t downstream_classes = 0;
  double fraction = 0.0;
  bool aliases_used = false;
};

void to_json(nlohmann::json& j, const SimilarityOutcome& s);

/// Class similarity of `downstream` to `pretrain`. A missing alias file is
/// reported on `log` and matching falls back to names and per-class aliases.
SimilarityOutcome cmd_similarity(const std::filesystem::path& pretrain_manifest,
                                 const std::filesystem::path& downstream_manifest,
                                 const std::optional<std::filesystem::path>& alias_file, std::ostream& log);

struct ReportOutcome {
  std::vector<std::filesystem::path> files;
  std::string text;
};

/// Renders each layout to <out_dir>/<layout>.txt and, when linear-evaluation
/// records exist, the accuracy-vs-shots plot to <out_dir>/shots.svg (+ .tsv).
ReportOutcome cmd_report(const std::filesystem::path& store, const std::vector<TableLayout>& layouts,
                         const std::filesystem::path& out_dir);

/// Runs fn(i) for i in [0, n) on up to `jobs` threads; results are placed by
/// index so the outcome does not depend on scheduling. The first exception is
/// rethrown after all workers finish.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

}  // namespace rsrep
