#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "rsrep/augmentation.hpp"
#include "rsrep/checkpoint.hpp"
#include "rsrep/optim.hpp"
#include "rsrep/simsiam.hpp"
#include "rsrep/source.hpp"

namespace rsrep {

struct InitSpec {
  enum class Kind { kRandom, kExternal };
  Kind kind = Kind::kRandom;
  /// Checkpoint supplying backbone weights when kind == kExternal.
  std::filesystem::path path;
  bool operator==(const InitSpec&) const = default;
};

struct PretrainConfig {
  int batch_size = 128;
  double base_lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 1e-5;
  std::int64_t total_iterations = 100000;
  /// Empty means the default {0.6 T, 0.8 T}.
  std::vector<std::int64_t> milestones;
  double gamma = 0.1;
  /// Name substrings of parameters exempt from weight decay.
  std::vector<std::string> weight_decay_exclude;
  InitSpec init;
  std::uint64_t seed = 0;
  /// 0 writes only the final checkpoint.
  std::int64_t checkpoint_every = 0;

  void validate() const;
  std::vector<std::int64_t> resolved_milestones() const;
  MultiStepSchedule schedule() const;
  bool operator==(const PretrainConfig&) const = default;
};

void to_json(nlohmann::json& j, const InitSpec& s);
void from_json(const nlohmann::json& j, InitSpec& s);
/// Milestones are always written resolved.
void to_json(nlohmann::json& j, const PretrainConfig& c);
void from_json(const nlohmann::json& j, PretrainConfig& c);

double lr_at(const PretrainConfig& config, std::int64_t iteration);

/// One line of the loss trace.
struct TrainState {
  std::int64_t iteration = 0;
  double lr = 0.0;
  double loss = 0.0;
  double collapse_stat = 0.0;
  double wall_ms = 0.0;
};

std::string trace_line(const TrainState& s);
TrainState parse_trace_line(const std::string& line);
std::vector<TrainState> read_trace(const std::filesystem::path& path);
/// Equality of everything but wall-clock time.
bool same_trajectory(const std::vector<TrainState>& a, const std::vector<TrainState>& b);

/// Builds and seeds a model. With external init the backbone tensors
/// (parameters and batch-norm statistics) are copied from the checkpoint;
/// the projection and prediction heads keep their fresh initialization.
/// Throws ConfigError naming the first mismatched backbone tensor.
SimSiamModel init_model(const EncoderSpec& encoder, const PredictorSpec& predictor, const InitSpec& init,
                        std::uint64_t seed);

/// Augmented two-view batch; sample k is seeded by (seed, epochs[k], ids[k]).
ViewPair make_view_batch(const ImageSource& source, const std::vector<std::size_t>& ids,
                         const std::vector<std::int64_t>& epochs, const SslRecipe& recipe,
                         std::uint64_t seed);

/// Epoch-wise shuffled sampling without replacement.
class BatchSampler {
 public:
  BatchSampler(std::size_t dataset_size, int batch_size, std::uint64_t seed);

  struct Batch {
    std::vector<std::size_t> ids;
    std::vector<std::int64_t> epochs;
  };
  Batch batch(std::int64_t iteration);

 private:
  const std::vector<std::size_t>& permutation(std::int64_t epoch);

  std::size_t n_;
  int batch_size_;
  std::uint64_t seed_;
  std::int64_t cached_epoch_ = -1;
  std::vector<std::size_t> cached_;
};

struct PretrainOptions {
  /// When set, the loss trace and checkpoints are written here.
  std::filesystem::path output_dir;
  /// Test switch: false lets gradients flow through the target branch.
  bool stop_gradient = true;
  std::function<void(const TrainState&)> on_step;
};

struct CheckpointRecord {
  std::int64_t iteration = 0;
  std::filesystem::path path;
  std::string hash;
};

struct PretrainResult {
  std::vector<TrainState> trace;
  std::vector<CheckpointRecord> checkpoints;
  Checkpoint final_checkpoint;
  std::string final_hash;
};

/// Momentum-SGD SimSiam training for config.total_iterations steps. Throws
/// NumericalError (with iteration, batch ids, and collapse statistic) if the
/// loss becomes non-finite.
PretrainResult pretrain(SimSiamModel& model, const ImageSource& source, const PretrainConfig& config,
                        const SslRecipe& recipe, const PretrainOptions& options = {});

}  // namespace rsrep
