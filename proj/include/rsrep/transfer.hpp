#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "rsrep/augmentation.hpp"
#include "rsrep/checkpoint.hpp"
#include "rsrep/dataset.hpp"
#include "rsrep/optim.hpp"
#include "rsrep/source.hpp"

namespace rsrep {

/// Full fine-tuning: Adam over every parameter, reduce-on-plateau on
/// validation accuracy, best-validation weights evaluated on test.
struct FinetuneConfig {
  int batch_size = 64;
  AdamOptions adam{1e-4};
  PlateauOptions plateau;
  int epochs = 100;
  std::uint64_t seed = 0;
  EvalRecipe eval;

  void validate() const;
  bool operator==(const FinetuneConfig&) const = default;
};

/// Few-shot linear evaluation: only the linear head trains; the backbone
/// runs in inference mode and never changes.
struct LinearEvalConfig {
  int batch_size = 64;
  AdamOptions adam{1e-2};
  PlateauOptions plateau;
  int epochs = 100;
  std::uint64_t seed = 0;
  EvalRecipe eval;
  /// Default shot grid; any positive count is accepted.
  std::vector<int> shots{5, 10, 20, 50};

  void validate() const;
  bool operator==(const LinearEvalConfig&) const = default;
};

void to_json(nlohmann::json& j, const AdamOptions& o);
void from_json(const nlohmann::json& j, AdamOptions& o);
void to_json(nlohmann::json& j, const PlateauOptions& o);
void from_json(const nlohmann::json& j, PlateauOptions& o);
void to_json(nlohmann::json& j, const FinetuneConfig& c);
void from_json(const nlohmann::json& j, FinetuneConfig& c);
/// Carries "head_only": true; reading false is a ConfigError.
void to_json(nlohmann::json& j, const LinearEvalConfig& c);
void from_json(const nlohmann::json& j, LinearEvalConfig& c);

/// SHA-256 of the configuration with the seed removed, so runs that differ
/// only by seed share a hash.
std::string config_hash(const FinetuneConfig& c);
std::string config_hash(const LinearEvalConfig& c, int shots);

/// Backbone features followed by one linear layer of width num_classes.
class Classifier {
 public:
  Classifier(std::unique_ptr<Sequential> backbone, int feature_dim, int num_classes, bool freeze_backbone);

  /// Frozen backbones always run in inference mode.
  Tensor features(const Tensor& x, Mode mode, Cache& cache);
  Tensor logits(const Tensor& x, Mode mode);

  /// One softmax cross-entropy step's forward and backward; returns the mean
  /// loss. Gradients accumulate into trainable_parameters().
  double train_batch(const Tensor& x, const std::vector<int>& labels);

  /// Fixed per-dimension standardization applied to features before the
  /// head (not trainable). Empty vectors disable it.
  void set_feature_normalization(std::vector<double> mean, std::vector<double> std);
  Tensor normalize_features(const Tensor& feats) const;

  std::vector<Parameter*> trainable_parameters();
  std::vector<NamedParameter> named_parameters();
  std::size_t trainable_parameter_count();

  Sequential& backbone() { return *backbone_; }
  Linear& head() { return head_; }
  bool frozen() const { return frozen_; }
  int num_classes() const { return num_classes_; }

 private:
  std::unique_ptr<Sequential> backbone_;
  Linear head_;
  bool frozen_;
  int num_classes_;
  std::vector<double> feature_mean_;
  std::vector<double> feature_inv_std_;
};

/// Backbone weights and batch-norm statistics taken from `ckpt`; head freshly
/// initialized from `seed`. Throws ConfigError if num_classes < 2 and
/// ValidationError if the checkpoint lacks a backbone tensor.
Classifier build_classifier(const Checkpoint& ckpt, int num_classes, bool freeze_backbone, std::uint64_t seed);

/// Softmax cross-entropy averaged over the batch; fills dlogits.
double softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels, Tensor* dlogits);

struct RunResult {
  std::string run_id;
  std::uint64_t seed = 0;
  double global_accuracy = 0.0;
  std::vector<double> per_class_accuracy;
  std::string config_hash;
  std::string checkpoint_hash;
  int best_epoch = 0;
  std::optional<int> shots;
  bool operator==(const RunResult&) const = default;
};

struct AggregateResult {
  double mean_accuracy = 0.0;
  /// Sample standard deviation; 0 with std_defined = false for one run.
  double std_accuracy = 0.0;
  bool std_defined = false;
  int n_runs = 0;
  std::vector<std::string> run_ids;
  double min_accuracy = 0.0;
  double max_accuracy = 0.0;
  bool operator==(const AggregateResult&) const = default;
};

void to_json(nlohmann::json& j, const RunResult& r);
void from_json(const nlohmann::json& j, RunResult& r);
void to_json(nlohmann::json& j, const AggregateResult& a);
void from_json(const nlohmann::json& j, AggregateResult& a);

/// Micro (overall) top-1 accuracy. Throws ValidationError on empty or
/// unequal inputs.
double global_accuracy(const std::vector<int>& predictions, const std::vector<int>& labels);
/// counts[true][predicted].
std::vector<std::vector<std::size_t>> confusion_matrix(const std::vector<int>& predictions,
                                                       const std::vector<int>& labels, int num_classes);

/// Throws ValidationError on an empty list or mixed config hashes.
AggregateResult aggregate_runs(const std::vector<RunResult>& results);

/// Which samples a supervised run trains, validates, and tests on.
struct RunSamples {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

struct TrainLoopOptions {
  int batch_size = 64;
  AdamOptions adam;
  PlateauOptions plateau;
  int epochs = 1;
  std::uint64_t seed = 0;
  EvalRecipe eval;
};

struct TrainLoopResult {
  double test_accuracy = 0.0;
  std::vector<double> per_class_accuracy;
  std::vector<double> val_history;
  std::vector<double> lr_history;
  int best_epoch = 0;
};

/// Shared supervised loop behind finetune and linear_eval. Throws
/// ValidationError if any of the three sample lists is empty.
TrainLoopResult train_classifier(Classifier& model, const ImageSource& source, const RunSamples& samples,
                                 const TrainLoopOptions& options);

RunResult finetune(const Checkpoint& ckpt, const ImageSource& source, const SplitSpec& split,
                   const FinetuneConfig& config);

/// Trains the head on the few-shot draw, evaluates on the full test split.
/// Throws NumericalError if the backbone state hash changes (it never should).
RunResult linear_eval(const Checkpoint& ckpt, const ImageSource& source, const SplitSpec& split,
                      const FewShotSpec& shots, const LinearEvalConfig& config);

/// Same, on a caller-built classifier whose backbone must be frozen; `ckpt`
/// only supplies the recorded checkpoint hash.
RunResult linear_eval(Classifier& model, const Checkpoint& ckpt, const ImageSource& source, const SplitSpec& split,
                      const FewShotSpec& shots, const LinearEvalConfig& config);

}  // namespace rsrep
