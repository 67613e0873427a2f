#include "rsrep/transfer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <nlohmann/json.hpp>
#include <numeric>

#include "rsrep/errors.hpp"
#include "rsrep/hash.hpp"
#include "rsrep/random.hpp"

namespace rsrep {

namespace {

constexpr std::uint64_t kHeadStream = 0x11;
constexpr std::uint64_t kShuffleStream = 0x12;
constexpr std::uint64_t kFlipStream = 0x13;

void validate_common(const char* section, int batch_size, int epochs, const AdamOptions& adam,
                     const PlateauOptions& plateau, const EvalRecipe& eval) {
  const std::string s(section);
  if (batch_size < 1) throw ConfigError(s + ".batch_size must be positive");
  if (epochs < 1) throw ConfigError(s + ".epochs must be positive");
  try {
    adam.validate();
    plateau.validate();
    eval.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(s + "." + e.what());
  }
}

}  // namespace

void FinetuneConfig::validate() const { validate_common("finetune", batch_size, epochs, adam, plateau, eval); }

void LinearEvalConfig::validate() const {
  validate_common("linear_eval", batch_size, epochs, adam, plateau, eval);
  for (int n : shots)
    if (n < 1) throw ConfigError("linear_eval.shots must be positive");
}

void to_json(nlohmann::json& j, const AdamOptions& o) {
  j = {{"lr", o.lr}, {"beta1", o.beta1}, {"beta2", o.beta2}, {"eps", o.eps}, {"weight_decay", o.weight_decay}};
}

void from_json(const nlohmann::json& j, AdamOptions& o) {
  o.lr = j.at("lr").get<double>();
  o.beta1 = j.at("beta1").get<double>();
  o.beta2 = j.at("beta2").get<double>();
  o.eps = j.at("eps").get<double>();
  o.weight_decay = j.at("weight_decay").get<double>();
}

void to_json(nlohmann::json& j, const PlateauOptions& o) {
  j = {{"monitor", "val_accuracy"},
       {"patience", o.patience},
       {"factor", o.factor},
       {"min_lr", o.min_lr},
       {"threshold", o.threshold}};
}

void from_json(const nlohmann::json& j, PlateauOptions& o) {
  if (j.at("monitor").get<std::string>() != "val_accuracy") {
    throw ConfigError("plateau.monitor: only \"val_accuracy\" is supported");
  }
  o.patience = j.at("patience").get<int>();
  o.factor = j.at("factor").get<double>();
  o.min_lr = j.at("min_lr").get<double>();
  o.threshold = j.at("threshold").get<double>();
}

void to_json(nlohmann::json& j, const FinetuneConfig& c) {
  j = {{"batch_size", c.batch_size}, {"adam", c.adam}, {"plateau", c.plateau},
       {"epochs", c.epochs},         {"seed", c.seed}, {"eval", c.eval}};
}

void from_json(const nlohmann::json& j, FinetuneConfig& c) {
  c.batch_size = j.at("batch_size").get<int>();
  c.adam = j.at("adam").get<AdamOptions>();
  c.plateau = j.at("plateau").get<PlateauOptions>();
  c.epochs = j.at("epochs").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.eval = j.at("eval").get<EvalRecipe>();
}

void to_json(nlohmann::json& j, const LinearEvalConfig& c) {
  j = {{"batch_size", c.batch_size}, {"adam", c.adam}, {"plateau", c.plateau}, {"epochs", c.epochs},
       {"seed", c.seed},             {"eval", c.eval}, {"shots", c.shots},     {"head_only", true}};
}

void from_json(const nlohmann::json& j, LinearEvalConfig& c) {
  if (!j.at("head_only").get<bool>()) throw ConfigError("linear_eval.head_only cannot be disabled");
  c.batch_size = j.at("batch_size").get<int>();
  c.adam = j.at("adam").get<AdamOptions>();
  c.plateau = j.at("plateau").get<PlateauOptions>();
  c.epochs = j.at("epochs").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.eval = j.at("eval").get<EvalRecipe>();
  c.shots = j.at("shots").get<std::vector<int>>();
}

std::string config_hash(const FinetuneConfig& c) {
  nlohmann::json j = c;
  j.erase("seed");
  j["protocol"] = "finetune";
  return sha256_hex(j.dump());
}

std::string config_hash(const LinearEvalConfig& c, int shots) {
  nlohmann::json j = c;
  j.erase("seed");
  j.erase("shots");
  j["protocol"] = "linear_eval";
  j["shots_per_class"] = shots;
  return sha256_hex(j.dump());
}

// ---------------------------------------------------------------- classifier

Classifier::Classifier(std::unique_ptr<Sequential> backbone, int feature_dim, int num_classes,
                       bool freeze_backbone)
    : backbone_(std::move(backbone)),
      head_(feature_dim, num_classes, true),
      frozen_(freeze_backbone),
      num_classes_(num_classes) {
  if (num_classes < 2) throw ConfigError("a classifier needs at least 2 classes");
}

Tensor Classifier::features(const Tensor& x, Mode mode, Cache& cache) {
  return backbone_->forward(x, frozen_ ? Mode::kEval : mode, cache);
}

Tensor Classifier::logits(const Tensor& x, Mode mode) {
  Cache cache;
  return head_.forward(normalize_features(features(x, mode, cache)), mode);
}

double Classifier::train_batch(const Tensor& x, const std::vector<int>& labels) {
  Cache backbone_cache, head_cache;
  const Tensor feats = normalize_features(features(x, Mode::kTrain, backbone_cache));
  const Tensor out = head_.forward(feats, Mode::kTrain, head_cache);
  Tensor dlogits;
  const double loss = softmax_cross_entropy(out, labels, &dlogits);
  Tensor dfeats = head_.backward(dlogits, head_cache);
  if (!frozen_) {
    if (!feature_inv_std_.empty()) {
      const int d = dfeats.dim(1);
      for (std::size_t i = 0; i < dfeats.size(); ++i) dfeats[i] *= feature_inv_std_[i % d];
    }
    backbone_->backward(dfeats, backbone_cache);
  }
  return loss;
}

void Classifier::set_feature_normalization(std::vector<double> mean, std::vector<double> std) {
  if (mean.size() != std.size() || (!mean.empty() && mean.size() != static_cast<std::size_t>(head_.in_features()))) {
    throw DimensionError("feature normalization width does not match the head");
  }
  feature_mean_ = std::move(mean);
  feature_inv_std_.clear();
  for (double s : std) feature_inv_std_.push_back(s > 1e-12 ? 1.0 / s : 1.0);
}

Tensor Classifier::normalize_features(const Tensor& feats) const {
  if (feature_mean_.empty()) return feats;
  Tensor out = feats;
  const int d = feats.dim(1);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (out[i] - feature_mean_[i % d]) * feature_inv_std_[i % d];
  return out;
}

std::vector<NamedParameter> Classifier::named_parameters() {
  std::vector<NamedParameter> params;
  std::vector<NamedBuffer> buffers;
  if (!frozen_) backbone_->collect("backbone.", params, buffers);
  head_.collect("head.", params, buffers);
  return params;
}

std::vector<Parameter*> Classifier::trainable_parameters() {
  std::vector<Parameter*> out;
  for (const auto& p : named_parameters()) out.push_back(p.param);
  return out;
}

std::size_t Classifier::trainable_parameter_count() {
  std::size_t n = 0;
  for (Parameter* p : trainable_parameters()) n += p->value.size();
  return n;
}

Classifier build_classifier(const Checkpoint& ckpt, int num_classes, bool freeze_backbone, std::uint64_t seed) {
  if (num_classes < 2) throw ConfigError("num_classes must be at least 2, got " + std::to_string(num_classes));
  auto backbone = build_backbone(ckpt.encoder.backbone);
  std::vector<NamedParameter> params;
  std::vector<NamedBuffer> buffers;
  backbone->collect("encoder.backbone.", params, buffers);
  auto assign = [&](const std::string& name, Tensor& target) {
    const Tensor* src = ckpt.find(name);
    if (!src) throw ValidationError("checkpoint lacks backbone tensor " + name);
    if (!src->same_shape(target)) {
      throw ValidationError("checkpoint tensor " + name + " has shape " + shape_string(src->shape()) +
                            ", backbone expects " + shape_string(target.shape()));
    }
    target = *src;
  };
  for (auto& p : params) assign(p.name, p.param->value);
  for (auto& b : buffers) assign(b.name, *b.tensor);
  Classifier model(std::move(backbone), ckpt.encoder.backbone.feature_dim, num_classes, freeze_backbone);
  Rng rng(derive_seed(seed, kHeadStream));
  model.head().initialize(rng);
  return model;
}

double softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels, Tensor* dlogits) {
  if (logits.rank() != 2 || static_cast<std::size_t>(logits.dim(0)) != labels.size() || labels.empty()) {
    throw DimensionError("cross entropy: logits " + shape_string(logits.shape()) + " vs " +
                         std::to_string(labels.size()) + " labels");
  }
  const int n = logits.dim(0), k = logits.dim(1);
  if (dlogits) *dlogits = Tensor(logits.shape());
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    if (labels[i] < 0 || labels[i] >= k) throw ValidationError("cross entropy: label out of range");
    double mx = logits.at(i, 0);
    for (int c = 1; c < k; ++c) mx = std::max(mx, logits.at(i, c));
    double z = 0.0;
    for (int c = 0; c < k; ++c) z += std::exp(logits.at(i, c) - mx);
    total += std::log(z) + mx - logits.at(i, labels[i]);
    if (dlogits) {
      for (int c = 0; c < k; ++c)
        dlogits->at(i, c) = (std::exp(logits.at(i, c) - mx) / z - (c == labels[i] ? 1.0 : 0.0)) / n;
    }
  }
  return total / n;
}

// ---------------------------------------------------------------- metrics

double global_accuracy(const std::vector<int>& predictions, const std::vector<int>& labels) {
  if (predictions.empty()) throw ValidationError("accuracy of an empty prediction set");
  if (predictions.size() != labels.size()) throw ValidationError("predictions and labels differ in length");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += predictions[i] == labels[i];
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

std::vector<std::vector<std::size_t>> confusion_matrix(const std::vector<int>& predictions,
                                                       const std::vector<int>& labels, int num_classes) {
  if (predictions.size() != labels.size()) throw ValidationError("predictions and labels differ in length");
  std::vector<std::vector<std::size_t>> m(num_classes, std::vector<std::size_t>(num_classes, 0));
  for (std::size_t i = 0; i < labels.size(); ++i) ++m.at(labels[i]).at(predictions[i]);
  return m;
}

AggregateResult aggregate_runs(const std::vector<RunResult>& results) {
  if (results.empty()) throw ValidationError("aggregate_runs needs at least one result");
  for (const auto& r : results) {
    if (r.config_hash != results.front().config_hash) {
      throw ValidationError("aggregate_runs: run " + r.run_id + " has config hash " + r.config_hash +
                            ", expected " + results.front().config_hash);
    }
  }
  AggregateResult a;
  a.n_runs = static_cast<int>(results.size());
  double sum = 0.0;
  a.min_accuracy = a.max_accuracy = results.front().global_accuracy;
  for (const auto& r : results) {
    sum += r.global_accuracy;
    a.min_accuracy = std::min(a.min_accuracy, r.global_accuracy);
    a.max_accuracy = std::max(a.max_accuracy, r.global_accuracy);
    a.run_ids.push_back(r.run_id);
  }
  a.mean_accuracy = sum / a.n_runs;
  if (a.n_runs > 1) {
    double sq = 0.0;
    for (const auto& r : results) sq += (r.global_accuracy - a.mean_accuracy) * (r.global_accuracy - a.mean_accuracy);
    a.std_accuracy = std::sqrt(sq / (a.n_runs - 1));
    a.std_defined = true;
  }
  return a;
}

void to_json(nlohmann::json& j, const RunResult& r) {
  j = {{"run_id", r.run_id},
       {"seed", r.seed},
       {"global_accuracy", r.global_accuracy},
       {"per_class_accuracy", r.per_class_accuracy},
       {"config_hash", r.config_hash},
       {"checkpoint_hash", r.checkpoint_hash},
       {"best_epoch", r.best_epoch},
       {"shots", r.shots ? nlohmann::json(*r.shots) : nlohmann::json(nullptr)}};
}

void from_json(const nlohmann::json& j, RunResult& r) {
  r.run_id = j.at("run_id").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.global_accuracy = j.at("global_accuracy").get<double>();
  r.per_class_accuracy = j.at("per_class_accuracy").get<std::vector<double>>();
  r.config_hash = j.at("config_hash").get<std::string>();
  r.checkpoint_hash = j.at("checkpoint_hash").get<std::string>();
  r.best_epoch = j.at("best_epoch").get<int>();
  r.shots = j.at("shots").is_null() ? std::nullopt : std::optional<int>(j.at("shots").get<int>());
}

void to_json(nlohmann::json& j, const AggregateResult& a) {
  j = {{"mean_accuracy", a.mean_accuracy}, {"std_accuracy", a.std_accuracy}, {"std_defined", a.std_defined},
       {"n_runs", a.n_runs},               {"run_ids", a.run_ids},           {"min_accuracy", a.min_accuracy},
       {"max_accuracy", a.max_accuracy}};
}

void from_json(const nlohmann::json& j, AggregateResult& a) {
  a.mean_accuracy = j.at("mean_accuracy").get<double>();
  a.std_accuracy = j.at("std_accuracy").get<double>();
  a.std_defined = j.at("std_defined").get<bool>();
  a.n_runs = j.at("n_runs").get<int>();
  a.run_ids = j.at("run_ids").get<std::vector<std::string>>();
  a.min_accuracy = j.at("min_accuracy").get<double>();
  a.max_accuracy = j.at("max_accuracy").get<double>();
}

// ---------------------------------------------------------------- training

namespace {

struct Snapshot {
  std::vector<Tensor> params;
  std::vector<Tensor> buffers;
};

Snapshot take_snapshot(Classifier& model) {
  Snapshot s;
  for (Parameter* p : model.trainable_parameters()) s.params.push_back(p->value);
  if (!model.frozen())
    for (const auto& b : buffers_of(model.backbone())) s.buffers.push_back(*b.tensor);
  return s;
}

void apply_snapshot(Classifier& model, const Snapshot& s) {
  auto params = model.trainable_parameters();
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = s.params[i];
  if (!model.frozen()) {
    auto buffers = buffers_of(model.backbone());
    for (std::size_t i = 0; i < buffers.size(); ++i) *buffers[i].tensor = s.buffers[i];
  }
}

int argmax_row(const Tensor& t, int row) {
  int best = 0;
  for (int c = 1; c < t.dim(1); ++c)
    if (t.at(row, c) > t.at(row, best)) best = c;
  return best;
}

// Batch boundaries over n items; a trailing batch of one is merged into its
// predecessor because batch-norm training needs at least two samples.
std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t n, int batch_size) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t start = 0; start < n; start += batch_size)
    out.emplace_back(start, std::min(n, start + static_cast<std::size_t>(batch_size)));
  if (out.size() > 1 && out.back().second - out.back().first == 1) {
    out[out.size() - 2].second = out.back().second;
    out.pop_back();
  }
  return out;
}

class Evaluator {
 public:
  Evaluator(Classifier& model, const ImageSource& source, const TrainLoopOptions& options)
      : model_(model), source_(source), options_(options) {}

  Tensor input(std::size_t id, FlipDraw flips) const {
    return eval_transform(source_.image(id), options_.eval, source_.name(), flips);
  }

  // Frozen backbones are pure functions in inference mode, so their
  // features can be memoized per (sample, flip combination).
  Tensor frozen_features(const std::vector<std::size_t>& ids, const std::vector<FlipDraw>& flips) {
    std::vector<Tensor> missing_inputs;
    std::vector<std::pair<std::size_t, int>> missing_keys;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      const auto key = std::pair{ids[k], flips[k].index()};
      if (!cache_.contains(key) &&
          std::find(missing_keys.begin(), missing_keys.end(), key) == missing_keys.end()) {
        missing_keys.push_back(key);
        missing_inputs.push_back(input(ids[k], flips[k]));
      }
    }
    for (std::size_t start = 0; start < missing_inputs.size(); start += 64) {
      const std::size_t end = std::min(missing_inputs.size(), start + 64);
      Cache cache;
      const Tensor f = model_.features(
          stack(std::span<const Tensor>(missing_inputs.data() + start, end - start)), Mode::kEval, cache);
      const int d = f.dim(1);
      for (std::size_t k = start; k < end; ++k) {
        std::vector<double> row(f.data() + (k - start) * d, f.data() + (k - start + 1) * d);
        cache_.emplace(missing_keys[k], std::move(row));
      }
    }
    const int d = static_cast<int>(cache_.at({ids[0], flips[0].index()}).size());
    Tensor out({static_cast<int>(ids.size()), d});
    for (std::size_t k = 0; k < ids.size(); ++k) {
      const auto& row = cache_.at({ids[k], flips[k].index()});
      std::copy(row.begin(), row.end(), out.data() + k * d);
    }
    return out;
  }

  std::vector<int> predict(const std::vector<std::size_t>& ids) {
    std::vector<int> preds;
    for (std::size_t start = 0; start < ids.size(); start += 64) {
      const std::size_t end = std::min(ids.size(), start + 64);
      const std::vector<std::size_t> chunk(ids.begin() + start, ids.begin() + end);
      Tensor logits;
      if (model_.frozen()) {
        logits = model_.head().forward(
            model_.normalize_features(frozen_features(chunk, std::vector<FlipDraw>(chunk.size()))), Mode::kEval);
      } else {
        std::vector<Tensor> xs;
        for (std::size_t id : chunk) xs.push_back(input(id, {}));
        logits = model_.logits(stack(xs), Mode::kEval);
      }
      for (int i = 0; i < logits.dim(0); ++i) preds.push_back(argmax_row(logits, i));
    }
    return preds;
  }

 private:
  Classifier& model_;
  const ImageSource& source_;
  const TrainLoopOptions& options_;
  std::map<std::pair<std::size_t, int>, std::vector<double>> cache_;
};

std::vector<int> labels_of(const ImageSource& source, const std::vector<std::size_t>& ids) {
  std::vector<int> out;
  for (std::size_t id : ids) out.push_back(source.label(id));
  return out;
}

}  // namespace

TrainLoopResult train_classifier(Classifier& model, const ImageSource& source, const RunSamples& samples,
                                 const TrainLoopOptions& options) {
  if (samples.train.empty()) throw ValidationError("train split is empty");
  if (samples.val.empty()) throw ValidationError("validation split is empty");
  if (samples.test.empty()) throw ValidationError("test split is empty");
  if (options.epochs < 1 || options.batch_size < 1) throw ConfigError("epochs and batch_size must be positive");

  Evaluator evaluator(model, source, options);
  if (model.frozen()) {
    // Standardize with statistics of the unflipped training features.
    const Tensor f = evaluator.frozen_features(samples.train, std::vector<FlipDraw>(samples.train.size()));
    const int n = f.dim(0), d = f.dim(1);
    std::vector<double> mean(d, 0.0), sd(d, 0.0);
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < d; ++k) mean[k] += f.at(i, k) / n;
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < d; ++k) sd[k] += (f.at(i, k) - mean[k]) * (f.at(i, k) - mean[k]) / n;
    for (double& v : sd) v = std::sqrt(v);
    model.set_feature_normalization(std::move(mean), std::move(sd));
  }
  Adam adam(model.trainable_parameters(), options.adam);
  ReduceLrOnPlateau plateau(options.adam.lr, options.plateau);
  const auto val_labels = labels_of(source, samples.val);

  TrainLoopResult result;
  double best_val = -1.0;
  Snapshot best;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::vector<std::size_t> order = samples.train;
    Rng shuffle_rng(derive_seed(options.seed, kShuffleStream, epoch));
    shuffle_rng.shuffle(order);
    for (const auto& [begin, end] : batch_ranges(order.size(), options.batch_size)) {
      std::vector<std::size_t> ids(order.begin() + begin, order.begin() + end);
      std::vector<FlipDraw> flips;
      std::vector<int> labels;
      for (std::size_t id : ids) {
        flips.push_back(eval_flip_draw(options.eval, Split::kTrain, derive_seed(options.seed, kFlipStream, epoch, id)));
        labels.push_back(source.label(id));
      }
      for (Parameter* p : model.trainable_parameters()) p->zero_grad();
      if (model.frozen()) {
        const Tensor feats = model.normalize_features(evaluator.frozen_features(ids, flips));
        Cache cache;
        const Tensor logits = model.head().forward(feats, Mode::kTrain, cache);
        Tensor dlogits;
        softmax_cross_entropy(logits, labels, &dlogits);
        model.head().backward(dlogits, cache);
      } else {
        std::vector<Tensor> xs;
        for (std::size_t k = 0; k < ids.size(); ++k) xs.push_back(evaluator.input(ids[k], flips[k]));
        model.train_batch(stack(xs), labels);
      }
      adam.step();
    }
    const double val_acc = global_accuracy(evaluator.predict(samples.val), val_labels);
    result.val_history.push_back(val_acc);
    adam.set_lr(plateau.observe(val_acc));
    result.lr_history.push_back(adam.lr());
    if (val_acc > best_val) {
      best_val = val_acc;
      result.best_epoch = epoch;
      best = take_snapshot(model);
    }
  }
  apply_snapshot(model, best);

  const auto test_labels = labels_of(source, samples.test);
  const auto preds = evaluator.predict(samples.test);
  result.test_accuracy = global_accuracy(preds, test_labels);
  const auto cm = confusion_matrix(preds, test_labels, model.num_classes());
  for (int c = 0; c < model.num_classes(); ++c) {
    const std::size_t total = std::accumulate(cm[c].begin(), cm[c].end(), std::size_t{0});
    result.per_class_accuracy.push_back(total ? static_cast<double>(cm[c][c]) / total : 0.0);
  }
  return result;
}

namespace {

RunResult to_run_result(const std::string& protocol, const TrainLoopResult& r, std::uint64_t seed,
                        std::string cfg_hash, const Checkpoint& ckpt, std::optional<int> shots) {
  RunResult out;
  out.seed = seed;
  out.global_accuracy = r.test_accuracy;
  out.per_class_accuracy = r.per_class_accuracy;
  out.config_hash = std::move(cfg_hash);
  out.checkpoint_hash = checkpoint_hash(ckpt);
  out.best_epoch = r.best_epoch;
  out.shots = shots;
  out.run_id = protocol + (shots ? "-" + std::to_string(*shots) + "shot" : std::string()) + "-" +
               out.config_hash.substr(0, 8) + "-seed" + std::to_string(seed);
  return out;
}

}  // namespace

RunResult finetune(const Checkpoint& ckpt, const ImageSource& source, const SplitSpec& split,
                   const FinetuneConfig& config) {
  config.validate();
  Classifier model = build_classifier(ckpt, static_cast<int>(source.num_classes()), false, config.seed);
  const RunSamples samples{split.indices(Split::kTrain), split.indices(Split::kVal), split.indices(Split::kTest)};
  const TrainLoopOptions options{config.batch_size, config.adam, config.plateau, config.epochs, config.seed,
                                 config.eval};
  const TrainLoopResult r = train_classifier(model, source, samples, options);
  return to_run_result("finetune", r, config.seed, config_hash(config), ckpt, std::nullopt);
}

RunResult linear_eval(const Checkpoint& ckpt, const ImageSource& source, const SplitSpec& split,
                      const FewShotSpec& shots, const LinearEvalConfig& config) {
  config.validate();
  Classifier model = build_classifier(ckpt, static_cast<int>(source.num_classes()), true, config.seed);
  return linear_eval(model, ckpt, source, split, shots, config);
}

RunResult linear_eval(Classifier& model, const Checkpoint& ckpt, const ImageSource& source, const SplitSpec& split,
                      const FewShotSpec& shots, const LinearEvalConfig& config) {
  config.validate();
  if (!model.frozen()) throw ConfigError("linear evaluation needs a frozen backbone");
  const std::string before = state_hash(model.backbone());
  const RunSamples samples{shots.indices, split.indices(Split::kVal), split.indices(Split::kTest)};
  const TrainLoopOptions options{config.batch_size, config.adam, config.plateau, config.epochs, config.seed,
                                 config.eval};
  const TrainLoopResult r = train_classifier(model, source, samples, options);
  if (state_hash(model.backbone()) != before) {
    throw NumericalError("linear evaluation modified the frozen backbone");
  }
  return to_run_result("lineval", r, config.seed, config_hash(config, shots.shots_per_class), ckpt,
                       shots.shots_per_class);
}

}  // namespace rsrep
