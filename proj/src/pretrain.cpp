#include "rsrep/pretrain.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>
#include <sstream>

#include "rsrep/errors.hpp"
#include "rsrep/random.hpp"

namespace rsrep {

namespace {

constexpr std::uint64_t kInitStream = 0x1;
constexpr std::uint64_t kBatchStream = 0x2;
constexpr std::uint64_t kViewStream = 0x3;

}  // namespace

// ---------------------------------------------------------------- config

void PretrainConfig::validate() const {
  if (batch_size < 2) throw ConfigError("pretrain.batch_size must be at least 2");
  if (!(base_lr > 0.0)) throw ConfigError("pretrain.base_lr must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("pretrain.momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("pretrain.weight_decay must be non-negative");
  if (total_iterations <= 0) throw ConfigError("pretrain.total_iterations must be positive");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("pretrain.gamma must lie in (0, 1]");
  if (checkpoint_every < 0) throw ConfigError("pretrain.checkpoint_every must be non-negative");
  for (std::size_t i = 0; i < milestones.size(); ++i) {
    if (milestones[i] <= 0 || milestones[i] >= total_iterations) {
      throw ConfigError("pretrain.milestones must lie in (0, total_iterations)");
    }
    if (i > 0 && milestones[i] <= milestones[i - 1]) {
      throw ConfigError("pretrain.milestones must be strictly increasing");
    }
  }
  if (init.kind == InitSpec::Kind::kExternal && init.path.empty()) {
    throw ConfigError("pretrain.init.path is required for external weights");
  }
}

std::vector<std::int64_t> PretrainConfig::resolved_milestones() const {
  if (!milestones.empty()) return milestones;
  std::vector<std::int64_t> out;
  for (double f : {0.6, 0.8}) {
    const auto m = static_cast<std::int64_t>(std::llround(f * static_cast<double>(total_iterations)));
    if (m > 0 && m < total_iterations && (out.empty() || m > out.back())) out.push_back(m);
  }
  return out;
}

MultiStepSchedule PretrainConfig::schedule() const { return {base_lr, resolved_milestones(), gamma}; }

double lr_at(const PretrainConfig& config, std::int64_t iteration) {
  return config.schedule().lr_at(iteration);
}

void to_json(nlohmann::json& j, const InitSpec& s) {
  j = {{"kind", s.kind == InitSpec::Kind::kRandom ? "random" : "external"}, {"path", s.path.string()}};
}

void from_json(const nlohmann::json& j, InitSpec& s) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "random") s.kind = InitSpec::Kind::kRandom;
  else if (kind == "external") s.kind = InitSpec::Kind::kExternal;
  else throw ConfigError("pretrain.init.kind must be \"random\" or \"external\", got \"" + kind + "\"");
  s.path = j.at("path").get<std::string>();
}

void to_json(nlohmann::json& j, const PretrainConfig& c) {
  j = {{"batch_size", c.batch_size},
       {"base_lr", c.base_lr},
       {"momentum", c.momentum},
       {"weight_decay", c.weight_decay},
       {"total_iterations", c.total_iterations},
       {"milestones", c.resolved_milestones()},
       {"gamma", c.gamma},
       {"weight_decay_exclude", c.weight_decay_exclude},
       {"init", c.init},
       {"seed", c.seed},
       {"checkpoint_every", c.checkpoint_every}};
}

void from_json(const nlohmann::json& j, PretrainConfig& c) {
  c.batch_size = j.at("batch_size").get<int>();
  c.base_lr = j.at("base_lr").get<double>();
  c.momentum = j.at("momentum").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.total_iterations = j.at("total_iterations").get<std::int64_t>();
  c.milestones = j.at("milestones").get<std::vector<std::int64_t>>();
  c.gamma = j.at("gamma").get<double>();
  c.weight_decay_exclude = j.at("weight_decay_exclude").get<std::vector<std::string>>();
  c.init = j.at("init").get<InitSpec>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.checkpoint_every = j.at("checkpoint_every").get<std::int64_t>();
}

// ---------------------------------------------------------------- trace

std::string trace_line(const TrainState& s) {
  const nlohmann::json j = {{"iteration", s.iteration},
                            {"lr", s.lr},
                            {"loss", s.loss},
                            {"collapse_stat", s.collapse_stat},
                            {"wall_ms", s.wall_ms}};
  return j.dump();
}

TrainState parse_trace_line(const std::string& line) {
  const auto j = nlohmann::json::parse(line);
  return {j.at("iteration").get<std::int64_t>(), j.at("lr").get<double>(), j.at("loss").get<double>(),
          j.at("collapse_stat").get<double>(), j.at("wall_ms").get<double>()};
}

std::vector<TrainState> read_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open loss trace " + path.string());
  std::vector<TrainState> out;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(parse_trace_line(line));
  return out;
}

bool same_trajectory(const std::vector<TrainState>& a, const std::vector<TrainState>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].iteration != b[i].iteration || a[i].lr != b[i].lr || a[i].loss != b[i].loss ||
        a[i].collapse_stat != b[i].collapse_stat) {
      return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------- init

SimSiamModel init_model(const EncoderSpec& encoder, const PredictorSpec& predictor, const InitSpec& init,
                        std::uint64_t seed) {
  SimSiamModel model(encoder, predictor);
  model.initialize(derive_seed(seed, kInitStream));
  if (init.kind == InitSpec::Kind::kRandom) return model;

  if (!std::filesystem::exists(init.path)) {
    throw IoError("external weights not found: " + init.path.string());
  }
  const Checkpoint source = load_checkpoint(init.path);
  std::vector<NamedParameter> params;
  std::vector<NamedBuffer> buffers;
  model.encoder().backbone().collect("encoder.backbone.", params, buffers);
  std::vector<std::pair<std::string, Tensor*>> targets;
  for (auto& p : params) targets.emplace_back(p.name, &p.param->value);
  for (auto& b : buffers) targets.emplace_back(b.name, b.tensor);

  std::size_t source_backbone = 0;
  for (const auto& t : source.tensors)
    if (t.name.rfind("encoder.backbone.", 0) == 0) ++source_backbone;

  for (const auto& [name, tensor] : targets) {
    const Tensor* found = source.find(name);
    if (found == nullptr) {
      throw ConfigError("external weights " + init.path.string() + ": backbone layer '" + name +
                        "' is missing");
    }
    if (!found->same_shape(*tensor)) {
      throw ConfigError("external weights " + init.path.string() + ": backbone layer '" + name +
                        "' has shape " + shape_string(found->shape()) + ", expected " +
                        shape_string(tensor->shape()));
    }
  }
  if (source_backbone != targets.size()) {
    for (const auto& t : source.tensors) {
      if (t.name.rfind("encoder.backbone.", 0) != 0) continue;
      const bool known = std::any_of(targets.begin(), targets.end(), [&](const auto& e) { return e.first == t.name; });
      if (!known) {
        throw ConfigError("external weights " + init.path.string() + ": unexpected backbone layer '" + t.name +
                          "'");
      }
    }
  }
  for (auto& [name, tensor] : targets) *tensor = *source.find(name);
  return model;
}

// ---------------------------------------------------------------- batches

ViewPair make_view_batch(const ImageSource& source, const std::vector<std::size_t>& ids,
                         const std::vector<std::int64_t>& epochs, const SslRecipe& recipe,
                         std::uint64_t seed) {
  if (ids.size() != epochs.size()) throw DimensionError("make_view_batch: ids and epochs differ in length");
  std::vector<Tensor> first, second;
  first.reserve(ids.size());
  second.reserve(ids.size());
  for (std::size_t k = 0; k < ids.size(); ++k) {
    auto [a, b] = make_ssl_views(source.image(ids[k]), recipe, derive_seed(seed, kViewStream, epochs[k], ids[k]));
    first.push_back(std::move(a));
    second.push_back(std::move(b));
  }
  return {stack(first), stack(second)};
}

BatchSampler::BatchSampler(std::size_t dataset_size, int batch_size, std::uint64_t seed)
    : n_(dataset_size), batch_size_(batch_size), seed_(seed) {
  if (n_ == 0) throw ValidationError("cannot sample batches from an empty dataset");
  if (batch_size_ <= 0) throw ConfigError("batch size must be positive");
}

const std::vector<std::size_t>& BatchSampler::permutation(std::int64_t epoch) {
  if (epoch != cached_epoch_) {
    cached_.resize(n_);
    std::iota(cached_.begin(), cached_.end(), std::size_t{0});
    Rng rng(derive_seed(seed_, kBatchStream, epoch));
    rng.shuffle(cached_);
    cached_epoch_ = epoch;
  }
  return cached_;
}

BatchSampler::Batch BatchSampler::batch(std::int64_t iteration) {
  Batch b;
  const auto start = static_cast<std::uint64_t>(iteration) * static_cast<std::uint64_t>(batch_size_);
  for (int k = 0; k < batch_size_; ++k) {
    const std::uint64_t g = start + static_cast<std::uint64_t>(k);
    const auto epoch = static_cast<std::int64_t>(g / n_);
    b.ids.push_back(permutation(epoch)[g % n_]);
    b.epochs.push_back(epoch);
  }
  return b;
}

// ---------------------------------------------------------------- loop

PretrainResult pretrain(SimSiamModel& model, const ImageSource& source, const PretrainConfig& config,
                        const SslRecipe& recipe, const PretrainOptions& options) {
  config.validate();
  recipe.validate();
  if (source.size() == 0) throw ValidationError("pretrain: dataset '" + source.name() + "' is empty");

  const MultiStepSchedule schedule = config.schedule();
  MomentumSgd sgd(model.parameters(), config.momentum, config.weight_decay, config.weight_decay_exclude);
  BatchSampler sampler(source.size(), config.batch_size, config.seed);
  const LossOptions loss_options{options.stop_gradient};

  std::ofstream trace_out;
  if (!options.output_dir.empty()) {
    std::filesystem::create_directories(options.output_dir);
    trace_out.open(options.output_dir / "loss_trace.jsonl");
    if (!trace_out) throw IoError("cannot write loss trace in " + options.output_dir.string());
  }

  PretrainResult result;
  auto write_checkpoint = [&](std::int64_t iteration, const std::string& file) {
    Checkpoint ckpt = capture(model, iteration, source.name());
    CheckpointRecord record{iteration, {}, {}};
    if (!options.output_dir.empty()) {
      record.path = options.output_dir / file;
      record.hash = save_checkpoint(record.path, ckpt);
    } else {
      record.hash = checkpoint_hash(ckpt);
    }
    result.checkpoints.push_back(record);
    return std::pair{std::move(ckpt), record.hash};
  };

  for (std::int64_t it = 0; it < config.total_iterations; ++it) {
    const auto t0 = std::chrono::steady_clock::now();
    const BatchSampler::Batch batch = sampler.batch(it);
    const ViewPair views = make_view_batch(source, batch.ids, batch.epochs, recipe, config.seed);

    const double lr = schedule.lr_at(it);
    const SimSiamModel::Step step = model.forward_backward(views, loss_options);
    const double collapse = collapse_statistic(step.outputs.z1);
    if (!std::isfinite(step.loss)) {
      std::ostringstream msg;
      msg << "non-finite loss at iteration " << it << " (collapse statistic " << collapse << ", batch ids";
      for (std::size_t id : batch.ids) msg << ' ' << id;
      msg << ')';
      throw NumericalError(msg.str());
    }
    try {
      sgd.step(lr);
    } catch (const NumericalError& e) {
      throw NumericalError(std::string(e.what()) + " at iteration " + std::to_string(it));
    }

    TrainState state{it, lr, step.loss, collapse, 0.0};
    state.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    result.trace.push_back(state);
    if (trace_out.is_open()) trace_out << trace_line(state) << '\n';
    if (options.on_step) options.on_step(state);

    const std::int64_t done = it + 1;
    if (config.checkpoint_every > 0 && done % config.checkpoint_every == 0 && done < config.total_iterations) {
      write_checkpoint(done, "checkpoint_" + std::to_string(done) + ".rsrep");
    }
  }
  auto [final_ckpt, hash] = write_checkpoint(config.total_iterations, "final.rsrep");
  result.final_checkpoint = std::move(final_ckpt);
  result.final_hash = hash;
  return result;
}

}  // namespace rsrep
