#include "rsrep/commands.hpp"

#include <atomic>
#include <exception>
#include <fstream>
#include <mutex>
#include <nlohmann/json.hpp>
#include <thread>

#include "rsrep/errors.hpp"

namespace rsrep {

namespace fs = std::filesystem;

fs::path write_resolved_config(const ExperimentConfig& config) {
  const fs::path dir = config.experiment_dir();
  fs::create_directories(dir);
  const fs::path path = dir / "resolved_config.json";
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_json(config).dump(2) << '\n';
  return path;
}

namespace {

std::unique_ptr<ImageSource> select_dataset(const ExperimentConfig& config, const DatasetRef& configured,
                                            const std::optional<fs::path>& manifest, const char* role) {
  if (manifest) return open_dataset(DatasetRef{*manifest, std::nullopt}, fs::current_path());
  if (configured.empty()) {
    throw ConfigError(std::string("no ") + role + " dataset: set datasets." + role + " or pass --dataset");
  }
  return open_dataset(configured, config.base_dir);
}

Checkpoint load_backbone_checkpoint(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("checkpoint not found: " + path.string());
  return load_checkpoint(path);
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

MetricsRecord make_record(const std::string& id, const std::string& pretrain, const std::string& downstream,
                          Protocol protocol, std::optional<int> shots, std::vector<RunResult> runs) {
  MetricsRecord r;
  r.experiment_id = id;
  r.pretrain_dataset = pretrain;
  r.downstream_dataset = downstream;
  r.protocol = protocol;
  r.shots = shots;
  r.aggregate = aggregate_runs(runs);
  r.timestamp = utc_timestamp();
  r.provenance = Provenance::kMeasured;
  r.runs = std::move(runs);
  return r;
}

void require_new_id(const MetricsStore& store, const std::string& id) {
  MetricsQuery q;
  q.experiment_id = id;
  if (!store.load(q).empty()) {
    throw ConfigError("experiment_id '" + id + "' already exists in " + store.path().string() +
                      "; choose a new experiment_id");
  }
}

}  // namespace

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, jobs)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> threads;
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

PretrainOutcome cmd_pretrain(const ExperimentConfig& config, const std::optional<fs::path>& dataset_manifest,
                             std::ostream& log) {
  config.validate();
  const auto source = select_dataset(config, config.pretrain_dataset, dataset_manifest, "pretrain");
  write_resolved_config(config);
  const fs::path out_dir = config.experiment_dir() / "pretrain";
  fs::create_directories(out_dir);

  PretrainConfig pc = config.pretrain;
  if (pc.init.kind == InitSpec::Kind::kExternal) pc.init.path = config.resolve(pc.init.path);
  SimSiamModel model = init_model(config.encoder, config.predictor, pc.init, pc.seed);
  PretrainOptions options;
  options.output_dir = out_dir;
  const std::int64_t every = std::max<std::int64_t>(1, pc.total_iterations / 10);
  options.on_step = [&](const TrainState& s) {
    if ((s.iteration + 1) % every == 0) {
      log << "iteration " << s.iteration + 1 << "/" << pc.total_iterations << "  loss " << s.loss << "  lr " << s.lr
          << "  collapse " << s.collapse_stat << '\n';
    }
  };
  const PretrainResult result = pretrain(model, *source, pc, config.ssl_recipe, options);
  PretrainOutcome outcome;
  outcome.checkpoint = out_dir / "final.rsrep";
  outcome.checkpoint_hash = result.final_hash;
  outcome.final_loss = result.trace.back().loss;
  outcome.trace = out_dir / "loss_trace.jsonl";
  return outcome;
}

TransferOutcome cmd_finetune(const ExperimentConfig& config, const fs::path& checkpoint,
                             const std::optional<fs::path>& dataset_manifest, int jobs, std::ostream& log) {
  config.validate();
  const Checkpoint ckpt = load_backbone_checkpoint(checkpoint);
  const auto source = select_dataset(config, config.downstream_dataset, dataset_manifest, "downstream");
  write_resolved_config(config);
  const std::string id = config.experiment_id + "/finetune/" + source->name();
  MetricsStore store(config.store_path());
  require_new_id(store, id);
  const SplitSpec split = stratified_split(*source, config.split_ratios, config.split_seed);

  std::vector<RunResult> runs(config.seeds.size());
  parallel_for(config.seeds.size(), jobs, [&](std::size_t i) {
    FinetuneConfig fc = config.finetune;
    fc.seed = config.seeds[i];
    runs[i] = finetune(ckpt, *source, split, fc);
  });
  for (const auto& r : runs) log << r.run_id << "  accuracy " << r.global_accuracy << '\n';

  TransferOutcome outcome;
  outcome.output_dir = config.experiment_dir() / "finetune";
  outcome.records.push_back(
      make_record(id, ckpt.source_dataset, source->name(), Protocol::kFinetune, std::nullopt, runs));
  write_json(outcome.output_dir / (source->name() + ".json"), outcome.records.back());
  store.persist(outcome.records.back());
  return outcome;
}

TransferOutcome cmd_lineval(const ExperimentConfig& config, const fs::path& checkpoint,
                            const std::optional<fs::path>& dataset_manifest, const std::vector<int>& shots,
                            int jobs, std::ostream& log) {
  LinearEvalConfig base = config.linear_eval;
  if (!shots.empty()) base.shots = shots;
  base.validate();
  config.validate();
  const Checkpoint ckpt = load_backbone_checkpoint(checkpoint);
  const auto source = select_dataset(config, config.downstream_dataset, dataset_manifest, "downstream");
  write_resolved_config(config);
  const SplitSpec split = stratified_split(*source, config.split_ratios, config.split_seed);

  TransferOutcome outcome;
  outcome.output_dir = config.experiment_dir() / "lineval";
  MetricsStore store(config.store_path());
  const auto record_id = [&](int n) {
    return config.experiment_id + "/lineval/" + source->name() + "/" + std::to_string(n) + "shot";
  };
  for (int n : base.shots) require_new_id(store, record_id(n));
  for (int n : base.shots) {
    std::vector<RunResult> runs(config.seeds.size());
    parallel_for(config.seeds.size(), jobs, [&](std::size_t i) {
      LinearEvalConfig lc = base;
      lc.seed = config.seeds[i];
      // Few-shot draws are re-sampled for every run seed.
      const FewShotSpec draw = few_shot_sample(split, n, lc.seed);
      runs[i] = linear_eval(ckpt, *source, split, draw, lc);
    });
    for (const auto& r : runs) log << r.run_id << "  accuracy " << r.global_accuracy << '\n';
    outcome.records.push_back(make_record(record_id(n), ckpt.source_dataset, source->name(), Protocol::kLinearEval, n, runs));
    write_json(outcome.output_dir / (source->name() + "_" + std::to_string(n) + "shot.json"),
               outcome.records.back());
    store.persist(outcome.records.back());
  }
  return outcome;
}

void to_json(nlohmann::json& j, const SimilarityOutcome& s) {
  j = {{"pretrain_dataset", s.pretrain_dataset},
       {"downstream_dataset", s.downstream_dataset},
       {"shared_classes", s.shared},
       {"downstream_classes", s.downstream_classes},
       {"similarity", s.fraction},
       {"aliases_used", s.aliases_used}};
}

SimilarityOutcome cmd_similarity(const fs::path& pretrain_manifest, const fs::path& downstream_manifest,
                                 const std::optional<fs::path>& alias_file, std::ostream& log) {
  const DatasetManifest pre = parse_manifest(pretrain_manifest);
  const DatasetManifest down = parse_manifest(downstream_manifest);
  std::optional<AliasMap> aliases;
  if (alias_file) {
    if (fs::exists(*alias_file)) {
      aliases = AliasMap::load(*alias_file);
    } else {
      log << "warning: alias file " << alias_file->string() << " not found; matching exact names only\n";
    }
  }
  SimilarityOutcome s;
  s.pretrain_dataset = pre.name;
  s.downstream_dataset = down.name;
  s.shared = shared_classes(pre.classes, down.classes, aliases ? &*aliases : nullptr);
  s.downstream_classes = down.classes.size();
  s.fraction = static_cast<double>(s.shared.size()) / static_cast<double>(s.downstream_classes);
  s.aliases_used = aliases.has_value();
  return s;
}

ReportOutcome cmd_report(const fs::path& store, const std::vector<TableLayout>& layouts, const fs::path& out_dir) {
  if (!fs::exists(store)) throw ConfigError("metrics store not found: " + store.string());
  const auto records = MetricsStore(store).load();
  fs::create_directories(out_dir);
  ReportOutcome outcome;
  for (TableLayout layout : layouts) {
    const std::string text = to_text(render_table(records, layout));
    const fs::path path = out_dir / (to_string(layout) + ".txt");
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    outcome.files.push_back(path);
    outcome.text += text + "\n";
  }
  const bool has_linear = std::any_of(records.begin(), records.end(),
                                      [](const MetricsRecord& r) { return r.protocol == Protocol::kLinearEval; });
  if (has_linear) {
    const fs::path svg = out_dir / "shots.svg";
    outcome.files.push_back(svg);
    outcome.files.push_back(emit_plot(records, svg));
  }
  return outcome;
}

}  // namespace rsrep
