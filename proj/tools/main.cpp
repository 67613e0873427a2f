#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "rsrep/commands.hpp"
#include "rsrep/errors.hpp"

namespace fs = std::filesystem;
using namespace rsrep;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct Common {
  std::string config;
  std::string dataset;
  std::string checkpoint;
  std::string out;
  std::vector<std::uint64_t> seeds;
  std::vector<int> shots;
  int jobs = 1;
  bool dry_run = false;
};

ExperimentConfig load_with_overrides(const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{} : load_experiment_config(c.config);
  if (!c.out.empty()) {
    cfg.output_dir = fs::absolute(c.out);
  }
  if (!c.seeds.empty()) cfg.seeds = c.seeds;
  if (!c.shots.empty()) cfg.linear_eval.shots = c.shots;
  cfg.validate();
  return cfg;
}

std::optional<fs::path> optional_path(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return fs::path(s);
}

void print_records(const std::vector<MetricsRecord>& records) {
  for (const auto& r : records) {
    std::printf("%s: mean %.4f", r.experiment_id.c_str(), r.aggregate.mean_accuracy);
    if (r.aggregate.std_defined) std::printf(" (std %.4f)", r.aggregate.std_accuracy);
    std::printf(" over %d runs\n", r.aggregate.n_runs);
  }
}

void add_config_options(CLI::App* cmd, Common& c, bool needs_checkpoint) {
  cmd->add_option("--config", c.config, "Experiment configuration (JSON)");
  cmd->add_option("--dataset", c.dataset, "Dataset manifest overriding the configured one");
  if (needs_checkpoint) cmd->add_option("--checkpoint", c.checkpoint, "Pre-trained checkpoint")->required();
  cmd->add_option("--seeds", c.seeds, "Run seeds, e.g. --seeds 0,1,2")->delimiter(',');
  cmd->add_option("--jobs", c.jobs, "Seeds evaluated in parallel")->check(CLI::PositiveNumber);
  cmd->add_option("--out", c.out, "Output root; results go to <out>/<experiment_id>/");
  cmd->add_flag("--dry-run", c.dry_run, "Validate and print the resolved configuration only");
}

int dry_run(const ExperimentConfig& cfg) {
  std::cout << to_json(cfg).dump(2) << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-supervised pre-training and transfer evaluation for remote-sensing scene classification"};
  app.require_subcommand(1);
  Common c;

  auto* pretrain_cmd = app.add_subcommand("pretrain", "SimSiam pre-training");
  add_config_options(pretrain_cmd, c, false);

  auto* finetune_cmd = app.add_subcommand("finetune", "Full fine-tuning over the configured seeds");
  add_config_options(finetune_cmd, c, true);

  auto* lineval_cmd = app.add_subcommand("lineval", "Few-shot linear evaluation over the configured seeds");
  add_config_options(lineval_cmd, c, true);
  lineval_cmd->add_option("--shots", c.shots, "Images per class, e.g. --shots 5,10")->delimiter(',');

  std::string pre_manifest, down_manifest, alias_file, sim_out;
  auto* sim_cmd = app.add_subcommand("similarity", "Class similarity of a downstream dataset to a pre-training one");
  sim_cmd->add_option("--pretrain", pre_manifest, "Pre-training dataset manifest")->required();
  sim_cmd->add_option("--downstream", down_manifest, "Downstream dataset manifest")->required();
  sim_cmd->add_option("--aliases", alias_file, "Class-name synonym table");
  sim_cmd->add_option("--out", sim_out, "Directory for similarity.json");

  std::string store, report_out;
  std::vector<std::string> layouts{"tableII", "tableV", "tableVI"};
  auto* report_cmd = app.add_subcommand("report", "Render tables and the accuracy-vs-shots plot");
  report_cmd->add_option("--config", c.config, "Experiment configuration naming the store and output");
  report_cmd->add_option("--store", store, "Metrics store (JSON lines)");
  report_cmd->add_option("--layout", layouts, "tableII, tableV, tableVI")->delimiter(',');
  report_cmd->add_option("--out", report_out, "Output directory");

  auto* seed_cmd = app.add_subcommand("seed-references", "Add the published reference rows to a metrics store");
  seed_cmd->add_option("--store", store, "Metrics store (JSON lines)")->required();

  SyntheticSpec synth;
  std::string synth_out, synth_name = "synthetic";
  auto* synth_cmd = app.add_subcommand("make-synthetic", "Write the synthetic dataset as PNG files plus a manifest");
  synth_cmd->add_option("--out", synth_out, "Output directory")->required();
  synth_cmd->add_option("--name", synth_name, "Dataset name");
  synth_cmd->add_option("--classes", synth.num_classes, "Number of classes");
  synth_cmd->add_option("--per-class", synth.images_per_class, "Images per class");
  synth_cmd->add_option("--size", synth.image_size, "Image side in pixels");
  synth_cmd->add_option("--noise", synth.noise, "Pixel noise standard deviation");
  synth_cmd->add_option("--seed", synth.seed, "Generator seed");

  std::string stats_manifest;
  auto* stats_cmd = app.add_subcommand("stats", "Class counts and resolution of a dataset manifest");
  stats_cmd->add_option("--dataset", stats_manifest, "Dataset manifest")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (pretrain_cmd->parsed()) {
      const ExperimentConfig cfg = load_with_overrides(c);
      if (c.dry_run) return dry_run(cfg);
      const PretrainOutcome r = cmd_pretrain(cfg, optional_path(c.dataset), std::cerr);
      std::printf("final loss %.6f\ncheckpoint %s\nsha256 %s\n", r.final_loss, r.checkpoint.string().c_str(),
                  r.checkpoint_hash.c_str());
    } else if (finetune_cmd->parsed()) {
      const ExperimentConfig cfg = load_with_overrides(c);
      if (c.dry_run) return dry_run(cfg);
      print_records(cmd_finetune(cfg, c.checkpoint, optional_path(c.dataset), c.jobs, std::cerr).records);
    } else if (lineval_cmd->parsed()) {
      const ExperimentConfig cfg = load_with_overrides(c);
      if (c.dry_run) return dry_run(cfg);
      print_records(cmd_lineval(cfg, c.checkpoint, optional_path(c.dataset), c.shots, c.jobs, std::cerr).records);
    } else if (sim_cmd->parsed()) {
      const SimilarityOutcome s =
          cmd_similarity(pre_manifest, down_manifest, optional_path(alias_file), std::cerr);
      std::printf("%s -> %s: %zu/%zu classes shared, %.1f%%\n", s.pretrain_dataset.c_str(),
                  s.downstream_dataset.c_str(), s.shared.size(), s.downstream_classes, 100.0 * s.fraction);
      if (!sim_out.empty()) {
        fs::create_directories(sim_out);
        std::ofstream(fs::path(sim_out) / "similarity.json") << nlohmann::json(s).dump(2) << '\n';
      }
    } else if (report_cmd->parsed()) {
      fs::path store_path = store, out_dir = report_out;
      if (!c.config.empty()) {
        const ExperimentConfig cfg = load_experiment_config(c.config);
        if (store_path.empty()) store_path = cfg.store_path();
        if (out_dir.empty()) out_dir = cfg.experiment_dir() / "report";
      }
      if (store_path.empty()) throw ConfigError("report needs --store or --config");
      if (out_dir.empty()) out_dir = "report";
      std::vector<TableLayout> parsed;
      for (const auto& l : layouts) parsed.push_back(table_layout_from_string(l));
      const ReportOutcome r = cmd_report(store_path, parsed, out_dir);
      std::cout << r.text;
      for (const auto& f : r.files) std::cerr << "wrote " << f.string() << '\n';
    } else if (seed_cmd->parsed()) {
      MetricsStore s(store);
      std::printf("added %zu reference records to %s\n", seed_reference_records(s), store.c_str());
    } else if (synth_cmd->parsed()) {
      synth.validate();
      const fs::path manifest = export_source(make_synthetic(synth, synth_name), synth_out);
      std::printf("%s\n", manifest.string().c_str());
    } else if (stats_cmd->parsed()) {
      const DatasetStats s = dataset_stats(parse_manifest(stats_manifest));
      std::printf("%s: %zu classes, %zu images, resolution %g-%g m\n", s.name.c_str(), s.num_classes, s.num_samples,
                  s.resolution.min_m, s.resolution.max_m);
      for (const auto& [name, count] : s.histogram) std::printf("  %-28s %zu\n", name.c_str(), count);
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}
