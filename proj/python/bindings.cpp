#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include <nlohmann/json.hpp>

#include "rsrep/checkpoint.hpp"
#include "rsrep/commands.hpp"
#include "rsrep/dataset.hpp"
#include "rsrep/errors.hpp"
#include "rsrep/experiment.hpp"
#include "rsrep/reporting.hpp"
#include "rsrep/simsiam.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

py::object to_python(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

rsrep::Tensor to_tensor(const Array& a) {
  if (a.ndim() != 2) throw py::value_error("expected a 2-D array");
  const int rows = static_cast<int>(a.shape(0)), cols = static_cast<int>(a.shape(1));
  return rsrep::Tensor({rows, cols}, std::vector<double>(a.data(), a.data() + a.size()));
}

rsrep::ExperimentConfig load_config(const fs::path& path, const std::optional<fs::path>& out) {
  rsrep::ExperimentConfig c = rsrep::load_experiment_config(path);
  if (out) c.output_dir = *out;
  return c;
}

py::dict records_dict(const rsrep::TransferOutcome& o) {
  py::dict d;
  d["output_dir"] = o.output_dir;
  py::list records;
  for (const auto& r : o.records) records.append(to_python(r));
  d["records"] = records;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "SimSiam pre-training and transfer evaluation for remote-sensing scenes";

  py::register_exception<rsrep::ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<rsrep::ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<rsrep::NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
  py::register_exception<rsrep::IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<rsrep::DimensionError>(m, "DimensionError", PyExc_ValueError);

  m.def(
      "negative_cosine",
      [](const Array& p, const Array& z) {
        if (p.ndim() != 1 || z.ndim() != 1) throw py::value_error("expected 1-D arrays");
        return rsrep::negative_cosine({p.data(), static_cast<std::size_t>(p.size())},
                                      {z.data(), static_cast<std::size_t>(z.size())});
      },
      py::arg("p"), py::arg("z"), "D(p, z) = -(p . z) / (|p| |z|).");

  m.def(
      "symmetric_loss",
      [](const Array& p1, const Array& p2, const Array& z1, const Array& z2) {
        return rsrep::symmetric_loss(rsrep::SimSiamForward{to_tensor(z1), to_tensor(z2), to_tensor(p1), to_tensor(p2)});
      },
      py::arg("p1"), py::arg("p2"), py::arg("z1"), py::arg("z2"),
      "Batch mean of 1/2 D(p1, z2) + 1/2 D(p2, z1).");

  m.def(
      "collapse_statistic", [](const Array& z) { return rsrep::collapse_statistic(to_tensor(z)); }, py::arg("z"),
      "Mean per-dimension std of the L2-normalized rows of z.");

  m.def(
      "class_similarity",
      [](const std::vector<std::string>& pretrain, const std::vector<std::string>& downstream,
         const std::optional<fs::path>& aliases) {
        std::optional<rsrep::AliasMap> map;
        if (aliases) map = rsrep::AliasMap::load(*aliases);
        return rsrep::class_similarity(rsrep::ClassCatalog::from_names(pretrain),
                                       rsrep::ClassCatalog::from_names(downstream), map ? &*map : nullptr);
      },
      py::arg("pretrain_classes"), py::arg("downstream_classes"), py::arg("aliases") = py::none(),
      "Fraction of downstream classes also present in the pre-training set.");

  m.def(
      "split_counts",
      [](std::size_t n, const std::array<double, 3>& ratios) { return rsrep::largest_remainder_counts(n, ratios); },
      py::arg("n"), py::arg("ratios") = std::array<double, 3>{0.6, 0.2, 0.2},
      "Train/val/test sizes for one class of n samples.");

  m.def(
      "load_config",
      [](const fs::path& path) { return to_python(rsrep::to_json(rsrep::load_experiment_config(path))); },
      py::arg("path"), "Fully resolved experiment configuration as a dict.");

  m.def(
      "pretrain",
      [](const fs::path& config, const std::optional<fs::path>& out, const std::optional<fs::path>& dataset) {
        const auto c = load_config(config, out);
        std::ostringstream log;
        rsrep::PretrainOutcome o;
        {
          py::gil_scoped_release release;
          o = rsrep::cmd_pretrain(c, dataset, log);
        }
        py::dict d;
        d["checkpoint"] = o.checkpoint;
        d["checkpoint_hash"] = o.checkpoint_hash;
        d["final_loss"] = o.final_loss;
        d["trace"] = o.trace;
        d["log"] = log.str();
        return d;
      },
      py::arg("config"), py::arg("out") = py::none(), py::arg("dataset") = py::none(),
      "SimSiam pre-training; returns checkpoint path, hash, and final loss.");

  m.def(
      "finetune",
      [](const fs::path& config, const fs::path& checkpoint, const std::optional<fs::path>& out,
         const std::optional<fs::path>& dataset, int jobs) {
        const auto c = load_config(config, out);
        std::ostringstream log;
        rsrep::TransferOutcome o;
        {
          py::gil_scoped_release release;
          o = rsrep::cmd_finetune(c, checkpoint, dataset, jobs, log);
        }
        return records_dict(o);
      },
      py::arg("config"), py::arg("checkpoint"), py::arg("out") = py::none(), py::arg("dataset") = py::none(),
      py::arg("jobs") = 1, "Full fine-tuning over the configured seeds.");

  m.def(
      "lineval",
      [](const fs::path& config, const fs::path& checkpoint, const std::vector<int>& shots,
         const std::optional<fs::path>& out, const std::optional<fs::path>& dataset, int jobs) {
        const auto c = load_config(config, out);
        std::ostringstream log;
        rsrep::TransferOutcome o;
        {
          py::gil_scoped_release release;
          o = rsrep::cmd_lineval(c, checkpoint, dataset, shots, jobs, log);
        }
        return records_dict(o);
      },
      py::arg("config"), py::arg("checkpoint"), py::arg("shots") = std::vector<int>{}, py::arg("out") = py::none(),
      py::arg("dataset") = py::none(), py::arg("jobs") = 1, "Few-shot linear evaluation with a frozen backbone.");

  m.def(
      "similarity",
      [](const fs::path& pretrain, const fs::path& downstream, const std::optional<fs::path>& aliases) {
        std::ostringstream log;
        return to_python(rsrep::cmd_similarity(pretrain, downstream, aliases, log));
      },
      py::arg("pretrain_manifest"), py::arg("downstream_manifest"), py::arg("aliases") = py::none(),
      "Class similarity between two dataset manifests.");

  m.def(
      "render_table",
      [](const fs::path& store, const std::string& layout) {
        const auto records = rsrep::MetricsStore(store).load();
        return rsrep::to_text(rsrep::render_table(records, rsrep::table_layout_from_string(layout)));
      },
      py::arg("store"), py::arg("layout"), "Text table for 'tableII', 'tableV', or 'tableVI'.");

  m.def(
      "seed_references",
      [](const fs::path& store) {
        rsrep::MetricsStore s(store);
        return rsrep::seed_reference_records(s);
      },
      py::arg("store"), "Adds the published reference rows to a metrics store; returns how many were added.");

  m.def(
      "checkpoint_hash", [](const fs::path& path) { return rsrep::checkpoint_hash(path); }, py::arg("path"),
      "Trailing SHA-256 recorded in a checkpoint file.");
}
