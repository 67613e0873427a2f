#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "rsrep/transfer.hpp"

namespace rsrep {

inline constexpr int kMetricsSchemaVersion = 1;

enum class Protocol { kFinetune, kLinearEval };
enum class Provenance { kMeasured, kPaperReference };

std::string to_string(Protocol p);
std::string to_string(Provenance p);
Protocol protocol_from_string(const std::string& s);
Provenance provenance_from_string(const std::string& s);

struct MetricsRecord {
  std::string experiment_id;
  std::string pretrain_dataset;
  std::string downstream_dataset;
  Protocol protocol = Protocol::kFinetune;
  /// Present exactly when protocol is linear evaluation.
  std::optional<int> shots;
  AggregateResult aggregate;
  /// ISO-8601 UTC.
  std::string timestamp;
  Provenance provenance = Provenance::kMeasured;
  /// Required for paper-reference rows.
  std::string citation;
  /// Constituent runs of a measured aggregate.
  std::vector<RunResult> runs;

  /// Throws ValidationError on a broken invariant.
  void validate() const;
  bool operator==(const MetricsRecord&) const = default;
};

void to_json(nlohmann::json& j, const MetricsRecord& r);
/// Rejects records whose schema_version differs from kMetricsSchemaVersion.
void from_json(const nlohmann::json& j, MetricsRecord& r);

std::string utc_timestamp();

struct MetricsQuery {
  std::optional<std::string> experiment_id;
  std::optional<std::string> pretrain_dataset;
  std::optional<std::string> downstream_dataset;
  std::optional<Protocol> protocol;
  std::optional<int> shots;
  std::optional<Provenance> provenance;

  bool matches(const MetricsRecord& r) const;
};

/// Append-only line-delimited JSON store, one record per line.
class MetricsStore {
 public:
  explicit MetricsStore(std::filesystem::path path) : path_(std::move(path)) {}

  /// Throws ValidationError if the experiment id is already stored.
  void persist(const MetricsRecord& record);
  /// Records in insertion order; a missing store file is an empty store.
  std::vector<MetricsRecord> load(const MetricsQuery& query = {}) const;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

/// Published accuracies for the fine-tuning comparison, fine-tuning by
/// pre-training dataset, and few-shot linear evaluation layouts, as
/// paper-reference records.
std::vector<MetricsRecord> reference_records();

/// Persists every reference record not already present; returns how many
/// were added.
std::size_t seed_reference_records(MetricsStore& store);

enum class TableLayout { kTableII, kTableV, kTableVI };
std::string to_string(TableLayout l);
TableLayout table_layout_from_string(const std::string& s);

struct ReportColumn {
  std::string downstream;
  std::optional<int> shots;
  std::string header() const;
};

struct ReportRow {
  std::string label;
  std::string pretrain_dataset;
  Provenance provenance = Provenance::kMeasured;
  /// "—" for missing cells.
  std::vector<std::string> cells;
  /// Experiment id behind each cell, empty when missing.
  std::vector<std::string> sources;
};

struct ReportTable {
  TableLayout layout = TableLayout::kTableV;
  std::string caption;
  std::string row_axis;
  std::vector<ReportColumn> columns;
  std::vector<ReportRow> rows;

  const ReportRow* find_row(const std::string& label) const;
};

inline constexpr const char* kMissingCell = "—";
inline constexpr const char* kReferenceSuffix = " [ref]";

/// Rows are the layout's default pre-training axis followed by any other
/// pre-training dataset in `records`; measured and paper-reference values get
/// separate rows, the latter labelled with a " [ref]" suffix. Columns extend
/// the default axis the same way. The latest record wins when several share
/// a cell.
ReportTable render_table(const std::vector<MetricsRecord>& records, TableLayout layout);

/// Fixed-width text rendering; a pure function of the table.
std::string to_text(const ReportTable& table);

struct PlotLine {
  std::string label;
  Provenance provenance = Provenance::kMeasured;
  /// (shots, mean accuracy as stored), ascending in shots.
  std::vector<std::pair<int, double>> points;
  std::vector<std::string> sources;
};

struct PlotPanel {
  std::string downstream;
  std::vector<PlotLine> lines;
};

struct PlotData {
  std::vector<PlotPanel> panels;
};

/// Accuracy-vs-shots data, one panel per downstream dataset and one line per
/// pre-training dataset and provenance. Throws ValidationError when there are
/// no linear-evaluation records.
PlotData plot_data(const std::vector<MetricsRecord>& records);

/// Writes `svg_path` and a tab-separated sidecar next to it (same stem,
/// ".tsv") holding the exact stored values. Returns the sidecar path.
std::filesystem::path emit_plot(const std::vector<MetricsRecord>& records, const std::filesystem::path& svg_path);

std::string render_svg(const PlotData& data);
std::string render_sidecar(const PlotData& data);

/// Shortest decimal string that parses back to exactly `v`.
std::string exact_decimal(double v);

}  // namespace rsrep
