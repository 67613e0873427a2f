#include "rsrep/reporting.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "rsrep/dataset.hpp"
#include "rsrep/errors.hpp"

namespace rsrep {

std::string to_string(Protocol p) { return p == Protocol::kFinetune ? "finetune" : "linear_eval"; }

std::string to_string(Provenance p) { return p == Provenance::kMeasured ? "measured" : "paper-reference"; }

Protocol protocol_from_string(const std::string& s) {
  if (s == "finetune") return Protocol::kFinetune;
  if (s == "linear_eval") return Protocol::kLinearEval;
  throw ValidationError("unknown protocol \"" + s + "\"");
}

Provenance provenance_from_string(const std::string& s) {
  if (s == "measured") return Provenance::kMeasured;
  if (s == "paper-reference") return Provenance::kPaperReference;
  throw ValidationError("unknown provenance \"" + s + "\"");
}

void MetricsRecord::validate() const {
  if (experiment_id.empty()) throw ValidationError("metrics record without experiment_id");
  const std::string id = "record " + experiment_id;
  if (pretrain_dataset.empty() || downstream_dataset.empty()) throw ValidationError(id + ": dataset names required");
  if ((protocol == Protocol::kLinearEval) != shots.has_value()) {
    throw ValidationError(id + ": shots must be present exactly for linear_eval records");
  }
  if (shots && *shots < 1) throw ValidationError(id + ": shots must be positive");
  if (provenance == Provenance::kPaperReference && citation.empty()) {
    throw ValidationError(id + ": paper-reference records need a citation");
  }
  if (aggregate.n_runs < 1) throw ValidationError(id + ": aggregate needs at least one run");
  if (!(aggregate.mean_accuracy >= 0.0 && aggregate.mean_accuracy <= 1.0)) {
    throw ValidationError(id + ": mean accuracy outside [0, 1]");
  }
}

void to_json(nlohmann::json& j, const MetricsRecord& r) {
  j = {{"schema_version", kMetricsSchemaVersion},
       {"experiment_id", r.experiment_id},
       {"pretrain_dataset", r.pretrain_dataset},
       {"downstream_dataset", r.downstream_dataset},
       {"protocol", to_string(r.protocol)},
       {"shots", r.shots ? nlohmann::json(*r.shots) : nlohmann::json(nullptr)},
       {"aggregate", r.aggregate},
       {"timestamp", r.timestamp},
       {"provenance", to_string(r.provenance)},
       {"citation", r.citation},
       {"runs", r.runs}};
}

void from_json(const nlohmann::json& j, MetricsRecord& r) {
  const int version = j.at("schema_version").get<int>();
  if (version != kMetricsSchemaVersion) {
    throw ValidationError("metrics record schema_version " + std::to_string(version) + " is not supported");
  }
  r.experiment_id = j.at("experiment_id").get<std::string>();
  r.pretrain_dataset = j.at("pretrain_dataset").get<std::string>();
  r.downstream_dataset = j.at("downstream_dataset").get<std::string>();
  r.protocol = protocol_from_string(j.at("protocol").get<std::string>());
  r.shots = j.at("shots").is_null() ? std::nullopt : std::optional<int>(j.at("shots").get<int>());
  r.aggregate = j.at("aggregate").get<AggregateResult>();
  r.timestamp = j.at("timestamp").get<std::string>();
  r.provenance = provenance_from_string(j.at("provenance").get<std::string>());
  r.citation = j.at("citation").get<std::string>();
  r.runs = j.at("runs").get<std::vector<RunResult>>();
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

bool MetricsQuery::matches(const MetricsRecord& r) const {
  auto same_dataset = [](const std::string& a, const std::string& b) {
    return canonicalize_class_name(a) == canonicalize_class_name(b);
  };
  if (experiment_id && *experiment_id != r.experiment_id) return false;
  if (pretrain_dataset && !same_dataset(*pretrain_dataset, r.pretrain_dataset)) return false;
  if (downstream_dataset && !same_dataset(*downstream_dataset, r.downstream_dataset)) return false;
  if (protocol && *protocol != r.protocol) return false;
  if (shots && shots != r.shots) return false;
  if (provenance && *provenance != r.provenance) return false;
  return true;
}

void MetricsStore::persist(const MetricsRecord& record) {
  record.validate();
  MetricsQuery same_id;
  same_id.experiment_id = record.experiment_id;
  if (!load(same_id).empty()) {
    throw ValidationError("experiment_id '" + record.experiment_id + "' already exists in " + path_.string());
  }
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  std::ofstream out(path_, std::ios::app);
  if (!out) throw IoError("cannot append to metrics store " + path_.string());
  out << nlohmann::json(record).dump() << '\n';
  out.flush();
  if (!out) throw IoError("failed writing metrics store " + path_.string());
}

std::vector<MetricsRecord> MetricsStore::load(const MetricsQuery& query) const {
  std::vector<MetricsRecord> out;
  std::ifstream in(path_);
  if (!in) return out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    MetricsRecord r;
    try {
      r = nlohmann::json::parse(line).get<MetricsRecord>();
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(path_.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (query.matches(r)) out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------- references

namespace {

constexpr const char* kCitation = "published reference results";

struct Axes {
  std::string caption;
  std::string row_axis;
  Protocol protocol;
  std::vector<std::string> rows;
  std::vector<std::string> downstream;
  std::vector<int> shots;
};

Axes default_axes(TableLayout layout) {
  switch (layout) {
    case TableLayout::kTableII:
      return {"Fine-tuning accuracy (%) by training method",
              "Method",
              Protocol::kFinetune,
              {"Scratch", "ImageNet", "Supervised In-Domain", "PatternNet"},
              {"UCM", "EuroSAT", "Resisc45"},
              {}};
    case TableLayout::kTableV:
      return {"Fine-tuning accuracy (%) by pre-training dataset, mean over runs",
              "Pretrain",
              Protocol::kFinetune,
              {"Resisc45", "MLRSNet", "PatternNet"},
              {"AID", "EuroSAT", "UCM"},
              {}};
    case TableLayout::kTableVI:
      return {"Linear evaluation accuracy (%) with n labeled images per class, mean over runs",
              "Pretrain",
              Protocol::kLinearEval,
              {"ImageNet", "Resisc45", "MLRSNet", "PatternNet"},
              {"AID", "EuroSAT", "UCM"},
              {5, 10, 20, 50}};
  }
  throw ValidationError("unknown table layout");
}

MetricsRecord reference(const std::string& layout, const std::string& pretrain, const std::string& downstream,
                        std::optional<int> shots, double percent) {
  MetricsRecord r;
  r.experiment_id = "ref-" + layout + "-" + canonicalize_class_name(pretrain) + "-" +
                    canonicalize_class_name(downstream) + (shots ? "-" + std::to_string(*shots) : "");
  r.pretrain_dataset = pretrain;
  r.downstream_dataset = downstream;
  r.protocol = shots ? Protocol::kLinearEval : Protocol::kFinetune;
  r.shots = shots;
  r.aggregate.mean_accuracy = percent / 100.0;
  r.aggregate.min_accuracy = r.aggregate.max_accuracy = r.aggregate.mean_accuracy;
  r.aggregate.n_runs = 1;
  r.provenance = Provenance::kPaperReference;
  r.citation = std::string(kCitation) + " (" + layout + " layout)";
  return r;
}

}  // namespace

std::vector<MetricsRecord> reference_records() {
  std::vector<MetricsRecord> out;
  struct Row {
    const char* pretrain;
    std::vector<double> values;
  };
  const std::vector<std::string> ft_cols{"AID", "EuroSAT", "UCM"};
  for (const Row& row : std::vector<Row>{{"Resisc45", {97.62, 97.75, 98.24}},
                                         {"MLRSNet", {97.78, 98.45, 98.85}},
                                         {"PatternNet", {97.83, 99.26, 99.90}}})
    for (std::size_t c = 0; c < ft_cols.size(); ++c)
      out.push_back(reference("tableV", row.pretrain, ft_cols[c], std::nullopt, row.values[c]));

  // The method comparison shares its PatternNet UCM and EuroSAT cells with
  // the rows above, so only the remaining cells are added here.
  const std::vector<std::string> cmp_cols{"UCM", "EuroSAT", "Resisc45"};
  for (const Row& row : std::vector<Row>{{"Scratch", {95.7, 98.5, 95.5}},
                                         {"ImageNet", {99.2, 99.1, 96.6}},
                                         {"Supervised In-Domain", {99.6, 99.2, 96.8}}})
    for (std::size_t c = 0; c < cmp_cols.size(); ++c)
      out.push_back(reference("tableII", row.pretrain, cmp_cols[c], std::nullopt, row.values[c]));
  out.push_back(reference("tableII", "PatternNet", "Resisc45", std::nullopt, 97.2));

  const std::vector<int> shots{5, 10, 20, 50};
  for (const Row& row : std::vector<Row>{
           {"ImageNet", {45.45, 52.36, 63.14, 70.17, 39.36, 46.45, 51.22, 59.71, 40.43, 50.33, 56.72, 63.21}},
           {"Resisc45", {72.32, 75.44, 81.74, 86.56, 77.50, 80.12, 85.16, 90.93, 77.89, 82.11, 87.95, 92.15}},
           {"MLRSNet", {73.34, 77.10, 82.52, 89.52, 79.31, 83.27, 88.87, 92.58, 80.92, 84.60, 90.37, 94.85}},
           {"PatternNet", {73.89, 78.25, 85.13, 89.33, 80.02, 84.19, 89.55, 92.31, 81.65, 85.87, 91.70, 94.66}}})
    for (std::size_t d = 0; d < ft_cols.size(); ++d)
      for (std::size_t s = 0; s < shots.size(); ++s)
        out.push_back(reference("tableVI", row.pretrain, ft_cols[d], shots[s], row.values[d * 4 + s]));
  return out;
}

std::size_t seed_reference_records(MetricsStore& store) {
  std::set<std::string> existing;
  for (const auto& r : store.load()) existing.insert(r.experiment_id);
  const std::string now = utc_timestamp();
  std::size_t added = 0;
  for (MetricsRecord r : reference_records()) {
    if (existing.contains(r.experiment_id)) continue;
    r.timestamp = now;
    store.persist(r);
    ++added;
  }
  return added;
}

// ---------------------------------------------------------------- tables

std::string to_string(TableLayout l) {
  switch (l) {
    case TableLayout::kTableII: return "tableII";
    case TableLayout::kTableV: return "tableV";
    case TableLayout::kTableVI: return "tableVI";
  }
  return "?";
}

TableLayout table_layout_from_string(const std::string& s) {
  for (TableLayout l : {TableLayout::kTableII, TableLayout::kTableV, TableLayout::kTableVI})
    if (s == to_string(l)) return l;
  throw ConfigError("unknown table layout \"" + s + "\" (expected tableII, tableV, or tableVI)");
}

std::string ReportColumn::header() const {
  return shots ? downstream + " " + std::to_string(*shots) : downstream;
}

const ReportRow* ReportTable::find_row(const std::string& label) const {
  for (const auto& r : rows)
    if (r.label == label) return &r;
  return nullptr;
}

namespace {

std::string format_percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", fraction * 100.0);
  return buf;
}

// Appends names not already present (after canonicalization), sorted.
void extend_axis(std::vector<std::string>& axis, std::set<std::string> extra) {
  std::set<std::string> known;
  for (const auto& a : axis) known.insert(canonicalize_class_name(a));
  for (const auto& e : extra)
    if (known.insert(canonicalize_class_name(e)).second) axis.push_back(e);
}

std::size_t display_width(const std::string& s) {
  std::size_t n = 0;
  for (unsigned char c : s) n += (c & 0xC0) != 0x80;
  return n;
}

std::string pad(const std::string& s, std::size_t width) {
  return s + std::string(width - std::min(width, display_width(s)), ' ');
}

}  // namespace

ReportTable render_table(const std::vector<MetricsRecord>& records, TableLayout layout) {
  Axes axes = default_axes(layout);
  std::vector<const MetricsRecord*> relevant;
  std::set<std::string> extra_rows, extra_cols;
  std::set<int> extra_shots;
  for (const auto& r : records) {
    if (r.protocol != axes.protocol) continue;
    relevant.push_back(&r);
    if (r.provenance == Provenance::kMeasured) {
      extra_rows.insert(r.pretrain_dataset);
      extra_cols.insert(r.downstream_dataset);
      if (r.shots) extra_shots.insert(*r.shots);
    }
  }
  extend_axis(axes.rows, extra_rows);
  extend_axis(axes.downstream, extra_cols);
  if (axes.protocol == Protocol::kLinearEval) {
    std::set<int> all(axes.shots.begin(), axes.shots.end());
    all.insert(extra_shots.begin(), extra_shots.end());
    axes.shots.assign(all.begin(), all.end());
  }

  ReportTable table;
  table.layout = layout;
  table.caption = axes.caption;
  table.row_axis = axes.row_axis;
  for (const auto& d : axes.downstream) {
    if (axes.protocol == Protocol::kLinearEval) {
      for (int s : axes.shots) table.columns.push_back({d, s});
    } else {
      table.columns.push_back({d, std::nullopt});
    }
  }

  auto lookup = [&](const std::string& pretrain, const ReportColumn& col, Provenance prov) -> const MetricsRecord* {
    const MetricsRecord* found = nullptr;
    for (const MetricsRecord* r : relevant) {
      if (r->provenance != prov || r->shots != col.shots) continue;
      if (canonicalize_class_name(r->pretrain_dataset) != canonicalize_class_name(pretrain)) continue;
      if (canonicalize_class_name(r->downstream_dataset) != canonicalize_class_name(col.downstream)) continue;
      found = r;
    }
    return found;
  };

  for (const auto& pretrain : axes.rows) {
    bool any_row = false;
    for (Provenance prov : {Provenance::kMeasured, Provenance::kPaperReference}) {
      ReportRow row;
      row.label = pretrain + (prov == Provenance::kPaperReference ? kReferenceSuffix : "");
      row.pretrain_dataset = pretrain;
      row.provenance = prov;
      bool any = false;
      for (const auto& col : table.columns) {
        const MetricsRecord* r = lookup(pretrain, col, prov);
        row.cells.push_back(r ? format_percent(r->aggregate.mean_accuracy) : kMissingCell);
        row.sources.push_back(r ? r->experiment_id : "");
        any = any || r != nullptr;
      }
      if (any) {
        table.rows.push_back(std::move(row));
        any_row = true;
      }
    }
    if (!any_row) {
      ReportRow row;
      row.label = pretrain;
      row.pretrain_dataset = pretrain;
      row.cells.assign(table.columns.size(), kMissingCell);
      row.sources.assign(table.columns.size(), "");
      table.rows.push_back(std::move(row));
    }
  }
  return table;
}

std::string to_text(const ReportTable& table) {
  std::vector<std::string> headers{table.row_axis};
  for (const auto& c : table.columns) headers.push_back(c.header());
  std::vector<std::size_t> widths;
  for (const auto& h : headers) widths.push_back(display_width(h));
  for (const auto& row : table.rows) {
    widths[0] = std::max(widths[0], display_width(row.label));
    for (std::size_t c = 0; c < row.cells.size(); ++c) widths[c + 1] = std::max(widths[c + 1], display_width(row.cells[c]));
  }
  std::ostringstream out;
  out << table.caption << '\n';
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < cells.size(); ++c) out << (c ? " | " : "") << pad(cells[c], widths[c]);
    out << '\n';
  };
  line(headers);
  for (std::size_t c = 0; c < widths.size(); ++c) out << (c ? "-+-" : "") << std::string(widths[c], '-');
  out << '\n';
  for (const auto& row : table.rows) {
    std::vector<std::string> cells{row.label};
    cells.insert(cells.end(), row.cells.begin(), row.cells.end());
    line(cells);
  }
  return out.str();
}

// ---------------------------------------------------------------- plots

std::string exact_decimal(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

PlotData plot_data(const std::vector<MetricsRecord>& records) {
  // Latest record per (downstream, pretrain, provenance, shots).
  std::map<std::string, std::string> display_name;
  std::vector<std::string> downstream_order;
  std::map<std::string, std::vector<std::tuple<std::string, Provenance>>> line_order;
  std::map<std::tuple<std::string, std::string, Provenance, int>, const MetricsRecord*> latest;
  for (const auto& r : records) {
    if (r.protocol != Protocol::kLinearEval || !r.shots) continue;
    const std::string d = canonicalize_class_name(r.downstream_dataset);
    const std::string p = canonicalize_class_name(r.pretrain_dataset);
    if (!display_name.contains(d)) {
      display_name[d] = r.downstream_dataset;
      downstream_order.push_back(d);
    }
    display_name.try_emplace("pretrain:" + p, r.pretrain_dataset);
    auto& lines = line_order[d];
    if (std::find(lines.begin(), lines.end(), std::tuple{p, r.provenance}) == lines.end()) {
      lines.emplace_back(p, r.provenance);
    }
    latest[{d, p, r.provenance, *r.shots}] = &r;
  }
  if (latest.empty()) throw ValidationError("no linear-evaluation records to plot");

  PlotData data;
  for (const auto& d : downstream_order) {
    PlotPanel panel{display_name[d], {}};
    for (const auto& [p, prov] : line_order[d]) {
      PlotLine line;
      line.label = display_name["pretrain:" + p] + (prov == Provenance::kPaperReference ? kReferenceSuffix : "");
      line.provenance = prov;
      for (const auto& [key, rec] : latest) {
        if (std::get<0>(key) == d && std::get<1>(key) == p && std::get<2>(key) == prov) {
          line.points.emplace_back(std::get<3>(key), rec->aggregate.mean_accuracy);
          line.sources.push_back(rec->experiment_id);
        }
      }
      panel.lines.push_back(std::move(line));
    }
    data.panels.push_back(std::move(panel));
  }
  return data;
}

std::string render_sidecar(const PlotData& data) {
  std::ostringstream out;
  out << "downstream\tline\tprovenance\tshots\tmean_accuracy\texperiment_id\n";
  for (const auto& panel : data.panels)
    for (const auto& line : panel.lines)
      for (std::size_t i = 0; i < line.points.size(); ++i)
        out << panel.downstream << '\t' << line.label << '\t' << to_string(line.provenance) << '\t'
            << line.points[i].first << '\t' << exact_decimal(line.points[i].second) << '\t' << line.sources[i]
            << '\n';
  return out.str();
}

namespace {

std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string render_svg(const PlotData& data) {
  static const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};
  const double panel_w = 320, panel_h = 260, left = 50, right = 10, top = 30, bottom = 40;
  const double legend_h = 18.0;
  std::size_t max_lines = 0;
  for (const auto& p : data.panels) max_lines = std::max(max_lines, p.lines.size());
  const double width = panel_w * static_cast<double>(data.panels.size());
  const double height = panel_h + legend_h * static_cast<double>(max_lines) + 10;

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fixed2(width) << "\" height=\"" << fixed2(height)
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t pi = 0; pi < data.panels.size(); ++pi) {
    const PlotPanel& panel = data.panels[pi];
    const double x0 = panel_w * static_cast<double>(pi) + left;
    const double plot_w = panel_w - left - right, plot_h = panel_h - top - bottom;
    std::set<int> shot_set;
    for (const auto& line : panel.lines)
      for (const auto& pt : line.points) shot_set.insert(pt.first);
    const std::vector<int> shots(shot_set.begin(), shot_set.end());
    auto x_of = [&](int s) {
      const auto idx = static_cast<double>(std::find(shots.begin(), shots.end(), s) - shots.begin());
      return shots.size() == 1 ? x0 + plot_w / 2 : x0 + plot_w * idx / static_cast<double>(shots.size() - 1);
    };
    auto y_of = [&](double acc) { return top + plot_h * (1.0 - acc); };

    svg << "<text x=\"" << fixed2(x0 + plot_w / 2) << "\" y=\"18\" text-anchor=\"middle\" font-weight=\"bold\">"
        << xml_escape(panel.downstream) << "</text>\n";
    svg << "<rect x=\"" << fixed2(x0) << "\" y=\"" << fixed2(top) << "\" width=\"" << fixed2(plot_w)
        << "\" height=\"" << fixed2(plot_h) << "\" fill=\"none\" stroke=\"#444\"/>\n";
    for (int tick = 0; tick <= 10; tick += 2) {
      const double y = y_of(tick / 10.0);
      svg << "<line x1=\"" << fixed2(x0 - 4) << "\" y1=\"" << fixed2(y) << "\" x2=\"" << fixed2(x0) << "\" y2=\""
          << fixed2(y) << "\" stroke=\"#444\"/>\n";
      svg << "<text x=\"" << fixed2(x0 - 6) << "\" y=\"" << fixed2(y + 4) << "\" text-anchor=\"end\">" << tick * 10
          << "</text>\n";
    }
    for (int s : shots) {
      svg << "<text x=\"" << fixed2(x_of(s)) << "\" y=\"" << fixed2(top + plot_h + 15)
          << "\" text-anchor=\"middle\">" << s << "</text>\n";
    }
    svg << "<text x=\"" << fixed2(x0 + plot_w / 2) << "\" y=\"" << fixed2(top + plot_h + 32)
        << "\" text-anchor=\"middle\">images per class</text>\n";
    svg << "<text x=\"" << fixed2(x0 - 38) << "\" y=\"" << fixed2(top + plot_h / 2) << "\" transform=\"rotate(-90 "
        << fixed2(x0 - 38) << " " << fixed2(top + plot_h / 2) << ")\" text-anchor=\"middle\">accuracy (%)</text>\n";

    for (std::size_t li = 0; li < panel.lines.size(); ++li) {
      const PlotLine& line = panel.lines[li];
      const char* color = kPalette[li % std::size(kPalette)];
      const char* dash = line.provenance == Provenance::kPaperReference ? " stroke-dasharray=\"5,3\"" : "";
      svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\"" << dash << " points=\"";
      for (std::size_t k = 0; k < line.points.size(); ++k)
        svg << (k ? " " : "") << fixed2(x_of(line.points[k].first)) << "," << fixed2(y_of(line.points[k].second));
      svg << "\"/>\n";
      for (const auto& pt : line.points) {
        svg << "<circle cx=\"" << fixed2(x_of(pt.first)) << "\" cy=\"" << fixed2(y_of(pt.second))
            << "\" r=\"2.5\" fill=\"" << color << "\"/>\n";
      }
      const double ly = panel_h + legend_h * static_cast<double>(li) + 5;
      svg << "<line x1=\"" << fixed2(x0) << "\" y1=\"" << fixed2(ly) << "\" x2=\"" << fixed2(x0 + 20) << "\" y2=\""
          << fixed2(ly) << "\" stroke=\"" << color << "\" stroke-width=\"1.5\"" << dash << "/>\n";
      svg << "<text x=\"" << fixed2(x0 + 26) << "\" y=\"" << fixed2(ly + 4) << "\">" << xml_escape(line.label)
          << "</text>\n";
    }
  }
  svg << "</svg>\n";
  return svg.str();
}

std::filesystem::path emit_plot(const std::vector<MetricsRecord>& records, const std::filesystem::path& svg_path) {
  const PlotData data = plot_data(records);
  if (svg_path.has_parent_path()) std::filesystem::create_directories(svg_path.parent_path());
  auto sidecar = svg_path;
  sidecar.replace_extension(".tsv");
  std::ofstream svg(svg_path);
  std::ofstream tsv(sidecar);
  if (!svg || !tsv) throw IoError("cannot write plot files next to " + svg_path.string());
  svg << render_svg(data);
  tsv << render_sidecar(data);
  return sidecar;
}

}  // namespace rsrep
