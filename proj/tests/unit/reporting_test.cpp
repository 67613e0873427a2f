#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include <charconv>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <unistd.h>

#include "rsrep/errors.hpp"
#include "rsrep/reporting.hpp"

namespace rsrep {
namespace {

namespace fs = std::filesystem;

class StoreTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("rsrep_reporting_" + std::to_string(::getpid()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path dir_;
};

MetricsRecord measured(const std::string& id, const std::string& pretrain, const std::string& downstream,
                       std::optional<int> shots, double acc) {
  MetricsRecord r;
  r.experiment_id = id;
  r.pretrain_dataset = pretrain;
  r.downstream_dataset = downstream;
  r.protocol = shots ? Protocol::kLinearEval : Protocol::kFinetune;
  r.shots = shots;
  r.aggregate.mean_accuracy = acc;
  r.aggregate.n_runs = 1;
  r.aggregate.min_accuracy = r.aggregate.max_accuracy = acc;
  r.timestamp = "2024-01-01T00:00:00Z";
  return r;
}

TEST(MetricsRecordTest, JsonRoundTrip) {
  MetricsRecord r = measured("exp1", "PatternNet", "UCM", 20, 0.875);
  r.aggregate.std_accuracy = 0.01;
  r.aggregate.std_defined = true;
  r.aggregate.n_runs = 2;
  r.aggregate.run_ids = {"a", "b"};
  RunResult run;
  run.run_id = "a";
  run.global_accuracy = 0.8;
  run.per_class_accuracy = {0.7, 0.9};
  run.shots = 20;
  r.runs = {run};
  const nlohmann::json j = r;
  EXPECT_EQ(j.at("schema_version"), kMetricsSchemaVersion);
  EXPECT_EQ(j.get<MetricsRecord>(), r);
}

TEST(MetricsRecordTest, RejectsOtherSchemaVersions) {
  nlohmann::json j = measured("e", "A", "B", std::nullopt, 0.5);
  j["schema_version"] = kMetricsSchemaVersion + 1;
  EXPECT_THROW(j.get<MetricsRecord>(), ValidationError);
}

TEST(MetricsRecordTest, ValidateInvariants) {
  EXPECT_NO_THROW(measured("e", "A", "B", std::nullopt, 0.5).validate());
  MetricsRecord shots_on_finetune = measured("e", "A", "B", std::nullopt, 0.5);
  shots_on_finetune.shots = 5;
  EXPECT_THROW(shots_on_finetune.validate(), ValidationError);
  MetricsRecord no_citation = measured("e", "A", "B", 5, 0.5);
  no_citation.provenance = Provenance::kPaperReference;
  EXPECT_THROW(no_citation.validate(), ValidationError);
  EXPECT_THROW(measured("", "A", "B", 5, 0.5).validate(), ValidationError);
  EXPECT_THROW(measured("e", "A", "B", 5, 1.5).validate(), ValidationError);
}

TEST_F(StoreTest, PersistLoadAndQuery) {
  MetricsStore store(dir_ / "metrics.jsonl");
  EXPECT_TRUE(store.load().empty());
  store.persist(measured("e1", "PatternNet", "UCM", 5, 0.5));
  store.persist(measured("e2", "PatternNet", "UCM", 10, 0.6));
  store.persist(measured("e3", "MLRSNet", "AID", std::nullopt, 0.9));
  EXPECT_EQ(store.load().size(), 3u);
  MetricsQuery q;
  q.pretrain_dataset = "patternnet";
  EXPECT_EQ(store.load(q).size(), 2u);
  q.shots = 10;
  ASSERT_EQ(store.load(q).size(), 1u);
  EXPECT_EQ(store.load(q)[0].experiment_id, "e2");
  MetricsQuery ft;
  ft.protocol = Protocol::kFinetune;
  EXPECT_EQ(store.load(ft).size(), 1u);
}

TEST_F(StoreTest, DuplicateIdRejected) {
  MetricsStore store(dir_ / "metrics.jsonl");
  store.persist(measured("e1", "A", "B", 5, 0.5));
  EXPECT_THROW(store.persist(measured("e1", "A", "B", 10, 0.7)), ValidationError);
  EXPECT_EQ(store.load().size(), 1u);
}

TEST_F(StoreTest, CorruptLineNamesLocation) {
  std::ofstream(dir_ / "bad.jsonl") << "{not json\n";
  MetricsStore store(dir_ / "bad.jsonl");
  try {
    store.load();
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("bad.jsonl:1"), std::string::npos);
  }
}

TEST_F(StoreTest, SeedingIsIdempotent) {
  MetricsStore store(dir_ / "metrics.jsonl");
  const std::size_t n = reference_records().size();
  EXPECT_EQ(seed_reference_records(store), n);
  EXPECT_EQ(seed_reference_records(store), 0u);
  EXPECT_EQ(store.load().size(), n);
}

TEST(ReferenceRecordsTest, UniqueIdsAndOneRecordPerCell) {
  const auto refs = reference_records();
  // 9 fine-tuning cells by pre-training dataset, 10 more for the method
  // comparison, 4 x 3 x 4 few-shot cells.
  EXPECT_EQ(refs.size(), 9u + 10u + 48u);
  std::set<std::string> ids;
  std::set<std::tuple<std::string, std::string, int>> cells;
  for (const auto& r : refs) {
    EXPECT_NO_THROW(r.validate());
    EXPECT_EQ(r.provenance, Provenance::kPaperReference);
    EXPECT_TRUE(ids.insert(r.experiment_id).second) << r.experiment_id;
    EXPECT_TRUE(cells.insert({r.pretrain_dataset, r.downstream_dataset, r.shots.value_or(0)}).second);
  }
}

TEST(RenderTableTest, FineTuneReferenceRows) {
  const ReportTable t = render_table(reference_records(), TableLayout::kTableV);
  ASSERT_EQ(t.columns.size(), 3u);
  EXPECT_EQ(t.columns[0].header(), "AID");
  const ReportRow* row = t.find_row("PatternNet [ref]");
  ASSERT_NE(row, nullptr);
  EXPECT_EQ(row->cells, (std::vector<std::string>{"97.83", "99.26", "99.90"}));
  const ReportRow* r45 = t.find_row("Resisc45 [ref]");
  ASSERT_NE(r45, nullptr);
  EXPECT_EQ(r45->cells, (std::vector<std::string>{"97.62", "97.75", "98.24"}));
  // Method-comparison rows stay out of this layout.
  EXPECT_EQ(t.find_row("Scratch [ref]"), nullptr);
  EXPECT_EQ(t.rows.size(), 3u);
}

TEST(RenderTableTest, FewShotReferenceRows) {
  const ReportTable t = render_table(reference_records(), TableLayout::kTableVI);
  ASSERT_EQ(t.columns.size(), 12u);
  EXPECT_EQ(t.columns[8].header(), "UCM 5");
  const ReportRow* row = t.find_row("PatternNet [ref]");
  ASSERT_NE(row, nullptr);
  EXPECT_EQ(std::vector<std::string>(row->cells.begin() + 8, row->cells.end()),
            (std::vector<std::string>{"81.65", "85.87", "91.70", "94.66"}));
  const ReportRow* imnet = t.find_row("ImageNet [ref]");
  ASSERT_NE(imnet, nullptr);
  EXPECT_EQ(imnet->cells[0], "45.45");
  EXPECT_EQ(imnet->cells[7], "59.71");
}

TEST(RenderTableTest, MethodComparisonReusesFineTuneCells) {
  const auto refs = reference_records();
  const ReportTable t = render_table(refs, TableLayout::kTableII);
  const ReportRow* ours = t.find_row("PatternNet [ref]");
  ASSERT_NE(ours, nullptr);
  EXPECT_EQ(ours->cells, (std::vector<std::string>{"99.90", "99.26", "97.20"}));
  const ReportTable v = render_table(refs, TableLayout::kTableV);
  EXPECT_EQ(ours->sources[0], v.find_row("PatternNet [ref]")->sources[2]);
  const ReportRow* scratch = t.find_row("Scratch [ref]");
  ASSERT_NE(scratch, nullptr);
  EXPECT_EQ(scratch->cells, (std::vector<std::string>{"95.70", "98.50", "95.50"}));
}

TEST(RenderTableTest, MeasuredRowsSeparateAndExtraAxesAppended) {
  auto records = reference_records();
  records.push_back(measured("m1", "PatternNet", "UCM", std::nullopt, 0.5));
  records.push_back(measured("m2", "Synthetic", "Toy", std::nullopt, 0.25));
  const ReportTable t = render_table(records, TableLayout::kTableV);
  ASSERT_EQ(t.columns.size(), 4u);
  EXPECT_EQ(t.columns[3].header(), "Toy");
  const ReportRow* m = t.find_row("PatternNet");
  ASSERT_NE(m, nullptr);
  EXPECT_EQ(m->provenance, Provenance::kMeasured);
  EXPECT_EQ(m->cells, (std::vector<std::string>{kMissingCell, kMissingCell, "50.00", kMissingCell}));
  EXPECT_EQ(m->sources[2], "m1");
  EXPECT_EQ(t.find_row("PatternNet [ref]")->cells[2], "99.90");
  const ReportRow* s = t.find_row("Synthetic");
  ASSERT_NE(s, nullptr);
  EXPECT_EQ(s->cells[3], "25.00");
}

TEST(RenderTableTest, LatestRecordWins) {
  std::vector<MetricsRecord> records{measured("old", "MLRSNet", "AID", std::nullopt, 0.1),
                                     measured("new", "MLRSNet", "AID", std::nullopt, 0.2)};
  const ReportTable t = render_table(records, TableLayout::kTableV);
  EXPECT_EQ(t.find_row("MLRSNet")->cells[0], "20.00");
  EXPECT_EQ(t.find_row("MLRSNet")->sources[0], "new");
}

TEST(RenderTableTest, EmptyRowsRenderAsMissing) {
  const ReportTable t = render_table({}, TableLayout::kTableV);
  ASSERT_EQ(t.rows.size(), 3u);
  for (const auto& row : t.rows)
    for (const auto& c : row.cells) EXPECT_EQ(c, kMissingCell);
}

TEST(RenderTableTest, TextIsStableAndAligned) {
  const auto refs = reference_records();
  const std::string a = to_text(render_table(refs, TableLayout::kTableVI));
  const std::string b = to_text(render_table(refs, TableLayout::kTableVI));
  EXPECT_EQ(a, b);
  EXPECT_NE(a.find("| 81.65 | 85.87  | 91.70  | 94.66 \n"), std::string::npos);
  EXPECT_NE(a.find("PatternNet [ref]"), std::string::npos);
}

TEST(RenderTableTest, LayoutNames) {
  for (TableLayout l : {TableLayout::kTableII, TableLayout::kTableV, TableLayout::kTableVI})
    EXPECT_EQ(table_layout_from_string(to_string(l)), l);
  EXPECT_THROW(table_layout_from_string("tableIX"), ConfigError);
}

TEST(PlotTest, ExactDecimalRoundTrips) {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const double v = u(gen);
    const std::string s = exact_decimal(v);
    double back = 0;
    std::from_chars(s.data(), s.data() + s.size(), back);
    EXPECT_EQ(back, v);
  }
  EXPECT_EQ(exact_decimal(0.8165), "0.8165");
}

TEST(PlotTest, PanelsLinesAndPoints) {
  const PlotData d = plot_data(reference_records());
  ASSERT_EQ(d.panels.size(), 3u);
  const PlotPanel& ucm = d.panels[2];
  EXPECT_EQ(ucm.downstream, "UCM");
  ASSERT_EQ(ucm.lines.size(), 4u);
  const PlotLine& pn = ucm.lines[3];
  EXPECT_EQ(pn.label, "PatternNet [ref]");
  ASSERT_EQ(pn.points.size(), 4u);
  EXPECT_EQ(pn.points[0], (std::pair<int, double>{5, 81.65 / 100.0}));
  EXPECT_EQ(pn.points[3].first, 50);
}

TEST(PlotTest, RequiresLinearEvalRecords) {
  EXPECT_THROW(plot_data({measured("m", "A", "B", std::nullopt, 0.5)}), ValidationError);
}

TEST_F(StoreTest, EmitPlotWritesSvgAndExactSidecar) {
  auto records = reference_records();
  records.push_back(measured("m1", "Synthetic", "UCM", 5, 1.0 / 3.0));
  const fs::path svg = dir_ / "plots" / "shots.svg";
  const fs::path tsv = emit_plot(records, svg);
  EXPECT_EQ(tsv, dir_ / "plots" / "shots.tsv");
  ASSERT_TRUE(fs::exists(svg));
  std::ifstream in(tsv);
  std::string header, line;
  std::getline(in, header);
  EXPECT_EQ(header, "downstream\tline\tprovenance\tshots\tmean_accuracy\texperiment_id");
  bool found = false;
  while (std::getline(in, line)) {
    if (line.find("\tm1") == std::string::npos) continue;
    found = true;
    const auto cols = line.substr(0, line.rfind('\t'));
    const std::string value = cols.substr(cols.rfind('\t') + 1);
    double back = 0;
    std::from_chars(value.data(), value.data() + value.size(), back);
    EXPECT_EQ(back, 1.0 / 3.0);
  }
  EXPECT_TRUE(found);
  std::ifstream s(svg);
  const std::string content((std::istreambuf_iterator<char>(s)), std::istreambuf_iterator<char>());
  EXPECT_EQ(content, render_svg(plot_data(records)));
  EXPECT_NE(content.find("stroke-dasharray"), std::string::npos);
}

}  // namespace
}  // namespace rsrep
