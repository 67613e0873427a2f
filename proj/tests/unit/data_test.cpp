#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <unistd.h>

#include "rsrep/dataset.hpp"
#include "rsrep/errors.hpp"
#include "rsrep/image.hpp"

namespace rsrep {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  explicit TempDir(const std::string& tag)
      : path_(fs::temp_directory_path() / ("rsrep_" + tag + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

// Directory-per-class fixture with tiny PNG files plus its manifest.
fs::path write_fixture(const fs::path& dir, const std::string& name, int image_size,
                       const std::vector<std::pair<std::string, int>>& classes, ResolutionRange res) {
  const Image tile(2, 2, 0.5f);
  std::vector<ClassEntry> entries;
  for (const auto& [cls, n] : classes) {
    fs::create_directories(dir / "images" / cls);
    for (int i = 0; i < n; ++i) write_png(dir / "images" / cls / (std::to_string(i) + ".png"), tile);
    entries.push_back({cls, "", {}, static_cast<std::size_t>(n)});
  }
  DatasetManifest m;
  m.name = name;
  m.root = dir / "images";
  m.image_size = image_size;
  m.resolution = res;
  m.classes = ClassCatalog(entries);
  write_manifest(dir / "manifest.json", m);
  return dir / "manifest.json";
}

DatasetManifest counts_only(const std::vector<std::size_t>& counts) {
  std::vector<ClassEntry> entries;
  for (std::size_t i = 0; i < counts.size(); ++i)
    entries.push_back({"class" + std::to_string(i), "", {}, counts[i]});
  DatasetManifest m;
  m.name = "fixture";
  m.classes = ClassCatalog(entries);
  return m;
}

TEST(Canonicalize, FoldsCaseAndPunctuation) {
  EXPECT_EQ(canonicalize_class_name("Harbor & Port"), "harbor_port");
  EXPECT_EQ(canonicalize_class_name("  dense-Residential "), "dense_residential");
  EXPECT_EQ(canonicalize_class_name("storage_tanks"), "storage_tanks");
  EXPECT_EQ(canonicalize_class_name("SeaLake"), "sealake");
}

TEST(Catalog, DuplicatesAfterCanonicalizationRejected) {
  EXPECT_THROW(ClassCatalog::from_names({"Forest", "forest"}), ValidationError);
  EXPECT_THROW(ClassCatalog::from_names({"storage tanks", "Storage-Tanks"}), ValidationError);
}

TEST(Aliases, ParseResolveAndConflict) {
  const AliasMap map = AliasMap::parse("# synonyms\nharbour harbor\n\nSea-Lake lake\n");
  EXPECT_EQ(map.size(), 2u);
  EXPECT_EQ(map.resolve("Harbour"), "harbor");
  EXPECT_EQ(map.resolve("sea lake"), "lake");
  EXPECT_EQ(map.resolve("forest"), "forest");
  EXPECT_THROW(AliasMap::parse("a b\na c\n"), ValidationError);
  EXPECT_NO_THROW(AliasMap::parse("a b\na b\n"));
  EXPECT_THROW(AliasMap::parse("lonely\n"), ValidationError);
}

TEST(Manifest, UcmShapedFixture) {
  TempDir tmp("ucm");
  std::vector<std::pair<std::string, int>> classes;
  for (int i = 0; i < 21; ++i) classes.emplace_back("class_" + std::to_string(i), 100);
  const auto path = write_fixture(tmp.path(), "UCM", 256, classes, {0.3, 0.3});
  const DatasetManifest m = load_manifest(path);
  EXPECT_EQ(m.num_images(), 2100u);
  EXPECT_EQ(m.samples.size(), 2100u);
  EXPECT_EQ(m.classes.size(), 21u);
  EXPECT_EQ(m.samples.front().label, 0);
  EXPECT_EQ(m.samples.back().label, 20);
}

TEST(Manifest, EuroSatShapedFixture) {
  TempDir tmp("eurosat");
  std::vector<std::pair<std::string, int>> classes;
  for (const char* c : {"AnnualCrop", "Forest", "HerbaceousVegetation", "Highway", "Industrial", "Pasture",
                        "PermanentCrop", "Residential", "River", "SeaLake"})
    classes.emplace_back(c, 3);
  const DatasetManifest m = load_manifest(write_fixture(tmp.path(), "EuroSAT", 64, classes, {10, 30}));
  EXPECT_EQ(m.image_size, 64);
  EXPECT_EQ(m.classes.size(), 10u);
}

TEST(Manifest, MissingClassDirectory) {
  TempDir tmp("missing");
  const auto path = write_fixture(tmp.path(), "X", 32, {{"a", 2}, {"b", 2}}, {1, 1});
  fs::remove_all(tmp.path() / "images" / "b");
  try {
    load_manifest(path);
    FAIL() << "expected a validation error";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("'b'"), std::string::npos);
  }
}

TEST(Manifest, CountMismatch) {
  TempDir tmp("mismatch");
  const auto path = write_fixture(tmp.path(), "X", 32, {{"a", 2}, {"b", 2}}, {1, 1});
  write_png(tmp.path() / "images" / "a" / "extra.png", Image(2, 2));
  EXPECT_THROW(load_manifest(path), ValidationError);
}

TEST(Manifest, DuplicateClassAndUnknownKey) {
  TempDir tmp("dup");
  const auto path = tmp.path() / "m.json";
  std::ofstream(path) << R"({"name":"X","image_size":8,"resolution_min_m":1,"resolution_max_m":1,
    "classes":[{"name":"Forest"},{"name":"forest"}]})";
  EXPECT_THROW(parse_manifest(path), ValidationError);
  std::ofstream(path) << R"({"name":"X","image_size":8,"resolution_min_m":1,"resolution_max_m":1,
    "classes":[], "colour":1})";
  EXPECT_THROW(parse_manifest(path), ValidationError);
  std::ofstream(path) << R"({"name":"X","image_size":8,"resolution_min_m":2,"resolution_max_m":1,
    "classes":[]})";
  EXPECT_THROW(parse_manifest(path), ValidationError);
}

TEST(Manifest, CountsFilledFromDisk) {
  TempDir tmp("fill");
  fs::create_directories(tmp.path() / "a");
  for (int i = 0; i < 3; ++i) write_png(tmp.path() / "a" / (std::to_string(i) + ".jpg"), Image(2, 2));
  std::ofstream(tmp.path() / "a" / "notes.txt") << "not an image";
  std::ofstream(tmp.path() / "m.json") << R"({"name":"X","image_size":2,"resolution_min_m":1,
    "resolution_max_m":1,"classes":[{"name":"a"}]})";
  const DatasetManifest m = load_manifest(tmp.path() / "m.json");
  EXPECT_EQ(m.num_images(), 3u);
}

// Exhaustive oracle: among all ways to hand out the leftover units (one per
// split at most), pick the one that gives them to the largest remainders,
// breaking ties by split order.
std::array<std::size_t, 3> brute_force_counts(std::size_t n, const SplitRatios& r) {
  std::array<std::size_t, 3> floors{};
  std::array<double, 3> rem{};
  std::size_t used = 0;
  for (int k = 0; k < 3; ++k) {
    const double q = n * r[k];
    floors[k] = static_cast<std::size_t>(std::floor(q + 1e-9));
    rem[k] = q - floors[k];
    used += floors[k];
  }
  const std::size_t leftover = n - used;
  std::array<std::size_t, 3> best{};
  double best_score = -1;
  int best_rank = 1 << 30;
  for (int mask = 0; mask < 8; ++mask) {
    if (static_cast<std::size_t>(__builtin_popcount(mask)) != leftover) continue;
    // Highest total remainder wins; among equals, the set of earliest splits.
    double score = 0;
    int rank = 0;
    for (int k = 0; k < 3; ++k)
      if (mask & (1 << k)) {
        score += std::round(rem[k] * 1e9);
        rank += k;
      }
    if (score > best_score || (score == best_score && rank < best_rank)) {
      best_score = score;
      best_rank = rank;
      best = floors;
      for (int k = 0; k < 3; ++k)
        if (mask & (1 << k)) ++best[k];
    }
  }
  return best;
}

TEST(Split, LargestRemainderMatchesBruteForce) {
  const std::vector<SplitRatios> ratio_sets{{0.6, 0.2, 0.2}, {0.5, 0.3, 0.2}, {0.7, 0.15, 0.15},
                                            {1.0 / 3, 1.0 / 3, 1.0 / 3}, {0.8, 0.1, 0.1}};
  for (const auto& r : ratio_sets)
    for (std::size_t n = 0; n <= 60; ++n) {
      const auto got = largest_remainder_counts(n, r);
      EXPECT_EQ(got, brute_force_counts(n, r)) << "n=" << n;
      EXPECT_EQ(got[0] + got[1] + got[2], n);
      for (int k = 0; k < 3; ++k) EXPECT_LT(std::abs(double(got[k]) - n * r[k]), 1.0);
    }
}

TEST(Split, SevenSamples) {
  const auto c = largest_remainder_counts(7, {0.6, 0.2, 0.2});
  EXPECT_EQ(c[0] + c[1] + c[2], 7u);
  EXPECT_EQ(c[0], 4u);
  // Remainders of val and test tie at 0.4; the earlier split takes the unit.
  EXPECT_EQ(c, (std::array<std::size_t, 3>{4, 2, 1}));
}

TEST(Split, UcmTotals) {
  const DatasetManifest m = counts_only(std::vector<std::size_t>(21, 100));
  const SplitSpec s = stratified_split(m, {0.6, 0.2, 0.2}, 42);
  EXPECT_EQ(s.indices(Split::kTrain).size(), 1260u);
  EXPECT_EQ(s.indices(Split::kVal).size(), 420u);
  EXPECT_EQ(s.indices(Split::kTest).size(), 420u);
  for (int c = 0; c < 21; ++c) {
    EXPECT_EQ(s.indices(Split::kTrain, c).size(), 60u);
    EXPECT_EQ(s.indices(Split::kVal, c).size(), 20u);
  }
}

TEST(Split, PartitionAndDeterminism) {
  const DatasetManifest m = counts_only({7, 13, 3, 40});
  const SplitSpec a = stratified_split(m, {0.6, 0.2, 0.2}, 5);
  const SplitSpec b = stratified_split(m, {0.6, 0.2, 0.2}, 5);
  EXPECT_EQ(a.assignment, b.assignment);
  EXPECT_EQ(a.assignment.size(), 63u);
  std::set<std::size_t> all;
  for (Split sp : {Split::kTrain, Split::kVal, Split::kTest})
    for (auto i : a.indices(sp)) EXPECT_TRUE(all.insert(i).second);
  EXPECT_EQ(all.size(), 63u);
  const SplitSpec c = stratified_split(m, {0.6, 0.2, 0.2}, 6);
  EXPECT_NE(a.assignment, c.assignment);
}

TEST(Split, Errors) {
  const DatasetManifest m = counts_only({10, 10});
  EXPECT_THROW(stratified_split(m, {0.6, 0.3, 0.2}, 1), ValidationError);
  EXPECT_THROW(stratified_split(counts_only({10, 2}), {0.6, 0.2, 0.2}, 1), ValidationError);
}

TEST(FewShot, CountsAndDisjointness) {
  const DatasetManifest m = counts_only(std::vector<std::size_t>(30, 50));
  const SplitSpec split = stratified_split(m, {0.6, 0.2, 0.2}, 1);
  const FewShotSpec fs5 = few_shot_sample(split, 5, 3);
  EXPECT_EQ(fs5.indices.size(), 150u);
  std::vector<int> per_class(30, 0);
  for (auto i : fs5.indices) {
    EXPECT_EQ(split.assignment[i], Split::kTrain);
    ++per_class[split.labels[i]];
  }
  for (int n : per_class) EXPECT_EQ(n, 5);
  EXPECT_EQ(few_shot_sample(split, 5, 3).indices, fs5.indices);
}

TEST(FewShot, TooManyShotsNamesClass) {
  const DatasetManifest m = counts_only({100, 66});
  const SplitSpec split = stratified_split(m, {0.6, 0.2, 0.2}, 1);
  try {
    few_shot_sample(split, 50, 1);
    FAIL() << "expected an error";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("class1"), std::string::npos);
    EXPECT_EQ(std::string(e.what()).find("class0"), std::string::npos);
  }
}

// Two independent uniform draws of n from N collide (same set) with
// probability 1 / C(N, n) per class; over k classes, 1 / C(N, n)^k.
TEST(FewShot, DifferentSeedsDifferentSets) {
  const DatasetManifest m = counts_only(std::vector<std::size_t>(4, 20));
  const SplitSpec split = stratified_split(m, {0.6, 0.2, 0.2}, 1);
  const double per_class = 1.0 / (12.0 * 11 * 10 * 9 * 8 / 120);  // 1 / C(12, 5)
  const double collision_bound = std::pow(per_class, 4);
  ASSERT_LT(collision_bound * 50, 1e-6);
  int identical = 0;
  for (std::uint64_t s = 0; s < 50; ++s)
    if (few_shot_sample(split, 5, s).indices == few_shot_sample(split, 5, s + 1000).indices) ++identical;
  EXPECT_EQ(identical, 0);
  // Per-class overlap also follows the hypergeometric mean n*n/N.
  double overlap = 0;
  const int trials = 400;
  for (int s = 0; s < trials; ++s) {
    const auto a = few_shot_sample(split, 5, s).indices;
    const auto b = few_shot_sample(split, 5, s + 5000).indices;
    std::vector<std::size_t> common;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
    overlap += common.size();
  }
  const double expected = 4 * 25.0 / 12.0;
  EXPECT_NEAR(overlap / trials, expected, 0.3);
}

TEST(Similarity, Basics) {
  const ClassCatalog a = ClassCatalog::from_names({"forest", "river", "beach"});
  EXPECT_DOUBLE_EQ(class_similarity(a, a), 1.0);
  EXPECT_DOUBLE_EQ(class_similarity(a, ClassCatalog::from_names({"x", "y"})), 0.0);
  EXPECT_THROW(class_similarity(a, ClassCatalog{}), ValidationError);
}

TEST(Similarity, AsymmetricDenominator) {
  const ClassCatalog small = ClassCatalog::from_names({"forest", "river"});
  const ClassCatalog big = ClassCatalog::from_names({"forest", "river", "beach", "desert"});
  EXPECT_DOUBLE_EQ(class_similarity(big, small), 1.0);
  EXPECT_DOUBLE_EQ(class_similarity(small, big), 0.5);
}

TEST(Similarity, AliasesResolve) {
  const ClassCatalog src = ClassCatalog::from_names({"Harbor", "sea_lake"});
  const ClassCatalog dst = ClassCatalog::from_names({"harbour", "SeaLake", "forest"});
  EXPECT_DOUBLE_EQ(class_similarity(src, dst), 0.0);
  const AliasMap map = AliasMap::parse("harbour harbor\nsealake sea_lake\n");
  EXPECT_NEAR(class_similarity(src, dst, &map), 2.0 / 3.0, 1e-12);
  std::vector<ClassEntry> with_alias{{"Port", "", {"harbour"}, std::nullopt}};
  EXPECT_NEAR(class_similarity(ClassCatalog(with_alias), dst), 1.0 / 3.0, 1e-12);
}

ClassCatalog synthetic(int total, int shared_prefix) {
  std::vector<std::string> names;
  for (int i = 0; i < total; ++i)
    names.push_back(i < shared_prefix ? "shared_" + std::to_string(i) : "own_" + std::to_string(total) + "_" + std::to_string(i));
  return ClassCatalog::from_names(names);
}

TEST(Similarity, TableFourArithmetic) {
  struct Cell {
    int shared, downstream;
    double reported;
  };
  const std::vector<Cell> cells{{20, 30, 66.6}, {9, 30, 30.0},  {18, 30, 60.0}, {4, 10, 40.0}, {3, 10, 30.0},
                                {4, 10, 40.0},  {16, 21, 76.1}, {18, 21, 85.7}, {19, 21, 90.4}};
  for (const auto& c : cells) {
    const ClassCatalog pre = synthetic(40, c.shared);
    const ClassCatalog down = synthetic(c.downstream, c.shared);
    const double pct = 100.0 * class_similarity(pre, down);
    EXPECT_NEAR(pct, c.reported, 0.1) << c.shared << "/" << c.downstream;
  }
}

TEST(Stats, PatternNetAndMlrsNetShapes) {
  std::vector<ClassEntry> entries;
  for (int i = 0; i < 38; ++i) entries.push_back({"c" + std::to_string(i), "", {}, 800});
  DatasetManifest m;
  m.name = "PatternNet";
  m.resolution = {0.06, 4.96};
  m.classes = ClassCatalog(entries);
  const DatasetStats s = dataset_stats(m);
  EXPECT_EQ(s.num_classes, 38u);
  EXPECT_EQ(s.num_samples, 30400u);
  for (const auto& [_, n] : s.histogram) EXPECT_EQ(n, 800u);

  DatasetManifest mlrs;
  mlrs.name = "MLRSNet";
  mlrs.resolution = {0.1, 10.0};
  const DatasetStats t = dataset_stats(mlrs);
  EXPECT_EQ(t.resolution.min_m, 0.1);
  EXPECT_EQ(t.resolution.max_m, 10.0);
  EXPECT_EQ(t.num_classes, 0u);
  EXPECT_EQ(t.num_samples, 0u);
}

}  // namespace
}  // namespace rsrep
