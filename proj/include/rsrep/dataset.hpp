#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rsrep/augmentation.hpp"

namespace rsrep {

/// Lowercase, with every run of non-alphanumeric characters folded into a
/// single underscore and no leading or trailing underscore.
/// "Harbor & Port" -> "harbor_port", "denseResidential" stays "denseresidential".
std::string canonicalize_class_name(std::string_view name);

struct ClassEntry {
  /// Name as listed in the manifest; also the on-disk directory name.
  std::string name;
  std::string canonical;
  std::vector<std::string> aliases;
  /// Declared image count; filled from disk when the manifest omits it.
  std::optional<std::size_t> sample_count;
};

class ClassCatalog {
 public:
  ClassCatalog() = default;
  /// Throws ValidationError on duplicate canonical names.
  explicit ClassCatalog(std::vector<ClassEntry> entries);

  /// Builds a catalog from bare names.
  static ClassCatalog from_names(const std::vector<std::string>& names);

  const std::vector<ClassEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const ClassEntry& at(std::size_t i) const { return entries_.at(i); }
  void set_count(std::size_t i, std::size_t count) { entries_.at(i).sample_count = count; }

 private:
  std::vector<ClassEntry> entries_;
};

/// Synonym table mapping canonicalized aliases to canonical class names.
///
/// File format: one "alias<whitespace>canonical" pair per line; blank lines
/// and lines starting with '#' are ignored. Both columns are canonicalized.
class AliasMap {
 public:
  AliasMap() = default;
  static AliasMap load(const std::filesystem::path& path);
  static AliasMap parse(std::string_view text);

  /// Throws ValidationError if `alias` already maps somewhere else.
  void add(std::string_view alias, std::string_view canonical);
  std::string resolve(std::string_view name) const;
  std::size_t size() const { return table_.size(); }

 private:
  std::map<std::string, std::string> table_;
};

struct ResolutionRange {
  double min_m = 0.0;
  double max_m = 0.0;
};

struct Sample {
  std::filesystem::path path;
  int label = 0;
};

struct DatasetManifest {
  std::string name;
  std::filesystem::path root;
  int image_size = 0;
  ResolutionRange resolution;
  ClassCatalog classes;
  /// Class-major, files sorted by name within each class. Empty unless the
  /// manifest was loaded against its on-disk directory tree.
  std::vector<Sample> samples;

  /// Sum of per-class counts (0 for classes whose count is unknown).
  std::size_t num_images() const;
  /// Per-class counts; throws ValidationError if any is unknown.
  std::vector<std::size_t> class_counts() const;
};

/// Reads the manifest file only.
///
/// Format (JSON):
///   { "name": "UCM", "root": "images", "image_size": 256,
///     "resolution_min_m": 0.3, "resolution_max_m": 0.3,
///     "classes": [ {"name": "agricultural", "aliases": [], "count": 100}, ... ] }
/// "root" is optional and relative to the manifest's directory (default: the
/// directory itself); "aliases" and "count" are optional per class.
DatasetManifest parse_manifest(const std::filesystem::path& path);

/// Parses and validates against the directory-per-class layout under root:
/// every class directory must exist and hold exactly `count` images when a
/// count is declared. Populates `samples`.
DatasetManifest load_manifest(const std::filesystem::path& path);

/// Writes `m` in the manifest format above, root stored relative to the
/// manifest directory when possible.
void write_manifest(const std::filesystem::path& path, const DatasetManifest& m);

/// Image files (png/jpg/jpeg/tif/tiff/bmp/ppm) directly under `dir`, sorted.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

using SplitRatios = std::array<double, 3>;

struct SplitSpec {
  SplitRatios ratios{0.6, 0.2, 0.2};
  std::uint64_t seed = 0;
  /// Indexed by class-major sample index.
  std::vector<Split> assignment;
  std::vector<int> labels;
  std::vector<std::string> class_names;

  std::vector<std::size_t> indices(Split s) const;
  std::vector<std::size_t> indices(Split s, int label) const;
};

/// Largest-remainder apportionment of n samples over the three ratios;
/// remainder ties go to the earlier split (train, then val, then test).
std::array<std::size_t, 3> largest_remainder_counts(std::size_t n, const SplitRatios& ratios);

/// Per-class stratified partition, deterministic in (counts, ratios, seed).
SplitSpec stratified_split(const DatasetManifest& manifest, const SplitRatios& ratios,
                           std::uint64_t seed);

struct FewShotSpec {
  int shots_per_class = 0;
  std::uint64_t seed = 0;
  /// Sample indices drawn from the train partition, class-major.
  std::vector<std::size_t> indices;
};

/// Uniform draw without replacement of `n` training samples per class.
FewShotSpec few_shot_sample(const SplitSpec& split, int n, std::uint64_t seed);

/// |downstream classes also present in pretrain| / |downstream classes|,
/// matching by canonical name, per-class aliases, and the optional alias map.
double class_similarity(const ClassCatalog& pretrain, const ClassCatalog& downstream,
                        const AliasMap* aliases = nullptr);

/// Names of the downstream classes counted as shared by class_similarity.
std::vector<std::string> shared_classes(const ClassCatalog& pretrain, const ClassCatalog& downstream,
                                        const AliasMap* aliases = nullptr);

struct DatasetStats {
  std::string name;
  std::size_t num_classes = 0;
  std::size_t num_samples = 0;
  ResolutionRange resolution;
  std::vector<std::pair<std::string, std::size_t>> histogram;
};

DatasetStats dataset_stats(const DatasetManifest& manifest);

}  // namespace rsrep
