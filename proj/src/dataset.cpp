#include "rsrep/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>
#include <set>
#include <sstream>

#include "rsrep/errors.hpp"
#include "rsrep/random.hpp"

namespace rsrep {

namespace fs = std::filesystem;

std::string canonicalize_class_name(std::string_view name) {
  std::string out;
  bool pending_sep = false;
  for (char ch : name) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      if (pending_sep && !out.empty()) out.push_back('_');
      pending_sep = false;
      out.push_back(static_cast<char>(std::tolower(c)));
    } else {
      pending_sep = true;
    }
  }
  return out;
}

// ---------------------------------------------------------------- ClassCatalog

ClassCatalog::ClassCatalog(std::vector<ClassEntry> entries) : entries_(std::move(entries)) {
  std::set<std::string> seen;
  for (auto& e : entries_) {
    if (e.canonical.empty()) e.canonical = canonicalize_class_name(e.name);
    if (e.canonical.empty()) throw ValidationError("class name '" + e.name + "' is empty after canonicalization");
    if (!seen.insert(e.canonical).second) {
      throw ValidationError("duplicate class '" + e.name + "' (canonical '" + e.canonical + "')");
    }
  }
}

ClassCatalog ClassCatalog::from_names(const std::vector<std::string>& names) {
  std::vector<ClassEntry> entries;
  for (const auto& n : names) entries.push_back({n, "", {}, std::nullopt});
  return ClassCatalog(std::move(entries));
}

// ---------------------------------------------------------------- AliasMap

AliasMap AliasMap::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open alias file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

AliasMap AliasMap::parse(std::string_view text) {
  AliasMap map;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream fields(line);
    std::string alias, canonical, extra;
    fields >> alias >> canonical;
    if (canonical.empty() || (fields >> extra)) {
      throw ValidationError("alias file line " + std::to_string(line_no) + ": expected two columns");
    }
    map.add(alias, canonical);
  }
  return map;
}

void AliasMap::add(std::string_view alias, std::string_view canonical) {
  const std::string a = canonicalize_class_name(alias);
  const std::string c = canonicalize_class_name(canonical);
  auto [it, inserted] = table_.emplace(a, c);
  if (!inserted && it->second != c) {
    throw ValidationError("alias '" + a + "' maps to both '" + it->second + "' and '" + c + "'");
  }
}

std::string AliasMap::resolve(std::string_view name) const {
  const std::string c = canonicalize_class_name(name);
  auto it = table_.find(c);
  return it == table_.end() ? c : it->second;
}

// ---------------------------------------------------------------- manifest

std::size_t DatasetManifest::num_images() const {
  std::size_t n = 0;
  for (const auto& e : classes.entries()) n += e.sample_count.value_or(0);
  return n;
}

std::vector<std::size_t> DatasetManifest::class_counts() const {
  std::vector<std::size_t> counts;
  for (const auto& e : classes.entries()) {
    if (!e.sample_count) throw ValidationError(name + ": class '" + e.name + "' has no known count");
    counts.push_back(*e.sample_count);
  }
  return counts;
}

namespace {

const std::set<std::string>& image_extensions() {
  static const std::set<std::string> kExt{".png", ".jpg", ".jpeg", ".tif", ".tiff", ".bmp", ".ppm"};
  return kExt;
}

void reject_unknown_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                         const std::string& where) {
  for (const auto& [key, _] : j.items())
    if (!allowed.contains(key)) throw ValidationError(where + ": unknown key '" + key + "'");
}

}  // namespace

std::vector<fs::path> list_images(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (image_extensions().contains(ext)) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

DatasetManifest parse_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  const std::string where = path.string();
  reject_unknown_keys(j, {"name", "root", "image_size", "resolution_min_m", "resolution_max_m", "classes"},
                      where);
  DatasetManifest m;
  try {
    m.name = j.at("name").get<std::string>();
    m.root = path.parent_path() / j.value("root", std::string("."));
    m.root = m.root.lexically_normal();
    m.image_size = j.at("image_size").get<int>();
    m.resolution = {j.at("resolution_min_m").get<double>(), j.at("resolution_max_m").get<double>()};
    std::vector<ClassEntry> entries;
    for (const auto& c : j.at("classes")) {
      reject_unknown_keys(c, {"name", "aliases", "count"}, where + " class entry");
      ClassEntry e;
      e.name = c.at("name").get<std::string>();
      e.aliases = c.value("aliases", std::vector<std::string>{});
      if (c.contains("count")) e.sample_count = c.at("count").get<std::size_t>();
      entries.push_back(std::move(e));
    }
    m.classes = ClassCatalog(std::move(entries));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(where + ": " + e.what());
  }
  if (m.image_size <= 0) throw ValidationError(where + ": image_size must be positive");
  if (m.resolution.min_m > m.resolution.max_m) {
    throw ValidationError(where + ": resolution_min_m exceeds resolution_max_m");
  }
  return m;
}

DatasetManifest load_manifest(const fs::path& path) {
  DatasetManifest m = parse_manifest(path);
  for (std::size_t i = 0; i < m.classes.size(); ++i) {
    const ClassEntry& e = m.classes.at(i);
    const fs::path dir = m.root / e.name;
    if (!fs::is_directory(dir)) {
      throw ValidationError(m.name + ": class '" + e.name + "' has no directory " + dir.string());
    }
    const auto files = list_images(dir);
    if (e.sample_count && *e.sample_count != files.size()) {
      throw ValidationError(m.name + ": class '" + e.name + "' declares " +
                            std::to_string(*e.sample_count) + " images but " + dir.string() + " holds " +
                            std::to_string(files.size()));
    }
    m.classes.set_count(i, files.size());
    for (const auto& f : files) m.samples.push_back({f, static_cast<int>(i)});
  }
  return m;
}

void write_manifest(const fs::path& path, const DatasetManifest& m) {
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& e : m.classes.entries()) {
    nlohmann::json c = {{"name", e.name}};
    if (!e.aliases.empty()) c["aliases"] = e.aliases;
    if (e.sample_count) c["count"] = *e.sample_count;
    classes.push_back(c);
  }
  const fs::path base = path.parent_path().empty() ? fs::path(".") : path.parent_path();
  const fs::path rel = m.root.empty() ? fs::path(".") : fs::relative(m.root, base);
  nlohmann::json j = {{"name", m.name},
                      {"root", rel.generic_string()},
                      {"image_size", m.image_size},
                      {"resolution_min_m", m.resolution.min_m},
                      {"resolution_max_m", m.resolution.max_m},
                      {"classes", classes}};
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------- splits

std::vector<std::size_t> SplitSpec::indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignment.size(); ++i)
    if (assignment[i] == s) out.push_back(i);
  return out;
}

std::vector<std::size_t> SplitSpec::indices(Split s, int label) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignment.size(); ++i)
    if (assignment[i] == s && labels[i] == label) out.push_back(i);
  return out;
}

namespace {

void validate_ratios(const SplitRatios& ratios) {
  double sum = 0.0;
  for (double r : ratios) {
    if (!(r >= 0.0)) throw ValidationError("split ratios must be non-negative");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ValidationError("split ratios sum to " + std::to_string(sum) + ", expected 1");
  }
}

}  // namespace

std::array<std::size_t, 3> largest_remainder_counts(std::size_t n, const SplitRatios& ratios) {
  validate_ratios(ratios);
  constexpr double kTie = 1e-9;
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> remainder{};
  std::size_t assigned = 0;
  for (int k = 0; k < 3; ++k) {
    const double quota = static_cast<double>(n) * ratios[k];
    const double floor = std::floor(quota + kTie);
    counts[k] = static_cast<std::size_t>(floor);
    remainder[k] = quota - floor;
    assigned += counts[k];
  }
  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return remainder[a] > remainder[b] + kTie; });
  for (std::size_t i = 0; assigned < n; ++i, ++assigned) ++counts[order[i % 3]];
  return counts;
}

SplitSpec stratified_split(const DatasetManifest& manifest, const SplitRatios& ratios,
                           std::uint64_t seed) {
  validate_ratios(ratios);
  const auto counts = manifest.class_counts();
  SplitSpec spec;
  spec.ratios = ratios;
  spec.seed = seed;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    const std::size_t n = counts[c];
    const std::string& cname = manifest.classes.at(c).name;
    if (n < 3) throw ValidationError("class '" + cname + "' has fewer than 3 samples");
    spec.class_names.push_back(cname);
    const auto quota = largest_remainder_counts(n, ratios);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(seed, 0x5b117ULL, c));
    rng.shuffle(order);
    std::vector<Split> local(n);
    for (std::size_t k = 0; k < n; ++k) {
      local[order[k]] = k < quota[0] ? Split::kTrain : (k < quota[0] + quota[1] ? Split::kVal : Split::kTest);
    }
    spec.assignment.insert(spec.assignment.end(), local.begin(), local.end());
    spec.labels.insert(spec.labels.end(), n, static_cast<int>(c));
  }
  return spec;
}

FewShotSpec few_shot_sample(const SplitSpec& split, int n, std::uint64_t seed) {
  if (n <= 0) throw ValidationError("shots per class must be positive");
  FewShotSpec spec{n, seed, {}};
  for (std::size_t c = 0; c < split.class_names.size(); ++c) {
    auto pool = split.indices(Split::kTrain, static_cast<int>(c));
    if (pool.size() < static_cast<std::size_t>(n)) {
      throw ValidationError("class '" + split.class_names[c] + "' has only " + std::to_string(pool.size()) +
                            " training samples, cannot draw " + std::to_string(n));
    }
    Rng rng(derive_seed(seed, 0xf5ULL, c));
    rng.shuffle(pool);
    pool.resize(static_cast<std::size_t>(n));
    std::sort(pool.begin(), pool.end());
    spec.indices.insert(spec.indices.end(), pool.begin(), pool.end());
  }
  return spec;
}

// ---------------------------------------------------------------- similarity

namespace {

std::set<std::string> identities(const ClassEntry& e, const AliasMap* aliases) {
  auto resolve = [&](const std::string& n) {
    return aliases ? aliases->resolve(n) : canonicalize_class_name(n);
  };
  std::set<std::string> ids{resolve(e.canonical.empty() ? e.name : e.canonical)};
  for (const auto& a : e.aliases) ids.insert(resolve(a));
  return ids;
}

}  // namespace

std::vector<std::string> shared_classes(const ClassCatalog& pretrain, const ClassCatalog& downstream,
                                        const AliasMap* aliases) {
  if (downstream.empty()) throw ValidationError("class similarity: empty downstream catalog");
  if (pretrain.empty()) throw ValidationError("class similarity: empty pre-training catalog");
  std::set<std::string> source;
  for (const auto& e : pretrain.entries()) source.merge(identities(e, aliases));
  std::vector<std::string> shared;
  for (const auto& e : downstream.entries()) {
    const auto ids = identities(e, aliases);
    if (std::any_of(ids.begin(), ids.end(), [&](const std::string& id) { return source.contains(id); })) {
      shared.push_back(e.name);
    }
  }
  return shared;
}

double class_similarity(const ClassCatalog& pretrain, const ClassCatalog& downstream,
                        const AliasMap* aliases) {
  const auto shared = shared_classes(pretrain, downstream, aliases);
  return static_cast<double>(shared.size()) / static_cast<double>(downstream.size());
}

DatasetStats dataset_stats(const DatasetManifest& manifest) {
  DatasetStats s;
  s.name = manifest.name;
  s.num_classes = manifest.classes.size();
  s.num_samples = manifest.num_images();
  s.resolution = manifest.resolution;
  for (const auto& e : manifest.classes.entries()) s.histogram.emplace_back(e.name, e.sample_count.value_or(0));
  return s;
}

}  // namespace rsrep
