#include "rsrep/source.hpp"

#include "rsrep/errors.hpp"

namespace rsrep {

std::vector<std::size_t> ImageSource::class_counts() const {
  std::vector<std::size_t> counts(num_classes(), 0);
  for (std::size_t i = 0; i < size(); ++i) ++counts.at(static_cast<std::size_t>(label(i)));
  return counts;
}

InMemorySource::InMemorySource(std::string name, std::vector<std::string> class_names,
                               std::vector<Image> images, std::vector<int> labels)
    : name_(std::move(name)),
      class_names_(std::move(class_names)),
      images_(std::move(images)),
      labels_(std::move(labels)) {
  if (images_.size() != labels_.size()) {
    throw ValidationError(name_ + ": " + std::to_string(images_.size()) + " images but " +
                          std::to_string(labels_.size()) + " labels");
  }
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] < 0 || static_cast<std::size_t>(labels_[i]) >= class_names_.size()) {
      throw ValidationError(name_ + ": label " + std::to_string(labels_[i]) + " out of range");
    }
    if (i > 0 && labels_[i] < labels_[i - 1]) throw ValidationError(name_ + ": samples are not class-major");
  }
}

ManifestSource::ManifestSource(DatasetManifest manifest) : manifest_(std::move(manifest)) {
  if (manifest_.samples.empty() && manifest_.num_images() > 0) {
    throw ValidationError(manifest_.name + ": manifest was not loaded against its image directory");
  }
  for (const auto& e : manifest_.classes.entries()) class_names_.push_back(e.name);
}

Image ManifestSource::image(std::size_t i) const { return decode_image(manifest_.samples.at(i).path); }

SplitSpec stratified_split(const ImageSource& source, const SplitRatios& ratios, std::uint64_t seed) {
  std::vector<ClassEntry> entries;
  const auto counts = source.class_counts();
  for (std::size_t c = 0; c < counts.size(); ++c)
    entries.push_back({source.class_names()[c], "", {}, counts[c]});
  DatasetManifest m;
  m.name = source.name();
  m.classes = ClassCatalog(std::move(entries));
  return stratified_split(m, ratios, seed);
}

std::filesystem::path export_source(const ImageSource& source, const std::filesystem::path& dir,
                                    ResolutionRange resolution) {
  std::vector<ClassEntry> entries;
  const auto counts = source.class_counts();
  std::vector<std::size_t> written(counts.size(), 0);
  int image_size = 0;
  for (std::size_t i = 0; i < source.size(); ++i) {
    const int c = source.label(i);
    const Image img = source.image(i);
    image_size = std::max({image_size, img.height, img.width});
    const auto class_dir = dir / "images" / source.class_names()[c];
    std::filesystem::create_directories(class_dir);
    char file[32];
    std::snprintf(file, sizeof file, "%06zu.png", written[c]++);
    write_png(class_dir / file, img);
  }
  for (std::size_t c = 0; c < counts.size(); ++c) entries.push_back({source.class_names()[c], "", {}, counts[c]});
  DatasetManifest m;
  m.name = source.name();
  m.root = dir / "images";
  m.image_size = image_size;
  m.resolution = resolution;
  m.classes = ClassCatalog(std::move(entries));
  const auto path = dir / "manifest.json";
  write_manifest(path, m);
  return path;
}

}  // namespace rsrep
