#pragma once

#include <string>
#include <vector>

#include "rsrep/dataset.hpp"
#include "rsrep/image.hpp"

namespace rsrep {

/// Random-access labeled image collection, ordered class-major so that
/// sample indices line up with SplitSpec assignments.
class ImageSource {
 public:
  virtual ~ImageSource() = default;

  virtual const std::string& name() const = 0;
  virtual std::size_t size() const = 0;
  virtual Image image(std::size_t i) const = 0;
  virtual int label(std::size_t i) const = 0;
  virtual const std::vector<std::string>& class_names() const = 0;

  std::size_t num_classes() const { return class_names().size(); }
  std::vector<std::size_t> class_counts() const;
};

class InMemorySource : public ImageSource {
 public:
  /// Throws ValidationError unless labels are non-decreasing, in range, and
  /// the same length as `images`.
  InMemorySource(std::string name, std::vector<std::string> class_names, std::vector<Image> images,
                 std::vector<int> labels);

  const std::string& name() const override { return name_; }
  std::size_t size() const override { return images_.size(); }
  Image image(std::size_t i) const override { return images_.at(i); }
  int label(std::size_t i) const override { return labels_.at(i); }
  const std::vector<std::string>& class_names() const override { return class_names_; }

  const std::vector<Image>& images() const { return images_; }

 private:
  std::string name_;
  std::vector<std::string> class_names_;
  std::vector<Image> images_;
  std::vector<int> labels_;
};

/// Decodes files listed by a loaded manifest on every access.
class ManifestSource : public ImageSource {
 public:
  explicit ManifestSource(DatasetManifest manifest);

  const std::string& name() const override { return manifest_.name; }
  std::size_t size() const override { return manifest_.samples.size(); }
  Image image(std::size_t i) const override;
  int label(std::size_t i) const override { return manifest_.samples.at(i).label; }
  const std::vector<std::string>& class_names() const override { return class_names_; }

  const DatasetManifest& manifest() const { return manifest_; }

 private:
  DatasetManifest manifest_;
  std::vector<std::string> class_names_;
};

/// Stratified split over the source's class counts.
SplitSpec stratified_split(const ImageSource& source, const SplitRatios& ratios, std::uint64_t seed);

/// Writes the source as a directory-per-class PNG tree plus manifest.json
/// under `dir`; returns the manifest path.
std::filesystem::path export_source(const ImageSource& source, const std::filesystem::path& dir,
                                    ResolutionRange resolution = {1.0, 1.0});

}  // namespace rsrep
