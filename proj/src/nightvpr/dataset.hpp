#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "nightvpr/image.hpp"
#include "nightvpr/store.hpp"

namespace nightvpr {

// Images held in memory alongside their manifest records.
struct ImageSet {
  store::Manifest manifest;
  std::vector<RasterImage> images;

  std::size_t size() const noexcept { return images.size(); }
  const store::ImageRecord& record(std::size_t i) const { return manifest.records[i]; }

  // Every record labeled; throws a data error naming the first unlabeled id.
  std::vector<std::size_t> labels() const;
};

// Reads every record's image (PPM) relative to the manifest's directory.
ImageSet load_image_set(const std::filesystem::path& manifest_path);

// Writes images to `image_dir` (named <id>.ppm) and the manifest next to it
// with image refs relative to the manifest's directory.
void save_image_set(ImageSet set, const std::filesystem::path& manifest_path,
                    const std::filesystem::path& image_dir);

}  // namespace nightvpr
