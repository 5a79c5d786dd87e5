#include "nightvpr/dataset.hpp"

#include "nightvpr/error.hpp"
#include "nightvpr/parallel.hpp"

namespace nightvpr {

std::vector<std::size_t> ImageSet::labels() const {
  std::vector<std::size_t> out;
  out.reserve(manifest.records.size());
  for (const auto& r : manifest.records) {
    if (!r.label) throw data_error("record \"" + r.id + "\" has no class label");
    out.push_back(*r.label);
  }
  return out;
}

ImageSet load_image_set(const std::filesystem::path& manifest_path) {
  ImageSet set;
  set.manifest = store::read_manifest(manifest_path);
  const auto base = manifest_path.parent_path();
  set.images.resize(set.manifest.records.size());
  parallel_for(set.images.size(), [&](std::size_t i) {
    const auto& ref = set.manifest.records[i].image_ref;
    if (ref.empty())
      throw data_error("record \"" + set.manifest.records[i].id + "\" has no image");
    const std::filesystem::path p(ref);
    set.images[i] = read_ppm(p.is_absolute() ? p : base / p);
  });
  return set;
}

void save_image_set(ImageSet set, const std::filesystem::path& manifest_path,
                    const std::filesystem::path& image_dir) {
  if (set.images.size() != set.manifest.records.size())
    throw data_error("image count does not match manifest");
  std::filesystem::create_directories(image_dir);
  if (manifest_path.has_parent_path())
    std::filesystem::create_directories(manifest_path.parent_path());
  const auto base = std::filesystem::absolute(manifest_path).parent_path();
  for (std::size_t i = 0; i < set.images.size(); ++i) {
    auto& r = set.manifest.records[i];
    const auto file = image_dir / (r.id + ".ppm");
    write_ppm(set.images[i], file);
    r.image_ref = std::filesystem::relative(std::filesystem::absolute(file), base).generic_string();
  }
  store::write_manifest(set.manifest, manifest_path);
}

}  // namespace nightvpr
