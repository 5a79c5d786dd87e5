#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace nightvpr {

// H x W x 3 raster, interleaved RGB, values in [0, 1].
class RasterImage {
 public:
  RasterImage() = default;
  RasterImage(std::size_t height, std::size_t width, float fill = 0.0f);

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t size() const noexcept { return pixels_.size(); }
  bool empty() const noexcept { return pixels_.empty(); }

  float& at(std::size_t y, std::size_t x, std::size_t c) {
    return pixels_[(y * width_ + x) * 3 + c];
  }
  float at(std::size_t y, std::size_t x, std::size_t c) const {
    return pixels_[(y * width_ + x) * 3 + c];
  }

  std::span<float> pixels() noexcept { return pixels_; }
  std::span<const float> pixels() const noexcept { return pixels_; }

  // Throws a data error if any channel value is outside [0, 1] or NaN.
  void validate() const;

  friend bool operator==(const RasterImage&, const RasterImage&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<float> pixels_;
};

// Binary PPM (P6, maxval 255). Reading accepts maxval up to 65535.
RasterImage read_ppm(const std::filesystem::path& path);
void write_ppm(const RasterImage& img, const std::filesystem::path& path);

}  // namespace nightvpr
