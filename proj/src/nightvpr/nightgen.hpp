#pragma once

#include <cstdint>

#include "nightvpr/image.hpp"

namespace nightvpr::nightgen {

struct NightParams {
  double gamma = 2.2;            // > 0
  double brightness = 0.35;      // (0, 1]
  double temp_shift = -0.25;     // [-1, 1]; negative is bluer, positive warmer
  int bloom_count = 3;           // >= 0
  double bloom_intensity = 0.6;  // [0, 1]
  double noise_sigma = 0.02;     // >= 0
  std::uint64_t seed = 0;

  void validate() const;

  // gamma=1, brightness=1, no shift, no blooms, no noise.
  static NightParams identity();
};

// Day-to-night style transform. Stages run in a fixed order:
//   per-channel gamma -> brightness scale -> temperature shift
//   -> seeded light blooms -> seeded Gaussian noise -> clamp to [0, 1].
// Output is a pure function of (img, p).
RasterImage night_transform(const RasterImage& img, const NightParams& p);

// Root-mean-square pixel difference on the 0..255 scale.
double pixel_l2(const RasterImage& a, const RasterImage& b);

// 10 log10(1 / MSE) on the [0, 1] scale, capped at 99 dB.
double psnr_db(const RasterImage& a, const RasterImage& b);

// Mean SSIM over the valid region of an 11x11 Gaussian window (sigma 1.5),
// K1 = 0.01, K2 = 0.03, dynamic range 1, averaged over the three channels.
double ssim(const RasterImage& a, const RasterImage& b);

}  // namespace nightvpr::nightgen
