#pragma once

#include <cstddef>
#include <cstdint>

#include "nightvpr/dataset.hpp"

namespace nightvpr::synthdata {

struct SynthConfig {
  std::size_t n_places = 100;
  std::size_t views_per_place = 4;
  std::size_t image_size = 32;
  double jitter = 0.5;       // [0, 1]
  double spacing_m = 100.0;  // > 50
  std::uint64_t seed = 0;

  void validate() const;
};

// Views of a place lie within this radius of its anchor.
inline constexpr double kViewRadiusM = 8.0;

// Planar grid anchor of place k.
geo::PlanarPoint place_anchor(const SynthConfig& cfg, std::size_t place);

// One view of one place; a pure function of (cfg, place, view).
RasterImage render_view(const SynthConfig& cfg, std::size_t place, std::size_t view);

// n_places x views_per_place day records with ids "p<k>_v<v>", class label k,
// planar positions and domain=day.
ImageSet generate(const SynthConfig& cfg);

}  // namespace nightvpr::synthdata
