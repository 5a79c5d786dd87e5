#include "nightvpr/synthdata.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "nightvpr/error.hpp"
#include "nightvpr/parallel.hpp"
#include "nightvpr/random.hpp"
#include "nightvpr/seed.hpp"

namespace nightvpr::synthdata {

namespace {

using Color = std::array<double, 3>;

struct Rect {
  double cx, cy, hw, hh;
  Color color;
};

// Identity of a place: everything here is keyed by (seed, place) only.
struct PlacePattern {
  Color c0, c1;
  double grad_angle;
  std::array<Rect, 5> rects;
  double stripe_freq, stripe_angle, stripe_amp;
};

Color random_color(Rng& rng) {
  return {rng.uniform(0.15, 1.0), rng.uniform(0.15, 1.0), rng.uniform(0.15, 1.0)};
}

PlacePattern make_pattern(const SynthConfig& cfg, std::size_t place) {
  Rng rng(sub_seed(sub_seed(cfg.seed, "place"), place));
  PlacePattern p;
  p.c0 = random_color(rng);
  p.c1 = random_color(rng);
  p.grad_angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
  for (auto& r : p.rects) {
    r.cx = rng.uniform(0.1, 0.9);
    r.cy = rng.uniform(0.1, 0.9);
    r.hw = rng.uniform(0.06, 0.22);
    r.hh = rng.uniform(0.06, 0.22);
    r.color = random_color(rng);
  }
  p.stripe_freq = rng.uniform(2.0, 7.0);
  p.stripe_angle = rng.uniform(0.0, std::numbers::pi);
  p.stripe_amp = rng.uniform(0.05, 0.2);
  return p;
}

Color shade(const PlacePattern& p, double u, double v) {
  const double t = std::clamp(
      0.5 + (u - 0.5) * std::cos(p.grad_angle) + (v - 0.5) * std::sin(p.grad_angle), 0.0, 1.0);
  Color c;
  for (int k = 0; k < 3; ++k) c[k] = (1 - t) * p.c0[k] + t * p.c1[k];
  for (const auto& r : p.rects)
    if (std::abs(u - r.cx) <= r.hw && std::abs(v - r.cy) <= r.hh) c = r.color;
  const double phase = 2.0 * std::numbers::pi * p.stripe_freq *
                       (u * std::cos(p.stripe_angle) + v * std::sin(p.stripe_angle));
  const double mod = 1.0 + p.stripe_amp * std::sin(phase);
  for (auto& x : c) x *= mod;
  return c;
}

}  // namespace

void SynthConfig::validate() const {
  if (n_places == 0) throw usage_error("n_places must be positive");
  if (views_per_place == 0) throw usage_error("views_per_place must be positive");
  if (image_size == 0) throw usage_error("image_size must be positive");
  if (!(jitter >= 0.0 && jitter <= 1.0)) throw usage_error("jitter must lie in [0, 1]");
  if (!(spacing_m > 50.0)) throw usage_error("spacing_m must exceed 50 m");
}

geo::PlanarPoint place_anchor(const SynthConfig& cfg, std::size_t place) {
  const auto cols = static_cast<std::size_t>(
      std::ceil(std::sqrt(static_cast<double>(cfg.n_places))));
  return {static_cast<double>(place % cols) * cfg.spacing_m,
          static_cast<double>(place / cols) * cfg.spacing_m};
}

RasterImage render_view(const SynthConfig& cfg, std::size_t place, std::size_t view) {
  const auto pattern = make_pattern(cfg, place);
  Rng rng(sub_seed(sub_seed(sub_seed(cfg.seed, "view"), place), view));
  const double j = cfg.jitter;
  const double tx = rng.uniform(-0.12, 0.12) * j;
  const double ty = rng.uniform(-0.12, 0.12) * j;
  const double scale = 1.0 + rng.uniform(-0.1, 0.1) * j;
  const double rot = rng.uniform(-0.1, 0.1) * j;
  const double gain = 1.0 + rng.uniform(-0.08, 0.08) * j;
  const double cr = std::cos(rot), sr = std::sin(rot);

  const std::size_t n = cfg.image_size;
  RasterImage img(n, n);
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) {
      // Output pixel -> pattern coordinates (inverse similarity transform).
      const double ox = (static_cast<double>(x) + 0.5) / static_cast<double>(n) - 0.5;
      const double oy = (static_cast<double>(y) + 0.5) / static_cast<double>(n) - 0.5;
      const double u = (cr * ox + sr * oy) / scale + 0.5 - tx;
      const double v = (-sr * ox + cr * oy) / scale + 0.5 - ty;
      const auto c = shade(pattern, u, v);
      for (std::size_t k = 0; k < 3; ++k)
        img.at(y, x, k) = static_cast<float>(std::clamp(c[k] * gain, 0.0, 1.0));
    }
  return img;
}

ImageSet generate(const SynthConfig& cfg) {
  cfg.validate();
  ImageSet set;
  const std::size_t total = cfg.n_places * cfg.views_per_place;
  set.manifest.coord_mode = store::CoordMode::Planar;
  set.manifest.records.resize(total);
  set.images.resize(total);
  parallel_for(total, [&](std::size_t i) {
    const std::size_t place = i / cfg.views_per_place;
    const std::size_t view = i % cfg.views_per_place;
    Rng rng(sub_seed(sub_seed(sub_seed(cfg.seed, "position"), place), view));
    const auto anchor = place_anchor(cfg, place);
    const double r = kViewRadiusM * std::sqrt(rng.uniform());
    const double a = rng.uniform(0.0, 2.0 * std::numbers::pi);

    auto& rec = set.manifest.records[i];
    rec.id = "p" + std::to_string(place) + "_v" + std::to_string(view);
    rec.position = geo::PlanarPoint{anchor.x_m + r * std::cos(a), anchor.y_m + r * std::sin(a)};
    rec.label = place;
    rec.domain = geo::DomainTag::Day;
    set.images[i] = render_view(cfg, place, view);
  });
  return set;
}

}  // namespace nightvpr::synthdata
