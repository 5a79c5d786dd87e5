#include "nightvpr/nightgen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "nightvpr/error.hpp"
#include "nightvpr/random.hpp"
#include "nightvpr/seed.hpp"

namespace nightvpr::nightgen {

void NightParams::validate() const {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw usage_error("gamma must be > 0");
  if (!(brightness > 0.0 && brightness <= 1.0))
    throw usage_error("brightness must lie in (0, 1]");
  if (!(temp_shift >= -1.0 && temp_shift <= 1.0))
    throw usage_error("temp_shift must lie in [-1, 1]");
  if (bloom_count < 0) throw usage_error("bloom_count must be >= 0");
  if (!(bloom_intensity >= 0.0 && bloom_intensity <= 1.0))
    throw usage_error("bloom_intensity must lie in [0, 1]");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma))
    throw usage_error("noise_sigma must be >= 0");
}

NightParams NightParams::identity() {
  NightParams p;
  p.gamma = 1.0;
  p.brightness = 1.0;
  p.temp_shift = 0.0;
  p.bloom_count = 0;
  p.bloom_intensity = 0.0;
  p.noise_sigma = 0.0;
  return p;
}

RasterImage night_transform(const RasterImage& img, const NightParams& p) {
  p.validate();
  img.validate();
  const std::size_t h = img.height();
  const std::size_t w = img.width();

  // Warm shift raises red and lowers blue; cool shift does the opposite.
  const std::array<double, 3> gain = {1.0 + 0.5 * p.temp_shift, 1.0,
                                      1.0 - 0.5 * p.temp_shift};

  std::vector<double> buf(img.size());
  auto src = img.pixels();
  for (std::size_t i = 0; i < buf.size(); ++i) {
    double v = src[i];
    if (p.gamma != 1.0) v = std::pow(v, p.gamma);
    v *= p.brightness;
    v *= gain[i % 3];
    buf[i] = v;
  }

  if (p.bloom_count > 0 && p.bloom_intensity > 0.0) {
    Rng rng(sub_seed(p.seed, "bloom"));
    const double base_radius = std::max(1.0, 0.08 * static_cast<double>(std::min(h, w)));
    // Sodium-lamp tint.
    constexpr std::array<double, 3> tint = {1.0, 0.78, 0.45};
    for (int k = 0; k < p.bloom_count; ++k) {
      const double cy = rng.uniform(0.0, static_cast<double>(h));
      const double cx = rng.uniform(0.0, static_cast<double>(w));
      const double sigma = base_radius * rng.uniform(0.5, 1.5);
      const double inv = 1.0 / (2.0 * sigma * sigma);
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          const double dy = static_cast<double>(y) + 0.5 - cy;
          const double dx = static_cast<double>(x) + 0.5 - cx;
          const double a = p.bloom_intensity * std::exp(-(dx * dx + dy * dy) * inv);
          for (std::size_t c = 0; c < 3; ++c) buf[(y * w + x) * 3 + c] += a * tint[c];
        }
      }
    }
  }

  if (p.noise_sigma > 0.0) {
    Rng rng(sub_seed(p.seed, "noise"));
    for (double& v : buf) v += p.noise_sigma * rng.normal();
  }

  RasterImage out(h, w);
  auto dst = out.pixels();
  for (std::size_t i = 0; i < buf.size(); ++i)
    dst[i] = static_cast<float>(std::clamp(buf[i], 0.0, 1.0));
  return out;
}

namespace {

void require_same_shape(const RasterImage& a, const RasterImage& b) {
  if (a.height() != b.height() || a.width() != b.width() || a.empty())
    throw data_error("image dimension mismatch");
}

double mse(const RasterImage& a, const RasterImage& b) {
  require_same_shape(a, b);
  auto pa = a.pixels();
  auto pb = b.pixels();
  double acc = 0.0;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    const double d = static_cast<double>(pa[i]) - static_cast<double>(pb[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(pa.size());
}

constexpr int kWindow = 11;
constexpr double kWindowSigma = 1.5;

std::array<double, kWindow> gaussian_taps() {
  std::array<double, kWindow> taps{};
  double sum = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - kWindow / 2;
    taps[i] = std::exp(-d * d / (2.0 * kWindowSigma * kWindowSigma));
    sum += taps[i];
  }
  for (double& t : taps) t /= sum;
  return taps;
}

// Separable valid-mode Gaussian filter of a single-channel plane.
std::vector<double> filter_valid(const std::vector<double>& plane, std::size_t h,
                                 std::size_t w, const std::array<double, kWindow>& taps) {
  const std::size_t ow = w - kWindow + 1;
  const std::size_t oh = h - kWindow + 1;
  std::vector<double> rows(h * ow);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kWindow; ++k) acc += taps[k] * plane[y * w + x + k];
      rows[y * ow + x] = acc;
    }
  std::vector<double> out(oh * ow);
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kWindow; ++k) acc += taps[k] * rows[(y + k) * ow + x];
      out[y * ow + x] = acc;
    }
  return out;
}

}  // namespace

double pixel_l2(const RasterImage& a, const RasterImage& b) {
  return 255.0 * std::sqrt(mse(a, b));
}

double psnr_db(const RasterImage& a, const RasterImage& b) {
  const double e = mse(a, b);
  if (e < 1e-10) return 99.0;
  return std::min(99.0, 10.0 * std::log10(1.0 / e));
}

double ssim(const RasterImage& a, const RasterImage& b) {
  require_same_shape(a, b);
  const std::size_t h = a.height();
  const std::size_t w = a.width();
  if (h < kWindow || w < kWindow)
    throw data_error("image too small for SSIM (min side 11)");

  constexpr double c1 = (0.01 * 1.0) * (0.01 * 1.0);
  constexpr double c2 = (0.03 * 1.0) * (0.03 * 1.0);
  const auto taps = gaussian_taps();

  double total = 0.0;
  std::vector<double> x(h * w), y(h * w), xx(h * w), yy(h * w), xy(h * w);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < h * w; ++i) {
      x[i] = a.pixels()[i * 3 + c];
      y[i] = b.pixels()[i * 3 + c];
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    const auto mx = filter_valid(x, h, w, taps);
    const auto my = filter_valid(y, h, w, taps);
    const auto mxx = filter_valid(xx, h, w, taps);
    const auto myy = filter_valid(yy, h, w, taps);
    const auto mxy = filter_valid(xy, h, w, taps);
    double acc = 0.0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
      const double vx = mxx[i] - mx[i] * mx[i];
      const double vy = myy[i] - my[i] * my[i];
      const double cov = mxy[i] - mx[i] * my[i];
      acc += ((2 * mx[i] * my[i] + c1) * (2 * cov + c2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    total += acc / static_cast<double>(mx.size());
  }
  return total / 3.0;
}

}  // namespace nightvpr::nightgen
