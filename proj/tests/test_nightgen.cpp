#include <doctest.h>

#include <fstream>
#include <random>

#include "helpers.hpp"
#include "nightvpr/error.hpp"
#include "nightvpr/nightgen.hpp"
#include "oracles.hpp"

using namespace nightvpr;
using namespace nightvpr::nightgen;

namespace {

RasterImage constant(std::size_t h, std::size_t w, float v) { return RasterImage(h, w, v); }

RasterImage board(std::size_t h, std::size_t w, std::size_t cell, bool invert) {
  RasterImage img(h, w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        img.at(y, x, c) = static_cast<float>(((y / cell + x / cell) % 2 == 1) != invert);
  return img;
}

}  // namespace

TEST_CASE("identity params return the input exactly") {
  std::mt19937_64 rng(1);
  const auto img = testing::random_image(rng, 17, 23);
  CHECK(night_transform(img, NightParams::identity()) == img);
}

TEST_CASE("gamma then brightness on constant gray") {
  auto p = NightParams::identity();
  p.gamma = 2.0;
  p.brightness = 0.5;
  const auto out = night_transform(constant(8, 8, 0.5f), p);
  for (float v : out.pixels()) CHECK(v == doctest::Approx(0.125).epsilon(1e-7));
}

TEST_CASE("transform is deterministic and keeps shape and range") {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 20; ++i) {
    const auto img = testing::random_image(rng, 8 + i, 30 - i);
    NightParams p;
    p.seed = 100 + i;
    p.bloom_intensity = 1.0;
    p.noise_sigma = 0.2;
    const auto a = night_transform(img, p);
    const auto b = night_transform(img, p);
    CHECK(a == b);
    CHECK(a.height() == img.height());
    CHECK(a.width() == img.width());
    for (float v : a.pixels()) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
  }
}

TEST_CASE("different seeds give different blooms") {
  const auto img = constant(32, 32, 0.5f);
  NightParams p;
  p.seed = 1;
  const auto a = night_transform(img, p);
  p.seed = 2;
  CHECK_FALSE(night_transform(img, p) == a);
}

TEST_CASE("monotone in brightness with stochastic stages off") {
  std::mt19937_64 rng(3);
  const auto img = testing::random_image(rng, 12, 12);
  NightParams p = NightParams::identity();
  p.gamma = 1.7;
  p.temp_shift = 0.3;
  std::vector<float> prev(img.size(), 0.0f);
  for (double b = 0.05; b <= 1.0; b += 0.05) {
    p.brightness = b;
    const auto out = night_transform(img, p);
    for (std::size_t i = 0; i < img.size(); ++i) {
      CHECK(out.pixels()[i] >= prev[i]);
      prev[i] = out.pixels()[i];
    }
  }
}

TEST_CASE("param validation") {
  NightParams p;
  p.gamma = 0;
  CHECK_THROWS_AS(p.validate(), Error);
  p = {};
  p.brightness = 1.5;
  CHECK_THROWS_AS(p.validate(), Error);
  p = {};
  p.temp_shift = -1.5;
  CHECK_THROWS_AS(p.validate(), Error);
  p = {};
  p.bloom_count = -1;
  CHECK_THROWS_AS(p.validate(), Error);
  p = {};
  p.noise_sigma = -0.1;
  CHECK_THROWS_AS(p.validate(), Error);
  CHECK_NOTHROW(NightParams{}.validate());
}

TEST_CASE("pixel_l2 fixtures") {
  CHECK(pixel_l2(constant(4, 4, 0.3f), constant(4, 4, 0.3f)) == 0.0);
  CHECK(pixel_l2(constant(4, 4, 0.0f), constant(4, 4, 1.0f)) == doctest::Approx(255.0).epsilon(1e-12));
  CHECK(pixel_l2(constant(4, 4, 0.0f), constant(4, 4, 0.5f)) == doctest::Approx(127.5).epsilon(1e-12));
  CHECK_THROWS_AS(pixel_l2(constant(4, 4, 0), constant(4, 5, 0)), Error);
}

TEST_CASE("pixel_l2 is a metric") {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 50; ++i) {
    const auto a = testing::random_image(rng, 6, 7);
    const auto b = testing::random_image(rng, 6, 7);
    const auto c = testing::random_image(rng, 6, 7);
    CHECK(pixel_l2(a, a) == 0.0);
    CHECK(pixel_l2(a, b) == pixel_l2(b, a));
    CHECK(pixel_l2(a, c) <= pixel_l2(a, b) + pixel_l2(b, c) + 1e-9);
  }
}

TEST_CASE("psnr fixtures") {
  CHECK(psnr_db(constant(4, 4, 0.2f), constant(4, 4, 0.2f)) == 99.0);
  CHECK(std::abs(psnr_db(constant(4, 4, 0.0f), constant(4, 4, 0.5f)) - 6.0206) < 1e-3);
  CHECK_THROWS_AS(psnr_db(constant(4, 4, 0), constant(5, 4, 0)), Error);
}

TEST_CASE("higher noise lowers mean psnr") {
  std::mt19937_64 rng(5);
  const auto img = testing::random_image(rng, 24, 24);
  auto p = NightParams::identity();
  double prev = 1e9;
  for (double sigma : {0.01, 0.05, 0.1, 0.2}) {
    p.noise_sigma = sigma;
    double mean = 0.0;
    for (int s = 0; s < 20; ++s) {
      p.seed = s;
      mean += psnr_db(img, night_transform(img, p)) / 20.0;
    }
    CHECK(mean < prev);
    prev = mean;
  }
}

TEST_CASE("ssim identity, symmetry and size limits") {
  std::mt19937_64 rng(6);
  const auto a = testing::random_image(rng, 16, 20);
  const auto b = testing::random_image(rng, 16, 20);
  CHECK(std::abs(ssim(a, a) - 1.0) < 1e-9);
  CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)).epsilon(1e-12));
  CHECK_THROWS_AS(ssim(constant(10, 20, 0), constant(10, 20, 0)), Error);
  CHECK_THROWS_AS(ssim(constant(12, 12, 0), constant(12, 13, 0)), Error);
  CHECK_NOTHROW(ssim(constant(11, 11, 0), constant(11, 11, 0)));
}

TEST_CASE("ssim matches the direct window oracle") {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 10; ++i) {
    const int h = 11 + i, w = 25 - i;
    const auto a = testing::random_image(rng, h, w);
    auto b = a;
    std::normal_distribution<float> n(0.0f, 0.1f * (i + 1));
    for (auto& v : b.pixels()) v = std::clamp(v + n(rng), 0.0f, 1.0f);
    CHECK(std::abs(ssim(a, b) - oracle::ssim(a.pixels(), b.pixels(), h, w)) < 1e-4);
  }
}

TEST_CASE("ssim matches frozen reference values") {
  // Reference values from scikit-image structural_similarity with
  // gaussian_weights, sigma 1.5, population covariance, data_range 1.
  CHECK(std::abs(ssim(board(16, 16, 2, false), board(16, 16, 2, true)) - -0.9963760359070964) <
        1e-4);
  CHECK(std::abs(ssim(board(24, 20, 3, false), board(24, 20, 3, true)) - -0.986533865974924) <
        1e-4);
  CHECK(std::abs(ssim(board(11, 11, 1, false), board(11, 11, 1, true)) - -0.9964064683569568) <
        1e-4);

  RasterImage a(20, 17), b(20, 17);
  for (int y = 0; y < 20; ++y)
    for (int x = 0; x < 17; ++x)
      for (int c = 0; c < 3; ++c) {
        a.at(y, x, c) = static_cast<float>(0.5 + 0.4 * std::sin(0.3 * x + 0.2 * y + c));
        b.at(y, x, c) = static_cast<float>(0.5 + 0.4 * std::cos(0.25 * x - 0.15 * y + 0.5 * c));
      }
  CHECK(std::abs(ssim(a, b) - -0.10100337540896827) < 1e-4);
}

TEST_CASE("ppm round trip") {
  testing::TempDir dir("ppm");
  RasterImage img(5, 7);
  for (std::size_t i = 0; i < img.size(); ++i) img.pixels()[i] = static_cast<float>(i % 256) / 255.0f;
  write_ppm(img, dir / "a.ppm");
  CHECK(read_ppm(dir / "a.ppm") == img);
  CHECK_THROWS_AS(read_ppm(dir / "missing.ppm"), Error);
  {
    std::ofstream f(dir / "bad.ppm");
    f << "P3\n1 1\n255\n0 0 0\n";
  }
  CHECK_THROWS_AS(read_ppm(dir / "bad.ppm"), Error);
  {
    std::ofstream f(dir / "short.ppm", std::ios::binary);
    f << "P6\n4 4\n255\n" << std::string(10, '\0');
  }
  CHECK_THROWS_AS(read_ppm(dir / "short.ppm"), Error);
}
