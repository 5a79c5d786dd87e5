#include "nightvpr/image.hpp"

#include <cmath>
#include <fstream>
#include <string>

#include "nightvpr/error.hpp"

namespace nightvpr {

RasterImage::RasterImage(std::size_t height, std::size_t width, float fill)
    : height_(height), width_(width), pixels_(height * width * 3, fill) {
  if (height == 0 || width == 0)
    throw data_error("image dimensions must be positive");
}

void RasterImage::validate() const {
  if (height_ == 0 || width_ == 0) throw data_error("empty image");
  for (float v : pixels_)
    if (!(v >= 0.0f && v <= 1.0f))
      throw data_error("pixel value outside [0, 1]");
}

namespace {

// Reads the next whitespace-delimited header token, skipping '#' comments.
std::string next_token(std::istream& in) {
  std::string tok;
  char c = 0;
  while (in.get(c)) {
    if (c == '#') {
      std::string ignored;
      std::getline(in, ignored);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(c);
  }
  return tok;
}

}  // namespace

RasterImage read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open image " + path.string());
  if (next_token(in) != "P6") throw data_error("not a binary PPM: " + path.string());
  std::size_t w = 0, h = 0;
  unsigned maxval = 0;
  try {
    w = std::stoul(next_token(in));
    h = std::stoul(next_token(in));
    maxval = static_cast<unsigned>(std::stoul(next_token(in)));
  } catch (const std::exception&) {
    throw data_error("malformed PPM header: " + path.string());
  }
  if (w == 0 || h == 0 || maxval == 0 || maxval > 65535)
    throw data_error("unsupported PPM header: " + path.string());

  RasterImage img(h, w);
  const std::size_t bytes_per = maxval > 255 ? 2 : 1;
  std::vector<unsigned char> raw(img.size() * bytes_per);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size()))
    throw data_error("truncated PPM payload: " + path.string());
  auto px = img.pixels();
  const float maxf = static_cast<float>(maxval);
  for (std::size_t i = 0; i < px.size(); ++i) {
    const unsigned v = bytes_per == 2 ? (raw[2 * i] << 8) | raw[2 * i + 1] : raw[i];
    px[i] = std::min(1.0f, static_cast<float>(v) / maxf);
  }
  return img;
}

void write_ppm(const RasterImage& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("cannot write image " + path.string());
  out << "P6\n" << img.width() << ' ' << img.height() << "\n255\n";
  std::vector<unsigned char> raw(img.size());
  auto px = img.pixels();
  for (std::size_t i = 0; i < px.size(); ++i) {
    const float v = std::min(1.0f, std::max(0.0f, px[i]));
    raw[i] = static_cast<unsigned char>(std::lround(v * 255.0f));
  }
  out.write(reinterpret_cast<const char*>(raw.data()),
            static_cast<std::streamsize>(raw.size()));
  if (!out) throw data_error("failed writing image " + path.string());
}

}  // namespace nightvpr
