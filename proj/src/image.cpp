#include "fas/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

namespace fas {

void Image::clamp() {
  for (double& v : pixels) v = std::clamp(v, 0.0, 1.0);
}

Tensor to_tensor(const Image& image) {
  return Tensor(Shape{image.channels, image.height, image.width}, image.pixels);
}

double sample_bilinear_zero(const Image& image, std::size_t c, double y, double x) {
  const double fy = std::floor(y), fx = std::floor(x);
  const double wy = y - fy, wx = x - fx;
  const long y0 = static_cast<long>(fy), x0 = static_cast<long>(fx);
  const long h = static_cast<long>(image.height), w = static_cast<long>(image.width);
  auto tap = [&](long yy, long xx) -> double {
    if (yy < 0 || yy >= h || xx < 0 || xx >= w) return 0.0;
    return image.at(c, static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
  };
  double v = 0.0;
  if (wy < 1.0 && wx < 1.0) v += (1.0 - wy) * (1.0 - wx) * tap(y0, x0);
  if (wy > 0.0 && wx < 1.0) v += wy * (1.0 - wx) * tap(y0 + 1, x0);
  if (wy < 1.0 && wx > 0.0) v += (1.0 - wy) * wx * tap(y0, x0 + 1);
  if (wy > 0.0 && wx > 0.0) v += wy * wx * tap(y0 + 1, x0 + 1);
  return v;
}

Image resize(const Image& image, std::size_t height, std::size_t width) {
  if (height == 0 || width == 0) throw DomainError("resize target must be at least 1x1");
  if (height == image.height && width == image.width) return image;
  Image out(image.channels, height, width);
  const double sy = static_cast<double>(image.height) / static_cast<double>(height);
  const double sx = static_cast<double>(image.width) / static_cast<double>(width);
  const double max_y = static_cast<double>(image.height - 1);
  const double max_x = static_cast<double>(image.width - 1);
  for (std::size_t y = 0; y < height; ++y) {
    const double src_y = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, max_y);
    for (std::size_t x = 0; x < width; ++x) {
      const double src_x = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, max_x);
      for (std::size_t c = 0; c < image.channels; ++c) out.at(c, y, x) = sample_bilinear_zero(image, c, src_y, src_x);
    }
  }
  return out;
}

namespace {

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string header_token(const std::string& bytes, std::size_t& pos) {
  while (pos < bytes.size()) {
    const unsigned char ch = static_cast<unsigned char>(bytes[pos]);
    if (ch == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isspace(ch)) {
      ++pos;
    } else {
      break;
    }
  }
  std::string token;
  while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) token += bytes[pos++];
  return token;
}

std::size_t header_number(const std::string& bytes, std::size_t& pos, const std::filesystem::path& path) {
  const std::string token = header_token(bytes, pos);
  if (token.empty() || !std::all_of(token.begin(), token.end(), [](char ch) { return std::isdigit(static_cast<unsigned char>(ch)); })) {
    throw DataError(path.string() + ": malformed pixmap header");
  }
  return std::stoul(token);
}

}  // namespace

Image load_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::size_t pos = 0;
  const std::string magic = header_token(bytes, pos);
  std::size_t channels = 0;
  if (magic == "P6") {
    channels = 3;
  } else if (magic == "P5") {
    channels = 1;
  } else {
    throw DataError(path.string() + ": unsupported pixmap magic '" + magic.substr(0, 8) + "'");
  }
  const std::size_t width = header_number(bytes, pos, path);
  const std::size_t height = header_number(bytes, pos, path);
  const std::size_t maxval = header_number(bytes, pos, path);
  if (width == 0 || height == 0) throw DataError(path.string() + ": zero image dimension");
  if (maxval == 0 || maxval > 255) throw DataError(path.string() + ": only 8-bit pixmaps are supported");
  ++pos;  // single whitespace byte after maxval
  const std::size_t expected = width * height * channels;
  if (pos > bytes.size() || bytes.size() - pos < expected) {
    throw DataError(path.string() + ": truncated pixmap payload");
  }
  Image image(channels, height, width);
  const double inv = 1.0 / static_cast<double>(maxval);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x)
      for (std::size_t c = 0; c < channels; ++c) {
        const auto byte = static_cast<unsigned char>(bytes[pos + (y * width + x) * channels + c]);
        image.at(c, y, x) = std::min(1.0, byte * inv);
      }
  return image;
}

void save_image(const std::filesystem::path& path, const Image& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw DataError("cannot write a " + std::to_string(image.channels) + "-channel pixmap");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write image " + path.string());
  out << (image.channels == 3 ? "P6" : "P5") << '\n' << image.width << ' ' << image.height << "\n255\n";
  std::string payload(image.pixels.size(), '\0');
  std::size_t i = 0;
  for (std::size_t y = 0; y < image.height; ++y)
    for (std::size_t x = 0; x < image.width; ++x)
      for (std::size_t c = 0; c < image.channels; ++c) {
        const double v = std::clamp(image.at(c, y, x), 0.0, 1.0);
        payload[i++] = static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0)));
      }
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw IoError("failed writing image " + path.string());
}

}  // namespace fas
