#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "fas/tensor.hpp"

namespace fas {

/// Planar (channel-major) image with values in [0, 1]; pixel (c, y, x) lives
/// at c*H*W + y*W + x.
struct Image {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(std::size_t c, std::size_t h, std::size_t w, double fill = 0.0)
      : channels(c), height(h), width(w), pixels(c * h * w, fill) {}

  double& at(std::size_t c, std::size_t y, std::size_t x) { return pixels[(c * height + y) * width + x]; }
  double at(std::size_t c, std::size_t y, std::size_t x) const { return pixels[(c * height + y) * width + x]; }
  std::size_t plane() const { return height * width; }
  bool same_shape(const Image& other) const {
    return channels == other.channels && height == other.height && width == other.width;
  }
  void clamp();

  friend bool operator==(const Image&, const Image&) = default;
};

/// [C, H, W] tensor sharing nothing with the image.
Tensor to_tensor(const Image& image);

/// Bilinear sample of channel c at continuous pixel-centre coordinates
/// (y, x). Taps that fall outside the grid contribute 0.
double sample_bilinear_zero(const Image& image, std::size_t c, double y, double x);

/// Bilinear resize with edge-aligned geometry: the outer corners of source and
/// destination grids coincide and pixels are sampled at their centres,
/// src = (dst + 0.5) * (in / out) - 0.5, clamped to the valid range.
Image resize(const Image& image, std::size_t height, std::size_t width);

/// Binary PPM (P6) or PGM (P5), maxval <= 255.
Image load_image(const std::filesystem::path& path);
/// Writes P6 for 3 channels, P5 for 1; values are clamped and rounded.
void save_image(const std::filesystem::path& path, const Image& image);

}  // namespace fas
