#include "fas/augment.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "fas/error.hpp"

namespace fas {

namespace {

void require_rgb(const Image& image, const char* op) {
  if (image.channels != 3) {
    throw DomainError(std::string(op) + " needs a 3-channel image, got " + std::to_string(image.channels));
  }
}

double radians(double degrees) { return degrees * std::numbers::pi / 180.0; }

// reflect-101: ... 2 1 | 0 1 2 ... n-1 | n-2 ...
std::size_t reflect(long i, std::size_t n) {
  if (n == 1) return 0;
  const long period = 2 * (static_cast<long>(n) - 1);
  i %= period;
  if (i < 0) i += period;
  if (i >= static_cast<long>(n)) i = period - i;
  return static_cast<std::size_t>(i);
}

}  // namespace

Kernel box_kernel(int k) {
  if (k < 1) throw DomainError("kernel size must be positive");
  const auto n = static_cast<std::size_t>(k);
  return Kernel{n, std::vector<double>(n * n, 1.0 / static_cast<double>(n * n))};
}

Kernel motion_kernel(int k, double degrees) {
  if (k < 1) throw DomainError("kernel size must be positive");
  const auto n = static_cast<std::size_t>(k);
  Kernel kernel{n, std::vector<double>(n * n, 0.0)};
  const double centre = (static_cast<double>(k) - 1.0) / 2.0;
  const double c = std::cos(radians(degrees)), s = std::sin(radians(degrees));
  for (int t = 0; t < k; ++t) {
    const double offset = static_cast<double>(t) - centre;
    const long x = std::clamp(std::lround(centre + offset * c), 0L, static_cast<long>(k - 1));
    const long y = std::clamp(std::lround(centre - offset * s), 0L, static_cast<long>(k - 1));
    kernel.weights[static_cast<std::size_t>(y) * n + static_cast<std::size_t>(x)] = 1.0;
  }
  double total = 0.0;
  for (double w : kernel.weights) total += w;
  for (double& w : kernel.weights) w /= total;
  return kernel;
}

Image convolve(const Image& image, const Kernel& kernel) {
  Image out(image.channels, image.height, image.width);
  const long anchor = static_cast<long>(kernel.size / 2);
  for (std::size_t c = 0; c < image.channels; ++c)
    for (std::size_t y = 0; y < image.height; ++y)
      for (std::size_t x = 0; x < image.width; ++x) {
        double acc = 0.0;
        for (std::size_t i = 0; i < kernel.size; ++i) {
          const std::size_t sy = reflect(static_cast<long>(y + i) - anchor, image.height);
          for (std::size_t j = 0; j < kernel.size; ++j) {
            const double w = kernel.weights[i * kernel.size + j];
            if (w == 0.0) continue;
            acc += w * image.at(c, sy, reflect(static_cast<long>(x + j) - anchor, image.width));
          }
        }
        out.at(c, y, x) = acc;
      }
  out.clamp();
  return out;
}

Image channel_shuffle(const Image& image, Rng& rng) {
  require_rgb(image, "channel_shuffle");
  std::array<std::size_t, 3> order{0, 1, 2};
  rng.shuffle(std::span<std::size_t>(order));
  Image out(image.channels, image.height, image.width);
  const std::size_t plane = image.plane();
  for (std::size_t c = 0; c < 3; ++c) {
    std::copy_n(image.pixels.begin() + static_cast<std::ptrdiff_t>(order[c] * plane), plane,
                out.pixels.begin() + static_cast<std::ptrdiff_t>(c * plane));
  }
  return out;
}

Image channel_dropout(const Image& image, Rng& rng) {
  require_rgb(image, "channel_dropout");
  Image out = image;
  const std::size_t dropped = rng.below(3);
  std::fill_n(out.pixels.begin() + static_cast<std::ptrdiff_t>(dropped * image.plane()), image.plane(), 0.0);
  return out;
}

Image brightness_contrast(const Image& image, double alpha, double beta) {
  Image out = image;
  for (double& v : out.pixels) v = std::clamp(alpha * (v - 0.5) + 0.5 + beta, 0.0, 1.0);
  return out;
}

Image random_brightness_contrast(const Image& image, Rng& rng, Range alpha, Range beta) {
  const double a = rng.uniform(alpha.lo, alpha.hi);
  const double b = rng.uniform(beta.lo, beta.hi);
  return brightness_contrast(image, a, b);
}

Image rotate(const Image& image, double degrees) {
  Image out(image.channels, image.height, image.width);
  const double c = std::cos(radians(degrees)), s = std::sin(radians(degrees));
  const double cy = (static_cast<double>(image.height) - 1.0) / 2.0;
  const double cx = (static_cast<double>(image.width) - 1.0) / 2.0;
  for (std::size_t y = 0; y < image.height; ++y)
    for (std::size_t x = 0; x < image.width; ++x) {
      // Inverse map in y-down coordinates.
      const double u = static_cast<double>(x) - cx, v = static_cast<double>(y) - cy;
      const double sx = cx + u * c - v * s;
      const double sy = cy + u * s + v * c;
      for (std::size_t ch = 0; ch < image.channels; ++ch) out.at(ch, y, x) = sample_bilinear_zero(image, ch, sy, sx);
    }
  out.clamp();
  return out;
}

Image flip(const Image& image, FlipAxis axis) {
  Image out(image.channels, image.height, image.width);
  for (std::size_t c = 0; c < image.channels; ++c)
    for (std::size_t y = 0; y < image.height; ++y)
      for (std::size_t x = 0; x < image.width; ++x) {
        const std::size_t sy = axis == FlipAxis::vertical ? image.height - 1 - y : y;
        const std::size_t sx = axis == FlipAxis::horizontal ? image.width - 1 - x : x;
        out.at(c, y, x) = image.at(c, sy, sx);
      }
  return out;
}

Image blur(const Image& image, int k) {
  if (k < 3 || k > 7 || k % 2 == 0) throw DomainError("blur kernel must be odd in [3, 7], got " + std::to_string(k));
  return convolve(image, box_kernel(k));
}

Image motion_blur(const Image& image, int k, double degrees) {
  if (k < 7 || k > 20) throw DomainError("motion blur length must be in [7, 20], got " + std::to_string(k));
  return convolve(image, motion_kernel(k, degrees));
}

Image gauss_noise(const Image& image, double sigma, Rng& rng) {
  if (!(sigma >= 0.0)) throw DomainError("noise sigma must be non-negative");
  Image out = image;
  if (sigma == 0.0) return out;
  for (double& v : out.pixels) v = std::clamp(v + sigma * rng.normal(), 0.0, 1.0);
  return out;
}

namespace {

constexpr std::array<double, 64> kLuminanceTable{
    16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,  14, 13, 16, 24, 40,  57,
    69, 56, 14, 17, 22,  29,  51,  87,  80, 62, 18, 22, 37,  56,  68,  109, 103, 77, 24, 35, 55, 64,
    81, 104, 113, 92, 49, 64, 78,  87,  103, 121, 120, 101, 72, 92, 95, 98,  112, 100, 103, 99};

const std::array<double, 64>& dct_basis() {
  static const std::array<double, 64> basis = [] {
    std::array<double, 64> b{};
    for (int u = 0; u < 8; ++u)
      for (int x = 0; x < 8; ++x) {
        const double alpha = u == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
        b[u * 8 + x] = alpha * std::cos((2.0 * x + 1.0) * u * std::numbers::pi / 16.0);
      }
    return b;
  }();
  return basis;
}

}  // namespace

Image image_compression(const Image& image, int quality) {
  if (quality < 10 || quality > 100) throw DomainError("compression quality must be in [10, 100]");
  const double scale = quality < 50 ? 5000.0 / quality : 200.0 - 2.0 * quality;
  if (scale == 0.0) return image;
  const auto& basis = dct_basis();
  Image out = image;
  std::array<double, 64> block{}, tmp{}, coef{};
  for (std::size_t c = 0; c < image.channels; ++c)
    for (std::size_t by = 0; by < image.height; by += 8)
      for (std::size_t bx = 0; bx < image.width; bx += 8) {
        for (std::size_t i = 0; i < 8; ++i)
          for (std::size_t j = 0; j < 8; ++j) {
            const std::size_t y = std::min(by + i, image.height - 1), x = std::min(bx + j, image.width - 1);
            block[i * 8 + j] = image.at(c, y, x) * 255.0;
          }
        // coef = B * block * B^T
        for (int u = 0; u < 8; ++u)
          for (int j = 0; j < 8; ++j) {
            double acc = 0.0;
            for (int i = 0; i < 8; ++i) acc += basis[u * 8 + i] * block[i * 8 + j];
            tmp[u * 8 + j] = acc;
          }
        for (int u = 0; u < 8; ++u)
          for (int v = 0; v < 8; ++v) {
            double acc = 0.0;
            for (int j = 0; j < 8; ++j) acc += tmp[u * 8 + j] * basis[v * 8 + j];
            coef[u * 8 + v] = acc;
          }
        for (int k = 1; k < 64; ++k) {
          const double step = kLuminanceTable[k] * scale / 100.0;
          coef[k] = std::round(coef[k] / step) * step;
        }
        // block = B^T * coef * B
        for (int i = 0; i < 8; ++i)
          for (int v = 0; v < 8; ++v) {
            double acc = 0.0;
            for (int u = 0; u < 8; ++u) acc += basis[u * 8 + i] * coef[u * 8 + v];
            tmp[i * 8 + v] = acc;
          }
        for (std::size_t i = 0; i < 8 && by + i < image.height; ++i)
          for (std::size_t j = 0; j < 8 && bx + j < image.width; ++j) {
            double acc = 0.0;
            for (std::size_t v = 0; v < 8; ++v) acc += tmp[i * 8 + v] * basis[v * 8 + j];
            out.at(c, by + i, bx + j) = std::clamp(acc / 255.0, 0.0, 1.0);
          }
      }
  return out;
}

Image crop_and_pad(const Image& image, double pct) {
  if (pct < -0.10 - 1e-12 || pct > 0.23 + 1e-12) {
    throw DomainError("crop/pad percentage must be in [-0.10, 0.23], got " + std::to_string(pct));
  }
  if (pct == 0.0) return image;
  Image out(image.channels, image.height, image.width);
  const double zoom = 1.0 + 2.0 * pct;
  const double oy = pct * static_cast<double>(image.height);
  const double ox = pct * static_cast<double>(image.width);
  for (std::size_t y = 0; y < image.height; ++y) {
    const double sy = (static_cast<double>(y) + 0.5) * zoom - oy - 0.5;
    for (std::size_t x = 0; x < image.width; ++x) {
      const double sx = (static_cast<double>(x) + 0.5) * zoom - ox - 0.5;
      for (std::size_t c = 0; c < image.channels; ++c) out.at(c, y, x) = sample_bilinear_zero(image, c, sy, sx);
    }
  }
  out.clamp();
  return out;
}

// ---------------------------------------------------------------------------

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

int draw_odd(Rng& rng, int lo, int hi) {
  const int first = lo % 2 ? lo : lo + 1;
  const int count = (hi - first) / 2 + 1;
  return first + 2 * static_cast<int>(rng.below(static_cast<std::uint64_t>(count)));
}

void check_range(const Range& r, double lo, double hi, const std::string& what) {
  if (!(r.lo <= r.hi) || r.lo < lo || r.hi > hi) {
    throw ConfigError(what + " range [" + std::to_string(r.lo) + ", " + std::to_string(r.hi) + "] outside [" +
                      std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
}

}  // namespace

std::string AugmentOp::name() const {
  return std::visit(Overloaded{
                        [](const ChannelShuffleParams&) { return std::string("channel_shuffle"); },
                        [](const ChannelDropoutParams&) { return std::string("channel_dropout"); },
                        [](const BrightnessContrastParams&) { return std::string("random_brightness_contrast"); },
                        [](const RotateParams&) { return std::string("rotate"); },
                        [](const FlipParams&) { return std::string("flip"); },
                        [](const BlurParams&) { return std::string("blur"); },
                        [](const MotionBlurParams&) { return std::string("motion_blur"); },
                        [](const GaussNoiseParams&) { return std::string("gauss_noise"); },
                        [](const CompressionParams&) { return std::string("image_compression"); },
                        [](const CropAndPadParams&) { return std::string("crop_and_pad"); },
                    },
                    params);
}

Image AugmentOp::apply(const Image& image, Rng& rng) const {
  return std::visit(
      Overloaded{
          [&](const ChannelShuffleParams&) { return channel_shuffle(image, rng); },
          [&](const ChannelDropoutParams&) { return channel_dropout(image, rng); },
          [&](const BrightnessContrastParams& p) { return random_brightness_contrast(image, rng, p.alpha, p.beta); },
          [&](const RotateParams& p) { return rotate(image, rng.uniform(-p.limit, p.limit)); },
          [&](const FlipParams& p) {
            FlipAxis axis = p.mode == FlipMode::vertical ? FlipAxis::vertical : FlipAxis::horizontal;
            if (p.mode == FlipMode::any && rng.bernoulli(0.5)) axis = FlipAxis::vertical;
            return flip(image, axis);
          },
          [&](const BlurParams& p) { return blur(image, draw_odd(rng, p.k_min, p.k_max)); },
          [&](const MotionBlurParams& p) {
            const int k = static_cast<int>(rng.uniform_int(p.k_min, p.k_max));
            return motion_blur(image, k, rng.uniform(0.0, 360.0));
          },
          [&](const GaussNoiseParams& p) { return gauss_noise(image, rng.uniform(p.sigma.lo, p.sigma.hi), rng); },
          [&](const CompressionParams& p) {
            const long q = std::lround(rng.uniform(p.quality.lo, p.quality.hi));
            return image_compression(image, static_cast<int>(q));
          },
          [&](const CropAndPadParams& p) { return crop_and_pad(image, rng.uniform(p.pct.lo, p.pct.hi)); },
      },
      params);
}

void AugmentSpec::validate() const {
  for (const auto& op : ops) {
    if (!(op.probability >= 0.0 && op.probability <= 1.0)) {
      throw ConfigError(op.name() + ": probability must be in [0, 1]");
    }
    std::visit(Overloaded{
                   [](const ChannelShuffleParams&) {},
                   [](const ChannelDropoutParams&) {},
                   [](const BrightnessContrastParams& p) {
                     check_range(p.alpha, 0.0, 10.0, "contrast alpha");
                     check_range(p.beta, -1.0, 1.0, "brightness beta");
                   },
                   [](const RotateParams& p) {
                     if (!(p.limit >= 0.0 && p.limit <= 180.0)) throw ConfigError("rotate limit must be in [0, 180]");
                   },
                   [](const FlipParams&) {},
                   [](const BlurParams& p) {
                     if (p.k_min < 3 || p.k_max > 7 || p.k_min > p.k_max || (p.k_min == p.k_max && p.k_min % 2 == 0)) {
                       throw ConfigError("blur kernel range must lie in [3, 7] and contain an odd size");
                     }
                   },
                   [](const MotionBlurParams& p) {
                     if (p.k_min < 7 || p.k_max > 20 || p.k_min > p.k_max) {
                       throw ConfigError("motion blur range must lie in [7, 20]");
                     }
                   },
                   [](const GaussNoiseParams& p) { check_range(p.sigma, 0.0, 1.0, "noise sigma"); },
                   [](const CompressionParams& p) { check_range(p.quality, 10.0, 100.0, "compression quality"); },
                   [](const CropAndPadParams& p) { check_range(p.pct, -0.10, 0.23, "crop/pad pct"); },
               },
               op.params);
  }
}

AugmentSpec AugmentSpec::standard(std::uint64_t seed) {
  AugmentSpec spec;
  spec.seed = seed;
  spec.ops = {
      {ChannelShuffleParams{}, 0.5}, {ChannelDropoutParams{}, 0.5}, {BrightnessContrastParams{}, 0.5},
      {RotateParams{}, 0.5},         {FlipParams{}, 0.5},           {BlurParams{}, 0.5},
      {MotionBlurParams{}, 0.5},     {GaussNoiseParams{}, 0.5},     {CompressionParams{}, 0.5},
      {CropAndPadParams{}, 0.5},
  };
  return spec;
}

Image apply_pipeline(const Image& image, const AugmentSpec& spec, std::uint64_t sample_seed) {
  Rng rng = Rng::derive(spec.seed, sample_seed);
  Image out = image;
  for (const auto& op : spec.ops) {
    if (rng.bernoulli(op.probability)) out = op.apply(out, rng);
  }
  return out;
}

}  // namespace fas
