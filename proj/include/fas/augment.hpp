#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "fas/image.hpp"
#include "fas/rng.hpp"

namespace fas {

struct Range {
  double lo = 0.0;
  double hi = 0.0;
  friend bool operator==(const Range&, const Range&) = default;
};

/// Square correlation kernel, row-major, anchored at size/2.
struct Kernel {
  std::size_t size = 0;
  std::vector<double> weights;
};

Kernel box_kernel(int k);
/// One-pixel-wide line of length k through the kernel centre at `degrees`,
/// normalized to sum 1.
Kernel motion_kernel(int k, double degrees);
/// Correlation with reflect-101 border handling.
Image convolve(const Image& image, const Kernel& kernel);

// Colour
Image channel_shuffle(const Image& image, Rng& rng);
Image channel_dropout(const Image& image, Rng& rng);
/// clamp(alpha * (x - 0.5) + 0.5 + beta)
Image brightness_contrast(const Image& image, double alpha, double beta);
Image random_brightness_contrast(const Image& image, Rng& rng, Range alpha = {0.8, 1.2}, Range beta = {-0.2, 0.2});

// Affine
enum class FlipAxis { horizontal, vertical };
/// Counter-clockwise (as displayed) rotation about the image centre,
/// bilinear, zero fill outside the source.
Image rotate(const Image& image, double degrees);
Image flip(const Image& image, FlipAxis axis);

// Quality degradations
/// Box blur, k odd in [3, 7].
Image blur(const Image& image, int k);
/// Line blur, k in [7, 20].
Image motion_blur(const Image& image, int k, double degrees);
Image gauss_noise(const Image& image, double sigma, Rng& rng);
/// Blockwise 8x8 DCT round trip. AC coefficients (on the 0..255 scale) are
/// quantized with the standard luminance table scaled by quality; the DC term
/// is kept. quality in [10, 100]; 100 means step 0, i.e. no quantization.
Image image_compression(const Image& image, int quality);

// Cropping and padding
/// pct in [-0.10, 0.23]: negative crops each side inward, positive pads each
/// side with zeros; the result is resampled back to the input size.
Image crop_and_pad(const Image& image, double pct);

// Pipeline description --------------------------------------------------------

struct ChannelShuffleParams {};
struct ChannelDropoutParams {};
struct BrightnessContrastParams {
  Range alpha{0.8, 1.2};
  Range beta{-0.2, 0.2};
};
struct RotateParams {
  double limit = 15.0;  // degrees, angle drawn from [-limit, limit]
};
enum class FlipMode { horizontal, vertical, any };
struct FlipParams {
  FlipMode mode = FlipMode::horizontal;
};
struct BlurParams {
  int k_min = 3, k_max = 7;
};
struct MotionBlurParams {
  int k_min = 7, k_max = 20;
};
struct GaussNoiseParams {
  Range sigma{0.01, 0.03};
};
struct CompressionParams {
  Range quality{50.0, 100.0};
};
struct CropAndPadParams {
  Range pct{-0.10, 0.23};
};

using AugmentParams =
    std::variant<ChannelShuffleParams, ChannelDropoutParams, BrightnessContrastParams, RotateParams, FlipParams,
                 BlurParams, MotionBlurParams, GaussNoiseParams, CompressionParams, CropAndPadParams>;

struct AugmentOp {
  AugmentParams params;
  double probability = 0.5;

  std::string name() const;
  /// Draws this op's random parameters from rng and applies it.
  Image apply(const Image& image, Rng& rng) const;
};

struct AugmentSpec {
  std::vector<AugmentOp> ops;
  std::uint64_t seed = 0;

  /// Throws ConfigError for probabilities outside [0, 1] or ranges outside an
  /// op's domain.
  void validate() const;

  /// The four families (colour, affine, degradations, crop/pad) with the
  /// default ranges above, each fired with probability 0.5.
  static AugmentSpec standard(std::uint64_t seed);
};

/// Applies ops in order, each fired with its probability, using a stream
/// derived from (spec.seed, sample_seed).
Image apply_pipeline(const Image& image, const AugmentSpec& spec, std::uint64_t sample_seed);

}  // namespace fas
