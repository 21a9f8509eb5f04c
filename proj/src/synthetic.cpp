#include "fas/data.hpp"

#include <cmath>
#include <numbers>

#include "fas/rng.hpp"

namespace fas {

namespace {

constexpr std::size_t kBlobs = 4;

// Sum of a few wide gaussian blobs over a random base colour.
Image blob_texture(std::size_t size, Rng& rng) {
  Image img(3, size, size);
  const double s = static_cast<double>(size);
  double base[3];
  for (double& b : base) b = rng.uniform(0.25, 0.6);
  struct Blob {
    double cx, cy, radius, colour[3];
  };
  Blob blobs[kBlobs];
  for (auto& b : blobs) {
    b.cx = rng.uniform(0.0, s);
    b.cy = rng.uniform(0.0, s);
    b.radius = rng.uniform(0.25, 0.5) * s;
    for (double& c : b.colour) c = rng.uniform(-0.25, 0.25);
  }
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = 0; y < size; ++y) {
      for (std::size_t x = 0; x < size; ++x) {
        double v = base[c];
        for (const auto& b : blobs) {
          const double dx = static_cast<double>(x) - b.cx;
          const double dy = static_cast<double>(y) - b.cy;
          v += b.colour[c] * std::exp(-(dx * dx + dy * dy) / (2.0 * b.radius * b.radius));
        }
        img.at(c, y, x) = v;
      }
    }
  }
  img.clamp();
  return img;
}

}  // namespace

Image synthetic_live(std::size_t size, std::uint64_t seed) {
  Rng rng(seed);
  return blob_texture(size, rng);
}

Image synthetic_attack(std::size_t size, std::uint64_t seed) {
  Rng rng(seed);
  Image img = blob_texture(size, rng);
  // Moire-like grating plus a halftone screen, as left by a print or display.
  const double period = rng.uniform(3.0, 5.0);
  const double angle = rng.uniform(0.0, std::numbers::pi);
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double kx = std::cos(angle) * 2.0 * std::numbers::pi / period;
  const double ky = std::sin(angle) * 2.0 * std::numbers::pi / period;
  const double grating = rng.uniform(0.08, 0.14);
  const double dots = rng.uniform(0.12, 0.2);
  const std::size_t cell = 4;
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = 0; y < size; ++y) {
      for (std::size_t x = 0; x < size; ++x) {
        double v = img.at(c, y, x);
        v += grating * std::sin(kx * static_cast<double>(x) + ky * static_cast<double>(y) + phase);
        if (x % cell == 1 && y % cell == 1) v -= dots;
        img.at(c, y, x) = v;
      }
    }
  }
  img.clamp();
  return img;
}

std::filesystem::path generate_synthetic(const std::filesystem::path& out_dir, const SyntheticOptions& options) {
  if (options.n_per_class == 0) throw ConfigError("synthetic n_per_class must be at least 1");
  if (options.size < 8) throw ConfigError("synthetic image size must be at least 8");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

  std::vector<ManifestRecord> records;
  std::uint64_t index = 0;
  auto emit = [&](int label, Split split, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i, ++index) {
      const std::uint64_t seed = mix_seed(options.seed, index);
      const Image img = label == kLabelLive ? synthetic_live(options.size, seed) : synthetic_attack(options.size, seed);
      const std::string name = (label == kLabelLive ? "live_" : "attack_") + to_string(split) + "_" +
                               std::to_string(i) + ".ppm";
      save_image(out_dir / name, img);
      records.push_back({name, label, options.dataset, split});
    }
  };
  emit(kLabelLive, Split::train, options.n_per_class);
  emit(kLabelAttack, Split::train, options.n_per_class);
  emit(kLabelLive, Split::validation, options.validation_per_class);
  emit(kLabelAttack, Split::validation, options.validation_per_class);

  const auto manifest = out_dir / "manifest.csv";
  save_manifest(manifest, records);
  return manifest;
}

}  // namespace fas
