#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "fas/image.hpp"
#include "fas/train.hpp"

namespace fas {

enum class Split { train, validation };

std::string to_string(Split split);

/// One manifest row: `path,label,dataset,split`. Label 0 = normal (live),
/// 1 = attack.
struct ManifestRecord {
  std::string path;
  int label = 0;
  std::string dataset;
  Split split = Split::train;

  friend bool operator==(const ManifestRecord&, const ManifestRecord&) = default;
};

/// Relative paths are resolved against the manifest's directory when loading
/// images.
struct Manifest {
  std::filesystem::path base_dir;
  std::vector<ManifestRecord> records;
};

std::vector<ManifestRecord> read_manifest(std::istream& in);
Manifest load_manifest(const std::filesystem::path& path);
void write_manifest(std::ostream& out, const std::vector<ManifestRecord>& records);
void save_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& records);

/// Decodes every record of `split`; a missing image raises IoError naming its
/// path.
std::vector<Sample> load_samples(const Manifest& manifest, Split split);
/// Every record's image regardless of split or label (for pretraining).
std::vector<Image> load_unlabeled(const Manifest& manifest);

struct SplitStats {
  std::map<std::pair<std::string, Split>, std::size_t> by_dataset;  // (dataset, split) -> images
  std::map<std::pair<Split, int>, std::size_t> by_label;            // (split, label) -> images

  std::size_t total() const;
};

SplitStats split_stats(const std::vector<ManifestRecord>& records);
/// Two aligned tables: Dataset/Split/Total and Split/Label 0 (Normal)/Label 1 (Attack).
void render_split_stats(std::ostream& out, const SplitStats& stats);
/// table,key,split,count rows for both tables.
void write_split_stats_csv(std::ostream& out, const SplitStats& stats);

struct SyntheticOptions {
  std::size_t n_per_class = 16;
  std::size_t size = 32;
  std::uint64_t seed = 0;
  /// Extra per-class images written with split=validation.
  std::size_t validation_per_class = 0;
  std::string dataset = "synthetic";
};

/// Generates a balanced live/attack pixmap corpus plus `manifest.csv` in
/// out_dir and returns the manifest path. Live images are smooth random blob
/// textures; attack images are the same kind of texture overlaid with a
/// periodic grating and a halftone dot screen.
std::filesystem::path generate_synthetic(const std::filesystem::path& out_dir, const SyntheticOptions& options);

/// The in-memory generators behind generate_synthetic.
Image synthetic_live(std::size_t size, std::uint64_t seed);
Image synthetic_attack(std::size_t size, std::uint64_t seed);

}  // namespace fas
