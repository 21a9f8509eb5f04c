#pragma once

// JSON run configuration. Every object is read strictly: an unknown key is a
// ConfigError naming its dotted path.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "fas/augment.hpp"
#include "fas/dino.hpp"
#include "fas/train.hpp"
#include "fas/vit.hpp"

namespace fas {

inline constexpr int kAugmentSchemaVersion = 1;

enum class FinetuneInit { teacher, student };

struct RunConfig {
  std::uint64_t seed = 0;
  std::string output_dir = "runs/default";
  /// Labeled manifest with train/validation splits.
  std::string manifest;
  /// Images for pretraining; empty means every row of `manifest`.
  std::string unlabeled_manifest;
  ViTConfig vit;
  DinoConfig dino;
  TrainConfig train;
  /// Fine-tuning pipeline.
  AugmentSpec augment;
  /// Pretraining pipeline; defaults to `augment`.
  AugmentSpec pretrain_augment;
  FinetuneInit finetune_from = FinetuneInit::teacher;

  /// Per-module validation plus cross-checks (train image size vs model).
  void validate() const;
};

/// {"version": 1, "ops": [{"op": "rotate", "p": 0.5, "params": {"limit": 15}}, ...]}
AugmentSpec augment_from_json(const nlohmann::json& j, const std::string& path = "augment");
nlohmann::json augment_to_json(const AugmentSpec& spec);

/// Missing keys take their defaults. The top-level seed is copied into every
/// phase; train image size defaults to the model input size.
RunConfig run_config_from_json(const nlohmann::json& j);
/// Fully resolved config with every default written out.
nlohmann::json run_config_to_json(const RunConfig& config);

RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json load_json(const std::filesystem::path& path);
void save_json(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace fas
