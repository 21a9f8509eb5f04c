#include <doctest.h>

#include <fstream>

#include "fas/config.hpp"
#include "fas/error.hpp"
#include "gradcheck.hpp"

using namespace fas;
using nlohmann::json;
using fas::testing::TempDir;

namespace {

std::string error_of(const json& j) {
  try {
    run_config_from_json(j);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("defaults") {
  const RunConfig c = run_config_from_json(json::object());
  CHECK(c.seed == 0);
  CHECK(c.vit == ViTConfig{});
  CHECK(c.train.image_height == c.vit.image_height);
  CHECK(c.train.epochs == 300);
  CHECK(c.dino.tau_teacher == 0.04);
  CHECK(c.finetune_from == FinetuneInit::teacher);
  CHECK(c.augment.ops.size() == AugmentSpec::standard(0).ops.size());
  CHECK(c.pretrain_augment.ops.size() == c.augment.ops.size());
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("unknown keys are rejected with their path") {
  CHECK(error_of({{"sede", 1}}) == "config.sede: unknown key");
  CHECK(error_of({{"train", {{"base_lr", 0.01}, {"bsz", 4}}}}) == "train.bsz: unknown key");
  CHECK(error_of({{"dino", {{"adam", {{"beta3", 0.9}}}}}}) == "dino.adam.beta3: unknown key");
  const json aug = {{"version", 1}, {"ops", {{{"op", "rotate"}, {"p", 0.5}, {"params", {{"angle", 10}}}}}}};
  CHECK(error_of({{"augment", aug}}) == "augment.ops[0].params.angle: unknown key");
  CHECK(error_of({{"vit", {{"depth", "four"}}}}).find("vit.depth") != std::string::npos);
  CHECK(error_of({{"finetune_from", "decoder"}}).find("finetune_from") != std::string::npos);
  CHECK(error_of({{"seed", -3}}).find("seed") != std::string::npos);
}

TEST_CASE("seed and image size propagate") {
  const RunConfig c = run_config_from_json({{"seed", 17}, {"vit", {{"image_height", 16}, {"image_width", 16}, {"patch_size", 4}}}});
  CHECK(c.dino.seed == 17);
  CHECK(c.train.seed == 17);
  CHECK(c.augment.seed == 17);
  CHECK(c.pretrain_augment.seed == 17);
  CHECK(c.train.image_height == 16);
  CHECK_NOTHROW(c.validate());

  const RunConfig mismatch = run_config_from_json({{"train", {{"image_height", 260}, {"image_width", 260}}}});
  CHECK_THROWS_AS(mismatch.validate(), ConfigError);
}

TEST_CASE("augmentation specs") {
  const json j = {{"version", 1},
                  {"ops",
                   {{{"op", "flip"}, {"p", 1.0}, {"params", {{"mode", "vertical"}}}},
                    {{"op", "blur"}, {"p", 0.2}, {"params", {{"k_min", 3}, {"k_max", 5}}}},
                    {{"op", "channel_shuffle"}, {"p", 0.5}}}}};
  const AugmentSpec spec = augment_from_json(j);
  REQUIRE(spec.ops.size() == 3);
  CHECK(spec.ops[0].name() == "flip");
  CHECK(std::get<FlipParams>(spec.ops[0].params).mode == FlipMode::vertical);
  CHECK(spec.ops[1].probability == 0.2);
  CHECK(std::get<BlurParams>(spec.ops[1].params).k_max == 5);

  const AugmentSpec standard = AugmentSpec::standard(0);
  const AugmentSpec back = augment_from_json(augment_to_json(standard));
  REQUIRE(back.ops.size() == standard.ops.size());
  for (std::size_t i = 0; i < back.ops.size(); ++i) {
    CHECK(back.ops[i].name() == standard.ops[i].name());
    CHECK(back.ops[i].probability == standard.ops[i].probability);
  }
  CHECK(augment_to_json(back) == augment_to_json(standard));

  CHECK_THROWS_AS(augment_from_json({{"version", 2}, {"ops", json::array()}}), ConfigError);
  CHECK_THROWS_AS(augment_from_json({{"version", 1}}), ConfigError);
  CHECK_THROWS_AS(augment_from_json({{"version", 1}, {"ops", {{{"op", "sharpen"}}}}}), ConfigError);
  CHECK_THROWS_AS(augment_from_json({{"version", 1}, {"ops", {{{"op", "flip"}, {"params", {{"mode", "diagonal"}}}}}}}),
                  ConfigError);
}

TEST_CASE("resolved config round trip") {
  json input = {{"seed", 4},
                {"manifest", "data/m.csv"},
                {"vit", {{"image_height", 16}, {"image_width", 16}, {"patch_size", 4}, {"embed_dim", 32}}},
                {"dino", {{"num_prototypes", 16}, {"centering", false}}},
                {"train", {{"epochs", 5}, {"base_lr", 0.0}}},
                {"finetune_from", "student"}};
  const RunConfig c = run_config_from_json(input);
  const json resolved = run_config_to_json(c);
  CHECK(resolved["train"]["image_height"] == 16);
  CHECK(resolved["dino"]["centering"] == false);
  CHECK(resolved["finetune_from"] == "student");
  CHECK(run_config_to_json(run_config_from_json(resolved)) == resolved);
}

TEST_CASE("files") {
  TempDir dir;
  std::filesystem::create_directories(dir.path() / "cfg");
  save_json(dir.path() / "cfg" / "run.json", {{"manifest", "../data/m.csv"}, {"unlabeled_manifest", "/abs/u.csv"}});
  const RunConfig c = load_run_config(dir.path() / "cfg" / "run.json");
  CHECK(c.manifest == (dir.path() / "data" / "m.csv").string());
  CHECK(c.unlabeled_manifest == "/abs/u.csv");

  {
    std::ofstream out(dir.path() / "broken.json");
    out << "{\"seed\": 1,";
  }
  CHECK_THROWS_AS(load_run_config(dir.path() / "broken.json"), ConfigError);
  CHECK_THROWS_AS(load_run_config(dir.path() / "absent.json"), IoError);
}
