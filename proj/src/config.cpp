#include "fas/config.hpp"

#include <fstream>
#include <set>

#include "fas/error.hpp"

namespace fas {

using nlohmann::json;

namespace {

bool non_negative_integer(const json& v) {
  return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

// Reads keys of one JSON object and rejects any key it was never asked about.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  const json* find(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string at(const std::string& key) const { return path_ + "." + key; }

  void get(const std::string& key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) throw ConfigError(at(key) + ": expected a number");
      out = v->get<double>();
    }
  }

  void get(const std::string& key, std::size_t& out) {
    if (const json* v = find(key)) {
      if (!non_negative_integer(*v)) throw ConfigError(at(key) + ": expected a non-negative integer");
      out = v->get<std::size_t>();
    }
  }

  void get(const std::string& key, int& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer()) throw ConfigError(at(key) + ": expected an integer");
      out = v->get<int>();
    }
  }

  void get(const std::string& key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) throw ConfigError(at(key) + ": expected true or false");
      out = v->get<bool>();
    }
  }

  void get(const std::string& key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) throw ConfigError(at(key) + ": expected a string");
      out = v->get<std::string>();
    }
  }

  void get(const std::string& key, Range& out) {
    if (const json* v = find(key)) {
      if (!v->is_array() || v->size() != 2 || !(*v)[0].is_number() || !(*v)[1].is_number()) {
        throw ConfigError(at(key) + ": expected [lo, hi]");
      }
      out = Range{(*v)[0].get<double>(), (*v)[1].get<double>()};
    }
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError(at(key) + ": unknown key");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_adam(const json& j, const std::string& path, AdamConfig& c) {
  Reader r(j, path);
  r.get("beta1", c.beta1);
  r.get("beta2", c.beta2);
  r.get("eps", c.eps);
  r.finish();
}

void read_onecycle(const json& j, const std::string& path, OneCycleConfig& c) {
  Reader r(j, path);
  r.get("pct_warmup", c.pct_warmup);
  r.get("div_factor", c.div_factor);
  r.get("final_div", c.final_div);
  r.finish();
}

void read_vit(const json& j, ViTConfig& c) {
  Reader r(j, "vit");
  r.get("image_height", c.image_height);
  r.get("image_width", c.image_width);
  r.get("channels", c.channels);
  r.get("patch_size", c.patch_size);
  r.get("embed_dim", c.embed_dim);
  r.get("depth", c.depth);
  r.get("heads", c.heads);
  r.get("mlp_ratio", c.mlp_ratio);
  r.get("num_classes", c.num_classes);
  r.get("layernorm_eps", c.layernorm_eps);
  r.finish();
}

void read_dino(const json& j, DinoConfig& c) {
  Reader r(j, "dino");
  r.get("num_prototypes", c.num_prototypes);
  r.get("tau_student", c.tau_student);
  r.get("tau_teacher", c.tau_teacher);
  r.get("center_momentum", c.center_momentum);
  r.get("ema_momentum", c.ema_momentum);
  r.get("centering", c.centering);
  r.get("center_warm_start", c.center_warm_start);
  r.get("epochs", c.epochs);
  r.get("batch_size", c.batch_size);
  r.get("base_lr", c.base_lr);
  if (const json* v = r.find("adam")) read_adam(*v, "dino.adam", c.adam);
  if (const json* v = r.find("onecycle")) read_onecycle(*v, "dino.onecycle", c.onecycle);
  r.get("clip_norm", c.clip_norm);
  r.get("probe_size", c.probe_size);
  r.finish();
}

// Returns whether the image size was given explicitly.
bool read_train(const json& j, TrainConfig& c) {
  Reader r(j, "train");
  r.get("epochs", c.epochs);
  r.get("batch_size", c.batch_size);
  r.get("base_lr", c.base_lr);
  const bool sized = j.contains("image_height") || j.contains("image_width");
  r.get("image_height", c.image_height);
  r.get("image_width", c.image_width);
  r.get("focal_alpha", c.focal_alpha);
  r.get("focal_gamma", c.focal_gamma);
  if (const json* v = r.find("adam")) read_adam(*v, "train.adam", c.adam);
  if (const json* v = r.find("onecycle")) read_onecycle(*v, "train.onecycle", c.onecycle);
  r.get("clip_norm", c.clip_norm);
  r.get("threshold", c.threshold);
  r.finish();
  return sized;
}

AugmentOp read_op(const json& j, const std::string& path) {
  Reader r(j, path);
  std::string name;
  r.get("op", name);
  if (name.empty()) throw ConfigError(path + ".op: required");
  AugmentOp op;
  r.get("p", op.probability);
  static const json kEmpty = json::object();
  const json* params = r.find("params");
  Reader pr(params ? *params : kEmpty, path + ".params");
  if (name == "channel_shuffle") {
    op.params = ChannelShuffleParams{};
  } else if (name == "channel_dropout") {
    op.params = ChannelDropoutParams{};
  } else if (name == "random_brightness_contrast") {
    BrightnessContrastParams p;
    pr.get("alpha", p.alpha);
    pr.get("beta", p.beta);
    op.params = p;
  } else if (name == "rotate") {
    RotateParams p;
    pr.get("limit", p.limit);
    op.params = p;
  } else if (name == "flip") {
    FlipParams p;
    std::string mode = "horizontal";
    pr.get("mode", mode);
    if (mode == "horizontal") {
      p.mode = FlipMode::horizontal;
    } else if (mode == "vertical") {
      p.mode = FlipMode::vertical;
    } else if (mode == "any") {
      p.mode = FlipMode::any;
    } else {
      throw ConfigError(pr.at("mode") + ": expected horizontal, vertical or any");
    }
    op.params = p;
  } else if (name == "blur") {
    BlurParams p;
    pr.get("k_min", p.k_min);
    pr.get("k_max", p.k_max);
    op.params = p;
  } else if (name == "motion_blur") {
    MotionBlurParams p;
    pr.get("k_min", p.k_min);
    pr.get("k_max", p.k_max);
    op.params = p;
  } else if (name == "gauss_noise") {
    GaussNoiseParams p;
    pr.get("sigma", p.sigma);
    op.params = p;
  } else if (name == "image_compression") {
    CompressionParams p;
    pr.get("quality", p.quality);
    op.params = p;
  } else if (name == "crop_and_pad") {
    CropAndPadParams p;
    pr.get("pct", p.pct);
    op.params = p;
  } else {
    throw ConfigError(path + ".op: unknown augmentation '" + name + "'");
  }
  pr.finish();
  r.finish();
  return op;
}

json range_json(const Range& r) { return json::array({r.lo, r.hi}); }

json params_json(const AugmentParams& params) {
  struct Visitor {
    json operator()(const ChannelShuffleParams&) const { return json::object(); }
    json operator()(const ChannelDropoutParams&) const { return json::object(); }
    json operator()(const BrightnessContrastParams& p) const {
      return {{"alpha", range_json(p.alpha)}, {"beta", range_json(p.beta)}};
    }
    json operator()(const RotateParams& p) const { return {{"limit", p.limit}}; }
    json operator()(const FlipParams& p) const {
      const char* mode = p.mode == FlipMode::horizontal ? "horizontal" : p.mode == FlipMode::vertical ? "vertical" : "any";
      return {{"mode", mode}};
    }
    json operator()(const BlurParams& p) const { return {{"k_min", p.k_min}, {"k_max", p.k_max}}; }
    json operator()(const MotionBlurParams& p) const { return {{"k_min", p.k_min}, {"k_max", p.k_max}}; }
    json operator()(const GaussNoiseParams& p) const { return {{"sigma", range_json(p.sigma)}}; }
    json operator()(const CompressionParams& p) const { return {{"quality", range_json(p.quality)}}; }
    json operator()(const CropAndPadParams& p) const { return {{"pct", range_json(p.pct)}}; }
  };
  return std::visit(Visitor{}, params);
}

json adam_json(const AdamConfig& c) { return {{"beta1", c.beta1}, {"beta2", c.beta2}, {"eps", c.eps}}; }

json onecycle_json(const OneCycleConfig& c) {
  return {{"pct_warmup", c.pct_warmup}, {"div_factor", c.div_factor}, {"final_div", c.final_div}};
}

}  // namespace

AugmentSpec augment_from_json(const json& j, const std::string& path) {
  Reader r(j, path);
  int version = 0;
  r.get("version", version);
  if (version != kAugmentSchemaVersion) {
    throw ConfigError(path + ".version: expected " + std::to_string(kAugmentSchemaVersion) + ", got " +
                      std::to_string(version));
  }
  AugmentSpec spec;
  const json* ops = r.find("ops");
  if (!ops || !ops->is_array()) throw ConfigError(path + ".ops: expected an array");
  for (std::size_t i = 0; i < ops->size(); ++i) {
    spec.ops.push_back(read_op((*ops)[i], path + ".ops[" + std::to_string(i) + "]"));
  }
  r.finish();
  return spec;
}

json augment_to_json(const AugmentSpec& spec) {
  json ops = json::array();
  for (const auto& op : spec.ops) {
    ops.push_back({{"op", op.name()}, {"p", op.probability}, {"params", params_json(op.params)}});
  }
  return {{"version", kAugmentSchemaVersion}, {"ops", ops}};
}

void RunConfig::validate() const {
  vit.validate();
  dino.validate();
  train.validate();
  augment.validate();
  pretrain_augment.validate();
  if (train.image_height != vit.image_height || train.image_width != vit.image_width) {
    throw ConfigError("train image size " + std::to_string(train.image_height) + "x" +
                      std::to_string(train.image_width) + " differs from vit input " +
                      std::to_string(vit.image_height) + "x" + std::to_string(vit.image_width));
  }
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  Reader r(j, "config");
  if (const json* v = r.find("seed")) {
    if (!non_negative_integer(*v)) throw ConfigError("config.seed: expected a non-negative integer");
    c.seed = v->get<std::uint64_t>();
  }
  r.get("output_dir", c.output_dir);
  r.get("manifest", c.manifest);
  r.get("unlabeled_manifest", c.unlabeled_manifest);
  if (const json* v = r.find("vit")) read_vit(*v, c.vit);
  if (const json* v = r.find("dino")) read_dino(*v, c.dino);
  bool sized = false;
  if (const json* v = r.find("train")) sized = read_train(*v, c.train);
  if (!sized) {
    c.train.image_height = c.vit.image_height;
    c.train.image_width = c.vit.image_width;
  }
  c.augment = AugmentSpec::standard(0);
  if (const json* v = r.find("augment")) c.augment = augment_from_json(*v, "augment");
  c.pretrain_augment = c.augment;
  if (const json* v = r.find("pretrain_augment")) c.pretrain_augment = augment_from_json(*v, "pretrain_augment");
  std::string from = "teacher";
  r.get("finetune_from", from);
  if (from == "teacher") {
    c.finetune_from = FinetuneInit::teacher;
  } else if (from == "student") {
    c.finetune_from = FinetuneInit::student;
  } else {
    throw ConfigError("config.finetune_from: expected teacher or student");
  }
  r.finish();

  c.dino.seed = c.train.seed = c.augment.seed = c.pretrain_augment.seed = c.seed;
  return c;
}

json run_config_to_json(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["manifest"] = c.manifest;
  j["unlabeled_manifest"] = c.unlabeled_manifest;
  j["vit"] = {{"image_height", c.vit.image_height}, {"image_width", c.vit.image_width},
              {"channels", c.vit.channels},         {"patch_size", c.vit.patch_size},
              {"embed_dim", c.vit.embed_dim},       {"depth", c.vit.depth},
              {"heads", c.vit.heads},               {"mlp_ratio", c.vit.mlp_ratio},
              {"num_classes", c.vit.num_classes},   {"layernorm_eps", c.vit.layernorm_eps}};
  j["dino"] = {{"num_prototypes", c.dino.num_prototypes},
               {"tau_student", c.dino.tau_student},
               {"tau_teacher", c.dino.tau_teacher},
               {"center_momentum", c.dino.center_momentum},
               {"ema_momentum", c.dino.ema_momentum},
               {"centering", c.dino.centering},
               {"center_warm_start", c.dino.center_warm_start},
               {"epochs", c.dino.epochs},
               {"batch_size", c.dino.batch_size},
               {"base_lr", c.dino.base_lr},
               {"adam", adam_json(c.dino.adam)},
               {"onecycle", onecycle_json(c.dino.onecycle)},
               {"clip_norm", c.dino.clip_norm},
               {"probe_size", c.dino.probe_size}};
  j["train"] = {{"epochs", c.train.epochs},
                {"batch_size", c.train.batch_size},
                {"base_lr", c.train.base_lr},
                {"image_height", c.train.image_height},
                {"image_width", c.train.image_width},
                {"focal_alpha", c.train.focal_alpha},
                {"focal_gamma", c.train.focal_gamma},
                {"adam", adam_json(c.train.adam)},
                {"onecycle", onecycle_json(c.train.onecycle)},
                {"clip_norm", c.train.clip_norm},
                {"threshold", c.train.threshold}};
  j["augment"] = augment_to_json(c.augment);
  j["pretrain_augment"] = augment_to_json(c.pretrain_augment);
  j["finetune_from"] = c.finetune_from == FinetuneInit::teacher ? "teacher" : "student";
  return j;
}

json load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

RunConfig load_run_config(const std::filesystem::path& path) {
  RunConfig config = run_config_from_json(load_json(path));
  const auto base = path.parent_path();
  auto resolve = [&](std::string& p) {
    if (!p.empty() && std::filesystem::path(p).is_relative()) p = (base / p).lexically_normal().string();
  };
  resolve(config.manifest);
  resolve(config.unlabeled_manifest);
  return config;
}

void save_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace fas
