// fas: command-line front end for synthetic data, pretraining, fine-tuning
// and evaluation.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 runtime or data
// error.

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "fas/checkpoint.hpp"
#include "fas/config.hpp"
#include "fas/data.hpp"
#include "fas/dino.hpp"
#include "fas/error.hpp"
#include "fas/metrics.hpp"
#include "fas/train.hpp"

namespace fs = std::filesystem;
using namespace fas;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
};

RunConfig resolve_config(const Common& c) {
  RunConfig config = c.config.empty() ? run_config_from_json(nlohmann::json::object()) : load_run_config(c.config);
  if (c.seed) {
    config.seed = *c.seed;
    config.dino.seed = config.train.seed = config.augment.seed = config.pretrain_augment.seed = *c.seed;
  }
  if (!c.out.empty()) config.output_dir = c.out;
  config.validate();
  return config;
}

fs::path prepare_output(const RunConfig& config) {
  fs::path dir(config.output_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  save_json(dir / "resolved_config.json", run_config_to_json(config));
  return dir;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

// ---------------------------------------------------------------------------

struct GenSynthArgs {
  std::size_t n = 16;
  std::size_t size = 32;
  std::uint64_t seed = 0;
  std::size_t validation_n = 0;
  std::string dataset = "synthetic";
  std::string out = "synthetic";
};

int run_gen_synth(const GenSynthArgs& a) {
  SyntheticOptions options;
  options.n_per_class = a.n;
  options.size = a.size;
  options.seed = a.seed;
  options.validation_per_class = a.validation_n;
  options.dataset = a.dataset;
  std::cout << generate_synthetic(a.out, options).string() << '\n';
  return 0;
}

struct StatsArgs {
  std::string manifest;
  std::string csv;
};

int run_stats(const StatsArgs& a) {
  const SplitStats stats = split_stats(load_manifest(a.manifest).records);
  render_split_stats(std::cout, stats);
  if (!a.csv.empty()) {
    auto out = open_out(a.csv);
    write_split_stats_csv(out, stats);
  }
  return 0;
}

struct PretrainArgs {
  Common common;
  bool dry_run = false;
};

int run_pretrain(const PretrainArgs& a) {
  const RunConfig config = resolve_config(a.common);
  if (a.dry_run) {
    std::cout << run_config_to_json(config).dump(2) << '\n';
    return 0;
  }
  const std::string manifest_path = config.unlabeled_manifest.empty() ? config.manifest : config.unlabeled_manifest;
  if (manifest_path.empty()) throw ConfigError("pretraining needs 'unlabeled_manifest' or 'manifest'");
  const std::vector<Image> images = load_unlabeled(load_manifest(manifest_path));
  std::vector<Image> resized;
  for (const auto& img : images) resized.push_back(resize(img, config.vit.image_height, config.vit.image_width));

  const fs::path dir = prepare_output(config);
  DinoState state = DinoState::init(config.vit, config.dino, config.seed);
  const auto trace = pretrain(resized, state, config.dino, config.pretrain_augment, &std::cerr);

  auto trace_out = open_out(dir / "pretrain_trace.csv");
  write_pretrain_trace(trace_out, trace);
  Checkpoint ckpt;
  put_config(ckpt, config.vit);
  ckpt.header["kind"] = "dino";
  ckpt.add("student.", state.student.named_parameters());
  ckpt.add("teacher.", state.teacher.named_parameters());
  ckpt.sections.emplace_back("center", state.center);
  save_checkpoint(dir / "pretrained.ckpt", ckpt);
  std::cout << (dir / "pretrained.ckpt").string() << '\n';
  return 0;
}

struct FinetuneArgs {
  Common common;
  std::string init;
  bool from_scratch = false;
};

int run_finetune(const FinetuneArgs& a) {
  const RunConfig config = resolve_config(a.common);
  if (a.init.empty() == !a.from_scratch) throw ConfigError("give exactly one of --init <checkpoint> or --from-scratch");
  if (config.manifest.empty()) throw ConfigError("fine-tuning needs 'manifest'");
  const Manifest manifest = load_manifest(config.manifest);
  const std::vector<Sample> train = load_samples(manifest, Split::train);
  const std::vector<Sample> validation = load_samples(manifest, Split::validation);

  ViTParams init = ViTParams::init(config.vit, config.seed);
  if (!a.from_scratch) {
    const Checkpoint ckpt = load_checkpoint(a.init);
    std::string prefix = "model.";
    if (ckpt.header.count("kind") && ckpt.header.at("kind") == "dino") {
      prefix = config.finetune_from == FinetuneInit::teacher ? "teacher." : "student.";
    }
    load_into(ckpt, prefix, init, /*skip_head=*/prefix != "model.");
  }

  const fs::path dir = prepare_output(config);
  const FinetuneResult result = finetune(train, validation, init, config.vit, config.train, config.augment, &std::cerr);
  auto trace_out = open_out(dir / "train_trace.csv");
  write_train_trace(trace_out, result.trace);
  Checkpoint ckpt;
  put_config(ckpt, config.vit);
  ckpt.header["kind"] = "classifier";
  ckpt.add("model.", result.params.named_parameters());
  save_checkpoint(dir / "model.ckpt", ckpt);

  const FitSummary fit = summarize_fit(train, result.params, config.vit, config.train);
  std::cout << "train_accuracy " << fit.accuracy << '\n' << "train_focal_loss " << fit.focal_loss << '\n';
  std::cout << (dir / "model.ckpt").string() << '\n';
  return 0;
}

struct ReportArgs {
  std::optional<double> threshold;
  bool sweep = false;
  std::string out;
};

void emit_reports(const std::vector<ScoreRecord>& records, const ReportArgs& a) {
  if (a.sweep) {
    std::vector<double> scores;
    std::vector<int> labels;
    for (const auto& r : records) {
      scores.push_back(r.score);
      labels.push_back(r.label);
    }
    const auto curve = threshold_sweep(scores, labels);
    if (a.out.empty()) {
      write_sweep_csv(std::cout, curve);
    } else {
      auto out = open_out(a.out);
      write_sweep_csv(out, curve);
    }
    return;
  }
  const double threshold = a.threshold.value_or(0.5);
  const auto by_dataset = evaluate_by_dataset(records, threshold);
  std::vector<std::pair<std::string, EvalReport>> columns;
  for (const auto& [name, report] : by_dataset)
    if (name != "all") columns.emplace_back(name, report);
  if (columns.size() != 1) columns.emplace_back("all", by_dataset.at("all"));
  render_report_table(std::cout, columns);
  if (!a.out.empty()) {
    auto out = open_out(a.out);
    write_report_csv(out, columns);
  }
}

struct EvalArgs {
  std::string checkpoint;
  std::string manifest;
  std::string split = "validation";
  std::string scores_out;
  ReportArgs report;
};

int run_eval(const EvalArgs& a) {
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const ViTConfig model = config_from_header(ckpt);
  const ViTParams params = ViTParams::init(model, 0);
  load_into(ckpt, "model.", params);
  const Manifest manifest = load_manifest(a.manifest);
  std::vector<Sample> samples;
  if (a.split == "train" || a.split == "all") {
    auto s = load_samples(manifest, Split::train);
    samples.insert(samples.end(), s.begin(), s.end());
  }
  if (a.split == "validation" || a.split == "all") {
    auto s = load_samples(manifest, Split::validation);
    samples.insert(samples.end(), s.begin(), s.end());
  }
  if (samples.empty()) throw DataError("no samples in split '" + a.split + "' of " + a.manifest);
  const std::vector<double> scores = bona_fide_scores(samples, params, model);
  std::vector<ScoreRecord> records;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    records.push_back({samples[i].id, scores[i], samples[i].label, samples[i].dataset});
  }
  if (!a.scores_out.empty()) {
    auto out = open_out(a.scores_out);
    out << "id,score,label,dataset\n" << std::setprecision(17);
    for (const auto& r : records) out << r.id << ',' << r.score << ',' << r.label << ',' << r.dataset << '\n';
  }
  emit_reports(records, a.report);
  return 0;
}

struct MetricsArgs {
  std::string scores;
  ReportArgs report;
};

int run_metrics(const MetricsArgs& a) {
  emit_reports(load_scores(a.scores), a.report);
  return 0;
}

struct PreviewArgs {
  std::string config;
  std::string image;
  std::string out = "preview";
  std::size_t count = 8;
  std::uint64_t seed = 0;
};

int run_augment_preview(const PreviewArgs& a) {
  AugmentSpec spec = AugmentSpec::standard(a.seed);
  if (!a.config.empty()) {
    const nlohmann::json j = load_json(a.config);
    spec = j.contains("version") ? augment_from_json(j) : run_config_from_json(j).augment;
    spec.validate();
  }
  spec.seed = a.seed;
  const Image image = load_image(a.image);
  std::error_code ec;
  fs::create_directories(a.out, ec);
  if (ec) throw IoError("cannot create " + a.out + ": " + ec.message());
  for (std::size_t i = 0; i < a.count; ++i) {
    const fs::path path = fs::path(a.out) / ("variant_" + std::to_string(i) + ".ppm");
    save_image(path, apply_pipeline(image, spec, i));
    std::cout << path.string() << " seed=" << a.seed << " sample=" << i << '\n';
  }
  return 0;
}

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON run configuration")->check(CLI::ExistingFile);
  cmd->add_option("--out", c.out, "Output directory (overrides output_dir)");
  cmd->add_option("--seed", c.seed, "Seed for every phase (overrides the config)");
}

void add_report(CLI::App* cmd, ReportArgs& r) {
  auto* thr = cmd->add_option("--threshold", r.threshold, "Bona fide score threshold (default 0.5)");
  auto* sweep = cmd->add_flag("--sweep", r.sweep, "Emit the APCER/BPCER threshold sweep as CSV");
  thr->excludes(sweep);
  cmd->add_option("--report", r.out, "Also write the report or sweep CSV here");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Face anti-spoofing with a self-distilled vision transformer"};
  app.require_subcommand(1);

  GenSynthArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-synth", "Generate a synthetic live/attack corpus and manifest");
  gen_cmd->add_option("--n", gen.n, "Training images per class")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--size", gen.size, "Image side in pixels")->check(CLI::Range(8, 4096));
  gen_cmd->add_option("--seed", gen.seed, "Generator seed");
  gen_cmd->add_option("--val-n", gen.validation_n, "Validation images per class");
  gen_cmd->add_option("--dataset", gen.dataset, "Dataset tag written to the manifest");
  gen_cmd->add_option("--out", gen.out, "Output directory");

  StatsArgs stats;
  auto* stats_cmd = app.add_subcommand("stats", "Tabulate a manifest by dataset, split and label");
  stats_cmd->add_option("--manifest", stats.manifest, "Manifest CSV")->required();
  stats_cmd->add_option("--csv", stats.csv, "Also write the tables as CSV");

  PretrainArgs pre;
  auto* pre_cmd = app.add_subcommand("pretrain", "Self-distillation pretraining on unlabeled images");
  add_common(pre_cmd, pre.common);
  pre_cmd->add_flag("--dry-run", pre.dry_run, "Validate and print the resolved config, then exit");

  FinetuneArgs fine;
  auto* fine_cmd = app.add_subcommand("finetune", "Fine-tune the classifier with focal loss");
  add_common(fine_cmd, fine.common);
  auto* init_opt = fine_cmd->add_option("--init", fine.init, "Pretrained or classifier checkpoint");
  auto* scratch_opt = fine_cmd->add_flag("--from-scratch", fine.from_scratch, "Start from random weights");
  init_opt->excludes(scratch_opt);

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Score a manifest with a classifier checkpoint");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "Classifier checkpoint")->required();
  eval_cmd->add_option("--manifest", eval.manifest, "Manifest CSV")->required();
  eval_cmd->add_option("--split", eval.split, "train, validation or all")
      ->check(CLI::IsMember({"train", "validation", "all"}));
  eval_cmd->add_option("--scores", eval.scores_out, "Write per-sample scores CSV");
  add_report(eval_cmd, eval.report);

  MetricsArgs metrics;
  auto* metrics_cmd = app.add_subcommand("metrics", "Evaluate an external score file");
  metrics_cmd->add_option("--scores", metrics.scores, "CSV with id,score,label,dataset")->required();
  add_report(metrics_cmd, metrics.report);

  PreviewArgs preview;
  auto* preview_cmd = app.add_subcommand("augment-preview", "Write augmented variants of one image");
  preview_cmd->add_option("--config", preview.config, "Augment spec or run config JSON")->check(CLI::ExistingFile);
  preview_cmd->add_option("--image", preview.image, "Input pixmap")->required();
  preview_cmd->add_option("--out", preview.out, "Output directory");
  preview_cmd->add_option("--n", preview.count, "Number of variants");
  preview_cmd->add_option("--seed", preview.seed, "Pipeline seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*gen_cmd) return run_gen_synth(gen);
    if (*stats_cmd) return run_stats(stats);
    if (*pre_cmd) return run_pretrain(pre);
    if (*fine_cmd) return run_finetune(fine);
    if (*eval_cmd) return run_eval(eval);
    if (*metrics_cmd) return run_metrics(metrics);
    if (*preview_cmd) return run_augment_preview(preview);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
