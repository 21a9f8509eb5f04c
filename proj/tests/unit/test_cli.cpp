#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "fas/config.hpp"
#include "gradcheck.hpp"

using fas::testing::TempDir;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

Result run(const TempDir& dir, const std::string& args) {
  const fs::path out = dir.path() / "stdout.txt";
  const fs::path err = dir.path() / "stderr.txt";
  const std::string cmd = std::string("\"") + FAS_CLI_PATH + "\" " + args + " > \"" + out.string() + "\" 2> \"" +
                          err.string() + "\"";
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

// Tiny model on 16x16 inputs so whole pipelines run in seconds.
nlohmann::json tiny_config(const fs::path& manifest) {
  return {{"seed", 3},
          {"manifest", manifest.string()},
          {"vit", {{"image_height", 16}, {"image_width", 16}, {"patch_size", 4}, {"embed_dim", 16}, {"depth", 1}, {"heads", 2}}},
          {"dino", {{"num_prototypes", 16}, {"epochs", 3}, {"batch_size", 8}, {"probe_size", 4}}},
          {"train", {{"epochs", 2}, {"batch_size", 4}}},
          {"augment", {{"version", 1}, {"ops", {{{"op", "flip"}, {"p", 0.5}}, {{"op", "gauss_noise"}, {"p", 0.5}}}}}}};
}

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

}  // namespace

TEST_CASE("usage errors exit with 1") {
  TempDir dir;
  CHECK(run(dir, "").code == 1);
  CHECK(run(dir, "frobnicate").code == 1);
  CHECK(run(dir, "gen-synth --size 0 --out " + q(dir.path() / "x")).code == 1);
  CHECK(run(dir, "gen-synth --n 0 --out " + q(dir.path() / "x")).code == 1);
  CHECK(run(dir, "eval --manifest m.csv").code == 1);
  CHECK(run(dir, "--help").code == 0);
}

TEST_CASE("gen-synth and stats") {
  TempDir dir;
  const Result r = run(dir, "gen-synth --n 16 --size 32 --seed 7 --out " + q(dir.path() / "a"));
  REQUIRE(r.code == 0);
  CHECK(r.out.find("manifest.csv") != std::string::npos);
  std::size_t images = 0;
  for (const auto& e : fs::directory_iterator(dir.path() / "a")) images += e.path().extension() == ".ppm" ? 1 : 0;
  CHECK(images == 32);

  REQUIRE(run(dir, "gen-synth --n 16 --size 32 --seed 7 --out " + q(dir.path() / "b")).code == 0);
  for (const auto& e : fs::directory_iterator(dir.path() / "a")) {
    CHECK(slurp(e.path()) == slurp(dir.path() / "b" / e.path().filename()));
  }

  const Result s = run(dir, "stats --manifest " + q(dir.path() / "a" / "manifest.csv") + " --csv " + q(dir.path() / "s.csv"));
  REQUIRE(s.code == 0);
  CHECK(s.out.find("Label 0 (Normal)") != std::string::npos);
  CHECK(s.out.find("synthetic") != std::string::npos);
  CHECK(slurp(dir.path() / "s.csv").find("label,0,train,16") != std::string::npos);

  const Result missing = run(dir, "stats --manifest " + q(dir.path() / "none.csv"));
  CHECK(missing.code == 2);
  CHECK(missing.err.find("none.csv") != std::string::npos);
}

TEST_CASE("pretrain, finetune and eval pipeline") {
  TempDir dir;
  REQUIRE(run(dir, "gen-synth --n 32 --size 16 --val-n 4 --seed 1 --out " + q(dir.path() / "data")).code == 0);
  const fs::path manifest = dir.path() / "data" / "manifest.csv";
  const fs::path config = dir.path() / "run.json";
  fas::save_json(config, tiny_config(manifest));

  const Result dry = run(dir, "pretrain --dry-run --config " + q(config));
  REQUIRE(dry.code == 0);
  const auto resolved = nlohmann::json::parse(dry.out);
  CHECK(resolved["train"]["image_height"] == 16);
  CHECK(resolved["dino"]["tau_student"] == 0.1);
  CHECK_FALSE(fs::exists(dir.path() / "pre"));

  const Result pre = run(dir, "pretrain --config " + q(config) + " --out " + q(dir.path() / "pre"));
  REQUIRE_MESSAGE(pre.code == 0, pre.err);
  CHECK(fs::exists(dir.path() / "pre" / "pretrained.ckpt"));
  CHECK(fs::exists(dir.path() / "pre" / "resolved_config.json"));
  const auto trace = csv_rows(slurp(dir.path() / "pre" / "pretrain_trace.csv"));
  REQUIRE(trace.size() == 1 + 3 * 9);
  CHECK(trace[0] == std::vector<std::string>{"step", "loss", "teacher_entropy"});
  CHECK(std::stod(trace.back()[1]) < std::stod(trace[1][1]));

  const fs::path ckpt = dir.path() / "pre" / "pretrained.ckpt";
  const Result ft = run(dir, "finetune --config " + q(config) + " --init " + q(ckpt) + " --out " + q(dir.path() / "ft"));
  REQUIRE_MESSAGE(ft.code == 0, ft.err);
  CHECK(ft.out.find("train_accuracy") != std::string::npos);
  const std::string trace_a = slurp(dir.path() / "ft" / "train_trace.csv");
  CHECK(trace_a.rfind("epoch,step,lr,loss,val_apcer", 0) == 0);

  const Result again = run(dir, "finetune --config " + q(config) + " --init " + q(ckpt) + " --out " + q(dir.path() / "ft2"));
  REQUIRE(again.code == 0);
  CHECK(slurp(dir.path() / "ft2" / "train_trace.csv") == trace_a);
  CHECK(slurp(dir.path() / "ft2" / "model.ckpt") == slurp(dir.path() / "ft" / "model.ckpt"));

  CHECK(run(dir, "finetune --config " + q(config) + " --out " + q(dir.path() / "ft3")).code == 1);
  CHECK(run(dir, "finetune --config " + q(config) + " --init " + q(ckpt) + " --from-scratch").code == 1);

  auto wide = tiny_config(manifest);
  wide["vit"]["embed_dim"] = 32;
  fas::save_json(dir.path() / "wide.json", wide);
  const Result mismatch = run(dir, "finetune --config " + q(dir.path() / "wide.json") + " --init " + q(ckpt) + " --out " + q(dir.path() / "w"));
  CHECK(mismatch.code == 2);
  CHECK(mismatch.err.find("expected [32], found [16]") != std::string::npos);

  const fs::path model = dir.path() / "ft" / "model.ckpt";
  const Result ev = run(dir, "eval --checkpoint " + q(model) + " --manifest " + q(manifest) + " --split all --scores " +
                                 q(dir.path() / "scores.csv") + " --report " + q(dir.path() / "report.csv"));
  REQUIRE_MESSAGE(ev.code == 0, ev.err);
  CHECK(ev.out.find("APCER") != std::string::npos);
  CHECK(csv_rows(slurp(dir.path() / "scores.csv")).size() == 1 + 72);
  CHECK(slurp(dir.path() / "report.csv").rfind("column,threshold", 0) == 0);

  const Result sweep = run(dir, "eval --checkpoint " + q(model) + " --manifest " + q(manifest) + " --sweep");
  REQUIRE(sweep.code == 0);
  const auto curve = csv_rows(sweep.out);
  REQUIRE(curve.size() > 3);
  for (std::size_t i = 2; i < curve.size(); ++i) {
    CHECK(std::stod(curve[i][1]) <= std::stod(curve[i - 1][1]));
    CHECK(std::stod(curve[i][2]) >= std::stod(curve[i - 1][2]));
  }

  const Result from_scratch = run(dir, "finetune --config " + q(config) + " --from-scratch --out " + q(dir.path() / "fs"));
  CHECK(from_scratch.code == 0);

  fas::save_json(dir.path() / "typo.json", {{"trian", {{"epochs", 1}}}});
  const Result typo = run(dir, "pretrain --dry-run --config " + q(dir.path() / "typo.json"));
  CHECK(typo.code == 1);
  CHECK(typo.err.find("config.trian: unknown key") != std::string::npos);

  auto no_data = tiny_config(dir.path() / "absent" / "manifest.csv");
  fas::save_json(dir.path() / "nodata.json", no_data);
  const Result absent = run(dir, "pretrain --config " + q(dir.path() / "nodata.json") + " --out " + q(dir.path() / "nd"));
  CHECK(absent.code == 2);
  CHECK(absent.err.find("absent") != std::string::npos);
}

TEST_CASE("metrics on score files") {
  TempDir dir;
  write_text(dir.path() / "four.csv",
             "id,score,label,dataset\n"
             "a,0.9,0,celeba\n"
             "b,0.6,1,celeba\n"
             "c,0.2,1,casia\n"
             "d,0.3,0,casia\n");
  const Result r = run(dir, "metrics --scores " + q(dir.path() / "four.csv") + " --report " + q(dir.path() / "r.csv"));
  REQUIRE(r.code == 0);
  CHECK(r.out.find("celeba") != std::string::npos);
  CHECK(r.out.find("casia") != std::string::npos);
  const std::string report = slurp(dir.path() / "r.csv");
  CHECK(report.find("celeba,0.5,1,1,0,0,") != std::string::npos);
  CHECK(report.find("casia,0.5,0,0,1,1,") != std::string::npos);
  CHECK(report.find("all,0.5,1,1,1,1,") != std::string::npos);

  std::ostringstream table2;
  table2 << "id,score,label,dataset\n";
  for (int i = 0; i < 10000; ++i) table2 << "a" << i << ',' << (i < 297 ? 0.9 : 0.1) << ",1,celeba\n";
  for (int i = 0; i < 10000; ++i) table2 << "l" << i << ',' << (i < 11 ? 0.1 : 0.9) << ",0,celeba\n";
  write_text(dir.path() / "t2.csv", table2.str());
  const Result t2 = run(dir, "metrics --scores " + q(dir.path() / "t2.csv"));
  REQUIRE(t2.code == 0);
  CHECK(t2.out.find("2.97") != std::string::npos);
  CHECK(t2.out.find("0.11") != std::string::npos);
  CHECK(t2.out.find("1.54") != std::string::npos);

  write_text(dir.path() / "perfect.csv", "id,score,label,dataset\na,0.99,0,x\nb,0.01,1,x\nc,0.7,0,x\nd,0.2,1,x\n");
  const Result perfect = run(dir, "metrics --scores " + q(dir.path() / "perfect.csv") + " --threshold 0.5");
  REQUIRE(perfect.code == 0);
  CHECK(perfect.out.find("100.00") != std::string::npos);
  CHECK(perfect.out.find("APCER") != std::string::npos);

  write_text(dir.path() / "empty.csv", "");
  CHECK(run(dir, "metrics --scores " + q(dir.path() / "empty.csv")).code == 2);
  write_text(dir.path() / "bad.csv", "id,score,label,dataset\na,0.5,0,x\nb,oops,1,x\n");
  const Result bad = run(dir, "metrics --scores " + q(dir.path() / "bad.csv"));
  CHECK(bad.code == 2);
  CHECK(bad.err.find("line 3") != std::string::npos);

  write_text(dir.path() / "one.csv", "id,score,label,dataset\na,0.5,0,x\nb,0.7,0,x\n");
  const Result single = run(dir, "metrics --scores " + q(dir.path() / "one.csv"));
  CHECK(single.code == 2);
  CHECK(single.err.find("APCER is undefined") != std::string::npos);
  CHECK(run(dir, "metrics --scores " + q(dir.path() / "four.csv") + " --threshold 0.5 --sweep").code == 1);
}

TEST_CASE("augment preview") {
  TempDir dir;
  REQUIRE(run(dir, "gen-synth --n 1 --size 16 --out " + q(dir.path() / "d")).code == 0);
  const fs::path image = dir.path() / "d" / "live_train_0.ppm";
  REQUIRE(fs::exists(image));
  write_text(dir.path() / "identity.json", R"({"version": 1, "ops": []})");
  REQUIRE(run(dir, "augment-preview --config " + q(dir.path() / "identity.json") + " --image " + q(image) + " --n 2 --out " +
                       q(dir.path() / "id"))
              .code == 0);
  CHECK(slurp(dir.path() / "id" / "variant_0.ppm") == slurp(image));

  const Result a = run(dir, "augment-preview --image " + q(image) + " --n 5 --seed 9 --out " + q(dir.path() / "p1"));
  REQUIRE(a.code == 0);
  CHECK(a.out.find("seed=9") != std::string::npos);
  REQUIRE(run(dir, "augment-preview --image " + q(image) + " --n 5 --seed 9 --out " + q(dir.path() / "p2")).code == 0);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(dir.path() / "p1")) {
    ++files;
    CHECK(slurp(e.path()) == slurp(dir.path() / "p2" / e.path().filename()));
  }
  CHECK(files == 5);
}
