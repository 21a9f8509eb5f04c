#include <doctest.h>

#include <cmath>
#include <sstream>

#include "fas/data.hpp"
#include "fas/error.hpp"
#include "fas/train.hpp"
#include "gradcheck.hpp"

using namespace fas;
using fas::testing::gradcheck;
using fas::testing::random_tensor;

namespace {

// logits [0, log(p/(1-p))] give softmax probability p on class 1
Tensor logits_with_p(double p, int label) {
  const double z = std::log(p / (1.0 - p));
  return label == 1 ? Tensor::from_rows({{0.0, z}}) : Tensor::from_rows({{z, 0.0}});
}

double focal(double p, int label, double alpha, double gamma) {
  Tape tape(false);
  const int labels[1] = {label};
  return focal_loss(tape, logits_with_p(p, label), labels, alpha, gamma).item();
}

ViTConfig tiny_model() {
  ViTConfig c;
  c.image_height = c.image_width = 16;
  c.patch_size = 4;
  c.embed_dim = 16;
  c.depth = 1;
  c.heads = 2;
  return c;
}

TrainConfig tiny_train(const ViTConfig& model) {
  TrainConfig t;
  t.epochs = 2;
  t.batch_size = 2;
  t.image_height = model.image_height;
  t.image_width = model.image_width;
  t.seed = 3;
  return t;
}

std::vector<Sample> tiny_samples(std::size_t per_class) {
  std::vector<Sample> out;
  for (std::size_t i = 0; i < per_class; ++i) {
    out.push_back({synthetic_live(16, 10 + i), kLabelLive, "l" + std::to_string(i), "synthetic"});
    out.push_back({synthetic_attack(16, 50 + i), kLabelAttack, "a" + std::to_string(i), "synthetic"});
  }
  return out;
}

std::vector<double> flatten(const ViTParams& p) {
  std::vector<double> out;
  for (const Tensor& t : p.parameters()) out.insert(out.end(), t.data().begin(), t.data().end());
  return out;
}

}  // namespace

TEST_CASE("focal loss closed forms") {
  CHECK(std::abs(focal(0.5, 1, 1.0, 0.0) - std::log(2.0)) < 1e-12);
  CHECK(std::abs(focal(0.9, 0, 0.25, 2.0) - 0.25 * 0.01 * -std::log(0.9)) < 1e-15);
  CHECK(std::abs(focal(0.9, 0, 0.25, 2.0) - 2.634e-4) < 1e-7);
  CHECK(focal(1.0 - 1e-9, 1, 0.25, 2.0) < 1e-20);

  double previous = std::numeric_limits<double>::infinity();
  for (double p = 0.01; p < 1.0; p += 0.01) {
    const double v = focal(p, 1, 0.25, 2.0);
    CHECK(v < previous);
    previous = v;
  }
}

TEST_CASE("focal loss reduces to cross-entropy") {
  Rng rng(1);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor logits = random_tensor({5, 2}, rng, 3.0);
    std::vector<int> labels(5);
    for (int& l : labels) l = static_cast<int>(rng.below(2));
    Tape tape(false);
    const double f = focal_loss(tape, logits, labels, 1.0, 0.0).item();
    double ce = 0.0;
    for (std::size_t b = 0; b < 5; ++b) {
      const double z0 = logits.at(b, 0), z1 = logits.at(b, 1);
      const double mx = std::max(z0, z1);
      const double lse = mx + std::log(std::exp(z0 - mx) + std::exp(z1 - mx));
      ce += lse - logits.at(b, static_cast<std::size_t>(labels[b]));
    }
    CHECK(std::abs(f - ce / 5.0) < 1e-12);
  }
}

TEST_CASE("focal loss gradient and errors") {
  Rng rng(2);
  Tensor logits = random_tensor({4, 2}, rng, 2.0);
  const std::vector<int> labels{0, 1, 1, 0};
  CHECK(gradcheck([&](Tape& t) { return focal_loss(t, logits, labels, 0.25, 2.0); }, {logits}) < 1e-6);
  Tape tape(false);
  const std::vector<int> bad{0, 2, 1, 0};
  CHECK_THROWS_AS(focal_loss(tape, logits, bad, 0.25, 2.0), DataError);
  CHECK_THROWS_AS(focal_loss(tape, logits, std::vector<int>{0, 1}, 0.25, 2.0), ShapeError);
}

TEST_CASE("adam step") {
  Tensor p(Shape{3}, {1.0, -2.0, 0.5});
  std::vector<Tensor> params{p};
  AdamState state = AdamState::for_params(params);
  p.set_requires_grad(true);
  p.zero_grad();
  adam_step(params, state, 0.001, AdamConfig{});
  CHECK(p[0] == 1.0);
  CHECK(p[1] == -2.0);

  Tensor q(Shape{1}, {0.0});
  std::vector<Tensor> qs{q};
  AdamState qs_state = AdamState::for_params(qs);
  q.grad_mut()[0] = 1.0;
  adam_step(qs, qs_state, 0.001, AdamConfig{});
  CHECK(std::abs(q[0] - (-0.001 / (1.0 + 1e-8))) < 1e-15);

  // second step with the same gradient, recomputed by hand
  adam_step(qs, qs_state, 0.001, AdamConfig{});
  double m = 0.0, v = 0.0, theta = 0.0;
  for (int t = 1; t <= 2; ++t) {
    m = 0.9 * m + 0.1;
    v = 0.999 * v + 0.001;
    const double mh = m / (1 - std::pow(0.9, t)), vh = v / (1 - std::pow(0.999, t));
    theta -= 0.001 * mh / (std::sqrt(vh) + 1e-8);
  }
  CHECK(std::abs(q[0] - theta) < 1e-12);

  // sign pattern of the first update is invariant to positive gradient scaling
  Rng rng(3);
  const Tensor g = random_tensor({6}, rng);
  std::vector<double> deltas[2];
  for (int k = 0; k < 2; ++k) {
    Tensor w(Shape{6});
    std::vector<Tensor> ws{w};
    AdamState s = AdamState::for_params(ws);
    for (std::size_t i = 0; i < 6; ++i) w.grad_mut()[i] = g[i] * (k == 0 ? 1.0 : 37.0);
    adam_step(ws, s, 0.01, AdamConfig{});
    deltas[k] = {w.data().begin(), w.data().end()};
  }
  for (std::size_t i = 0; i < 6; ++i) CHECK(std::signbit(deltas[0][i]) == std::signbit(deltas[1][i]));

  std::vector<Tensor> other{Tensor(Shape{2})};
  CHECK_THROWS_AS(adam_step(other, qs_state, 0.001, AdamConfig{}), ShapeError);
}

TEST_CASE("onecycle schedule") {
  const OneCycleConfig cfg;
  const std::size_t total = 1000;
  const double base = 0.001;
  CHECK(std::abs(onecycle_lr(0, total, base, cfg) - base / 25.0) < 1e-18);
  CHECK(std::abs(onecycle_lr(total - 1, total, base, cfg) - base / 1e4) < 1e-12);

  std::size_t argmax = 0;
  double best = -1.0;
  int maxima = 0;
  double previous = onecycle_lr(0, total, base, cfg);
  double largest_jump = 0.0;
  for (std::size_t s = 0; s < total; ++s) {
    const double lr = onecycle_lr(s, total, base, cfg);
    if (lr > best) {
      best = lr;
      argmax = s;
    }
    largest_jump = std::max(largest_jump, std::abs(lr - previous));
    previous = lr;
  }
  for (std::size_t s = 0; s < total; ++s) maxima += onecycle_lr(s, total, base, cfg) == best ? 1 : 0;
  CHECK(best == base);
  CHECK(maxima == 1);
  CHECK(onecycle_lr(argmax, total, base, cfg) == base);
  CHECK(largest_jump < 0.01 * base);
  CHECK_THROWS_AS(onecycle_lr(total, total, base, cfg), DomainError);
}

TEST_CASE("gradient clipping") {
  Tensor a(Shape{2}), b(Shape{1});
  a.grad_mut()[0] = 3.0;
  a.grad_mut()[1] = 0.0;
  b.grad_mut()[0] = 4.0;
  std::vector<Tensor> ps{a, b};
  CHECK(clip_grad_norm(ps, 1.0) == 5.0);
  CHECK(std::abs(a.grad()[0] - 0.6) < 1e-15);
  CHECK(std::abs(b.grad()[0] - 0.8) < 1e-15);
  CHECK(std::abs(clip_grad_norm(ps, 10.0) - 1.0) < 1e-15);
  CHECK(std::abs(b.grad()[0] - 0.8) < 1e-15);
  zero_grads(ps);
  CHECK(a.grad()[0] == 0.0);
}

TEST_CASE("config validation") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.epochs == 300);
  CHECK(cfg.batch_size == 4);
  CHECK(cfg.base_lr == 0.001);
  CHECK(cfg.image_height == 260);
  cfg.focal_alpha = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.focal_gamma = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("finetuning with zero learning rate leaves parameters bit-identical") {
  const ViTConfig model = tiny_model();
  TrainConfig cfg = tiny_train(model);
  cfg.base_lr = 0.0;
  const ViTParams init = ViTParams::init(model, 4);
  const auto before = flatten(init);
  const FinetuneResult r = finetune(tiny_samples(2), {}, init, model, cfg, AugmentSpec::standard(1));
  CHECK(flatten(r.params) == before);
  CHECK(flatten(init) == before);
  CHECK(r.trace.size() == 4);
}

TEST_CASE("finetuning is deterministic and records validation metrics") {
  const ViTConfig model = tiny_model();
  const TrainConfig cfg = tiny_train(model);
  const ViTParams init = ViTParams::init(model, 5);
  const auto train = tiny_samples(2);
  const auto val = tiny_samples(1);
  const FinetuneResult a = finetune(train, val, init, model, cfg, AugmentSpec::standard(2));
  const FinetuneResult b = finetune(train, val, init, model, cfg, AugmentSpec::standard(2));
  CHECK(flatten(a.params) == flatten(b.params));
  CHECK(flatten(a.params) != flatten(init));
  std::ostringstream ta, tb;
  write_train_trace(ta, a.trace);
  write_train_trace(tb, b.trace);
  CHECK(ta.str() == tb.str());
  CHECK(ta.str().rfind("epoch,step,lr,loss,val_apcer,val_bpcer,val_acer,val_accuracy\n", 0) == 0);

  REQUIRE(a.trace.size() == 4);
  CHECK_FALSE(a.trace[0].val_acer.has_value());
  CHECK(a.trace[1].val_acer.has_value());
  CHECK(a.trace[3].val_accuracy.has_value());
  for (const auto& row : a.trace) CHECK(std::isfinite(row.loss));

  const auto scores = bona_fide_scores(val, a.params, model);
  REQUIRE(scores.size() == 2);
  for (double s : scores) CHECK((s > 0.0 && s < 1.0));

  const FitSummary fit = summarize_fit(train, a.params, model, cfg);
  CHECK(fit.focal_loss > 0.0);
  CHECK((fit.accuracy >= 0.0 && fit.accuracy <= 1.0));
}

TEST_CASE("finetuning input errors") {
  const ViTConfig model = tiny_model();
  TrainConfig cfg = tiny_train(model);
  const ViTParams init = ViTParams::init(model, 6);
  CHECK_THROWS_AS(finetune({}, {}, init, model, cfg, AugmentSpec{}), DataError);
  cfg.image_height = 32;
  CHECK_THROWS_AS(finetune(tiny_samples(1), {}, init, model, cfg, AugmentSpec{}), ConfigError);
}
