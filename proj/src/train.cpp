#include "fas/train.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <ostream>

#include "fas/rng.hpp"

namespace fas {

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train.epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("train.batch_size must be at least 1");
  // base_lr == 0 is accepted: it freezes the model, which tests rely on.
  if (!(base_lr >= 0.0) || !std::isfinite(base_lr)) throw ConfigError("train.base_lr must be non-negative");
  if (image_height == 0 || image_width == 0) throw ConfigError("train image size must be positive");
  if (!(focal_gamma >= 0.0)) throw ConfigError("train.focal_gamma must be >= 0");
  if (!(focal_alpha > 0.0 && focal_alpha <= 1.0)) throw ConfigError("train.focal_alpha must be in (0, 1]");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
    throw ConfigError("adam betas must be in [0, 1)");
  }
  if (!(adam.eps > 0.0)) throw ConfigError("adam.eps must be positive");
  if (!(onecycle.pct_warmup >= 0.0 && onecycle.pct_warmup < 1.0)) throw ConfigError("onecycle.pct_warmup must be in [0, 1)");
  if (!(onecycle.div_factor >= 1.0) || !(onecycle.final_div >= 1.0)) {
    throw ConfigError("onecycle divisors must be >= 1");
  }
  if (!(clip_norm >= 0.0)) throw ConfigError("train.clip_norm must be >= 0");
}

Tensor focal_loss(Tape& tape, const Tensor& logits, std::span<const int> labels, double alpha, double gamma) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
    throw ShapeError("focal_loss: logits " + shape_to_string(logits.shape()) + " vs " + std::to_string(labels.size()) +
                     " labels");
  }
  if (!(gamma >= 0.0) || !(alpha > 0.0 && alpha <= 1.0)) throw DomainError("focal_loss: alpha in (0,1], gamma >= 0");
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  for (int label : labels) {
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      throw DataError("focal_loss: invalid label " + std::to_string(label));
    }
  }
  // Row-wise stable softmax.
  std::vector<double> probs(logits.numel());
  std::vector<double> log_pt(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const double* row = logits.data().data() + b * classes;
    const double mx = *std::max_element(row, row + classes);
    double z = 0.0;
    for (std::size_t j = 0; j < classes; ++j) z += std::exp(row[j] - mx);
    for (std::size_t j = 0; j < classes; ++j) probs[b * classes + j] = std::exp(row[j] - mx) / z;
    log_pt[b] = row[labels[b]] - mx - std::log(z);
  }
  double loss = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const double pt = std::exp(log_pt[b]);
    loss += -alpha * std::pow(1.0 - pt, gamma) * log_pt[b];
  }
  Tensor out = Tensor::scalar(loss / static_cast<double>(batch));
  std::vector<int> owned(labels.begin(), labels.end());
  tape.record({logits}, out, [logits, out, probs = std::move(probs), log_pt = std::move(log_pt),
                              labels = std::move(owned), alpha, gamma, batch, classes]() {
    const double g = out.grad()[0] / static_cast<double>(batch);
    auto gl = logits.grad_mut();
    for (std::size_t b = 0; b < batch; ++b) {
      const double pt = std::exp(log_pt[b]);
      const double q = 1.0 - pt;
      // p_t * dL/dp_t for L = -alpha q^gamma log p_t, with dp_t/dz_j = p_t (1[j = y] - p_j).
      const double focal_term = (gamma == 0.0 || q == 0.0) ? 0.0 : gamma * std::pow(q, gamma - 1.0) * pt * log_pt[b];
      const double pt_dl_dpt = alpha * (focal_term - std::pow(q, gamma));
      for (std::size_t j = 0; j < classes; ++j) {
        const double indicator = static_cast<int>(j) == labels[b] ? 1.0 : 0.0;
        gl[b * classes + j] += g * pt_dl_dpt * (indicator - probs[b * classes + j]);
      }
    }
  });
  return out;
}

AdamState AdamState::for_params(std::span<const Tensor> params) {
  AdamState s;
  for (const auto& p : params) {
    s.m.emplace_back(p.numel(), 0.0);
    s.v.emplace_back(p.numel(), 0.0);
  }
  return s;
}

void adam_step(std::span<const Tensor> params, AdamState& state, double lr, const AdamConfig& config) {
  if (state.m.size() != params.size()) throw ShapeError("adam_step: optimizer state does not match parameters");
  ++state.t;
  const double bias1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.t));
  const double bias2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor p = params[i];
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (m.size() != p.numel()) throw ShapeError("adam_step: moment shape does not match " + shape_to_string(p.shape()));
    auto values = p.data();
    auto grads = p.grad();
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double g = grads.empty() ? 0.0 : grads[j];
      m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * g;
      v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * g * g;
      const double m_hat = m[j] / bias1;
      const double v_hat = v[j] / bias2;
      values[j] -= lr * m_hat / (std::sqrt(v_hat) + config.eps);
    }
  }
}

double onecycle_lr(std::size_t step, std::size_t total_steps, double base_lr, const OneCycleConfig& config) {
  if (total_steps == 0 || step >= total_steps) {
    throw DomainError("onecycle_lr: step " + std::to_string(step) + " outside [0, " + std::to_string(total_steps) + ")");
  }
  const double initial = base_lr / config.div_factor;
  const double final_lr = base_lr / config.final_div;
  if (total_steps == 1) return base_lr;
  const auto peak = static_cast<std::size_t>(config.pct_warmup * static_cast<double>(total_steps - 1));
  if (step <= peak) {
    if (peak == 0) return base_lr;
    return initial + (base_lr - initial) * static_cast<double>(step) / static_cast<double>(peak);
  }
  const double t = static_cast<double>(step - peak) / static_cast<double>(total_steps - 1 - peak);
  return final_lr + (base_lr - final_lr) * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

double clip_grad_norm(std::span<const Tensor> params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params)
    for (double g : p.grad()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double factor = max_norm / norm;
    for (const auto& p : params)
      if (p.has_grad())
        for (double& g : p.grad_mut()) g *= factor;
  }
  return norm;
}

void zero_grads(std::span<const Tensor> params) {
  for (const auto& p : params) p.zero_grad();
}

namespace {

Tensor model_input(const Image& image, const ViTConfig& model) {
  if (image.channels != model.channels) {
    throw ShapeError("image has " + std::to_string(image.channels) + " channels, model expects " +
                     std::to_string(model.channels));
  }
  return to_tensor(resize(image, model.image_height, model.image_width));
}

double softmax_first(const Tensor& logits) {
  const double mx = *std::max_element(logits.data().begin(), logits.data().end());
  double z = 0.0;
  for (double v : logits.data()) z += std::exp(v - mx);
  return std::exp(logits[0] - mx) / z;
}

}  // namespace

std::vector<double> bona_fide_scores(const std::vector<Sample>& samples, const ViTParams& params,
                                     const ViTConfig& model) {
  std::vector<double> scores;
  scores.reserve(samples.size());
  for (const auto& s : samples) {
    Tape tape(false);
    scores.push_back(softmax_first(vit_forward(tape, model_input(s.image, model), params, model)));
  }
  return scores;
}

FitSummary summarize_fit(const std::vector<Sample>& samples, const ViTParams& params, const ViTConfig& model,
                         const TrainConfig& config) {
  if (samples.empty()) throw DataError("no samples to summarize");
  FitSummary summary;
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& s : samples) {
    Tape tape(false);
    Tensor logits = vit_forward(tape, model_input(s.image, model), params, model);
    const int label[] = {s.label};
    summary.focal_loss +=
        focal_loss(tape, reshape(tape, logits, Shape{1, logits.numel()}), label, config.focal_alpha, config.focal_gamma)
            .item();
    scores.push_back(softmax_first(logits));
    labels.push_back(s.label);
  }
  summary.focal_loss /= static_cast<double>(samples.size());
  summary.accuracy = accuracy(confusion(scores, labels, config.threshold));
  return summary;
}

FinetuneResult finetune(const std::vector<Sample>& train, const std::vector<Sample>& validation,
                        const ViTParams& init, const ViTConfig& model, const TrainConfig& config,
                        const AugmentSpec& augment, std::ostream* log) {
  config.validate();
  model.validate();
  augment.validate();
  if (config.image_height != model.image_height || config.image_width != model.image_width) {
    throw ConfigError("train image size " + std::to_string(config.image_height) + "x" +
                      std::to_string(config.image_width) + " differs from model input " +
                      std::to_string(model.image_height) + "x" + std::to_string(model.image_width));
  }
  if (train.empty()) throw DataError("finetune: empty training set");
  const bool has_live = std::any_of(train.begin(), train.end(), [](const Sample& s) { return s.label == kLabelLive; });
  const bool has_attack = std::any_of(train.begin(), train.end(), [](const Sample& s) { return s.label == kLabelAttack; });
  if (log && !(has_live && has_attack)) *log << "warning: training set contains a single class\n";

  FinetuneResult result{init.clone(), {}};
  const std::vector<Tensor> params = result.params.parameters();
  result.params.set_requires_grad(true);
  AdamState adam = AdamState::for_params(params);

  const std::size_t batches = (train.size() + config.batch_size - 1) / config.batch_size;
  const std::size_t total_steps = config.epochs * batches;
  std::vector<std::size_t> order(train.size());
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng = Rng::derive(config.seed, epoch);
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++step) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      Tape tape;
      std::vector<Tensor> rows;
      std::vector<int> labels;
      for (std::size_t i = start; i < end; ++i) {
        const Sample& s = train[order[i]];
        const Image resized = resize(s.image, model.image_height, model.image_width);
        const std::uint64_t sample_seed = mix_seed(config.seed ^ epoch, order[i]);
        const Image view = apply_pipeline(resized, augment, sample_seed);
        Tensor logits = vit_forward(tape, to_tensor(view), result.params, model);
        rows.push_back(reshape(tape, logits, Shape{1, logits.numel()}));
        labels.push_back(s.label);
      }
      Tensor loss = focal_loss(tape, concat_rows(tape, rows), labels, config.focal_alpha, config.focal_gamma);
      zero_grads(params);
      tape.backward(loss);
      clip_grad_norm(params, config.clip_norm);
      const double lr = onecycle_lr(step, total_steps, config.base_lr, config.onecycle);
      adam_step(params, adam, lr, config.adam);

      TrainTraceRow row;
      row.epoch = epoch;
      row.step = step;
      row.lr = lr;
      row.loss = loss.item();
      result.trace.push_back(row);
    }

    if (!validation.empty()) {
      std::vector<double> scores = bona_fide_scores(validation, result.params, model);
      std::vector<int> labels;
      for (const auto& s : validation) labels.push_back(s.label);
      const ConfusionCounts counts = confusion(scores, labels, config.threshold);
      TrainTraceRow& row = result.trace.back();
      row.val_accuracy = accuracy(counts);
      if (counts.fp + counts.tn > 0) row.val_apcer = apcer(counts);
      if (counts.fn + counts.tp > 0) row.val_bpcer = bpcer(counts);
      if (row.val_apcer && row.val_bpcer) row.val_acer = acer(*row.val_apcer, *row.val_bpcer);
    }
    if (log) {
      *log << "epoch " << epoch + 1 << "/" << config.epochs << " loss " << result.trace.back().loss;
      if (result.trace.back().val_acer) *log << " val_acer " << format_percent(*result.trace.back().val_acer) << "%";
      *log << '\n';
    }
  }
  result.params.set_requires_grad(false);
  for (auto& p : params) p.drop_grad();
  return result;
}

void write_train_trace(std::ostream& out, const std::vector<TrainTraceRow>& trace) {
  out << "epoch,step,lr,loss,val_apcer,val_bpcer,val_acer,val_accuracy\n";
  out << std::setprecision(17);
  auto opt = [&](const std::optional<double>& v) {
    out << ',';
    if (v) out << *v;
  };
  for (const auto& r : trace) {
    out << r.epoch << ',' << r.step << ',' << r.lr << ',' << r.loss;
    opt(r.val_apcer);
    opt(r.val_bpcer);
    opt(r.val_acer);
    opt(r.val_accuracy);
    out << '\n';
  }
}

}  // namespace fas
