#include "fas/dino.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>

#include "fas/rng.hpp"

namespace fas {

void DinoConfig::validate() const {
  if (num_prototypes < 2) throw ConfigError("dino.num_prototypes must be at least 2");
  if (!(tau_student > 0.0) || !(tau_teacher > 0.0)) throw ConfigError("dino temperatures must be positive");
  if (!(tau_teacher < tau_student)) throw ConfigError("dino.tau_teacher must be below tau_student (sharpening)");
  if (!(center_momentum >= 0.0 && center_momentum <= 1.0)) throw ConfigError("dino.center_momentum must be in [0, 1]");
  if (!(ema_momentum >= 0.0 && ema_momentum <= 1.0)) throw ConfigError("dino.ema_momentum must be in [0, 1]");
  if (epochs < 1) throw ConfigError("dino.epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("dino.batch_size must be at least 1");
  if (!(base_lr >= 0.0)) throw ConfigError("dino.base_lr must be non-negative");
  if (!(clip_norm >= 0.0)) throw ConfigError("dino.clip_norm must be >= 0");
}

std::vector<NamedTensor> DinoNetwork::named_parameters() const {
  std::vector<NamedTensor> out = backbone.named_parameters();
  projection.append_named("projection.", out);
  out.emplace_back("prototypes", prototypes);
  return out;
}

std::vector<Tensor> DinoNetwork::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

DinoNetwork DinoNetwork::clone() const {
  return DinoNetwork{backbone.clone(),
                     MlpHead{projection.w1.clone(), projection.b1.clone(), projection.w2.clone(), projection.b2.clone()},
                     prototypes.clone()};
}

DinoState DinoState::init(const ViTConfig& model, const DinoConfig& config, std::uint64_t seed) {
  model.validate();
  config.validate();
  DinoState state;
  state.model = model;
  state.student.backbone = ViTParams::init(model, seed);
  const std::size_t d = model.embed_dim;
  state.student.projection = MlpHead::init(d, d, d, mix_seed(seed, 1));
  state.student.prototypes = Tensor(Shape{d, config.num_prototypes});
  Rng rng(mix_seed(seed, 2));
  for (double& w : state.student.prototypes.data()) w = rng.normal();
  state.teacher = state.student.clone();
  state.center = Tensor(Shape{config.num_prototypes});
  state.tau_student = config.tau_student;
  state.tau_teacher = config.tau_teacher;
  state.ema_momentum = config.ema_momentum;
  state.center_momentum = config.center_momentum;
  return state;
}

void DinoState::validate() const {
  const auto s = student.named_parameters();
  const auto t = teacher.named_parameters();
  if (s.size() != t.size()) throw ShapeError("student and teacher differ in parameter count");
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i].second.shape() != t[i].second.shape()) {
      throw ShapeError("student/teacher mismatch at " + s[i].first + ": " + shape_to_string(s[i].second.shape()) +
                       " vs " + shape_to_string(t[i].second.shape()));
    }
  }
  if (center.numel() != student.prototypes.dim(1)) throw ShapeError("center length differs from prototype count");
  if (!(tau_teacher < tau_student)) throw ConfigError("tau_teacher must be below tau_student");
}

std::pair<Image, Image> make_views(const Image& image, const AugmentSpec& augment, std::uint64_t sample_seed,
                                   const ViTConfig& model) {
  auto view = [&](std::uint64_t stream) {
    return resize(apply_pipeline(image, augment, mix_seed(sample_seed, stream)), model.image_height,
                  model.image_width);
  };
  return {view(0), view(1)};
}

Tensor teacher_output(const Image& view, const DinoState& state) {
  Tape tape(false);
  Tensor features = vit_features(tape, to_tensor(view), state.teacher.backbone, state.model);
  return projection_forward(tape, features, state.teacher);
}

Tensor teacher_targets_from_output(const Tensor& raw, const DinoState& state) {
  Tape tape(false);
  return softmax(tape, sub(tape, raw, state.center), state.tau_teacher);
}

Tensor teacher_targets(const Image& view, const DinoState& state) {
  return teacher_targets_from_output(teacher_output(view, state), state);
}

Tensor projection_forward(Tape& tape, const Tensor& features, const DinoNetwork& network) {
  const Tensor z = mlp_head_forward(tape, features, network.projection);
  const Tensor unit = l2_normalize(tape, reshape(tape, z, Shape{1, z.numel()}));
  const Tensor protos = transpose(tape, l2_normalize(tape, transpose(tape, network.prototypes)));
  const Tensor out = matmul(tape, unit, protos);
  return reshape(tape, out, Shape{out.numel()});
}

Tensor student_logprobs(Tape& tape, const Image& view, const DinoState& state) {
  Tensor features = vit_features(tape, to_tensor(view), state.student.backbone, state.model);
  return log_softmax(tape, projection_forward(tape, features, state.student), state.tau_student);
}

DinoLossResult dino_loss_from_views(Tape& tape, const std::vector<std::pair<Image, Image>>& views,
                                    const DinoState& state) {
  if (views.empty()) throw ContractError("dino_loss needs a non-empty batch");
  const std::size_t k = state.center.numel();
  Tensor outputs(Shape{2 * views.size(), k});
  std::vector<Tensor> terms;
  for (std::size_t i = 0; i < views.size(); ++i) {
    const auto& [a, b] = views[i];
    Tensor raw_a = teacher_output(a, state);
    Tensor raw_b = teacher_output(b, state);
    std::copy(raw_a.data().begin(), raw_a.data().end(), outputs.data().begin() + static_cast<std::ptrdiff_t>(2 * i * k));
    std::copy(raw_b.data().begin(), raw_b.data().end(),
              outputs.data().begin() + static_cast<std::ptrdiff_t>((2 * i + 1) * k));
    Tensor target_a = teacher_targets_from_output(raw_a, state);
    Tensor target_b = teacher_targets_from_output(raw_b, state);
    terms.push_back(cross_entropy(tape, student_logprobs(tape, b, state), target_a));
    terms.push_back(cross_entropy(tape, student_logprobs(tape, a, state), target_b));
  }
  Tensor total = sum(tape, concat_rows(tape, [&] {
                       std::vector<Tensor> rows;
                       for (const auto& t : terms) rows.push_back(reshape(tape, t, Shape{1, 1}));
                       return rows;
                     }()));
  return {scale(tape, total, 0.5 / static_cast<double>(views.size())), outputs};
}

DinoLossResult dino_loss(Tape& tape, const std::vector<Image>& images, const DinoState& state,
                         const AugmentSpec& augment, std::uint64_t batch_seed) {
  if (images.empty()) throw ContractError("dino_loss needs a non-empty batch");
  std::vector<std::pair<Image, Image>> views;
  views.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    views.push_back(make_views(images[i], augment, mix_seed(batch_seed, i), state.model));
  }
  return dino_loss_from_views(tape, views, state);
}

void ema_update(DinoState& state) {
  const double m = state.ema_momentum;
  if (!(m >= 0.0 && m <= 1.0)) throw DomainError("ema momentum must be in [0, 1]");
  const auto teacher = state.teacher.parameters();
  const auto student = state.student.parameters();
  for (std::size_t i = 0; i < teacher.size(); ++i) {
    Tensor t = teacher[i];
    auto tv = t.data();
    auto sv = student[i].data();
    for (std::size_t j = 0; j < tv.size(); ++j) tv[j] = m * tv[j] + (1.0 - m) * sv[j];
  }
}

void center_update(DinoState& state, const Tensor& teacher_outputs) {
  const std::size_t k = state.center.numel();
  if (teacher_outputs.rank() != 2 || teacher_outputs.dim(1) != k || teacher_outputs.dim(0) == 0) {
    throw ShapeError("center_update: expected [B," + std::to_string(k) + "], got " +
                     shape_to_string(teacher_outputs.shape()));
  }
  const std::size_t rows = teacher_outputs.dim(0);
  const double lambda = state.center_momentum;
  for (std::size_t j = 0; j < k; ++j) {
    double mean = 0.0;
    for (std::size_t r = 0; r < rows; ++r) mean += teacher_outputs[r * k + j];
    mean /= static_cast<double>(rows);
    state.center[j] = lambda * state.center[j] + (1.0 - lambda) * mean;
  }
}

double entropy(const Tensor& probabilities) {
  double h = 0.0;
  for (double p : probabilities.data())
    if (p > 0.0) h -= p * std::log(p);
  return h;
}

double probe_entropy(const std::vector<Image>& probe, const DinoState& state) {
  if (probe.empty()) return 0.0;
  double total = 0.0;
  for (const auto& image : probe) {
    total += entropy(teacher_targets(resize(image, state.model.image_height, state.model.image_width), state));
  }
  return total / static_cast<double>(probe.size());
}

DinoOptimizer make_optimizer(const DinoState& state, std::size_t total_steps) {
  const auto params = state.student.parameters();
  return DinoOptimizer{AdamState::for_params(params), 0, std::max<std::size_t>(total_steps, 1)};
}

void pretrain_epoch(const std::vector<Image>& images, DinoState& state, DinoOptimizer& optimizer,
                    const DinoConfig& config, const AugmentSpec& augment, std::size_t epoch,
                    std::vector<PretrainTraceRow>& trace) {
  if (images.empty()) throw DataError("pretraining needs at least one unlabeled image");
  const std::vector<Tensor> params = state.student.parameters();
  for (auto p : params) p.set_requires_grad(true);
  const std::vector<Image> probe(images.begin(),
                                 images.begin() + static_cast<std::ptrdiff_t>(std::min(config.probe_size, images.size())));

  std::vector<std::size_t> order(images.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng shuffle_rng = Rng::derive(config.seed, epoch);
  shuffle_rng.shuffle(std::span<std::size_t>(order));

  for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
    const std::size_t end = std::min(order.size(), start + config.batch_size);
    std::vector<Image> batch;
    for (std::size_t i = start; i < end; ++i) batch.push_back(images[order[i]]);

    const std::uint64_t batch_seed = mix_seed(config.seed, optimizer.step);
    if (config.centering && config.center_warm_start && optimizer.step == 0) {
      Tape no_grad(false);
      const Tensor outputs = dino_loss(no_grad, batch, state, augment, batch_seed).teacher_outputs;
      const std::size_t k = state.center.numel();
      const std::size_t rows = outputs.dim(0);
      for (std::size_t j = 0; j < k; ++j) {
        double mean = 0.0;
        for (std::size_t r = 0; r < rows; ++r) mean += outputs[r * k + j];
        state.center[j] = mean / static_cast<double>(rows);
      }
    }
    Tape tape;
    DinoLossResult result = dino_loss(tape, batch, state, augment, batch_seed);
    zero_grads(params);
    tape.backward(result.loss);
    clip_grad_norm(params, config.clip_norm);
    const double lr =
        onecycle_lr(std::min(optimizer.step, optimizer.total_steps - 1), optimizer.total_steps, config.base_lr,
                    config.onecycle);
    adam_step(params, optimizer.adam, lr, config.adam);
    ema_update(state);
    if (config.centering) center_update(state, result.teacher_outputs);

    trace.push_back({optimizer.step, result.loss.item(), probe_entropy(probe, state)});
    ++optimizer.step;
  }
  for (auto p : params) {
    p.set_requires_grad(false);
    p.drop_grad();
  }
}

std::vector<PretrainTraceRow> pretrain(const std::vector<Image>& images, DinoState& state, const DinoConfig& config,
                                       const AugmentSpec& augment, std::ostream* log) {
  config.validate();
  augment.validate();
  const std::size_t batches = (images.size() + config.batch_size - 1) / config.batch_size;
  DinoOptimizer optimizer = make_optimizer(state, config.epochs * batches);
  std::vector<PretrainTraceRow> trace;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    pretrain_epoch(images, state, optimizer, config, augment, epoch, trace);
    if (log) {
      *log << "epoch " << epoch + 1 << "/" << config.epochs << " loss " << trace.back().loss << " teacher_entropy "
           << trace.back().teacher_entropy << '\n';
    }
  }
  return trace;
}

void write_pretrain_trace(std::ostream& out, const std::vector<PretrainTraceRow>& trace) {
  out << "step,loss,teacher_entropy\n";
  out << std::setprecision(17);
  for (const auto& r : trace) out << r.step << ',' << r.loss << ',' << r.teacher_entropy << '\n';
}

}  // namespace fas
