#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <utility>
#include <vector>

#include "fas/augment.hpp"
#include "fas/image.hpp"
#include "fas/train.hpp"
#include "fas/vit.hpp"

namespace fas {

struct DinoConfig {
  std::size_t num_prototypes = 64;
  double tau_student = 0.1;
  double tau_teacher = 0.04;
  double center_momentum = 0.9;
  double ema_momentum = 0.996;
  /// When false the center is never updated (stays at its initial value).
  bool centering = true;
  /// With centering on, set the center to the first batch's mean teacher
  /// output before the first step instead of starting from zero.
  bool center_warm_start = true;
  std::size_t epochs = 1;
  std::size_t batch_size = 8;
  double base_lr = 0.0005;
  AdamConfig adam;
  OneCycleConfig onecycle;
  double clip_norm = 1.0;
  /// Images (taken from the front of the unlabeled set, unaugmented) whose
  /// mean teacher entropy is logged every step.
  std::size_t probe_size = 16;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Backbone plus projection head: MLP D -> D -> D, L2-normalized, then cosine
/// similarity against K unit-normalized prototype columns. Outputs lie in
/// [-1, 1].
struct DinoNetwork {
  ViTParams backbone;
  MlpHead projection;
  Tensor prototypes;  // [D, K]

  std::vector<NamedTensor> named_parameters() const;
  std::vector<Tensor> parameters() const;
  DinoNetwork clone() const;
};

struct DinoState {
  ViTConfig model;
  DinoNetwork student;
  DinoNetwork teacher;
  Tensor center;  // [K]
  double tau_student = 0.1;
  double tau_teacher = 0.04;
  double ema_momentum = 0.996;
  double center_momentum = 0.9;

  /// Student from seeded init, teacher an exact copy, zero center.
  static DinoState init(const ViTConfig& model, const DinoConfig& config, std::uint64_t seed);
  void validate() const;
};

/// Two independent pipeline draws of the same image, resized to the model
/// input.
std::pair<Image, Image> make_views(const Image& image, const AugmentSpec& augment, std::uint64_t sample_seed,
                                   const ViTConfig& model);

/// Raw teacher head output [K] (no gradient).
Tensor teacher_output(const Image& view, const DinoState& state);
/// softmax((teacher_output - center) / tau_teacher), computed without a tape.
Tensor teacher_targets_from_output(const Tensor& raw, const DinoState& state);
Tensor teacher_targets(const Image& view, const DinoState& state);
Tensor projection_forward(Tape& tape, const Tensor& features, const DinoNetwork& network);
/// log_softmax(student_head(student_features(view)) / tau_student).
Tensor student_logprobs(Tape& tape, const Image& view, const DinoState& state);

struct DinoLossResult {
  Tensor loss;
  /// Raw teacher outputs, two rows per image (view a, view b): [2B, K].
  Tensor teacher_outputs;
};

/// Mean over images of 0.5 [H(t(a), s(b)) + H(t(b), s(a))].
DinoLossResult dino_loss_from_views(Tape& tape, const std::vector<std::pair<Image, Image>>& views,
                                    const DinoState& state);
DinoLossResult dino_loss(Tape& tape, const std::vector<Image>& images, const DinoState& state,
                         const AugmentSpec& augment, std::uint64_t batch_seed);

/// teacher <- m teacher + (1 - m) student over every parameter, heads included.
void ema_update(DinoState& state);
/// center <- lambda center + (1 - lambda) mean_rows(teacher_outputs).
void center_update(DinoState& state, const Tensor& teacher_outputs);

double entropy(const Tensor& probabilities);
/// Mean entropy of teacher_targets over images (resized to the model input).
double probe_entropy(const std::vector<Image>& probe, const DinoState& state);

struct PretrainTraceRow {
  std::size_t step = 0;
  double loss = 0.0;
  double teacher_entropy = 0.0;
};

/// Optimizer bound to the student's parameters plus the schedule position.
struct DinoOptimizer {
  AdamState adam;
  std::size_t step = 0;
  std::size_t total_steps = 1;
};
DinoOptimizer make_optimizer(const DinoState& state, std::size_t total_steps);

/// One pass over `images` in seeded batches: views -> loss -> backward ->
/// Adam step on the student -> EMA -> center update. Appends one trace row per
/// step.
void pretrain_epoch(const std::vector<Image>& images, DinoState& state, DinoOptimizer& optimizer,
                    const DinoConfig& config, const AugmentSpec& augment, std::size_t epoch,
                    std::vector<PretrainTraceRow>& trace);

/// Runs config.epochs epochs from a fresh optimizer.
std::vector<PretrainTraceRow> pretrain(const std::vector<Image>& images, DinoState& state, const DinoConfig& config,
                                       const AugmentSpec& augment, std::ostream* log = nullptr);

/// step,loss,teacher_entropy
void write_pretrain_trace(std::ostream& out, const std::vector<PretrainTraceRow>& trace);

}  // namespace fas
