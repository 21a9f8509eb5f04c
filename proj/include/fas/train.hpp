#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fas/augment.hpp"
#include "fas/image.hpp"
#include "fas/metrics.hpp"
#include "fas/tensor.hpp"
#include "fas/vit.hpp"

namespace fas {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Linear warmup from base_lr/div_factor to base_lr over the first
/// pct_warmup of the steps, then cosine decay to base_lr/final_div.
struct OneCycleConfig {
  double pct_warmup = 0.3;
  double div_factor = 25.0;
  double final_div = 1e4;
};

struct TrainConfig {
  std::size_t epochs = 300;
  std::size_t batch_size = 4;
  double base_lr = 0.001;
  std::size_t image_height = 260;
  std::size_t image_width = 260;
  double focal_alpha = 0.25;
  double focal_gamma = 2.0;
  AdamConfig adam;
  OneCycleConfig onecycle;
  /// Global gradient-norm clip; 0 disables.
  double clip_norm = 1.0;
  /// Score threshold for the per-epoch validation metrics.
  double threshold = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
};

/// mean_b -alpha * (1 - p_t)^gamma * log(p_t), p_t = softmax(logits_b)[label_b].
Tensor focal_loss(Tape& tape, const Tensor& logits, std::span<const int> labels, double alpha, double gamma);

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::size_t t = 0;

  static AdamState for_params(std::span<const Tensor> params);
};

/// Bias-corrected Adam update using each parameter's accumulated grad.
/// Parameters without a grad are treated as having a zero gradient.
void adam_step(std::span<const Tensor> params, AdamState& state, double lr, const AdamConfig& config);

double onecycle_lr(std::size_t step, std::size_t total_steps, double base_lr, const OneCycleConfig& config);

/// Rescales all grads so their joint L2 norm is at most max_norm; returns the
/// norm before clipping.
double clip_grad_norm(std::span<const Tensor> params, double max_norm);

void zero_grads(std::span<const Tensor> params);

/// A decoded image with its label and provenance.
struct Sample {
  Image image;
  int label = kLabelLive;
  std::string id;
  std::string dataset;
};

struct TrainTraceRow {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
  /// Filled on the last step of each epoch when a validation split exists and
  /// the metric is defined.
  std::optional<double> val_apcer, val_bpcer, val_acer, val_accuracy;
};

struct FinetuneResult {
  ViTParams params;
  std::vector<TrainTraceRow> trace;
};

/// Per epoch: seeded shuffle, then for every batch resize to the model input,
/// augment, forward, focal loss, backward, clip, Adam step with the OneCycle
/// rate. `init` is cloned, never modified.
FinetuneResult finetune(const std::vector<Sample>& train, const std::vector<Sample>& validation,
                        const ViTParams& init, const ViTConfig& model, const TrainConfig& config,
                        const AugmentSpec& augment, std::ostream* log = nullptr);

/// Bona fide probability softmax(logits)[0] per sample (images resized to the
/// model input).
std::vector<double> bona_fide_scores(const std::vector<Sample>& samples, const ViTParams& params,
                                     const ViTConfig& model);

/// Mean focal loss and accuracy at `threshold` over samples, no augmentation.
struct FitSummary {
  double focal_loss = 0.0;
  double accuracy = 0.0;
};
FitSummary summarize_fit(const std::vector<Sample>& samples, const ViTParams& params, const ViTConfig& model,
                         const TrainConfig& config);

/// epoch,step,lr,loss,val_apcer,val_bpcer,val_acer,val_accuracy (rates as
/// fractions, empty when absent).
void write_train_trace(std::ostream& out, const std::vector<TrainTraceRow>& trace);

}  // namespace fas
