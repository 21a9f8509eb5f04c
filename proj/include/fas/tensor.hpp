#pragma once

// Dense row-major tensors of doubles with a define-by-run reverse-mode tape.
//
// A Tensor is a handle: copies share storage, which is how parameters are
// threaded through a forward pass and later updated by an optimizer. Use
// clone() for a deep copy.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "fas/error.hpp"

namespace fas {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

class Tensor {
 public:
  Tensor();
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double value);
  static Tensor from_rows(const std::vector<std::vector<double>>& rows);

  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return impl_->data.size(); }

  std::span<double> data() { return impl_->data; }
  std::span<const double> data() const { return impl_->data; }
  double& operator[](std::size_t i) { return impl_->data[i]; }
  double operator[](std::size_t i) const { return impl_->data[i]; }
  double& at(std::size_t row, std::size_t col);
  double at(std::size_t row, std::size_t col) const;
  double item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on);

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const double> grad() const { return impl_->grad; }
  /// Allocates a zero gradient on first use.
  std::span<double> grad_mut() const;
  void zero_grad() const;
  void drop_grad() const { impl_->grad.clear(); }

  /// Deep copy of shape and values; the copy has no gradient and does not
  /// require one.
  Tensor clone() const;
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  struct Impl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;
};

/// Ordered record of differentiable operations. Records are appended in
/// creation order, so the list is already topologically sorted. A tape built
/// with recording=false evaluates forward only (stop-gradient context).
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  explicit Tape(bool recording = true) : recording_(recording) {}

  bool recording() const { return recording_; }
  std::size_t size() const { return records_.size(); }
  void clear() { records_.clear(); }

  /// Marks `output` as requiring grad and appends `backward` when recording is
  /// on and any input requires grad. The closure reads output.grad() and
  /// accumulates into the inputs' grads. Returns whether a record was added.
  bool record(std::initializer_list<Tensor> inputs, Tensor& output, BackwardFn backward);
  bool record(const std::vector<Tensor>& inputs, Tensor& output, BackwardFn backward);

  /// Seeds d(loss)/d(loss) = 1 and replays records in reverse. Gradients
  /// accumulate into existing grads; call zero_grad() between steps.
  void backward(const Tensor& loss);

 private:
  struct Record {
    Tensor output;
    BackwardFn backward;
  };
  bool recording_;
  std::vector<Record> records_;
};

// Linear algebra and shape plumbing. All 2-D ops expect rank-2 operands.
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor transpose(Tape& tape, const Tensor& a);
Tensor reshape(Tape& tape, const Tensor& a, Shape shape);
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
/// x[m,n] + bias[n] broadcast across rows.
Tensor add_row(Tape& tape, const Tensor& x, const Tensor& bias);
Tensor scale(Tape& tape, const Tensor& a, double factor);
Tensor sum(Tape& tape, const Tensor& a);
Tensor mean(Tape& tape, const Tensor& a);
Tensor concat_rows(Tape& tape, const std::vector<Tensor>& parts);
Tensor concat_cols(Tape& tape, const std::vector<Tensor>& parts);
Tensor slice_rows(Tape& tape, const Tensor& a, std::size_t start, std::size_t count);
Tensor slice_cols(Tape& tape, const Tensor& a, std::size_t start, std::size_t count);

// Nonlinearities. softmax/log_softmax act on the last axis of any rank.
Tensor softmax(Tape& tape, const Tensor& x, double temperature = 1.0);
Tensor log_softmax(Tape& tape, const Tensor& x, double temperature = 1.0);

inline constexpr double kLayerNormEps = 1e-5;
Tensor layernorm(Tape& tape, const Tensor& x, const Tensor& gamma, const Tensor& beta,
                 double eps = kLayerNormEps);

/// x / sqrt(sum(x^2) + eps) along the last axis.
Tensor l2_normalize(Tape& tape, const Tensor& x, double eps = 1e-12);

/// gelu(x) = 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))
Tensor gelu(Tape& tape, const Tensor& x);

/// -sum_i target_i * logprobs_i. target must sum to 1 within 1e-9.
Tensor cross_entropy(Tape& tape, const Tensor& logprobs, const Tensor& target);

/// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h. `x` is perturbed
/// in place and restored exactly, so f may close over tensors sharing x's
/// storage (e.g. model parameters).
Tensor finite_diff_grad(const std::function<double()>& f, Tensor& x, double h = 1e-5);

// Flat binary format: "FTNS", u64 rank, u64 extents, f64 values; all
// little-endian.
void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in);

}  // namespace fas
