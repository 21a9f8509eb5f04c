#include "fas/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

namespace fas {

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor() : Tensor(Shape{0}) {}

Tensor::Tensor(Shape shape, double fill) : impl_(std::make_shared<Impl>()) {
  impl_->data.assign(shape_numel(shape), fill);
  impl_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : impl_(std::make_shared<Impl>()) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("tensor shape " + shape_to_string(shape) + " does not hold " +
                     std::to_string(values.size()) + " values");
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{1}, std::vector<double>{value}); }

Tensor Tensor::from_rows(const std::vector<std::vector<double>>& rows) {
  const std::size_t m = rows.size();
  const std::size_t n = m ? rows.front().size() : 0;
  std::vector<double> values;
  values.reserve(m * n);
  for (const auto& row : rows) {
    if (row.size() != n) throw ShapeError("ragged rows in Tensor::from_rows");
    values.insert(values.end(), row.begin(), row.end());
  }
  return Tensor(Shape{m, n}, std::move(values));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " +
                     shape_to_string(shape()));
  }
  return impl_->shape[axis];
}

double& Tensor::at(std::size_t row, std::size_t col) { return impl_->data[row * impl_->shape[1] + col]; }

double Tensor::at(std::size_t row, std::size_t col) const {
  return impl_->data[row * impl_->shape[1] + col];
}

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_to_string(shape()));
  return impl_->data[0];
}

Tensor& Tensor::set_requires_grad(bool on) {
  impl_->requires_grad = on;
  return *this;
}

std::span<double> Tensor::grad_mut() const {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
  return impl_->grad;
}

void Tensor::zero_grad() const {
  if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::clone() const { return Tensor(impl_->shape, impl_->data); }

// ---------------------------------------------------------------------------
// Tape

bool Tape::record(std::initializer_list<Tensor> inputs, Tensor& output, BackwardFn backward) {
  if (!recording_) return false;
  bool any = std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
  if (!any) return false;
  output.set_requires_grad(true);
  records_.push_back(Record{output, std::move(backward)});
  return true;
}

bool Tape::record(const std::vector<Tensor>& inputs, Tensor& output, BackwardFn backward) {
  if (!recording_) return false;
  bool any = std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
  if (!any) return false;
  output.set_requires_grad(true);
  records_.push_back(Record{output, std::move(backward)});
  return true;
}

void Tape::backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " + shape_to_string(loss.shape()));
  }
  if (!loss.requires_grad()) throw ContractError("backward() on a loss that does not require grad");
  Tensor seed = loss;
  seed.grad_mut()[0] += 1.0;
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    if (it->output.has_grad()) it->backward();
  }
}

// ---------------------------------------------------------------------------
// Helpers

namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_to_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                     shape_to_string(b.shape()));
  }
}

// Number of rows when a tensor is viewed as [rows, last].
std::size_t outer_rows(const Tensor& t) { return t.rank() ? t.numel() / t.shape().back() : 1; }

}  // namespace

// ---------------------------------------------------------------------------
// Linear algebra

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner dimensions differ, " + shape_to_string(a.shape()) + " x " +
                     shape_to_string(b.shape()));
  }
  Tensor c(Shape{m, n});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* pc = c.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = pc + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      if (av == 0.0) continue;
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  tape.record({a, b}, c, [a, b, c, m, k, n]() mutable {
    const double* g = c.grad().data();
    if (a.requires_grad()) {
      double* ga = a.grad_mut().data();
      const double* pb = b.data().data();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * pb[p * n + j];
          ga[i * k + p] += acc;
        }
      }
    }
    if (b.requires_grad()) {
      double* gb = b.grad_mut().data();
      const double* pa = a.data().data();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double av = pa[i * k + p];
          if (av == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += av * g[i * n + j];
        }
      }
    }
  });
  return c;
}

Tensor transpose(Tape& tape, const Tensor& a) {
  require_rank(a, 2, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  Tensor t(Shape{n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) t[j * m + i] = a[i * n + j];
  tape.record({a}, t, [a, t, m, n]() mutable {
    auto g = t.grad();
    auto ga = a.grad_mut();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
  });
  return t;
}

Tensor reshape(Tape& tape, const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("reshape: cannot view " + shape_to_string(a.shape()) + " as " + shape_to_string(shape));
  }
  Tensor out(std::move(shape), std::vector<double>(a.data().begin(), a.data().end()));
  tape.record({a}, out, [a, out]() mutable {
    auto g = out.grad();
    auto ga = a.grad_mut();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
  return out;
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a[i] + b[i];
  tape.record({a, b}, out, [a, b, out]() mutable {
    auto g = out.grad();
    if (a.requires_grad()) {
      auto ga = a.grad_mut();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (b.requires_grad()) {
      auto gb = b.grad_mut();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
    }
  });
  return out;
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a[i] - b[i];
  tape.record({a, b}, out, [a, b, out]() mutable {
    auto g = out.grad();
    if (a.requires_grad()) {
      auto ga = a.grad_mut();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (b.requires_grad()) {
      auto gb = b.grad_mut();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
  return out;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a[i] * b[i];
  tape.record({a, b}, out, [a, b, out]() mutable {
    auto g = out.grad();
    if (a.requires_grad()) {
      auto ga = a.grad_mut();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b[i];
    }
    if (b.requires_grad()) {
      auto gb = b.grad_mut();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a[i];
    }
  });
  return out;
}

Tensor add_row(Tape& tape, const Tensor& x, const Tensor& bias) {
  require_rank(x, 2, "add_row");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (bias.numel() != n) {
    throw ShapeError("add_row: bias " + shape_to_string(bias.shape()) + " does not match rows of " +
                     shape_to_string(x.shape()));
  }
  Tensor out(x.shape());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x[i * n + j] + bias[j];
  tape.record({x, bias}, out, [x, bias, out, m, n]() mutable {
    auto g = out.grad();
    if (x.requires_grad()) {
      auto gx = x.grad_mut();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
    if (bias.requires_grad()) {
      auto gb = bias.grad_mut();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
    }
  });
  return out;
}

Tensor scale(Tape& tape, const Tensor& a, double factor) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a[i] * factor;
  tape.record({a}, out, [a, out, factor]() mutable {
    auto g = out.grad();
    auto ga = a.grad_mut();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
  });
  return out;
}

Tensor sum(Tape& tape, const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  Tensor out = Tensor::scalar(s);
  tape.record({a}, out, [a, out]() mutable {
    const double g = out.grad()[0];
    for (double& v : a.grad_mut()) v += g;
  });
  return out;
}

Tensor mean(Tape& tape, const Tensor& a) {
  if (a.numel() == 0) throw ShapeError("mean of an empty tensor");
  return scale(tape, sum(tape, a), 1.0 / static_cast<double>(a.numel()));
}

Tensor concat_rows(Tape& tape, const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t n = parts.front().dim(1);
  std::size_t rows = 0;
  for (const auto& p : parts) {
    require_rank(p, 2, "concat_rows");
    if (p.dim(1) != n) {
      throw ShapeError("concat_rows: column mismatch " + shape_to_string(parts.front().shape()) + " vs " +
                       shape_to_string(p.shape()));
    }
    rows += p.dim(0);
  }
  Tensor out(Shape{rows, n});
  std::size_t offset = 0;
  for (const auto& p : parts) {
    std::copy(p.data().begin(), p.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(offset));
    offset += p.numel();
  }
  tape.record(parts, out, [parts, out]() mutable {
    auto g = out.grad();
    std::size_t off = 0;
    for (auto p : parts) {
      if (p.requires_grad()) {
        auto gp = p.grad_mut();
        for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[off + i];
      }
      off += p.numel();
    }
  });
  return out;
}

Tensor concat_cols(Tape& tape, const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t m = parts.front().dim(0);
  std::size_t cols = 0;
  for (const auto& p : parts) {
    require_rank(p, 2, "concat_cols");
    if (p.dim(0) != m) {
      throw ShapeError("concat_cols: row mismatch " + shape_to_string(parts.front().shape()) + " vs " +
                       shape_to_string(p.shape()));
    }
    cols += p.dim(1);
  }
  Tensor out(Shape{m, cols});
  std::size_t c0 = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.dim(1);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < w; ++j) out[i * cols + c0 + j] = p[i * w + j];
    c0 += w;
  }
  tape.record(parts, out, [parts, out, m, cols]() mutable {
    auto g = out.grad();
    std::size_t c = 0;
    for (auto p : parts) {
      const std::size_t w = p.dim(1);
      if (p.requires_grad()) {
        auto gp = p.grad_mut();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < w; ++j) gp[i * w + j] += g[i * cols + c + j];
      }
      c += w;
    }
  });
  return out;
}

Tensor slice_rows(Tape& tape, const Tensor& a, std::size_t start, std::size_t count) {
  require_rank(a, 2, "slice_rows");
  if (start + count > a.dim(0) || count == 0) {
    throw ShapeError("slice_rows: rows [" + std::to_string(start) + ", " + std::to_string(start + count) +
                     ") out of range for " + shape_to_string(a.shape()));
  }
  const std::size_t n = a.dim(1);
  auto first = a.data().begin() + static_cast<std::ptrdiff_t>(start * n);
  Tensor out(Shape{count, n}, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(count * n)));
  tape.record({a}, out, [a, out, start, n]() mutable {
    auto g = out.grad();
    auto ga = a.grad_mut();
    for (std::size_t i = 0; i < g.size(); ++i) ga[start * n + i] += g[i];
  });
  return out;
}

Tensor slice_cols(Tape& tape, const Tensor& a, std::size_t start, std::size_t count) {
  require_rank(a, 2, "slice_cols");
  const std::size_t m = a.dim(0), n = a.dim(1);
  if (start + count > n || count == 0) {
    throw ShapeError("slice_cols: columns [" + std::to_string(start) + ", " + std::to_string(start + count) +
                     ") out of range for " + shape_to_string(a.shape()));
  }
  Tensor out(Shape{m, count});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < count; ++j) out[i * count + j] = a[i * n + start + j];
  tape.record({a}, out, [a, out, start, m, n, count]() mutable {
    auto g = out.grad();
    auto ga = a.grad_mut();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < count; ++j) ga[i * n + start + j] += g[i * count + j];
  });
  return out;
}

// ---------------------------------------------------------------------------
// Nonlinearities

namespace {

void check_temperature(double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw DomainError("softmax temperature must be positive, got " + std::to_string(temperature));
  }
}

}  // namespace

Tensor softmax(Tape& tape, const Tensor& x, double temperature) {
  check_temperature(temperature);
  const std::size_t n = x.rank() ? x.shape().back() : 1;
  const std::size_t rows = outer_rows(x);
  Tensor y(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data().data() + r * n;
    double* out = y.data().data() + r * n;
    const double mx = *std::max_element(in, in + n);
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      out[i] = std::exp((in[i] - mx) / temperature);
      z += out[i];
    }
    for (std::size_t i = 0; i < n; ++i) out[i] /= z;
  }
  tape.record({x}, y, [x, y, n, rows, temperature]() mutable {
    auto g = y.grad();
    auto gx = x.grad_mut();
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t i = 0; i < n; ++i) dot += g[r * n + i] * y[r * n + i];
      for (std::size_t i = 0; i < n; ++i) gx[r * n + i] += y[r * n + i] * (g[r * n + i] - dot) / temperature;
    }
  });
  return y;
}

Tensor log_softmax(Tape& tape, const Tensor& x, double temperature) {
  check_temperature(temperature);
  const std::size_t n = x.rank() ? x.shape().back() : 1;
  const std::size_t rows = outer_rows(x);
  Tensor y(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data().data() + r * n;
    double* out = y.data().data() + r * n;
    const double mx = *std::max_element(in, in + n);
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) z += std::exp((in[i] - mx) / temperature);
    const double log_z = std::log(z);
    for (std::size_t i = 0; i < n; ++i) out[i] = (in[i] - mx) / temperature - log_z;
  }
  tape.record({x}, y, [x, y, n, rows, temperature]() mutable {
    auto g = y.grad();
    auto gx = x.grad_mut();
    for (std::size_t r = 0; r < rows; ++r) {
      double gsum = 0.0;
      for (std::size_t i = 0; i < n; ++i) gsum += g[r * n + i];
      for (std::size_t i = 0; i < n; ++i) {
        gx[r * n + i] += (g[r * n + i] - std::exp(y[r * n + i]) * gsum) / temperature;
      }
    }
  });
  return y;
}

Tensor layernorm(Tape& tape, const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (!(eps > 0.0)) throw DomainError("layernorm eps must be positive");
  const std::size_t d = x.rank() ? x.shape().back() : 0;
  if (d == 0) throw ShapeError("layernorm on an empty last axis");
  if (gamma.numel() != d || beta.numel() != d) {
    throw ShapeError("layernorm: gamma/beta " + shape_to_string(gamma.shape()) + "/" +
                     shape_to_string(beta.shape()) + " do not match last axis of " + shape_to_string(x.shape()));
  }
  const std::size_t rows = outer_rows(x);
  Tensor y(x.shape());
  std::vector<double> xhat(x.numel());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data().data() + r * d;
    double mu = 0.0;
    for (std::size_t i = 0; i < d; ++i) mu += in[i];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t i = 0; i < d; ++i) var += (in[i] - mu) * (in[i] - mu);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t i = 0; i < d; ++i) {
      xhat[r * d + i] = (in[i] - mu) * inv_std[r];
      y[r * d + i] = xhat[r * d + i] * gamma[i] + beta[i];
    }
  }
  tape.record({x, gamma, beta}, y,
              [x, gamma, beta, y, xhat = std::move(xhat), inv_std = std::move(inv_std), rows, d]() mutable {
                auto g = y.grad();
                if (gamma.requires_grad()) {
                  auto gg = gamma.grad_mut();
                  for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t i = 0; i < d; ++i) gg[i] += g[r * d + i] * xhat[r * d + i];
                }
                if (beta.requires_grad()) {
                  auto gb = beta.grad_mut();
                  for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t i = 0; i < d; ++i) gb[i] += g[r * d + i];
                }
                if (x.requires_grad()) {
                  auto gx = x.grad_mut();
                  const double inv_d = 1.0 / static_cast<double>(d);
                  for (std::size_t r = 0; r < rows; ++r) {
                    double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
                    for (std::size_t i = 0; i < d; ++i) {
                      const double dxh = g[r * d + i] * gamma[i];
                      mean_dxhat += dxh;
                      mean_dxhat_xhat += dxh * xhat[r * d + i];
                    }
                    mean_dxhat *= inv_d;
                    mean_dxhat_xhat *= inv_d;
                    for (std::size_t i = 0; i < d; ++i) {
                      const double dxh = g[r * d + i] * gamma[i];
                      gx[r * d + i] += inv_std[r] * (dxh - mean_dxhat - xhat[r * d + i] * mean_dxhat_xhat);
                    }
                  }
                }
              });
  return y;
}

Tensor l2_normalize(Tape& tape, const Tensor& x, double eps) {
  if (!(eps > 0.0)) throw DomainError("l2_normalize eps must be positive");
  const std::size_t d = x.rank() ? x.shape().back() : 0;
  if (d == 0) throw ShapeError("l2_normalize on an empty last axis");
  const std::size_t rows = outer_rows(x);
  Tensor y(x.shape());
  std::vector<double> norm(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double sq = 0.0;
    for (std::size_t i = 0; i < d; ++i) sq += x[r * d + i] * x[r * d + i];
    norm[r] = std::sqrt(sq + eps);
    for (std::size_t i = 0; i < d; ++i) y[r * d + i] = x[r * d + i] / norm[r];
  }
  tape.record({x}, y, [x, y, norm = std::move(norm), rows, d]() mutable {
    auto g = y.grad();
    auto gx = x.grad_mut();
    for (std::size_t r = 0; r < rows; ++r) {
      double gy = 0.0;
      for (std::size_t i = 0; i < d; ++i) gy += g[r * d + i] * y[r * d + i];
      for (std::size_t i = 0; i < d; ++i) gx[r * d + i] += (g[r * d + i] - y[r * d + i] * gy) / norm[r];
    }
  });
  return y;
}

namespace {

constexpr double kGeluCubic = 0.044715;
const double kGeluScale = std::sqrt(2.0 / std::numbers::pi);

}  // namespace

Tensor gelu(Tape& tape, const Tensor& x) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double v = x[i];
    y[i] = 0.5 * v * (1.0 + std::tanh(kGeluScale * (v + kGeluCubic * v * v * v)));
  }
  tape.record({x}, y, [x, y]() mutable {
    auto g = y.grad();
    auto gx = x.grad_mut();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = x[i];
      const double t = std::tanh(kGeluScale * (v + kGeluCubic * v * v * v));
      const double du = kGeluScale * (1.0 + 3.0 * kGeluCubic * v * v);
      gx[i] += g[i] * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du);
    }
  });
  return y;
}

Tensor cross_entropy(Tape& tape, const Tensor& logprobs, const Tensor& target) {
  require_same_shape(logprobs, target, "cross_entropy");
  double total = 0.0;
  for (double t : target.data()) total += t;
  if (std::abs(total - 1.0) > 1e-9) {
    throw DomainError("cross_entropy: target sums to " + std::to_string(total) + ", expected 1");
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < target.numel(); ++i) loss -= target[i] * logprobs[i];
  Tensor out = Tensor::scalar(loss);
  tape.record({logprobs, target}, out, [logprobs, target, out]() mutable {
    const double g = out.grad()[0];
    if (logprobs.requires_grad()) {
      auto gl = logprobs.grad_mut();
      for (std::size_t i = 0; i < gl.size(); ++i) gl[i] -= g * target[i];
    }
    if (target.requires_grad()) {
      auto gt = target.grad_mut();
      for (std::size_t i = 0; i < gt.size(); ++i) gt[i] -= g * logprobs[i];
    }
  });
  return out;
}

Tensor finite_diff_grad(const std::function<double()>& f, Tensor& x, double h) {
  if (!(h > 0.0)) throw DomainError("finite difference step must be positive");
  Tensor grad(x.shape());
  auto values = x.data();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double original = values[i];
    values[i] = original + h;
    const double up = f();
    values[i] = original - h;
    const double down = f();
    values[i] = original;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

}  // namespace fas
