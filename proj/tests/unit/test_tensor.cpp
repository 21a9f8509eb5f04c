#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "fas/error.hpp"
#include "fas/tensor.hpp"
#include "gradcheck.hpp"

using namespace fas;
using fas::testing::gradcheck;
using fas::testing::random_tensor;

namespace {

// sum(w * y): turns any op output into a scalar with a non-trivial upstream
// gradient.
Tensor weighted_sum(Tape& tape, const Tensor& y, const Tensor& w) { return sum(tape, mul(tape, y, w)); }

}  // namespace

TEST_CASE("matmul values and shape errors") {
  Tape tape(false);
  const Tensor eye = Tensor::from_rows({{1, 0}, {0, 1}});
  const Tensor m = Tensor::from_rows({{3, 4}, {5, 6}});
  const Tensor p = matmul(tape, eye, m);
  CHECK(std::vector<double>(p.data().begin(), p.data().end()) == std::vector<double>{3, 4, 5, 6});

  const Tensor z = matmul(tape, Tensor::from_rows({{1, 2}}), Tensor::from_rows({{0}, {0}}));
  CHECK(z.shape() == Shape{1, 1});
  CHECK(z[0] == 0.0);

  try {
    matmul(tape, Tensor(Shape{2, 3}), Tensor(Shape{2, 3}));
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2,3]") != std::string::npos);
  }
}

TEST_CASE("matmul gradient") {
  Rng rng(1);
  Tensor a = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({4, 2}, rng);
  Tensor w = random_tensor({3, 2}, rng);
  CHECK(gradcheck([&](Tape& t) { return weighted_sum(t, matmul(t, a, b), w); }, {a, b}) < 1e-6);
}

TEST_CASE("softmax basics") {
  Tape tape(false);
  const Tensor half = softmax(tape, Tensor(Shape{2}, {0.0, 0.0}));
  CHECK(half[0] == doctest::Approx(0.5).epsilon(1e-15));

  const Tensor big = softmax(tape, Tensor(Shape{2}, {1000.0, 0.0}));
  CHECK(std::isfinite(big[0]));
  CHECK(big[0] == doctest::Approx(1.0));
  CHECK(big[1] < 1e-300);

  const Tensor s = softmax(tape, Tensor(Shape{3}, {1.0, 2.0, 3.0}), 0.5);
  const double z = std::exp(2.0) + std::exp(4.0) + std::exp(6.0);
  CHECK(std::abs(s[0] - std::exp(2.0) / z) < 1e-15);
  CHECK(std::abs(s[1] - std::exp(4.0) / z) < 1e-15);
  CHECK(std::abs(s[2] - std::exp(6.0) / z) < 1e-15);

  CHECK_THROWS_AS(softmax(tape, Tensor(Shape{2}), 0.0), DomainError);
  CHECK_THROWS_AS(softmax(tape, Tensor(Shape{2}), -1.0), DomainError);
}

TEST_CASE("softmax rows sum to one and are shift invariant") {
  Rng rng(2);
  Tape tape(false);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor x = random_tensor({4, 7}, rng, 5.0);
    const double tau = rng.uniform(0.05, 3.0);
    const double c = rng.uniform(-100.0, 100.0);
    Tensor shifted = x.clone();
    for (double& v : shifted.data()) v += c;
    const Tensor a = softmax(tape, x, tau);
    const Tensor b = softmax(tape, shifted, tau);
    for (std::size_t r = 0; r < 4; ++r) {
      double total = 0.0;
      for (std::size_t i = 0; i < 7; ++i) {
        CHECK(a.at(r, i) > 0.0);
        total += a.at(r, i);
      }
      CHECK(std::abs(total - 1.0) < 1e-12);
    }
    for (std::size_t i = 0; i < a.numel(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-12);
  }
}

TEST_CASE("softmax and log_softmax gradients") {
  Rng rng(3);
  for (double tau : {1.0, 0.1, 0.04}) {
    Tensor x = random_tensor({3, 5}, rng, 0.2);
    Tensor w = random_tensor({3, 5}, rng);
    CHECK(gradcheck([&](Tape& t) { return weighted_sum(t, softmax(t, x, tau), w); }, {x}) < 1e-6);
    CHECK(gradcheck([&](Tape& t) { return weighted_sum(t, log_softmax(t, x, tau), w); }, {x}) < 1e-6);
  }
}

TEST_CASE("log_softmax agrees with log of softmax") {
  Rng rng(4);
  Tape tape(false);
  const Tensor x = random_tensor({6}, rng, 3.0);
  const Tensor s = softmax(tape, x, 0.3);
  const Tensor l = log_softmax(tape, x, 0.3);
  for (std::size_t i = 0; i < 6; ++i) CHECK(std::abs(std::log(s[i]) - l[i]) < 1e-12);
}

TEST_CASE("layernorm values and gradient") {
  Tape tape(false);
  const Tensor ones(Shape{4}, 1.0);
  const Tensor zeros(Shape{4}, 0.0);
  const Tensor constant = layernorm(tape, Tensor(Shape{1, 4}, 3.0), ones, zeros);
  for (double v : constant.data()) CHECK(v == 0.0);

  const Tensor pm = layernorm(tape, Tensor(Shape{2}, {1.0, -1.0}), Tensor(Shape{2}, 1.0), Tensor(Shape{2}, 0.0), 1e-12);
  CHECK(pm[0] == doctest::Approx(1.0));
  CHECK(pm[1] == doctest::Approx(-1.0));

  Rng rng(5);
  Tensor x = random_tensor({2, 8}, rng);
  Tensor g = random_tensor({8}, rng);
  Tensor b = random_tensor({8}, rng);
  Tensor w = random_tensor({2, 8}, rng);
  CHECK(gradcheck([&](Tape& t) { return weighted_sum(t, layernorm(t, x, g, b), w); }, {x, g, b}) < 1e-5);
  CHECK_THROWS_AS(layernorm(tape, x, Tensor(Shape{7}), b), ShapeError);
}

TEST_CASE("gelu values and gradient") {
  Tape tape(false);
  const Tensor y = gelu(tape, Tensor(Shape{3}, {0.0, 20.0, -20.0}));
  CHECK(y[0] == 0.0);
  CHECK(y[1] == doctest::Approx(20.0));
  CHECK(std::abs(y[2]) < 1e-12);
  // 0.5 x (1 + tanh(sqrt(2/pi)(x + 0.044715 x^3))) at x = 1
  const double expected = 0.5 * (1.0 + std::tanh(std::sqrt(2.0 / std::numbers::pi) * 1.044715));
  CHECK(std::abs(gelu(tape, Tensor::scalar(1.0)).item() - expected) < 1e-15);

  Tensor x(Shape{5}, {-2, -1, 0, 1, 2});
  Tensor w(Shape{5}, {0.3, -1.2, 0.7, 2.0, -0.5});
  CHECK(gradcheck([&](Tape& t) { return weighted_sum(t, gelu(t, x), w); }, {x}) < 1e-5);
}

TEST_CASE("l2_normalize gives unit rows and correct gradient") {
  Rng rng(6);
  Tape tape(false);
  Tensor x = random_tensor({3, 5}, rng);
  const Tensor y = l2_normalize(tape, x);
  for (std::size_t r = 0; r < 3; ++r) {
    double n = 0.0;
    for (std::size_t i = 0; i < 5; ++i) n += y.at(r, i) * y.at(r, i);
    CHECK(std::abs(n - 1.0) < 1e-10);
  }
  Tensor w = random_tensor({3, 5}, rng);
  CHECK(gradcheck([&](Tape& t) { return weighted_sum(t, l2_normalize(t, x), w); }, {x}) < 1e-6);
}

TEST_CASE("cross_entropy values, errors and gradient") {
  Tape tape(false);
  const double l4 = std::log(0.25);
  const Tensor uniform(Shape{4}, {l4, l4, l4, l4});
  CHECK(cross_entropy(tape, uniform, Tensor(Shape{4}, {0, 1, 0, 0})).item() == doctest::Approx(std::log(4.0)));

  const Tensor p(Shape{3}, {0.2, 0.5, 0.3});
  Tensor logp = p.clone();
  for (double& v : logp.data()) v = std::log(v);
  const double h = -(0.2 * std::log(0.2) + 0.5 * std::log(0.5) + 0.3 * std::log(0.3));
  CHECK(std::abs(cross_entropy(tape, logp, p).item() - h) < 1e-15);
  CHECK_THROWS_AS(cross_entropy(tape, logp, Tensor(Shape{3}, {0.2, 0.5, 0.4})), DomainError);

  Rng rng(7);
  Tensor x = random_tensor({6}, rng);
  const Tensor target = softmax(tape, random_tensor({6}, rng));
  CHECK(gradcheck([&](Tape& t) { return cross_entropy(t, log_softmax(t, x), target); }, {x}) < 1e-5);
}

TEST_CASE("plumbing ops") {
  Rng rng(8);
  Tape tape(false);
  const Tensor x = random_tensor({3, 4}, rng);
  const Tensor s = scale(tape, x, 1.0);
  const Tensor a = add(tape, x, Tensor(Shape{3, 4}));
  const Tensor tt = transpose(tape, transpose(tape, x));
  for (std::size_t i = 0; i < x.numel(); ++i) {
    CHECK(s[i] == x[i]);
    CHECK(a[i] == x[i]);
    CHECK(tt[i] == x[i]);
  }
  CHECK(tt.shape() == x.shape());
  CHECK_THROWS_AS(add(tape, x, Tensor(Shape{4, 3})), ShapeError);
  CHECK_THROWS_AS(reshape(tape, x, Shape{5, 2}), ShapeError);

  const Tensor c = concat_rows(tape, {slice_rows(tape, x, 0, 1), slice_rows(tape, x, 1, 2)});
  const Tensor d = concat_cols(tape, {slice_cols(tape, x, 0, 3), slice_cols(tape, x, 3, 1)});
  for (std::size_t i = 0; i < x.numel(); ++i) {
    CHECK(c[i] == x[i]);
    CHECK(d[i] == x[i]);
  }
}

TEST_CASE("plumbing op gradients") {
  Rng rng(9);
  Tensor a = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({3, 4}, rng);
  Tensor bias = random_tensor({4}, rng);
  Tensor w = random_tensor({4, 3}, rng);
  auto loss = [&](Tape& t) {
    Tensor y = add(t, mul(t, a, b), sub(t, scale(t, a, 0.7), b));
    y = add_row(t, y, bias);
    y = transpose(t, y);
    Tensor top = slice_rows(t, y, 0, 2);
    Tensor rest = slice_rows(t, y, 2, 2);
    y = concat_rows(t, {rest, top});
    y = concat_cols(t, {slice_cols(t, y, 1, 2), slice_cols(t, y, 0, 1)});
    return add(t, weighted_sum(t, y, w), mean(t, reshape(t, a, Shape{12})));
  };
  CHECK(gradcheck(loss, {a, b, bias}) < 1e-6);
}

TEST_CASE("backward contract") {
  Tensor x(Shape{3}, {1.0, -2.0, 0.5});
  x.set_requires_grad(true);
  {
    Tape tape;
    tape.backward(sum(tape, x));
    for (double g : x.grad()) CHECK(g == 1.0);
  }
  x.zero_grad();
  {
    Tape tape;
    tape.backward(scale(tape, sum(tape, mul(tape, x, x)), 0.5));
    for (std::size_t i = 0; i < 3; ++i) CHECK(x.grad()[i] == doctest::Approx(x[i]));
  }
  Tape tape;
  const Tensor y = scale(tape, x, 2.0);
  CHECK_THROWS_AS(tape.backward(y), ContractError);
}

TEST_CASE("gradient accumulates over shared inputs") {
  Tensor x(Shape{2}, {1.5, -0.5});
  x.set_requires_grad(true);
  Tape tape;
  tape.backward(add(tape, sum(tape, x), sum(tape, scale(tape, x, 3.0))));
  CHECK(x.grad()[0] == doctest::Approx(4.0));
  CHECK(x.grad()[1] == doctest::Approx(4.0));
}

TEST_CASE("finite_diff_grad oracle") {
  Tensor x(Shape{4}, {1.0, 2.0, -3.0, 0.25});
  Tape tape(false);
  const Tensor ones = finite_diff_grad([&] { return sum(tape, x).item(); }, x);
  for (double v : ones.data()) CHECK(v == doctest::Approx(1.0));
  Tensor s = Tensor::scalar(3.0);
  const Tensor six = finite_diff_grad([&] { return s.item() * s.item(); }, s, 1e-5);
  CHECK(std::abs(six[0] - 6.0) < 1e-7);
  CHECK(s.item() == 3.0);
}

TEST_CASE("tensor serialization round trip") {
  Rng rng(10);
  const Tensor x = random_tensor({2, 3, 4}, rng);
  std::stringstream buf;
  write_tensor(buf, x);
  const std::string bytes = buf.str();
  CHECK(bytes.substr(0, 4) == "FTNS");
  CHECK(bytes.size() == 4 + 8 + 3 * 8 + 24 * 8);
  const Tensor y = read_tensor(buf);
  CHECK(y.shape() == x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y[i] == x[i]);

  std::stringstream bad("XXXX");
  CHECK_THROWS(read_tensor(bad));
  std::stringstream truncated(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS(read_tensor(truncated));
}

TEST_CASE("handles share storage, clones do not") {
  Tensor a(Shape{2}, {1.0, 2.0});
  Tensor b = a;
  Tensor c = a.clone();
  b[0] = 9.0;
  CHECK(a[0] == 9.0);
  CHECK(c[0] == 1.0);
  CHECK(a.same_storage(b));
  CHECK_FALSE(a.same_storage(c));
}
