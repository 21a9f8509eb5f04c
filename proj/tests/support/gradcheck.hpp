#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "fas/rng.hpp"
#include "fas/tensor.hpp"

namespace fas::testing {

using LossFn = std::function<Tensor(Tape&)>;

/// ||a - b|| / max(||a|| + ||b||, floor)
double relative_error(std::span<const double> a, std::span<const double> b, double floor = 1e-8);

/// Compares reverse-mode gradients of a scalar loss with central differences
/// over every coordinate of every input; returns the worst per-tensor
/// relative error.
double gradcheck(const LossFn& loss, const std::vector<Tensor>& inputs, double h = 1e-5);

/// Same comparison projected on random unit directions, one check per input
/// and direction. Cheap enough for whole networks.
double directional_gradcheck(const LossFn& loss, const std::vector<Tensor>& inputs, Rng& rng,
                             std::size_t directions = 1, double h = 1e-5);

Tensor random_tensor(const Shape& shape, Rng& rng, double scale = 1.0);

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace fas::testing
