#pragma once

#include <cstdint>
#include <optional>

#include "ttlora/tt_core.hpp"

namespace ttlora {

/// Pre-trained dense layer y = W0 x + b. Never updated by training.
struct FrozenLinear {
  Matrix weight;               // m x n
  std::optional<Vector> bias;  // length m

  std::size_t rows() const { return static_cast<std::size_t>(weight.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(weight.cols()); }
  Vector forward(const Vector& x) const;
};

/// Frozen layer plus an alpha-scaled TT weight update:
///   W_adapted = W0 + alpha * reconstruct(cores)
/// alpha is a bare multiplier; it is not divided by the rank.
struct AdaptedLinear {
  FrozenLinear base;
  TTCores cores;
  TensorizationMap map;
  double alpha = 1.0;

  /// Throws ContractViolation unless map extents match W0 and the cores
  /// match map's modes.
  void validate() const;
};

/// Fresh adapter over `base` with cores drawn by tt_random_init.
AdaptedLinear make_adapted_linear(FrozenLinear base, const TensorizationMap& map, const TTRanks& ranks, double alpha,
                                  std::uint64_t seed, const InitSpec& init = {});

/// Delta W * x, contracted core by core. Peak working memory is bounded by
/// max rank times the largest intermediate mode product.
Vector tt_matvec(const TTCores& cores, const TensorizationMap& map, const Vector& x);

/// Row-batched tt_matvec: returns X * (Delta W)^T for a batch x n input.
Matrix tt_matmul_rows(const TTCores& cores, const TensorizationMap& map, const Matrix& x);

Vector adapted_forward(const AdaptedLinear& layer, const Vector& x);

/// Rowwise adapted_forward over a batch x n matrix.
Matrix batch_forward(const AdaptedLinear& layer, const Matrix& x);

/// Folds the update into a dense weight for inference.
FrozenLinear merge(const AdaptedLinear& layer);

}  // namespace ttlora
