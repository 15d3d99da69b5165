#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "ttlora/tape.hpp"

namespace ttlora {

/// Builds a scalar loss node from the layer output recorded on the tape.
using LossFn = std::function<Var(Tape& tape, Var output)>;

struct GradCheckOptions {
  double step = 1e-5;
  /// Denominator floor for the relative error |a - f| / max(|a|, |f|, floor).
  double floor = 1e-7;
  /// Above this many core elements a seeded random subsample is checked.
  std::size_t max_elements = 10000;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  bool pass = false;
  std::size_t checked = 0;
  std::size_t worst_core = 0;
  std::size_t worst_index = 0;
  std::string diagnostic;
};

/// Loss of `layer` on a batch x n input, evaluated through the tape forward.
double evaluate_loss(const AdaptedLinear& layer, const LossFn& loss_fn, const Matrix& x);

/// Reverse-mode gradient of the loss with respect to every core.
GradBuffer analytic_gradient(const AdaptedLinear& layer, const LossFn& loss_fn, const Matrix& x);

/// Compares `analytic` against central finite differences of the loss.
GradCheckReport grad_check_against(const AdaptedLinear& layer, const LossFn& loss_fn, const Matrix& x,
                                   const GradBuffer& analytic, double tol, const GradCheckOptions& options = {});

GradCheckReport grad_check(const AdaptedLinear& layer, const LossFn& loss_fn, const Matrix& x, double tol,
                           const GradCheckOptions& options = {});

/// mean((layer(x) - target)^2), the quadratic loss used by the presets.
LossFn quadratic_loss(Matrix target);

}  // namespace ttlora
