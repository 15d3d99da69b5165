#pragma once

#include <cstddef>
#include <vector>

#include "ttlora/tt_core.hpp"

namespace ttlora::detail {

/// Applies the TT operator to each row of a row-major batch without forming
/// the dense matrix. Cores are consumed right to left: column cores first
/// (carry shaped (batch * remaining column volume) x (rank * mode)), then row
/// cores (per sample, rank x emitted row volume).
///
/// `trace`, when given, receives the input state of every contraction step
/// so that backward_rows can replay the sequence in reverse.
void forward_rows(const TTCores& cores, const TensorizationMap& map, const double* x, std::size_t batch,
                  double* y, std::vector<std::vector<double>>* trace);

/// Reverse pass of forward_rows. Accumulates into core_grads (one buffer per
/// core, congruent to core data) and, when dx is non-null, writes the input
/// gradient.
void backward_rows(const TTCores& cores, const TensorizationMap& map, std::size_t batch,
                   const std::vector<std::vector<double>>& trace, const double* dy, double* dx,
                   std::vector<std::vector<double>>& core_grads);

}  // namespace ttlora::detail
