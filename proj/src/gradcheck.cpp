#include "ttlora/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <limits>
#include <numeric>
#include <random>

#include "ttlora/error.hpp"

namespace ttlora {

namespace {

double loss_with_core_value(AdaptedLinear& scratch, std::size_t core, std::size_t index, double value,
                            const LossFn& loss_fn, const Matrix& x) {
  const double saved = scratch.cores[core].data[index];
  scratch.cores[core].data[index] = value;
  const double loss = evaluate_loss(scratch, loss_fn, x);
  scratch.cores[core].data[index] = saved;
  return loss;
}

}  // namespace

double evaluate_loss(const AdaptedLinear& layer, const LossFn& loss_fn, const Matrix& x) {
  Tape tape;
  std::vector<Var> cores;
  for (const auto& c : layer.cores.cores()) cores.push_back(tape.constant(core_matrix(c)));
  Var out = adapted_forward(tape, layer, cores, tape.constant(x));
  Var loss = loss_fn(tape, out);
  return tape.value(loss)(0, 0);
}

GradBuffer analytic_gradient(const AdaptedLinear& layer, const LossFn& loss_fn, const Matrix& x) {
  Tape tape;
  auto cores = register_cores(tape, layer.cores);
  Var out = adapted_forward(tape, layer, cores, tape.constant(x));
  Var loss = loss_fn(tape, out);
  return backward(tape, loss, cores);
}

GradCheckReport grad_check_against(const AdaptedLinear& layer, const LossFn& loss_fn, const Matrix& x,
                                   const GradBuffer& analytic, double tol, const GradCheckOptions& options) {
  require(options.step > 0.0, "grad_check: step must be positive");
  require(analytic.cores.size() == layer.cores.order(), "grad_check: gradient buffer has the wrong core count");
  for (std::size_t c = 0; c < layer.cores.order(); ++c)
    require(analytic.cores[c].size() == layer.cores[c].size(), "grad_check: gradient extents differ from cores");

  GradCheckReport report;
  if (!std::isfinite(analytic.loss)) {
    report.diagnostic = "non-finite loss at the base point";
    return report;
  }

  std::vector<std::pair<std::size_t, std::size_t>> positions;
  for (std::size_t c = 0; c < layer.cores.order(); ++c)
    for (std::size_t i = 0; i < layer.cores[c].size(); ++i) positions.emplace_back(c, i);
  if (options.max_elements > 0 && positions.size() > options.max_elements) {
    std::vector<std::pair<std::size_t, std::size_t>> sample;
    std::mt19937_64 rng(options.seed);
    std::sample(positions.begin(), positions.end(), std::back_inserter(sample), options.max_elements, rng);
    positions = std::move(sample);
  }

  AdaptedLinear scratch = layer;
  const double h = options.step;
  for (const auto& [c, i] : positions) {
    const double a = analytic.cores[c].data[i];
    const double v = layer.cores[c].data[i];
    const double plus = loss_with_core_value(scratch, c, i, v + h, loss_fn, x);
    const double minus = loss_with_core_value(scratch, c, i, v - h, loss_fn, x);
    const double fd = (plus - minus) / (2.0 * h);
    ++report.checked;
    if (!std::isfinite(a) || !std::isfinite(fd)) {
      report.max_rel_err = std::numeric_limits<double>::infinity();
      report.worst_core = c;
      report.worst_index = i;
      report.diagnostic = "non-finite value at core " + std::to_string(c) + " element " + std::to_string(i);
      return report;
    }
    const double err = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), options.floor});
    if (err > report.max_rel_err) {
      report.max_rel_err = err;
      report.worst_core = c;
      report.worst_index = i;
    }
  }
  report.pass = report.max_rel_err < tol;
  if (!report.pass)
    report.diagnostic = "max relative error " + std::to_string(report.max_rel_err) + " at core " +
                        std::to_string(report.worst_core) + " element " + std::to_string(report.worst_index);
  return report;
}

GradCheckReport grad_check(const AdaptedLinear& layer, const LossFn& loss_fn, const Matrix& x, double tol,
                           const GradCheckOptions& options) {
  return grad_check_against(layer, loss_fn, x, analytic_gradient(layer, loss_fn, x), tol, options);
}

LossFn quadratic_loss(Matrix target) {
  return [target = std::move(target)](Tape& tape, Var out) { return tape.mse(out, target); };
}

}  // namespace ttlora
