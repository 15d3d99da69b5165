#include "ttlora/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "ttlora/error.hpp"

namespace ttlora {

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::sgd ? "sgd" : "adam"; }

OptimizerKind optimizer_from_string(const std::string& name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "adam") return OptimizerKind::adam;
  throw ContractViolation("unknown optimizer '" + name + "' (expected sgd or adam)");
}

void TrainConfig::validate() const {
  require(learning_rate > 0.0 && std::isfinite(learning_rate), "learning_rate must be positive");
  require(patience >= 1, "patience must be >= 1");
  require(max_epochs >= 1, "max_epochs must be >= 1");
  require(batch_size >= 1, "batch_size must be >= 1");
  if (optimizer == OptimizerKind::adam) {
    require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "Adam betas must lie in [0, 1)");
    require(epsilon > 0.0, "Adam epsilon must be positive");
  }
}

Optimizer::Optimizer(const TrainConfig& config, std::span<const std::span<double>> params) : config_(config) {
  if (config_.optimizer == OptimizerKind::adam) {
    for (const auto& p : params) {
      first_.emplace_back(p.size(), 0.0);
      second_.emplace_back(p.size(), 0.0);
    }
  }
}

void Optimizer::step(std::span<const std::span<double>> params, std::span<const Matrix> grads) {
  require(params.size() == grads.size(), "optimizer: one gradient per parameter required");
  ++steps_;
  const double lr = config_.learning_rate;
  if (config_.optimizer == OptimizerKind::sgd) {
    for (std::size_t p = 0; p < params.size(); ++p) {
      require(static_cast<std::size_t>(grads[p].size()) == params[p].size(), "optimizer: gradient extents");
      const double* g = grads[p].data();
      for (std::size_t i = 0; i < params[p].size(); ++i) params[p][i] -= lr * g[i];
    }
    return;
  }
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (std::size_t p = 0; p < params.size(); ++p) {
    require(static_cast<std::size_t>(grads[p].size()) == params[p].size(), "optimizer: gradient extents");
    require(first_[p].size() == params[p].size(), "optimizer: parameter set changed between steps");
    const double* g = grads[p].data();
    auto& m = first_[p];
    auto& v = second_[p];
    for (std::size_t i = 0; i < params[p].size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      params[p][i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.epsilon);
    }
  }
}

namespace {

std::vector<std::span<double>> checked_parameters(Problem& problem) {
  require(problem.train_size() > 0, "training needs a nonempty training split");
  return problem.parameters();
}

}  // namespace

Trainer::Trainer(Problem& problem, TrainConfig config)
    : problem_(problem),
      config_((config.validate(), config)),
      optimizer_(config_, checked_parameters(problem)),
      rng_(config_.seed),
      order_(problem.train_size()) {
  std::iota(order_.begin(), order_.end(), std::size_t{0});
}

double Trainer::training_loss() {
  double total = 0.0;
  for (std::size_t start = 0; start < order_.size(); start += config_.batch_size) {
    const std::size_t count = std::min(config_.batch_size, order_.size() - start);
    std::vector<std::size_t> batch(count);
    std::iota(batch.begin(), batch.end(), start);
    Tape tape;
    std::vector<Var> leaves;
    Var loss = problem_.record_loss(tape, batch, leaves);
    total += tape.value(loss)(0, 0) * static_cast<double>(count);
  }
  return total / static_cast<double>(order_.size());
}

void Trainer::run_epoch() {
  const auto start_time = std::chrono::steady_clock::now();
  auto params = problem_.parameters();
  std::shuffle(order_.begin(), order_.end(), rng_);
  ++epoch_;

  double total = 0.0;
  for (std::size_t start = 0; start < order_.size(); start += config_.batch_size) {
    const std::size_t count = std::min(config_.batch_size, order_.size() - start);
    std::span<const std::size_t> batch(order_.data() + start, count);
    Tape tape;
    std::vector<Var> leaves;
    Var loss = problem_.record_loss(tape, batch, leaves);
    const double value = tape.value(loss)(0, 0);
    if (!std::isfinite(value))
      throw NumericalFailure("non-finite training loss at epoch " + std::to_string(epoch_) + ", batch offset " +
                             std::to_string(start));
    require(leaves.size() == params.size(), "problem returned the wrong number of parameter leaves");
    tape.backward(loss);
    std::vector<Matrix> grads;
    grads.reserve(leaves.size());
    for (auto v : leaves) grads.push_back(tape.grad(v));
    optimizer_.step(params, grads);
    total += value * static_cast<double>(count);
  }

  const Evaluation val = problem_.validate();
  if (!std::isfinite(val.loss))
    throw NumericalFailure("non-finite validation loss at epoch " + std::to_string(epoch_));
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time).count();
  result_.history.push_back({epoch_, total / static_cast<double>(order_.size()), val.loss, val.metric, elapsed});
  result_.stopped_epoch = epoch_;

  if (val.loss < result_.best_val_loss) {
    result_.best_val_loss = val.loss;
    result_.best_val_metric = val.metric;
    result_.best_epoch = epoch_;
    result_.best_parameters.clear();
    for (const auto& p : params) result_.best_parameters.emplace_back(p.begin(), p.end());
    since_best_ = 0;
  } else if (++since_best_ >= config_.patience) {
    result_.early_stopped = true;
    finished_ = true;
  }
  if (epoch_ >= config_.max_epochs) finished_ = true;
}

void Trainer::run_until(std::size_t epoch_budget) {
  const std::size_t budget = std::min(epoch_budget, config_.max_epochs);
  while (!finished_ && epoch_ < budget) run_epoch();
}

void Trainer::restore_best() {
  if (result_.best_parameters.empty()) return;
  auto params = problem_.parameters();
  for (std::size_t p = 0; p < params.size(); ++p)
    std::copy(result_.best_parameters[p].begin(), result_.best_parameters[p].end(), params[p].begin());
}

TrainedResult train(Problem& problem, const TrainConfig& config) {
  Trainer trainer(problem, config);
  trainer.run_until(config.max_epochs);
  trainer.restore_best();
  return trainer.result();
}

std::string history_csv(const std::vector<EpochRecord>& history, bool include_timing) {
  std::string out = "epoch,train_loss,val_loss,val_metric,wall_time_s\n";
  char line[256];
  for (const auto& h : history) {
    std::snprintf(line, sizeof(line), "%zu,%.10g,%.10g,%.10g,%.6f\n", h.epoch, h.train_loss, h.val_loss,
                  h.val_metric, include_timing ? h.wall_time_s : 0.0);
    out += line;
  }
  return out;
}

}  // namespace ttlora
