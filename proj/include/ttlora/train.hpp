#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ttlora/tape.hpp"

namespace ttlora {

enum class OptimizerKind { sgd, adam };

std::string to_string(OptimizerKind kind);
OptimizerKind optimizer_from_string(const std::string& name);

/// Constant-rate training protocol. Defaults: up to 20 epochs, early stop
/// after 5 epochs without validation-loss improvement, Adam(0.9, 0.999, 1e-8).
struct TrainConfig {
  double learning_rate = 5e-4;
  std::size_t max_epochs = 20;
  std::size_t patience = 5;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

struct Evaluation {
  double loss = 0.0;
  double metric = 0.0;
};

/// A model bound to its data. The trainer only sees flat parameter storage
/// and a loss it can differentiate; everything else stays frozen inside.
class Problem {
 public:
  virtual ~Problem() = default;

  virtual std::size_t train_size() const = 0;
  /// Trainable storage in a stable order. Spans must stay valid for the
  /// lifetime of the problem.
  virtual std::vector<std::span<double>> parameters() = 0;
  /// Records the mean loss over `batch` (training-set positions). `leaves`
  /// receives one parameter node per entry of parameters(), whose value is
  /// laid out exactly like the matching span.
  virtual Var record_loss(Tape& tape, std::span<const std::size_t> batch, std::vector<Var>& leaves) = 0;
  /// Loss and task metric on the held-out split (higher metric is better).
  virtual Evaluation validate() = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_metric = 0.0;
  double wall_time_s = 0.0;
};

struct TrainedResult {
  std::vector<std::vector<double>> best_parameters;
  std::vector<EpochRecord> history;
  std::size_t stopped_epoch = 0;
  std::size_t best_epoch = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  double best_val_metric = 0.0;
  bool early_stopped = false;
};

class Optimizer {
 public:
  Optimizer(const TrainConfig& config, std::span<const std::span<double>> params);
  void step(std::span<const std::span<double>> params, std::span<const Matrix> grads);

 private:
  TrainConfig config_;
  std::vector<std::vector<double>> first_;
  std::vector<std::vector<double>> second_;
  std::size_t steps_ = 0;
};

/// Resumable training loop with early stopping on validation loss. The best
/// snapshot is restored into the problem's parameters when a run finishes.
class Trainer {
 public:
  Trainer(Problem& problem, TrainConfig config);

  /// Trains until `epoch_budget` epochs have run in total (capped by
  /// max_epochs) or early stopping triggers. Throws NumericalFailure on a
  /// non-finite loss.
  void run_until(std::size_t epoch_budget);

  /// Mean training loss at the current parameters, no update.
  double training_loss();

  bool finished() const { return finished_; }
  std::size_t epochs_run() const { return epoch_; }
  const TrainedResult& result() const { return result_; }
  void restore_best();

 private:
  void run_epoch();

  Problem& problem_;
  TrainConfig config_;
  Optimizer optimizer_;
  std::mt19937_64 rng_;
  std::vector<std::size_t> order_;
  std::size_t epoch_ = 0;
  std::size_t since_best_ = 0;
  bool finished_ = false;
  TrainedResult result_;
};

TrainedResult train(Problem& problem, const TrainConfig& config);

/// CSV with header epoch,train_loss,val_loss,val_metric,wall_time_s.
/// With include_timing = false the timing column is written as 0.
std::string history_csv(const std::vector<EpochRecord>& history, bool include_timing = true);

}  // namespace ttlora
