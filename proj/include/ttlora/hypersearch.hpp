#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ttlora/tt_core.hpp"

namespace ttlora {

/// Discrete grid over TT shapes, uniform ranks, alpha and learning rate for
/// adapters on `n_wrapped` matrices of extent m x n.
struct SearchSpace {
  std::size_t m = 0;
  std::size_t n = 0;
  std::size_t n_wrapped = 1;
  std::vector<std::vector<std::size_t>> shapes;
  std::vector<std::size_t> ranks;
  std::vector<double> alphas;
  std::vector<double> learning_rates;
  /// When nonzero and smaller than the grid, a seeded subsample of this many
  /// configurations is kept (enumeration order preserved).
  std::size_t sample_size = 0;
  std::uint64_t sample_seed = 0;
};

struct TrialConfig {
  std::size_t trial_id = 0;
  TensorizationMap map;
  std::size_t rank = 0;   // requested uniform rank
  TTRanks ranks;          // after clamping to the exactness bound
  bool rank_clamped = false;
  double alpha = 1.0;
  double learning_rate = 1e-3;
};

struct Enumeration {
  std::vector<TrialConfig> trials;
  /// One human-readable reason per excluded shape.
  std::vector<std::string> rejected;
};

/// Cartesian product shapes x ranks x alphas x learning rates, in that
/// nesting order. Shapes that cannot tensorize m x n are dropped and
/// reported. Throws ContractViolation when nothing remains.
Enumeration enumerate_trials(const SearchSpace& space);

enum class TrialStatus { completed, pruned, failed };
std::string to_string(TrialStatus status);

struct TrialProgress {
  double best_val_loss = std::numeric_limits<double>::infinity();
  double val_metric = 0.0;
  std::size_t epochs_run = 0;
};

/// One resumable trial. advance() continues from wherever the previous call
/// stopped and returns the best values seen so far.
class TrialRunner {
 public:
  virtual ~TrialRunner() = default;
  virtual TrialProgress advance(std::size_t epoch_budget) = 0;
};

using TrialFactory =
    std::function<std::unique_ptr<TrialRunner>(const TrialConfig& config, std::uint64_t seed)>;

struct TrialResult {
  TrialConfig config;
  std::size_t trainable_params = 0;
  double compression_ratio = 0.0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  double val_metric = 0.0;
  std::size_t epochs_run = 0;
  std::uint64_t seed = 0;
  TrialStatus status = TrialStatus::pruned;
  /// Largest budget this trial was scheduled at.
  std::size_t last_budget = 0;
  std::string note;
};

struct SweepReport {
  std::vector<TrialResult> trials;  // enumeration order
  std::optional<std::size_t> best;  // index into trials
  std::vector<std::size_t> pareto;  // indices into trials
  /// trial_ids scheduled in each round.
  std::vector<std::vector<std::size_t>> rounds;

  std::size_t count(TrialStatus status) const;
  bool all_failed() const { return !trials.empty() && count(TrialStatus::failed) == trials.size(); }
};

struct HalvingOptions {
  std::vector<std::size_t> budget_schedule;
  double keep_fraction = 0.5;
  std::size_t workers = 1;
  std::uint64_t base_seed = 0;
  /// Adapted matrices per trial and their extents, for parameter accounting.
  std::size_t n_wrapped = 1;
};

/// Single-bracket successive halving. Every trial runs at the first budget;
/// after each non-final round the best max(1, floor(keep_fraction * alive))
/// by validation loss continue (ties by trial id) and the rest are pruned.
/// Trials whose runner throws are marked failed with +inf loss. Trial seeds
/// are base_seed + trial_id; results never depend on the worker count.
SweepReport successive_halving(const std::vector<TrialConfig>& trials, const HalvingOptions& options,
                               const TrialFactory& factory);

/// Maximal set under (fewer params, higher metric) dominance among
/// non-failed entries; ties are kept. Indices in input order.
std::vector<std::size_t> pareto_frontier(const std::vector<TrialResult>& results);

}  // namespace ttlora
