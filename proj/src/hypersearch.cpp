#include "ttlora/hypersearch.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iterator>
#include <numeric>
#include <random>
#include <thread>

#include <spdlog/spdlog.h>

#include "ttlora/error.hpp"

namespace ttlora {

namespace {

std::string join_dims(const std::vector<std::size_t>& dims) {
  std::string out;
  for (std::size_t i = 0; i < dims.size(); ++i) out += (i ? "," : "") + std::to_string(dims[i]);
  return out;
}

}  // namespace

std::string to_string(TrialStatus status) {
  switch (status) {
    case TrialStatus::completed: return "completed";
    case TrialStatus::pruned: return "pruned";
    case TrialStatus::failed: return "failed";
  }
  return "unknown";
}

Enumeration enumerate_trials(const SearchSpace& space) {
  require(space.m >= 1 && space.n >= 1, "search target extents must be positive");
  require(space.n_wrapped >= 1, "at least one wrapped matrix is required");
  require(!space.shapes.empty() && !space.ranks.empty() && !space.alphas.empty() && !space.learning_rates.empty(),
          "search space has an empty axis; the trial product would be empty");
  for (double lr : space.learning_rates) require(std::isfinite(lr) && lr > 0.0, "learning rates must be positive");
  for (double a : space.alphas) require(std::isfinite(a), "alphas must be finite");
  for (auto r : space.ranks) require(r >= 1, "ranks must be >= 1");

  Enumeration out;
  std::vector<TensorizationMap> maps;
  for (const auto& dims : space.shapes) {
    try {
      maps.push_back(TensorizationMap::from_dims(space.m, space.n, dims));
    } catch (const ContractViolation& e) {
      std::string reason = "shape [" + join_dims(dims) + "] excluded: " + e.what();
      spdlog::warn("{}", reason);
      out.rejected.push_back(std::move(reason));
    }
  }
  require(!maps.empty(), "no shape in the search space tensorizes " + std::to_string(space.m) + "x" +
                             std::to_string(space.n));

  std::size_t id = 0;
  for (const auto& map : maps) {
    for (auto rank : space.ranks) {
      bool clamped = false;
      TTRanks ranks = uniform_ranks(map.shape(), rank, &clamped);
      for (double alpha : space.alphas) {
        for (double lr : space.learning_rates) {
          out.trials.push_back(TrialConfig{id++, map, rank, ranks, clamped, alpha, lr});
        }
      }
    }
  }

  if (space.sample_size > 0 && space.sample_size < out.trials.size()) {
    std::vector<TrialConfig> kept;
    kept.reserve(space.sample_size);
    std::mt19937_64 rng(space.sample_seed);
    std::sample(out.trials.begin(), out.trials.end(), std::back_inserter(kept), space.sample_size, rng);
    out.trials = std::move(kept);
  }
  return out;
}

std::size_t SweepReport::count(TrialStatus status) const {
  return static_cast<std::size_t>(
      std::count_if(trials.begin(), trials.end(), [&](const TrialResult& t) { return t.status == status; }));
}

SweepReport successive_halving(const std::vector<TrialConfig>& trials, const HalvingOptions& options,
                               const TrialFactory& factory) {
  require(!trials.empty(), "successive halving needs at least one trial");
  require(!options.budget_schedule.empty(), "budget schedule is empty");
  require(options.budget_schedule.front() >= 1, "budgets must be >= 1 epoch");
  for (std::size_t i = 1; i < options.budget_schedule.size(); ++i)
    require(options.budget_schedule[i] > options.budget_schedule[i - 1], "budget schedule must be strictly increasing");
  require(options.keep_fraction > 0.0 && options.keep_fraction < 1.0, "keep_fraction must lie in (0, 1)");
  require(options.n_wrapped >= 1, "at least one wrapped matrix is required");
  require(static_cast<bool>(factory), "trial factory is empty");

  SweepReport report;
  report.trials.resize(trials.size());
  for (std::size_t i = 0; i < trials.size(); ++i) {
    auto& r = report.trials[i];
    r.config = trials[i];
    r.seed = options.base_seed + trials[i].trial_id;
    const std::size_t dense = trials[i].map.m() * trials[i].map.n() * options.n_wrapped;
    r.trainable_params = options.n_wrapped * param_count(trials[i].map.shape(), trials[i].ranks);
    r.compression_ratio = static_cast<double>(dense) / static_cast<double>(r.trainable_params);
  }

  std::vector<std::unique_ptr<TrialRunner>> runners(trials.size());
  std::vector<std::size_t> alive(trials.size());
  std::iota(alive.begin(), alive.end(), std::size_t{0});

  // Each slot is touched by exactly one worker per round, so no locking.
  auto run_one = [&](std::size_t idx, std::size_t budget) {
    auto& r = report.trials[idx];
    r.last_budget = budget;
    try {
      if (!runners[idx]) runners[idx] = factory(r.config, r.seed);
      const TrialProgress p = runners[idx]->advance(budget);
      r.epochs_run = p.epochs_run;
      r.best_val_loss = p.best_val_loss;
      r.val_metric = p.val_metric;
      if (!std::isfinite(p.best_val_loss)) throw NumericalFailure("non-finite validation loss");
    } catch (const std::exception& e) {
      r.status = TrialStatus::failed;
      r.best_val_loss = std::numeric_limits<double>::infinity();
      r.note = e.what();
      runners[idx].reset();
    }
  };

  const std::size_t workers = std::max<std::size_t>(1, options.workers);
  for (std::size_t round = 0; round < options.budget_schedule.size() && !alive.empty(); ++round) {
    const std::size_t budget = options.budget_schedule[round];
    std::vector<std::size_t> ids;
    for (auto idx : alive) ids.push_back(trials[idx].trial_id);
    report.rounds.push_back(std::move(ids));

    if (workers == 1 || alive.size() == 1) {
      for (auto idx : alive) run_one(idx, budget);
    } else {
      std::atomic<std::size_t> next{0};
      std::vector<std::thread> pool;
      for (std::size_t w = 0; w < std::min(workers, alive.size()); ++w) {
        pool.emplace_back([&]() {
          for (std::size_t k = next++; k < alive.size(); k = next++) run_one(alive[k], budget);
        });
      }
      for (auto& t : pool) t.join();
    }

    std::vector<std::size_t> survivors;
    for (auto idx : alive)
      if (report.trials[idx].status != TrialStatus::failed) survivors.push_back(idx);
    const bool last = round + 1 == options.budget_schedule.size();
    if (!last) {
      std::stable_sort(survivors.begin(), survivors.end(), [&](std::size_t a, std::size_t b) {
        const auto& ra = report.trials[a];
        const auto& rb = report.trials[b];
        if (ra.best_val_loss != rb.best_val_loss) return ra.best_val_loss < rb.best_val_loss;
        return ra.config.trial_id < rb.config.trial_id;
      });
      const auto keep = std::max<std::size_t>(
          1, static_cast<std::size_t>(std::floor(options.keep_fraction * static_cast<double>(alive.size()))));
      for (std::size_t k = keep; k < survivors.size(); ++k) {
        report.trials[survivors[k]].status = TrialStatus::pruned;
        runners[survivors[k]].reset();
      }
      if (survivors.size() > keep) survivors.resize(keep);
      std::sort(survivors.begin(), survivors.end());
    } else {
      for (auto idx : survivors) report.trials[idx].status = TrialStatus::completed;
    }
    alive = std::move(survivors);
  }

  for (std::size_t i = 0; i < report.trials.size(); ++i) {
    const auto& t = report.trials[i];
    if (t.status == TrialStatus::failed) continue;
    if (!report.best || t.best_val_loss < report.trials[*report.best].best_val_loss) report.best = i;
  }
  report.pareto = pareto_frontier(report.trials);
  if (report.all_failed()) spdlog::error("all {} trials failed", report.trials.size());
  return report;
}

std::vector<std::size_t> pareto_frontier(const std::vector<TrialResult>& results) {
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < results.size(); ++i)
    if (results[i].status != TrialStatus::failed) usable.push_back(i);

  // Sort by params ascending, metric descending; a point survives when its
  // metric is at least the best seen among strictly cheaper points and it
  // ties the best metric within its own params group.
  std::vector<std::size_t> order = usable;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (results[a].trainable_params != results[b].trainable_params)
      return results[a].trainable_params < results[b].trainable_params;
    return results[a].val_metric > results[b].val_metric;
  });
  std::vector<std::size_t> frontier;
  double best_cheaper = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    const auto params = results[order[i]].trainable_params;
    const double group_best = results[order[i]].val_metric;
    while (j < order.size() && results[order[j]].trainable_params == params) ++j;
    if (group_best > best_cheaper) {
      for (std::size_t k = i; k < j && results[order[k]].val_metric == group_best; ++k) frontier.push_back(order[k]);
      best_cheaper = group_best;
    }
    i = j;
  }
  std::sort(frontier.begin(), frontier.end());
  return frontier;
}

}  // namespace ttlora
