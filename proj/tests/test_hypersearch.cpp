#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>
#include <stdexcept>

#include "oracles.hpp"
#include "ttlora/error.hpp"
#include "ttlora/hypersearch.hpp"
#include "ttlora/report.hpp"

using namespace ttlora;

namespace {

// Loss decays towards a per-trial floor; lower floor wins at every budget.
class SyntheticRunner final : public TrialRunner {
 public:
  SyntheticRunner(double floor, std::uint64_t seed, std::vector<std::size_t>* log = nullptr, std::size_t id = 0)
      : floor_(floor), rng_(seed), log_(log), id_(id) {}
  TrialProgress advance(std::size_t budget) override {
    std::uniform_real_distribution<double> jitter(0.0, 1e-3);
    while (epochs_ < budget) {
      ++epochs_;
      const double loss = floor_ + 1.0 / static_cast<double>(epochs_) + jitter(rng_);
      best_ = std::min(best_, loss);
    }
    if (log_) log_->push_back(id_);
    return {best_, -best_, epochs_};
  }

 private:
  double floor_;
  std::mt19937_64 rng_;
  std::vector<std::size_t>* log_;
  std::size_t id_;
  std::size_t epochs_ = 0;
  double best_ = std::numeric_limits<double>::infinity();
};

std::vector<TrialConfig> grid(std::size_t n_trials) {
  SearchSpace s;
  s.m = 16;
  s.n = 16;
  s.shapes = {{4, 4, 4, 4}};
  s.ranks = {2};
  s.alphas = {1.0};
  for (std::size_t i = 0; i < n_trials; ++i) s.learning_rates.push_back(1e-3 * static_cast<double>(i + 1));
  return enumerate_trials(s).trials;
}

HalvingOptions options(std::vector<std::size_t> schedule, std::size_t workers = 1) {
  HalvingOptions o;
  o.budget_schedule = std::move(schedule);
  o.workers = workers;
  o.base_seed = 17;
  return o;
}

// floor chosen by trial id; `winner` gets the lowest
TrialFactory planted(std::size_t winner, std::uint64_t mix = 5) {
  return [=](const TrialConfig& c, std::uint64_t seed) {
    const double floor = c.trial_id == winner ? 0.0 : 0.1 + 0.05 * static_cast<double>((c.trial_id * mix) % 11);
    return std::make_unique<SyntheticRunner>(floor, seed);
  };
}

}  // namespace

TEST_CASE("enumeration counts and nesting order") {
  SearchSpace one;
  one.m = 8;
  one.n = 8;
  one.shapes = {{2, 4, 4, 2}};
  one.ranks = {3};
  one.alphas = {2.0};
  one.learning_rates = {1e-3};
  const auto single = enumerate_trials(one);
  REQUIRE(single.trials.size() == 1);
  CHECK(single.trials[0].trial_id == 0);
  CHECK(single.rejected.empty());

  // the large grid, on the flattened target so every shape is admissible
  SearchSpace big;
  big.m = 1;
  big.n = 768 * 2304;
  big.shapes = {{64, 36, 12, 64}, {12, 8, 8, 3, 8, 8, 12}, {48, 16, 16, 144}, {16, 3, 16, 16, 144},
                {12, 8, 8, 24, 96}, {8, 6, 16, 32, 72}};
  big.ranks = {2, 4, 5, 8, 10};
  big.alphas = {1, 2, 4, 8, 10, 12, 16, 32};
  big.learning_rates = {1e-4, 5e-4, 1e-3, 5e-3};
  for (const auto& s : big.shapes) {
    std::size_t prod = 1;
    for (auto k : s) prod *= k;
    CHECK(prod == 768 * 2304);
  }
  const auto e = enumerate_trials(big);
  CHECK(e.trials.size() == 960);
  CHECK(e.rejected.empty());
  // lr varies fastest, shape slowest
  CHECK(e.trials[1].learning_rate == 5e-4);
  CHECK(e.trials[4].alpha == 2);
  CHECK(e.trials[32].rank == 4);
  CHECK(e.trials[160].map.shape() == TTShape(big.shapes[1]));
  for (std::size_t i = 0; i < e.trials.size(); ++i) CHECK(e.trials[i].trial_id == i);
}

TEST_CASE("enumeration excludes invalid shapes and rejects empty axes") {
  SearchSpace s;
  s.m = 8;
  s.n = 8;
  s.shapes = {{2, 4, 4, 2}, {3, 3}, {8, 8}, {4, 4, 4}};
  s.ranks = {1, 2};
  s.alphas = {1.0};
  s.learning_rates = {1e-3};
  const auto e = enumerate_trials(s);
  CHECK(e.trials.size() == 4);
  CHECK(e.rejected.size() == 2);
  for (const auto& t : e.trials) CHECK(t.map.m() * t.map.n() == 64);

  auto empty = s;
  empty.ranks.clear();
  CHECK_THROWS_AS(enumerate_trials(empty), ContractViolation);
  auto none_valid = s;
  none_valid.shapes = {{3, 3}};
  CHECK_THROWS_AS(enumerate_trials(none_valid), ContractViolation);
  auto bad_lr = s;
  bad_lr.learning_rates = {0.0};
  CHECK_THROWS_AS(enumerate_trials(bad_lr), ContractViolation);
}

TEST_CASE("enumeration clamps ranks above the exactness bound") {
  SearchSpace s;
  s.m = 2;
  s.n = 4;
  s.shapes = {{2, 4}};
  s.ranks = {10};
  s.alphas = {1.0};
  s.learning_rates = {1e-3};
  const auto e = enumerate_trials(s);
  REQUIRE(e.trials.size() == 1);
  CHECK(e.trials[0].rank_clamped);
  CHECK(e.trials[0].ranks.ranks() == std::vector<std::size_t>{1, 2, 1});
}

TEST_CASE("seeded subsampling keeps enumeration order and ids") {
  SearchSpace s;
  s.m = 16;
  s.n = 16;
  s.shapes = {{4, 4, 4, 4}, {2, 8, 8, 2}};
  s.ranks = {1, 2, 3, 4};
  s.alphas = {1, 2, 4};
  s.learning_rates = {1e-3, 1e-2};
  s.sample_size = 10;
  s.sample_seed = 3;
  const auto a = enumerate_trials(s), b = enumerate_trials(s);
  REQUIRE(a.trials.size() == 10);
  std::set<std::size_t> ids;
  for (std::size_t i = 0; i < a.trials.size(); ++i) {
    CHECK(a.trials[i].trial_id == b.trials[i].trial_id);
    if (i) CHECK(a.trials[i - 1].trial_id < a.trials[i].trial_id);
    ids.insert(a.trials[i].trial_id);
  }
  CHECK(*ids.rbegin() < 48);
  s.sample_size = 100;  // larger than the grid: everything
  CHECK(enumerate_trials(s).trials.size() == 48);
}

TEST_CASE("successive halving round sizes and budgets") {
  const auto trials = grid(8);
  const auto r = successive_halving(trials, options({1, 2, 4}), planted(5));
  REQUIRE(r.rounds.size() == 3);
  CHECK(r.rounds[0].size() == 8);
  CHECK(r.rounds[1].size() == 4);
  CHECK(r.rounds[2].size() == 2);
  // survivors are a subset of the previous round
  for (std::size_t k = 1; k < r.rounds.size(); ++k)
    for (auto id : r.rounds[k]) CHECK(std::find(r.rounds[k - 1].begin(), r.rounds[k - 1].end(), id) != r.rounds[k - 1].end());
  CHECK(r.count(TrialStatus::completed) == 2);
  CHECK(r.count(TrialStatus::pruned) == 6);
  CHECK(r.count(TrialStatus::failed) == 0);
  for (const auto& t : r.trials) {
    CHECK(t.seed == 17 + t.config.trial_id);
    CHECK(t.epochs_run == t.last_budget);
    CHECK(t.trainable_params == param_count(t.config.map.shape(), t.config.ranks));
    CHECK(t.compression_ratio == doctest::Approx(256.0 / static_cast<double>(t.trainable_params)));
  }
}

TEST_CASE("planted winner is selected") {
  for (std::size_t winner : {0, 3, 6, 11}) {
    const auto trials = grid(12);
    const auto r = successive_halving(trials, options({1, 3, 9}), planted(winner));
    REQUIRE(r.best.has_value());
    CHECK(r.trials[*r.best].config.trial_id == winner);
    CHECK(r.trials[*r.best].status == TrialStatus::completed);
  }
}

TEST_CASE("single trial and single round") {
  const auto r = successive_halving(grid(1), options({1, 2, 4}), planted(0));
  CHECK(r.rounds.size() == 3);
  CHECK(r.trials[0].status == TrialStatus::completed);
  CHECK(r.trials[0].epochs_run == 4);

  const auto flat = successive_halving(grid(5), options({3}), planted(2));
  CHECK(flat.rounds.size() == 1);
  CHECK(flat.count(TrialStatus::completed) == 5);
}

TEST_CASE("halving option validation") {
  const auto trials = grid(4);
  CHECK_THROWS_AS(successive_halving(trials, options({}), planted(0)), ContractViolation);
  CHECK_THROWS_AS(successive_halving(trials, options({0, 2}), planted(0)), ContractViolation);
  CHECK_THROWS_AS(successive_halving(trials, options({2, 2}), planted(0)), ContractViolation);
  auto o = options({1, 2});
  o.keep_fraction = 1.0;
  CHECK_THROWS_AS(successive_halving(trials, o, planted(0)), ContractViolation);
}

TEST_CASE("failing trials are pruned with infinite loss") {
  const auto trials = grid(6);
  TrialFactory factory = [](const TrialConfig& c, std::uint64_t seed) -> std::unique_ptr<TrialRunner> {
    if (c.trial_id % 2 == 0) throw NumericalFailure("diverged");
    return std::make_unique<SyntheticRunner>(0.1 * static_cast<double>(c.trial_id), seed);
  };
  const auto r = successive_halving(trials, options({1, 2}), factory);
  CHECK(r.count(TrialStatus::failed) == 3);
  for (const auto& t : r.trials) {
    if (t.config.trial_id % 2 == 0) {
      CHECK(t.status == TrialStatus::failed);
      CHECK(std::isinf(t.best_val_loss));
      CHECK_FALSE(t.note.empty());
    }
  }
  REQUIRE(r.best.has_value());
  CHECK(r.trials[*r.best].config.trial_id == 1);
  for (auto i : r.pareto) CHECK(r.trials[i].status != TrialStatus::failed);

  TrialFactory broken = [](const TrialConfig&, std::uint64_t) -> std::unique_ptr<TrialRunner> {
    throw std::runtime_error("no");
  };
  const auto all = successive_halving(trials, options({1, 2}), broken);
  CHECK(all.all_failed());
  CHECK_FALSE(all.best.has_value());
  CHECK(all.pareto.empty());
}

TEST_CASE("pareto frontier agrees with the pairwise dominance oracle") {
  std::mt19937_64 rng(12);
  for (int round = 0; round < 50; ++round) {
    const std::size_t n = 1 + rng() % 50;
    std::vector<TrialResult> results(n);
    std::vector<oracle::Point> points;
    for (std::size_t i = 0; i < n; ++i) {
      results[i].trainable_params = 1 + rng() % 12;  // plenty of ties
      results[i].val_metric = static_cast<double>(rng() % 8) / 8.0;
      results[i].status = rng() % 7 == 0 ? TrialStatus::failed : TrialStatus::completed;
      if (results[i].status != TrialStatus::failed)
        points.push_back({results[i].trainable_params, results[i].val_metric});
    }
    auto got = pareto_frontier(results);
    std::vector<oracle::Point> got_points;
    for (auto i : got) {
      CHECK(results[i].status != TrialStatus::failed);
      got_points.push_back({results[i].trainable_params, results[i].val_metric});
    }
    std::vector<oracle::Point> expect;
    for (auto i : oracle::pareto_pairwise(points)) expect.push_back(points[i]);
    auto key = [](const oracle::Point& a, const oracle::Point& b) {
      return std::tie(a.params, a.metric) < std::tie(b.params, b.metric);
    };
    std::sort(got_points.begin(), got_points.end(), key);
    std::sort(expect.begin(), expect.end(), key);
    CHECK(got_points.size() == expect.size());
    bool same = got_points.size() == expect.size();
    for (std::size_t i = 0; same && i < expect.size(); ++i)
      same = got_points[i].params == expect[i].params && got_points[i].metric == expect[i].metric;
    CHECK(same);
    CHECK(std::is_sorted(got.begin(), got.end()));
  }
}

TEST_CASE("pareto edge cases") {
  std::vector<TrialResult> one(1);
  one[0].trainable_params = 10;
  one[0].status = TrialStatus::completed;
  CHECK(pareto_frontier(one) == std::vector<std::size_t>{0});

  std::vector<TrialResult> pair(2);
  pair[0] = one[0];
  pair[0].val_metric = 0.9;
  pair[1].trainable_params = 20;
  pair[1].val_metric = 0.8;
  pair[1].status = TrialStatus::pruned;
  CHECK(pareto_frontier(pair) == std::vector<std::size_t>{0});
  pair[1].val_metric = 0.95;
  CHECK(pareto_frontier(pair) == std::vector<std::size_t>{0, 1});
}

TEST_CASE("sweep CSVs are byte-identical across worker counts") {
  const auto trials = grid(9);
  std::string base_results, base_pareto, base_trade;
  for (std::size_t workers : {1, 2, 4}) {
    const auto r = successive_halving(trials, options({1, 2, 4}, workers), planted(4, 7));
    if (workers == 1) {
      base_results = sweep_results_csv(r);
      base_pareto = pareto_csv(r);
      base_trade = tradeoff_csv(r);
      continue;
    }
    CHECK(sweep_results_csv(r) == base_results);
    CHECK(pareto_csv(r) == base_pareto);
    CHECK(tradeoff_csv(r) == base_trade);
  }
}

TEST_CASE("runners are advanced only with growing budgets") {
  std::vector<std::size_t> log;
  const auto trials = grid(4);
  TrialFactory f = [&](const TrialConfig& c, std::uint64_t seed) {
    return std::make_unique<SyntheticRunner>(0.1 * static_cast<double>(c.trial_id), seed, &log, c.trial_id);
  };
  const auto r = successive_halving(trials, options({1, 2, 4}), f);
  CHECK(log.size() == 4 + 2 + 1);
  CHECK(r.trials[0].status == TrialStatus::completed);
}
