#include "ttlora/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include <json.hpp>

#include "ttlora/error.hpp"

namespace ttlora {

void split_train_val(std::size_t n, std::uint64_t seed, std::vector<std::size_t>& train,
                     std::vector<std::size_t>& val) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed ^ 0x5bd1e995ULL);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t n_train = (n * 4) / 5;
  train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
}

TeacherStudentData make_teacher_student(const TensorizationMap& map, const TTRanks& true_ranks, std::size_t n_samples,
                                        double noise, std::uint64_t seed, double update_scale) {
  require(n_samples >= 5, "teacher-student task needs at least 5 samples");
  require(noise >= 0.0, "noise level must be nonnegative");
  require(update_scale > 0.0, "update scale must be positive");
  const auto m = static_cast<Eigen::Index>(map.m());
  const auto n = static_cast<Eigen::Index>(map.n());
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  TeacherStudentData data;
  data.map = map;
  data.noise = noise;
  data.base_weight = Matrix::NullaryExpr(m, n, [&]() { return normal(rng) / std::sqrt(static_cast<double>(n)); });

  data.true_cores = tt_random_init(map.shape(), true_ranks, rng(), {InitScheme::gaussian, 1.0});
  Matrix update = tt_reconstruct(data.true_cores, map);
  const double target_norm = update_scale * std::sqrt(static_cast<double>(m));
  const double norm = update.norm();
  require(norm > 0.0, "planted update vanished");
  for (auto& v : data.true_cores[data.true_cores.order() - 1].data) v *= target_norm / norm;
  data.true_update = tt_reconstruct(data.true_cores, map);

  const auto rows = static_cast<Eigen::Index>(n_samples);
  data.inputs = Matrix::NullaryExpr(rows, n, [&]() { return normal(rng); });
  data.targets = data.inputs * (data.base_weight + data.true_update).transpose();
  if (noise > 0.0) data.targets += Matrix::NullaryExpr(rows, m, [&]() { return noise * normal(rng); });
  split_train_val(n_samples, seed, data.train_index, data.val_index);
  return data;
}

std::string to_string(ClassificationRule rule) {
  switch (rule) {
    case ClassificationRule::token_presence: return "token-presence";
    case ClassificationRule::majority_token: return "majority-token";
    case ClassificationRule::position_pattern: return "position-pattern";
  }
  return "unknown";
}

ClassificationRule rule_from_string(const std::string& name) {
  if (name == "token-presence") return ClassificationRule::token_presence;
  if (name == "majority-token") return ClassificationRule::majority_token;
  if (name == "position-pattern") return ClassificationRule::position_pattern;
  throw ContractViolation("unknown classification rule '" + name +
                          "' (expected token-presence, majority-token or position-pattern)");
}

ClassificationData make_synthetic_classification(std::size_t n_classes, std::size_t seq_len, std::size_t vocab,
                                                 ClassificationRule rule, std::size_t n_samples,
                                                 std::uint64_t seed) {
  require(n_classes >= 2, "classification needs at least 2 classes");
  require(seq_len >= 2, "seq_len " + std::to_string(seq_len) + " is degenerate: need at least 2 tokens");
  require(vocab >= 3, "vocab " + std::to_string(vocab) + " is degenerate: need at least 3 tokens");
  require(n_samples >= 5, "need at least 5 samples for an 80/20 split");
  switch (rule) {
    case ClassificationRule::token_presence:
      require(vocab >= n_classes + 1, "token-presence needs n_classes - 1 markers plus at least 2 filler tokens");
      break;
    case ClassificationRule::majority_token:
      require(vocab >= n_classes, "majority-token needs vocab >= n_classes");
      break;
    case ClassificationRule::position_pattern:
      require(vocab >= n_classes, "position-pattern needs vocab >= n_classes");
      break;
  }

  ClassificationData data;
  data.n_classes = n_classes;
  data.seq_len = seq_len;
  data.vocab = vocab;
  data.rule = rule;
  std::mt19937_64 rng(seed);
  const int classes = static_cast<int>(n_classes);

  std::vector<int> labels(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) labels[i] = static_cast<int>(i % n_classes);
  std::shuffle(labels.begin(), labels.end(), rng);

  std::uniform_int_distribution<std::size_t> position(0, seq_len - 1);
  for (int label : labels) {
    std::vector<int> seq(seq_len);
    switch (rule) {
      case ClassificationRule::token_presence: {
        std::uniform_int_distribution<int> filler(classes - 1, static_cast<int>(vocab) - 1);
        for (auto& t : seq) t = filler(rng);
        if (label > 0) seq[position(rng)] = label - 1;
        break;
      }
      case ClassificationRule::majority_token: {
        std::uniform_int_distribution<int> any(0, classes - 1);
        std::bernoulli_distribution favour(0.5);
        for (int attempt = 0;; ++attempt) {
          require(attempt < 10000, "majority-token generator failed to reach a strict plurality");
          std::vector<std::size_t> counts(n_classes, 0);
          for (auto& t : seq) {
            t = favour(rng) ? label : any(rng);
            ++counts[static_cast<std::size_t>(t)];
          }
          const auto best = counts[static_cast<std::size_t>(label)];
          bool strict = true;
          for (std::size_t c = 0; c < n_classes; ++c)
            if (static_cast<int>(c) != label && counts[c] >= best) strict = false;
          if (strict) break;
        }
        break;
      }
      case ClassificationRule::position_pattern: {
        std::uniform_int_distribution<int> any(0, static_cast<int>(vocab) - 1);
        for (auto& t : seq) t = any(rng);
        const int slots = (static_cast<int>(vocab) - 1 - label) / classes + 1;
        std::uniform_int_distribution<int> slot(0, slots - 1);
        seq[0] = label + classes * slot(rng);
        break;
      }
    }
    data.tokens.push_back(std::move(seq));
  }
  data.labels = std::move(labels);
  split_train_val(n_samples, seed, data.train_index, data.val_index);
  return data;
}

ClassificationData make_label_noise_classification(std::vector<double> label_marginal, std::size_t seq_len,
                                                   std::size_t vocab, std::size_t n_samples, std::uint64_t seed) {
  require(label_marginal.size() >= 2, "label marginal needs at least 2 classes");
  require(seq_len >= 1 && vocab >= 2, "label-noise task needs a nonempty sequence and vocabulary");
  require(n_samples >= 5, "need at least 5 samples");
  ClassificationData data;
  data.n_classes = label_marginal.size();
  data.seq_len = seq_len;
  data.vocab = vocab;
  std::mt19937_64 rng(seed);
  std::discrete_distribution<int> label_dist(label_marginal.begin(), label_marginal.end());
  std::uniform_int_distribution<int> token(0, static_cast<int>(vocab) - 1);
  for (std::size_t i = 0; i < n_samples; ++i) {
    std::vector<int> seq(seq_len);
    for (auto& t : seq) t = token(rng);
    data.tokens.push_back(std::move(seq));
    data.labels.push_back(label_dist(rng));
  }
  split_train_val(n_samples, seed, data.train_index, data.val_index);
  return data;
}

void write_classification_jsonl(const std::filesystem::path& path, const ClassificationData& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  for (std::size_t i = 0; i < data.tokens.size(); ++i) {
    nlohmann::json j;
    j["tokens"] = data.tokens[i];
    j["label"] = data.labels[i];
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

ClassificationData read_classification_jsonl(const std::filesystem::path& path, std::size_t n_classes,
                                             std::size_t vocab, std::uint64_t split_seed) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  ClassificationData data;
  data.n_classes = n_classes;
  data.vocab = vocab;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      auto tokens = j.at("tokens").get<std::vector<int>>();
      const int label = j.at("label").get<int>();
      require(label >= 0 && static_cast<std::size_t>(label) < n_classes, "label out of range");
      for (int t : tokens) require(t >= 0 && static_cast<std::size_t>(t) < vocab, "token out of range");
      if (data.tokens.empty()) data.seq_len = tokens.size();
      require(tokens.size() == data.seq_len && !tokens.empty(), "all sequences must share one nonzero length");
      data.tokens.push_back(std::move(tokens));
      data.labels.push_back(label);
    } catch (const nlohmann::json::exception& e) {
      throw ContractViolation(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const ContractViolation& e) {
      throw ContractViolation(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  require(data.tokens.size() >= 5, "dataset '" + path.string() + "' needs at least 5 rows");
  split_train_val(data.tokens.size(), split_seed, data.train_index, data.val_index);
  return data;
}

}  // namespace ttlora
