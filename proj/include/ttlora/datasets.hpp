#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ttlora/tt_core.hpp"

namespace ttlora {

/// Regression surrogate for fine-tuning: Y = X (W0 + dW*)^T + noise, where
/// dW* is a planted low-TT-rank update.
struct TeacherStudentData {
  TensorizationMap map;
  Matrix base_weight;    // W0, m x n
  TTCores true_cores;    // cores of dW*
  Matrix true_update;    // dW*, m x n
  Matrix inputs;         // N x n
  Matrix targets;        // N x m
  double noise = 0.0;
  std::vector<std::size_t> train_index;
  std::vector<std::size_t> val_index;
};

/// W0 ~ N(0, 1/n); the planted cores are Gaussian and rescaled so that
/// ||dW*||_F = update_scale * sqrt(m), i.e. dW* x has unit RMS per output
/// coordinate for x ~ N(0, I) at the default scale. 80/20 split.
TeacherStudentData make_teacher_student(const TensorizationMap& map, const TTRanks& true_ranks, std::size_t n_samples,
                                        double noise, std::uint64_t seed, double update_scale = 1.0);

enum class ClassificationRule { token_presence, majority_token, position_pattern };

std::string to_string(ClassificationRule rule);
ClassificationRule rule_from_string(const std::string& name);

struct ClassificationData {
  std::size_t n_classes = 0;
  std::size_t seq_len = 0;
  std::size_t vocab = 0;
  ClassificationRule rule = ClassificationRule::token_presence;
  std::vector<std::vector<int>> tokens;
  std::vector<int> labels;
  std::vector<std::size_t> train_index;
  std::vector<std::size_t> val_index;
};

/// Balanced synthetic token-sequence classification:
///  - token_presence: class 0 has no marker; class c >= 1 contains marker
///    token c - 1 at one random position. Markers are tokens
///    [0, n_classes - 1); fillers come from the rest of the vocabulary.
///  - majority_token: tokens drawn from [0, n_classes); the label is the
///    token with a strict plurality.
///  - position_pattern: the label is (token at position 0) mod n_classes.
/// Degenerate configurations are rejected with ContractViolation.
ClassificationData make_synthetic_classification(std::size_t n_classes, std::size_t seq_len, std::size_t vocab,
                                                 ClassificationRule rule, std::size_t n_samples,
                                                 std::uint64_t seed);

/// Labels with a fixed marginal drawn independently of the tokens.
ClassificationData make_label_noise_classification(std::vector<double> label_marginal, std::size_t seq_len,
                                                   std::size_t vocab, std::size_t n_samples, std::uint64_t seed);

/// JSON lines {"label": int, "tokens": [int]}.
void write_classification_jsonl(const std::filesystem::path& path, const ClassificationData& data);
/// Reads JSON lines and applies a seeded 80/20 split.
ClassificationData read_classification_jsonl(const std::filesystem::path& path, std::size_t n_classes,
                                             std::size_t vocab, std::uint64_t split_seed);

/// 80/20 positions, shuffled with `seed`.
void split_train_val(std::size_t n, std::uint64_t seed, std::vector<std::size_t>& train,
                     std::vector<std::size_t>& val);

}  // namespace ttlora
