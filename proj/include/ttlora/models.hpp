#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "ttlora/tape.hpp"
#include "ttlora/tt_linear.hpp"

namespace ttlora {

/// Dense low-rank baseline: W0 + alpha * B A with B (m x r) zero-initialised
/// and A (r x n) Gaussian. Trainable count r (m + n).
struct LoRALinear {
  FrozenLinear base;
  Matrix b;  // m x r
  Matrix a;  // r x n
  double alpha = 1.0;

  std::size_t rank() const { return static_cast<std::size_t>(a.rows()); }
  std::size_t trainable_count() const { return static_cast<std::size_t>(a.size() + b.size()); }
};

LoRALinear make_lora_linear(FrozenLinear base, std::size_t rank, double alpha, std::uint64_t seed);

struct ArchConfig {
  std::size_t vocab = 16;
  std::size_t seq_len = 12;
  std::size_t embed = 64;
  std::size_t hidden = 128;
  std::size_t classes = 2;
  /// Seed of the frozen "pre-trained" weights.
  std::uint64_t seed = 1234;
};

enum class PeftKind { none, ttlora, lora };

std::string to_string(PeftKind kind);
PeftKind peft_from_string(const std::string& name);

struct PeftConfig {
  PeftKind kind = PeftKind::none;
  /// TT modes for each wrapped e x e matrix; split into rows/columns by
  /// TensorizationMap::from_dims.
  std::vector<std::size_t> shape;
  /// Uniform internal TT rank, or the LoRA rank.
  std::size_t rank = 4;
  double alpha = 1.0;
  InitSpec init{};
  std::uint64_t seed = 0;
};

enum class ParamRole { adapter, head, frozen };
std::string to_string(ParamRole role);

struct ParameterInfo {
  std::string name;
  ParamRole role = ParamRole::frozen;
  std::size_t count = 0;
};

/// One-block, single-head attention encoder with mean pooling and a linear
/// classification head. W_q and W_v are the only matrices that can carry
/// adapters; everything except the head and adapters is frozen.
class ToyAttentionClassifier {
 public:
  using Projection = std::variant<FrozenLinear, AdaptedLinear, LoRALinear>;

  ToyAttentionClassifier(const ArchConfig& arch, const PeftConfig& peft);

  const ArchConfig& arch() const { return arch_; }
  const PeftConfig& peft() const { return peft_; }

  /// Names of matrices wrapped with an adapter, in registry order.
  std::vector<std::string> adapted_matrices() const;
  std::vector<ParameterInfo> parameter_registry() const;
  std::size_t trainable_count() const;
  std::size_t adapter_count() const;
  std::size_t head_count() const;
  std::size_t frozen_count() const;

  /// Trainable storage: adapter tensors (W_q then W_v), then head weight and
  /// head bias.
  std::vector<std::span<double>> trainable_parameters();

  /// Records the trainable tensors in trainable_parameters() order, as
  /// parameters or (for evaluation) as constants.
  std::vector<Var> register_parameters(Tape& tape, bool trainable) const;

  /// Logits (1 x classes) for one sequence.
  Var logits(Tape& tape, std::span<const int> tokens, std::span<const Var> params) const;

  const Projection& query() const { return wq_; }
  const Projection& value_proj() const { return wv_; }
  const FrozenLinear& key() const { return wk_; }
  const FrozenLinear& output() const { return wo_; }

 private:
  Var project(Tape& tape, const Projection& proj, Var x, std::span<const Var> params, std::size_t& cursor) const;

  ArchConfig arch_;
  PeftConfig peft_;
  Matrix token_embedding_;     // vocab x e
  Matrix position_embedding_;  // seq_len x e
  Projection wq_;
  FrozenLinear wk_;
  Projection wv_;
  FrozenLinear wo_;
  FrozenLinear ffn_in_;   // h x e
  FrozenLinear ffn_out_;  // e x h
  Matrix head_weight_;    // classes x e
  Matrix head_bias_;      // 1 x classes
};

ToyAttentionClassifier build_model(const ArchConfig& arch, const PeftConfig& peft);

}  // namespace ttlora
