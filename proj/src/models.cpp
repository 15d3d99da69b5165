#include "ttlora/models.hpp"

#include <cmath>
#include <random>

#include "ttlora/error.hpp"

namespace ttlora {

namespace {

Eigen::Index ix(std::size_t v) { return static_cast<Eigen::Index>(v); }

Matrix gaussian(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double sigma) {
  std::normal_distribution<double> normal(0.0, sigma);
  return Matrix::NullaryExpr(ix(rows), ix(cols), [&]() { return normal(rng); });
}

FrozenLinear frozen(std::mt19937_64& rng, std::size_t out, std::size_t in, bool bias) {
  FrozenLinear layer{gaussian(rng, out, in, 1.0 / std::sqrt(static_cast<double>(in))), std::nullopt};
  if (bias) layer.bias = Vector::Zero(ix(out));
  return layer;
}

std::span<double> span_of(Matrix& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }

}  // namespace

LoRALinear make_lora_linear(FrozenLinear base, std::size_t rank, double alpha, std::uint64_t seed) {
  require(rank >= 1, "LoRA rank must be >= 1");
  std::mt19937_64 rng(seed);
  const auto m = base.rows(), n = base.cols();
  LoRALinear lora{std::move(base), Matrix::Zero(ix(m), ix(rank)),
                  gaussian(rng, rank, n, 1.0 / std::sqrt(static_cast<double>(n))), alpha};
  return lora;
}

std::string to_string(PeftKind kind) {
  switch (kind) {
    case PeftKind::none: return "none";
    case PeftKind::ttlora: return "ttlora";
    case PeftKind::lora: return "lora";
  }
  return "unknown";
}

PeftKind peft_from_string(const std::string& name) {
  if (name == "none") return PeftKind::none;
  if (name == "ttlora") return PeftKind::ttlora;
  if (name == "lora") return PeftKind::lora;
  throw ContractViolation("unknown adapter kind '" + name + "' (expected none, ttlora or lora)");
}

std::string to_string(ParamRole role) {
  switch (role) {
    case ParamRole::adapter: return "adapter";
    case ParamRole::head: return "head";
    case ParamRole::frozen: return "frozen";
  }
  return "unknown";
}

ToyAttentionClassifier::ToyAttentionClassifier(const ArchConfig& arch, const PeftConfig& peft)
    : arch_(arch), peft_(peft) {
  require(arch.vocab >= 1 && arch.seq_len >= 1 && arch.embed >= 1 && arch.hidden >= 1 && arch.classes >= 2,
          "architecture extents must be positive with at least 2 classes");
  const std::size_t e = arch.embed;
  std::mt19937_64 rng(arch.seed);
  token_embedding_ = gaussian(rng, arch.vocab, e, 1.0);
  position_embedding_ = gaussian(rng, arch.seq_len, e, 1.0);
  FrozenLinear q = frozen(rng, e, e, false);
  wk_ = frozen(rng, e, e, false);
  FrozenLinear v = frozen(rng, e, e, false);
  wo_ = frozen(rng, e, e, false);
  ffn_in_ = frozen(rng, arch.hidden, e, true);
  ffn_out_ = frozen(rng, e, arch.hidden, true);
  head_weight_ = Matrix::Zero(ix(arch.classes), ix(e));
  head_bias_ = Matrix::Zero(1, ix(arch.classes));

  switch (peft.kind) {
    case PeftKind::none:
      wq_ = std::move(q);
      wv_ = std::move(v);
      break;
    case PeftKind::ttlora: {
      const auto map = TensorizationMap::from_dims(e, e, peft.shape);
      const auto ranks = uniform_ranks(map.shape(), peft.rank);
      wq_ = make_adapted_linear(std::move(q), map, ranks, peft.alpha, peft.seed * 2 + 1, peft.init);
      wv_ = make_adapted_linear(std::move(v), map, ranks, peft.alpha, peft.seed * 2 + 2, peft.init);
      break;
    }
    case PeftKind::lora:
      wq_ = make_lora_linear(std::move(q), peft.rank, peft.alpha, peft.seed * 2 + 1);
      wv_ = make_lora_linear(std::move(v), peft.rank, peft.alpha, peft.seed * 2 + 2);
      break;
  }
}

std::vector<std::string> ToyAttentionClassifier::adapted_matrices() const {
  std::vector<std::string> out;
  if (!std::holds_alternative<FrozenLinear>(wq_)) out.push_back("W_q");
  if (!std::holds_alternative<FrozenLinear>(wv_)) out.push_back("W_v");
  return out;
}

std::vector<ParameterInfo> ToyAttentionClassifier::parameter_registry() const {
  std::vector<ParameterInfo> reg;
  reg.push_back({"embedding.token", ParamRole::frozen, static_cast<std::size_t>(token_embedding_.size())});
  reg.push_back({"embedding.position", ParamRole::frozen, static_cast<std::size_t>(position_embedding_.size())});
  auto add_proj = [&](const std::string& name, const Projection& p) {
    std::visit(
        [&](const auto& layer) {
          using T = std::decay_t<decltype(layer)>;
          if constexpr (std::is_same_v<T, FrozenLinear>) {
            reg.push_back({name, ParamRole::frozen, static_cast<std::size_t>(layer.weight.size())});
          } else if constexpr (std::is_same_v<T, AdaptedLinear>) {
            reg.push_back({name, ParamRole::frozen, static_cast<std::size_t>(layer.base.weight.size())});
            for (std::size_t i = 0; i < layer.cores.order(); ++i)
              reg.push_back({name + ".tt_core" + std::to_string(i), ParamRole::adapter, layer.cores[i].size()});
          } else {
            reg.push_back({name, ParamRole::frozen, static_cast<std::size_t>(layer.base.weight.size())});
            reg.push_back({name + ".lora_B", ParamRole::adapter, static_cast<std::size_t>(layer.b.size())});
            reg.push_back({name + ".lora_A", ParamRole::adapter, static_cast<std::size_t>(layer.a.size())});
          }
        },
        p);
  };
  add_proj("W_q", wq_);
  reg.push_back({"W_k", ParamRole::frozen, static_cast<std::size_t>(wk_.weight.size())});
  add_proj("W_v", wv_);
  reg.push_back({"W_o", ParamRole::frozen, static_cast<std::size_t>(wo_.weight.size())});
  reg.push_back({"ffn.in", ParamRole::frozen, static_cast<std::size_t>(ffn_in_.weight.size() + ffn_in_.bias->size())});
  reg.push_back(
      {"ffn.out", ParamRole::frozen, static_cast<std::size_t>(ffn_out_.weight.size() + ffn_out_.bias->size())});
  reg.push_back({"head.weight", ParamRole::head, static_cast<std::size_t>(head_weight_.size())});
  reg.push_back({"head.bias", ParamRole::head, static_cast<std::size_t>(head_bias_.size())});
  return reg;
}

namespace {

std::size_t count_role(const std::vector<ParameterInfo>& reg, ParamRole role) {
  std::size_t total = 0;
  for (const auto& p : reg)
    if (p.role == role) total += p.count;
  return total;
}

}  // namespace

std::size_t ToyAttentionClassifier::adapter_count() const {
  return count_role(parameter_registry(), ParamRole::adapter);
}
std::size_t ToyAttentionClassifier::head_count() const { return count_role(parameter_registry(), ParamRole::head); }
std::size_t ToyAttentionClassifier::frozen_count() const {
  return count_role(parameter_registry(), ParamRole::frozen);
}
std::size_t ToyAttentionClassifier::trainable_count() const { return adapter_count() + head_count(); }

std::vector<std::span<double>> ToyAttentionClassifier::trainable_parameters() {
  std::vector<std::span<double>> out;
  auto add_proj = [&](Projection& p) {
    if (auto* tt = std::get_if<AdaptedLinear>(&p)) {
      for (std::size_t i = 0; i < tt->cores.order(); ++i) out.emplace_back(tt->cores[i].data);
    } else if (auto* lora = std::get_if<LoRALinear>(&p)) {
      out.push_back(span_of(lora->b));
      out.push_back(span_of(lora->a));
    }
  };
  add_proj(wq_);
  add_proj(wv_);
  out.push_back(span_of(head_weight_));
  out.push_back(span_of(head_bias_));
  return out;
}

std::vector<Var> ToyAttentionClassifier::register_parameters(Tape& tape, bool trainable) const {
  std::vector<Var> out;
  auto leaf = [&](Matrix m) { out.push_back(trainable ? tape.parameter(std::move(m)) : tape.constant(std::move(m))); };
  auto add_proj = [&](const Projection& p) {
    if (const auto* tt = std::get_if<AdaptedLinear>(&p)) {
      for (const auto& c : tt->cores.cores()) leaf(core_matrix(c));
    } else if (const auto* lora = std::get_if<LoRALinear>(&p)) {
      leaf(lora->b);
      leaf(lora->a);
    }
  };
  add_proj(wq_);
  add_proj(wv_);
  leaf(head_weight_);
  leaf(head_bias_);
  return out;
}

Var ToyAttentionClassifier::project(Tape& tape, const Projection& proj, Var x, std::span<const Var> params,
                                    std::size_t& cursor) const {
  if (const auto* plain = std::get_if<FrozenLinear>(&proj)) return tape.linear_frozen(x, &plain->weight);
  if (const auto* tt = std::get_if<AdaptedLinear>(&proj)) {
    const auto cores = params.subspan(cursor, tt->cores.order());
    cursor += tt->cores.order();
    return adapted_forward(tape, *tt, cores, x);
  }
  const auto& lora = std::get<LoRALinear>(proj);
  const Var b = params[cursor], a = params[cursor + 1];
  cursor += 2;
  Var low = tape.matmul_nt(tape.matmul_nt(x, a), b);
  return tape.add(tape.linear_frozen(x, &lora.base.weight), tape.scale(low, lora.alpha));
}

Var ToyAttentionClassifier::logits(Tape& tape, std::span<const int> tokens, std::span<const Var> params) const {
  require(!tokens.empty() && tokens.size() <= arch_.seq_len, "sequence length must be in [1, seq_len]");
  const auto len = ix(tokens.size());
  Matrix x(len, ix(arch_.embed));
  for (Eigen::Index t = 0; t < len; ++t) {
    const int tok = tokens[static_cast<std::size_t>(t)];
    require(tok >= 0 && static_cast<std::size_t>(tok) < arch_.vocab, "token id out of vocabulary range");
    x.row(t) = token_embedding_.row(tok) + position_embedding_.row(t);
  }
  Var input = tape.constant(std::move(x));

  std::size_t cursor = 0;
  Var q = project(tape, wq_, input, params, cursor);
  Var k = tape.linear_frozen(input, &wk_.weight);
  Var v = project(tape, wv_, input, params, cursor);
  Var scores = tape.scale(tape.matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(arch_.embed)));
  Var attended = tape.matmul(tape.softmax_rows(scores), v);
  Var resid = tape.add(input, tape.linear_frozen(attended, &wo_.weight));

  Var hidden = tape.gelu(tape.add_row_frozen(tape.linear_frozen(resid, &ffn_in_.weight), &*ffn_in_.bias));
  Var ffn = tape.add_row_frozen(tape.linear_frozen(hidden, &ffn_out_.weight), &*ffn_out_.bias);
  Var pooled = tape.mean_rows(tape.add(resid, ffn));

  require(params.size() == cursor + 2, "parameter list does not match the model's trainable tensors");
  return tape.add_row(tape.matmul_nt(pooled, params[cursor]), params[cursor + 1]);
}

ToyAttentionClassifier build_model(const ArchConfig& arch, const PeftConfig& peft) {
  return ToyAttentionClassifier(arch, peft);
}

}  // namespace ttlora
