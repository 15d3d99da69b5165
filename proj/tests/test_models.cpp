#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <set>

#include "oracles.hpp"
#include "ttlora/error.hpp"
#include "ttlora/problems.hpp"

using namespace ttlora;

namespace {

ArchConfig small_arch(std::size_t classes, std::size_t embed = 16) {
  ArchConfig a;
  a.vocab = 12;
  a.seq_len = 8;
  a.embed = embed;
  a.hidden = 24;
  a.classes = classes;
  a.seed = 99;
  return a;
}

PeftConfig tt(std::vector<std::size_t> shape, std::size_t rank, double alpha = 1.0) {
  PeftConfig p;
  p.kind = PeftKind::ttlora;
  p.shape = std::move(shape);
  p.rank = rank;
  p.alpha = alpha;
  return p;
}

PeftConfig lora(std::size_t rank) {
  PeftConfig p;
  p.kind = PeftKind::lora;
  p.rank = rank;
  return p;
}

double accuracy_after_training(const ClassificationData& data, const ArchConfig& arch, const PeftConfig& peft) {
  ClassificationProblem p(data, build_model(arch, peft));
  TrainConfig cfg;
  cfg.learning_rate = 1e-2;
  cfg.max_epochs = 15;
  return train(p, cfg).best_val_metric;
}

}  // namespace

TEST_CASE("adapter placement is exactly W_q and W_v") {
  ArchConfig arch;  // e = 64
  CHECK(build_model(arch, {}).adapted_matrices().empty());
  for (const auto& peft : {tt({8, 8, 8, 8}, 4), tt({4, 16, 16, 4}, 3), lora(8), lora(2)}) {
    const auto m = build_model(arch, peft);
    CHECK(m.adapted_matrices() == std::vector<std::string>{"W_q", "W_v"});
    CHECK_FALSE(std::holds_alternative<FrozenLinear>(m.query()));
    CHECK_FALSE(std::holds_alternative<FrozenLinear>(m.value_proj()));
  }
}

TEST_CASE("trainable parameter accounting") {
  ArchConfig arch;
  arch.classes = 3;
  const std::size_t head = 3 * 64 + 3;
  const auto none = build_model(arch, {});
  CHECK(none.adapter_count() == 0);
  CHECK(none.trainable_count() == head);

  const auto ttm = build_model(arch, tt({8, 8, 8, 8}, 4));
  CHECK(ttm.adapter_count() == 640);
  CHECK(ttm.adapter_count() == 2 * oracle::count({8, 8, 8, 8}, {1, 4, 4, 4, 1}));
  CHECK(ttm.trainable_count() == 640 + head);

  const auto lr = build_model(arch, lora(8));
  CHECK(lr.adapter_count() == 2048);

  // registry walk: adapters + head = trainable; trainable storage agrees
  for (auto model : {none, ttm, lr}) {
    std::size_t adapters = 0, heads = 0, frozen = 0;
    for (const auto& p : model.parameter_registry()) {
      (p.role == ParamRole::adapter ? adapters : p.role == ParamRole::head ? heads : frozen) += p.count;
    }
    CHECK(adapters == model.adapter_count());
    CHECK(heads == head);
    CHECK(frozen == model.frozen_count());
    std::size_t storage = 0;
    for (auto s : model.trainable_parameters()) storage += s.size();
    CHECK(storage == model.trainable_count());
  }
}

TEST_CASE("build_model rejects shapes that do not factor e x e") {
  ArchConfig arch;
  CHECK_THROWS_AS(build_model(arch, tt({8, 8, 8}, 4)), ContractViolation);
  CHECK_THROWS_AS(build_model(arch, tt({4, 4, 4, 4}, 4)), ContractViolation);
  arch.classes = 1;
  CHECK_THROWS_AS(build_model(arch, {}), ContractViolation);
}

TEST_CASE("forward is deterministic and starts at the frozen model for zero-start adapters") {
  const auto arch = small_arch(3);
  auto none = build_model(arch, {});
  auto ttm = build_model(arch, tt({4, 4, 4, 4}, 2, 8.0));
  auto lr = build_model(arch, lora(3));
  // same nonzero head everywhere so the logits see the attention output
  for (auto* m : {&none, &ttm, &lr}) {
    auto params = m->trainable_parameters();
    auto& w = params[params.size() - 2];
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::sin(static_cast<double>(i) + 1.0);
  }
  const std::vector<int> tokens{1, 5, 7, 2, 0};
  auto run = [&](const ToyAttentionClassifier& m) {
    Tape t;
    auto params = m.register_parameters(t, false);
    return Matrix(t.value(m.logits(t, tokens, params)));
  };
  CHECK(run(none) == run(none));
  CHECK_FALSE(run(none).isZero(0.0));
  CHECK(run(ttm) == run(none));
  CHECK(run(lr) == run(none));
}

TEST_CASE("classifier gradients match finite differences through attention") {
  const auto arch = small_arch(3, 8);
  auto peft = tt({2, 4, 4, 2}, 2);
  peft.init = {InitScheme::gaussian, 0.3};
  const auto data = make_synthetic_classification(3, 6, 12, ClassificationRule::position_pattern, 20, 1);
  ClassificationProblem problem(data, build_model(arch, peft));
  // give the head nonzero values so every path carries gradient
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal(0.0, 0.5);
  auto params = problem.parameters();
  for (auto& v : params[params.size() - 2]) v = normal(rng);

  const std::vector<std::size_t> batch{0, 3, 5};
  Tape tape;
  std::vector<Var> leaves;
  tape.backward(problem.record_loss(tape, batch, leaves));
  auto loss_now = [&]() {
    Tape t;
    std::vector<Var> l;
    return t.value(problem.record_loss(t, batch, l))(0, 0);
  };
  const double h = 1e-6;
  double worst = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    const Matrix g = tape.grad(leaves[p]);
    for (std::size_t i = 0; i < params[p].size(); i += 3) {
      const double v = params[p][i];
      params[p][i] = v + h;
      const double plus = loss_now();
      params[p][i] = v - h;
      const double minus = loss_now();
      params[p][i] = v;
      const double fd = (plus - minus) / (2 * h);
      const double an = g.data()[i];
      worst = std::max(worst, std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-6}));
    }
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("LoRA baseline layer") {
  FrozenLinear base{Matrix::Ones(6, 4), std::nullopt};
  const auto l = make_lora_linear(base, 2, 1.0, 1);
  CHECK(l.trainable_count() == 2 * (6 + 4));
  CHECK(l.b.isZero(0.0));
  CHECK(l.a.rows() == 2);
  CHECK(l.a.cols() == 4);
  CHECK_THROWS_AS(make_lora_linear(base, 0, 1.0, 1), ContractViolation);
}

TEST_CASE("synthetic classification generators") {
  for (auto rule : {ClassificationRule::token_presence, ClassificationRule::majority_token,
                    ClassificationRule::position_pattern}) {
    const auto d = make_synthetic_classification(3, 8, 12, rule, 300, 4);
    CHECK(d.tokens.size() == 300);
    std::vector<int> counts(3, 0);
    for (int l : d.labels) ++counts[static_cast<std::size_t>(l)];
    CHECK(counts == std::vector<int>{100, 100, 100});
    CHECK(d.train_index.size() == 240);
    CHECK(d.val_index.size() == 60);
    std::set<std::size_t> all(d.train_index.begin(), d.train_index.end());
    all.insert(d.val_index.begin(), d.val_index.end());
    CHECK(all.size() == 300);

    // each rule actually determines the label
    for (std::size_t i = 0; i < d.tokens.size(); ++i) {
      const auto& t = d.tokens[i];
      const int label = d.labels[i];
      if (rule == ClassificationRule::token_presence) {
        int found = 0;
        for (int tok : t)
          if (tok < 2) found = tok + 1;
        CHECK(found == label);
      } else if (rule == ClassificationRule::majority_token) {
        std::vector<int> c(3, 0);
        for (int tok : t) ++c[static_cast<std::size_t>(tok)];
        for (int k = 0; k < 3; ++k)
          if (k != label) CHECK(c[static_cast<std::size_t>(k)] < c[static_cast<std::size_t>(label)]);
      } else {
        CHECK(t[0] % 3 == label);
      }
    }
    const auto again = make_synthetic_classification(3, 8, 12, rule, 300, 4);
    CHECK(again.tokens == d.tokens);
    CHECK(again.labels == d.labels);
  }
  // two balanced classes: chance is one half
  const auto two = make_synthetic_classification(2, 8, 12, ClassificationRule::token_presence, 100, 1);
  CHECK(std::count(two.labels.begin(), two.labels.end(), 1) == 50);

  CHECK_THROWS_AS(make_synthetic_classification(2, 1, 2, ClassificationRule::token_presence, 100, 1),
                  ContractViolation);
  CHECK_THROWS_AS(make_synthetic_classification(2, 8, 2, ClassificationRule::position_pattern, 100, 1),
                  ContractViolation);
  CHECK_THROWS_AS(rule_from_string("parity"), ContractViolation);
}

TEST_CASE("classification JSON lines round trip") {
  const auto d = make_synthetic_classification(2, 5, 10, ClassificationRule::position_pattern, 40, 2);
  const auto path = std::filesystem::temp_directory_path() / "ttlora_unit_data.jsonl";
  write_classification_jsonl(path, d);
  const auto back = read_classification_jsonl(path, 2, 10, 2);
  CHECK(back.tokens == d.tokens);
  CHECK(back.labels == d.labels);
  CHECK(back.train_index == d.train_index);
}

TEST_CASE("teacher-student data") {
  const auto map = TensorizationMap::from_dims(8, 12, {2, 4, 3, 4});
  const auto ranks = uniform_ranks(map.shape(), 2);
  const auto a = make_teacher_student(map, ranks, 2000, 0.1, 7);
  const auto b = make_teacher_student(map, ranks, 2000, 0.1, 7);
  CHECK(a.inputs == b.inputs);
  CHECK(a.targets == b.targets);
  CHECK(oracle::rel_err(a.true_update, tt_reconstruct(a.true_cores, map)) < 1e-14);
  // the planted update has the promised TT ranks
  CHECK(oracle::rel_err(tt_reconstruct(tt_svd(a.true_update, map, 2), map), a.true_update) < 1e-10);
  // noise floor: residual of the true model is sigma^2 per coordinate
  const Matrix resid = a.targets - a.inputs * (a.base_weight + a.true_update).transpose();
  const double mse = resid.squaredNorm() / static_cast<double>(resid.size());
  CHECK(mse == doctest::Approx(0.01).epsilon(0.05));

  const auto clean = make_teacher_student(map, ranks, 100, 0.0, 7);
  const Matrix exact = clean.targets - clean.inputs * (clean.base_weight + clean.true_update).transpose();
  CHECK(exact.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("token presence: TT-LoRA beats the frozen model with a trainable head") {
  ArchConfig arch;
  arch.embed = 32;
  arch.hidden = 64;
  arch.classes = 2;
  const auto data = make_synthetic_classification(2, 12, 16, ClassificationRule::token_presence, 600, 11);
  const double head_only = accuracy_after_training(data, arch, {});
  const double adapted = accuracy_after_training(data, arch, tt({4, 8, 8, 4}, 4));
  MESSAGE("head-only " << head_only << ", TT-LoRA " << adapted);
  CHECK(head_only > 0.5);
  CHECK(adapted > head_only);
}
