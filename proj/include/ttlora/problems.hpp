#pragma once

#include "ttlora/datasets.hpp"
#include "ttlora/models.hpp"
#include "ttlora/train.hpp"

namespace ttlora {

/// Single TT-adapted layer fitted to teacher-student data with MSE.
/// Validation metric is R^2 on the held-out split.
class TeacherStudentProblem final : public Problem {
 public:
  TeacherStudentProblem(const TeacherStudentData& data, AdaptedLinear student);

  std::size_t train_size() const override { return data_.train_index.size(); }
  std::vector<std::span<double>> parameters() override;
  Var record_loss(Tape& tape, std::span<const std::size_t> batch, std::vector<Var>& leaves) override;
  Evaluation validate() override;

  const AdaptedLinear& student() const { return student_; }
  AdaptedLinear& student() { return student_; }

 private:
  const TeacherStudentData& data_;
  AdaptedLinear student_;
};

/// Toy attention classifier trained with cross-entropy; metric is accuracy.
class ClassificationProblem final : public Problem {
 public:
  ClassificationProblem(const ClassificationData& data, ToyAttentionClassifier model);

  std::size_t train_size() const override { return data_.train_index.size(); }
  std::vector<std::span<double>> parameters() override { return model_.trainable_parameters(); }
  Var record_loss(Tape& tape, std::span<const std::size_t> batch, std::vector<Var>& leaves) override;
  Evaluation validate() override;

  const ToyAttentionClassifier& model() const { return model_; }

 private:
  Evaluation evaluate(std::span<const std::size_t> rows) const;

  const ClassificationData& data_;
  ToyAttentionClassifier model_;
};

}  // namespace ttlora
