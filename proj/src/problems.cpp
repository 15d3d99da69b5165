#include "ttlora/problems.hpp"

#include "ttlora/error.hpp"

namespace ttlora {

namespace {

Matrix gather_rows(const Matrix& source, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), source.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = source.row(static_cast<Eigen::Index>(rows[r]));
  return out;
}

}  // namespace

TeacherStudentProblem::TeacherStudentProblem(const TeacherStudentData& data, AdaptedLinear student)
    : data_(data), student_(std::move(student)) {
  student_.validate();
  require(student_.map.m() == data.map.m() && student_.map.n() == data.map.n(),
          "student extents do not match the teacher");
}

std::vector<std::span<double>> TeacherStudentProblem::parameters() {
  std::vector<std::span<double>> out;
  for (std::size_t i = 0; i < student_.cores.order(); ++i) out.emplace_back(student_.cores[i].data);
  return out;
}

Var TeacherStudentProblem::record_loss(Tape& tape, std::span<const std::size_t> batch, std::vector<Var>& leaves) {
  require(!batch.empty(), "empty batch");
  std::vector<std::size_t> rows(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) rows[i] = data_.train_index.at(batch[i]);
  leaves = register_cores(tape, student_.cores);
  Var out = adapted_forward(tape, student_, leaves, tape.constant(gather_rows(data_.inputs, rows)));
  return tape.mse(out, gather_rows(data_.targets, rows));
}

Evaluation TeacherStudentProblem::validate() {
  require(!data_.val_index.empty(), "teacher-student task has an empty validation split");
  const Matrix x = gather_rows(data_.inputs, data_.val_index);
  const Matrix y = gather_rows(data_.targets, data_.val_index);
  const Matrix pred = batch_forward(student_, x);
  const double sse = (pred - y).squaredNorm();
  const Matrix centred = y.rowwise() - y.colwise().mean();
  const double sst = centred.squaredNorm();
  return {sse / static_cast<double>(y.size()), sst > 0.0 ? 1.0 - sse / sst : 0.0};
}

ClassificationProblem::ClassificationProblem(const ClassificationData& data, ToyAttentionClassifier model)
    : data_(data), model_(std::move(model)) {
  require(data.n_classes == model_.arch().classes, "dataset class count does not match the classifier head");
  require(data.vocab <= model_.arch().vocab, "dataset vocabulary exceeds the model's embedding table");
  require(data.seq_len <= model_.arch().seq_len, "dataset sequences exceed the model's position table");
}

Var ClassificationProblem::record_loss(Tape& tape, std::span<const std::size_t> batch, std::vector<Var>& leaves) {
  require(!batch.empty(), "empty batch");
  leaves = model_.register_parameters(tape, true);
  std::vector<Var> terms;
  terms.reserve(batch.size());
  for (auto pos : batch) {
    const auto row = data_.train_index.at(pos);
    const int label = data_.labels[row];
    terms.push_back(tape.cross_entropy(model_.logits(tape, data_.tokens[row], leaves), std::span(&label, 1)));
  }
  return tape.scale(tape.sum(terms), 1.0 / static_cast<double>(batch.size()));
}

Evaluation ClassificationProblem::evaluate(std::span<const std::size_t> rows) const {
  require(!rows.empty(), "classification task has an empty evaluation split");
  double loss = 0.0;
  std::size_t correct = 0;
  for (auto row : rows) {
    Tape tape;
    auto params = model_.register_parameters(tape, false);
    Var z = model_.logits(tape, data_.tokens[row], params);
    const int label = data_.labels[row];
    loss += tape.value(tape.cross_entropy(z, std::span(&label, 1)))(0, 0);
    Eigen::Index arg = 0;
    tape.value(z).row(0).maxCoeff(&arg);
    if (arg == label) ++correct;
  }
  const double n = static_cast<double>(rows.size());
  return {loss / n, static_cast<double>(correct) / n};
}

Evaluation ClassificationProblem::validate() { return evaluate(data_.val_index); }

}  // namespace ttlora
