#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ttlora/datasets.hpp"
#include "ttlora/hypersearch.hpp"
#include "ttlora/models.hpp"
#include "ttlora/train.hpp"
#include "ttlora/ttlf.hpp"

// JSON-driven experiment descriptions shared by `train` and `sweep`.

namespace ttlora {

enum class TaskKind { teacher_student, classification };

struct TaskSpec {
  TaskKind kind = TaskKind::teacher_student;
  std::uint64_t seed = 0;
  std::size_t samples = 1024;

  // teacher-student
  std::size_t m = 32;
  std::size_t n = 32;
  std::vector<std::size_t> teacher_shape{4, 8, 8, 4};
  std::size_t true_rank = 3;
  double noise = 0.0;
  double update_scale = 1.0;

  // classification
  ClassificationRule rule = ClassificationRule::position_pattern;
  ArchConfig arch{};
  std::optional<std::filesystem::path> data_path;  // JSON lines; overrides the generator

  /// Extents of each adapted matrix and how many there are.
  std::size_t target_rows() const { return kind == TaskKind::teacher_student ? m : arch.embed; }
  std::size_t target_cols() const { return kind == TaskKind::teacher_student ? n : arch.embed; }
  std::size_t wrapped_matrices() const { return kind == TaskKind::teacher_student ? 1 : 2; }
};

/// Adapter choice. Teacher-student only accepts ttlora.
struct AdapterSpec {
  PeftKind kind = PeftKind::ttlora;
  std::vector<std::size_t> shape{4, 8, 8, 4};
  std::size_t rank = 3;
  double alpha = 1.0;
  InitSpec init{};
  std::uint64_t seed = 0;
};

struct TrainSpec {
  TaskSpec task;
  AdapterSpec adapter;
  TrainConfig train;
  DType storage_dtype = DType::f32;
};

struct SweepSpec {
  TaskSpec task;
  AdapterSpec adapter;  // kind, init and seed; shape/rank/alpha come from the grid
  TrainConfig train;    // learning_rate and max_epochs come from the grid/schedule
  std::vector<std::vector<std::size_t>> shapes;
  std::vector<std::size_t> ranks;
  std::vector<double> alphas;
  std::vector<double> learning_rates;
  std::size_t sample_size = 0;
  std::uint64_t sample_seed = 0;
  std::vector<std::size_t> schedule{1, 2, 4};
  double keep_fraction = 0.5;
  std::size_t workers = 1;

  SearchSpace space() const;
  HalvingOptions halving() const;
};

TaskSpec parse_task(const nlohmann::json& j);
AdapterSpec parse_adapter(const nlohmann::json& j);
TrainConfig parse_train_config(const nlohmann::json& j);
TrainSpec parse_train_spec(const nlohmann::json& j);
SweepSpec parse_sweep_spec(const nlohmann::json& j);
nlohmann::json load_json(const std::filesystem::path& path);

/// Immutable dataset generated once per run and read-shared by every trial.
class TaskData {
 public:
  explicit TaskData(const TaskSpec& spec);

  const TaskSpec& spec() const { return spec_; }
  const TeacherStudentData& teacher_student() const;
  const ClassificationData& classification() const;

 private:
  TaskSpec spec_;
  std::optional<TeacherStudentData> regression_;
  std::optional<ClassificationData> classes_;
};

/// Problem over `data` with a freshly initialised adapter.
std::unique_ptr<Problem> make_problem(const TaskData& data, const AdapterSpec& adapter);

/// Problem plus trainer, advanced one budget at a time by the scheduler.
class TrainingTrial final : public TrialRunner {
 public:
  TrainingTrial(std::unique_ptr<Problem> problem, const TrainConfig& config);
  TrialProgress advance(std::size_t epoch_budget) override;

 private:
  std::unique_ptr<Problem> problem_;
  Trainer trainer_;
};

/// Factory for successive_halving over `data`: each trial gets adapter
/// seed = trial seed and training seed = trial seed.
TrialFactory training_trial_factory(const TaskData& data, const AdapterSpec& adapter, const TrainConfig& base,
                                    std::size_t max_epochs);

}  // namespace ttlora
