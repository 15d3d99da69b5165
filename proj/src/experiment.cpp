#include "ttlora/experiment.hpp"

#include <fstream>
#include <set>

#include "ttlora/error.hpp"
#include "ttlora/problems.hpp"

namespace ttlora {

using nlohmann::json;

namespace {

// Rejects typos early instead of silently falling back to defaults.
void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  require(j.is_object(), where + " must be a JSON object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : j.items()) require(ok.count(key) > 0, "unknown key '" + key + "' in " + where);
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ContractViolation(std::string("bad value for '") + key + "': " + e.what());
  }
}

std::size_t get_size(const json& j, const char* key, std::size_t fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  require(v.is_number_integer() && v.get<long long>() >= 0, std::string("'") + key + "' must be a non-negative integer");
  return v.get<std::size_t>();
}

std::vector<std::size_t> get_dims(const json& v, const std::string& what) {
  require(v.is_array() && !v.empty(), what + " must be a nonempty array of positive integers");
  std::vector<std::size_t> dims;
  for (const auto& x : v) {
    require(x.is_number_integer() && x.get<long long>() >= 1, what + " must contain positive integers");
    dims.push_back(x.get<std::size_t>());
  }
  return dims;
}

template <typename T>
std::vector<T> get_list(const json& j, const char* key) {
  require(j.contains(key), std::string("missing '") + key + "'");
  require(j.at(key).is_array(), std::string("'") + key + "' must be an array");
  try {
    return j.at(key).get<std::vector<T>>();
  } catch (const json::exception& e) {
    throw ContractViolation(std::string("bad value for '") + key + "': " + e.what());
  }
}

}  // namespace

TaskSpec parse_task(const json& j) {
  check_keys(j, "task",
             {"kind", "seed", "samples", "m", "n", "teacher_shape", "true_rank", "noise", "update_scale", "rule",
              "classes", "seq_len", "vocab", "embed", "hidden", "arch_seed", "data"});
  TaskSpec t;
  const auto kind = get_or<std::string>(j, "kind", "teacher-student");
  if (kind == "teacher-student") {
    t.kind = TaskKind::teacher_student;
  } else if (kind == "classification") {
    t.kind = TaskKind::classification;
  } else {
    throw ContractViolation("unknown task kind '" + kind + "' (expected teacher-student or classification)");
  }
  t.seed = get_or<std::uint64_t>(j, "seed", t.seed);
  t.samples = get_size(j, "samples", t.kind == TaskKind::teacher_student ? 1024 : 1000);
  t.m = get_size(j, "m", t.m);
  t.n = get_size(j, "n", t.n);
  if (j.contains("teacher_shape")) t.teacher_shape = get_dims(j.at("teacher_shape"), "teacher_shape");
  t.true_rank = get_size(j, "true_rank", t.true_rank);
  t.noise = get_or<double>(j, "noise", t.noise);
  t.update_scale = get_or<double>(j, "update_scale", t.update_scale);
  t.rule = rule_from_string(get_or<std::string>(j, "rule", to_string(t.rule)));
  t.arch.classes = get_size(j, "classes", t.arch.classes);
  t.arch.seq_len = get_size(j, "seq_len", t.arch.seq_len);
  t.arch.vocab = get_size(j, "vocab", t.arch.vocab);
  t.arch.embed = get_size(j, "embed", t.arch.embed);
  t.arch.hidden = get_size(j, "hidden", t.arch.hidden);
  t.arch.seed = get_or<std::uint64_t>(j, "arch_seed", t.arch.seed);
  if (j.contains("data")) t.data_path = get_or<std::string>(j, "data", "");
  require(t.noise >= 0.0, "noise must be non-negative");
  require(t.update_scale > 0.0, "update_scale must be positive");
  return t;
}

AdapterSpec parse_adapter(const json& j) {
  check_keys(j, "adapter", {"kind", "shape", "rank", "alpha", "init", "sigma", "seed"});
  AdapterSpec a;
  a.kind = peft_from_string(get_or<std::string>(j, "kind", "ttlora"));
  if (j.contains("shape")) a.shape = get_dims(j.at("shape"), "shape");
  a.rank = get_size(j, "rank", a.rank);
  a.alpha = get_or<double>(j, "alpha", a.alpha);
  a.init.scheme = init_scheme_from_string(get_or<std::string>(j, "init", to_string(a.init.scheme)));
  a.init.sigma = get_or<double>(j, "sigma", a.init.sigma);
  a.seed = get_or<std::uint64_t>(j, "seed", a.seed);
  require(a.rank >= 1, "adapter rank must be >= 1");
  return a;
}

TrainConfig parse_train_config(const json& j) {
  check_keys(j, "train",
             {"learning_rate", "max_epochs", "patience", "batch_size", "seed", "optimizer", "beta1", "beta2", "epsilon"});
  TrainConfig c;
  c.learning_rate = get_or<double>(j, "learning_rate", c.learning_rate);
  c.max_epochs = get_size(j, "max_epochs", c.max_epochs);
  c.patience = get_size(j, "patience", c.patience);
  c.batch_size = get_size(j, "batch_size", c.batch_size);
  c.seed = get_or<std::uint64_t>(j, "seed", c.seed);
  c.optimizer = optimizer_from_string(get_or<std::string>(j, "optimizer", to_string(c.optimizer)));
  c.beta1 = get_or<double>(j, "beta1", c.beta1);
  c.beta2 = get_or<double>(j, "beta2", c.beta2);
  c.epsilon = get_or<double>(j, "epsilon", c.epsilon);
  c.validate();
  return c;
}

TrainSpec parse_train_spec(const json& j) {
  check_keys(j, "train config", {"task", "adapter", "train", "storage_dtype"});
  TrainSpec s;
  s.task = parse_task(j.value("task", json::object()));
  s.adapter = parse_adapter(j.value("adapter", json::object()));
  s.train = parse_train_config(j.value("train", json::object()));
  s.storage_dtype = dtype_from_string(get_or<std::string>(j, "storage_dtype", "f32"));
  return s;
}

SweepSpec parse_sweep_spec(const json& j) {
  check_keys(j, "sweep spec",
             {"task", "adapter", "train", "shapes", "ranks", "alphas", "learning_rates", "sample_size", "sample_seed",
              "schedule", "keep_fraction", "workers"});
  SweepSpec s;
  s.task = parse_task(j.value("task", json::object()));
  s.adapter = parse_adapter(j.value("adapter", json::object()));
  s.train = parse_train_config(j.value("train", json::object()));
  require(j.contains("shapes") && j.at("shapes").is_array(), "sweep spec needs a 'shapes' array");
  for (const auto& shape : j.at("shapes")) s.shapes.push_back(get_dims(shape, "each entry of 'shapes'"));
  s.ranks = get_list<std::size_t>(j, "ranks");
  s.alphas = get_list<double>(j, "alphas");
  s.learning_rates = get_list<double>(j, "learning_rates");
  s.sample_size = get_size(j, "sample_size", 0);
  s.sample_seed = get_or<std::uint64_t>(j, "sample_seed", 0);
  if (j.contains("schedule")) s.schedule = get_list<std::size_t>(j, "schedule");
  s.keep_fraction = get_or<double>(j, "keep_fraction", s.keep_fraction);
  s.workers = get_size(j, "workers", s.workers);
  require(s.adapter.kind == PeftKind::ttlora, "sweeps search TT adapters only");
  return s;
}

SearchSpace SweepSpec::space() const {
  SearchSpace sp;
  sp.m = task.target_rows();
  sp.n = task.target_cols();
  sp.n_wrapped = task.wrapped_matrices();
  sp.shapes = shapes;
  sp.ranks = ranks;
  sp.alphas = alphas;
  sp.learning_rates = learning_rates;
  sp.sample_size = sample_size;
  sp.sample_seed = sample_seed;
  return sp;
}

HalvingOptions SweepSpec::halving() const {
  HalvingOptions h;
  h.budget_schedule = schedule;
  h.keep_fraction = keep_fraction;
  h.workers = workers;
  h.base_seed = adapter.seed;
  h.n_wrapped = task.wrapped_matrices();
  return h;
}

json load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ContractViolation(path.string() + ": invalid JSON: " + e.what());
  }
}

TaskData::TaskData(const TaskSpec& spec) : spec_(spec) {
  if (spec.kind == TaskKind::teacher_student) {
    const auto map = TensorizationMap::from_dims(spec.m, spec.n, spec.teacher_shape);
    regression_ = make_teacher_student(map, uniform_ranks(map.shape(), spec.true_rank), spec.samples, spec.noise,
                                       spec.seed, spec.update_scale);
  } else if (spec.data_path) {
    classes_ = read_classification_jsonl(*spec.data_path, spec.arch.classes, spec.arch.vocab, spec.seed);
  } else {
    classes_ = make_synthetic_classification(spec.arch.classes, spec.arch.seq_len, spec.arch.vocab, spec.rule,
                                             spec.samples, spec.seed);
  }
}

const TeacherStudentData& TaskData::teacher_student() const {
  require(regression_.has_value(), "task is not teacher-student");
  return *regression_;
}

const ClassificationData& TaskData::classification() const {
  require(classes_.has_value(), "task is not classification");
  return *classes_;
}

std::unique_ptr<Problem> make_problem(const TaskData& data, const AdapterSpec& adapter) {
  if (data.spec().kind == TaskKind::teacher_student) {
    require(adapter.kind == PeftKind::ttlora, "teacher-student tasks train a TT adapter");
    const auto& ts = data.teacher_student();
    const auto map = TensorizationMap::from_dims(ts.map.m(), ts.map.n(), adapter.shape);
    FrozenLinear base{ts.base_weight, std::nullopt};
    auto student = make_adapted_linear(std::move(base), map, uniform_ranks(map.shape(), adapter.rank), adapter.alpha,
                                       adapter.seed, adapter.init);
    return std::make_unique<TeacherStudentProblem>(ts, std::move(student));
  }
  PeftConfig peft{adapter.kind, adapter.shape, adapter.rank, adapter.alpha, adapter.init, adapter.seed};
  return std::make_unique<ClassificationProblem>(data.classification(), build_model(data.spec().arch, peft));
}

TrainingTrial::TrainingTrial(std::unique_ptr<Problem> problem, const TrainConfig& config)
    : problem_(std::move(problem)), trainer_(*problem_, config) {}

TrialProgress TrainingTrial::advance(std::size_t epoch_budget) {
  trainer_.run_until(epoch_budget);
  const auto& r = trainer_.result();
  return {r.best_val_loss, r.best_val_metric, trainer_.epochs_run()};
}

TrialFactory training_trial_factory(const TaskData& data, const AdapterSpec& adapter, const TrainConfig& base,
                                    std::size_t max_epochs) {
  return [&data, adapter, base, max_epochs](const TrialConfig& cfg, std::uint64_t seed) -> std::unique_ptr<TrialRunner> {
    AdapterSpec a = adapter;
    a.shape = cfg.map.dims();
    a.rank = cfg.rank;
    a.alpha = cfg.alpha;
    a.seed = seed;
    TrainConfig t = base;
    t.learning_rate = cfg.learning_rate;
    t.max_epochs = max_epochs;
    t.seed = seed;
    return std::make_unique<TrainingTrial>(make_problem(data, a), t);
  };
}

}  // namespace ttlora
