#include "ttlora/cli.hpp"

#include <filesystem>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "ttlora/error.hpp"
#include "ttlora/experiment.hpp"
#include "ttlora/gradcheck.hpp"
#include "ttlora/problems.hpp"
#include "ttlora/report.hpp"
#include "ttlora/tt_linear.hpp"
#include "ttlora/ttlf.hpp"

namespace ttlora {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct DecomposeArgs {
  std::string input, output, dtype = "f64", label = "decomposed";
  std::vector<std::size_t> shape;
  std::size_t max_rank = 0;
  double tol = 1e-12, alpha = 1.0;
};

struct ReconstructArgs {
  std::string input, output, dtype = "f64";
};

struct CountArgs {
  std::size_t m = 0, n = 0, rank = 0, wrapped = 1;
  std::vector<std::size_t> shape;
  bool as_json = false;
};

struct InitArgs {
  std::size_t m = 0, n = 0, rank = 0;
  std::vector<std::size_t> shape;
  std::uint64_t seed = 0;
  std::string scheme = "gaussian", dtype = "f64", output, label = "random";
  double sigma = 0.02, alpha = 1.0;
};

struct TrainArgs {
  std::string config, out;
  bool timing = false;
};

struct SweepArgs {
  std::string spec, out;
  std::size_t workers = 0;
};

struct MergeArgs {
  std::string adapter, base, output, dtype = "f64";
};

struct GradcheckArgs {
  std::string preset, config;
};

DType parse_dtype(const std::string& s) { return dtype_from_string(s); }

int run_decompose(const DecomposeArgs& a, std::ostream& out) {
  require(a.max_rank >= 1, "--max-rank must be >= 1");
  const Matrix dense = read_dense(a.input);
  const auto map = TensorizationMap::from_dims(static_cast<std::size_t>(dense.rows()),
                                               static_cast<std::size_t>(dense.cols()), a.shape);
  const auto cores = tt_svd(dense, map, a.max_rank, a.tol);
  const auto dtype = parse_dtype(a.dtype);
  TTLFArchive archive{make_manifest(cores, map, a.alpha, dtype, 0, "tt-svd", a.label), cores};
  write_ttlf(a.output, archive);
  // Error of what was actually stored, after dtype rounding.
  const auto stored = read_ttlf(a.output);
  const double err = relative_frobenius_error(tt_reconstruct(stored.cores, stored.map()), dense);
  std::ostringstream ranks;
  for (std::size_t i = 0; i < stored.manifest.ranks.size(); ++i) ranks << (i ? "," : "") << stored.manifest.ranks[i];
  out << "ranks: [" << ranks.str() << "]\n";
  out << "relative reconstruction error: " << std::scientific << err << std::defaultfloat << "\n";
  return 0;
}

int run_reconstruct(const ReconstructArgs& a, std::ostream& out) {
  const auto archive = read_ttlf(a.input);
  const Matrix dense = tt_reconstruct(archive.cores, archive.map());
  write_dense(a.output, dense, parse_dtype(a.dtype));
  out << "wrote " << dense.rows() << " x " << dense.cols() << " update to " << a.output << "\n";
  return 0;
}

int run_count(const CountArgs& a, std::ostream& out) {
  const auto r = compression_report(a.m, a.n, a.shape, a.rank, a.wrapped);
  if (!a.as_json) {
    out << format_report(r);
    return 0;
  }
  json j;
  j["m"] = r.m;
  j["n"] = r.n;
  j["wrapped"] = r.n_wrapped;
  j["shape"] = r.shape;
  j["ranks"] = r.ranks;
  j["rank_clamped"] = r.rank_clamped;
  j["dense_params"] = r.dense_params;
  j["adapter_params"] = r.adapter_params;
  j["compression_ratio"] = format_significant(r.compression_ratio());
  j["ratio_exact"] = {r.ratio_num, r.ratio_den};
  for (const auto& s : r.storage) j["storage_bytes"][to_string(s.dtype)] = s.bytes;
  if (r.note) j["note"] = *r.note;
  out << j.dump(2) << "\n";
  return 0;
}

int run_init(const InitArgs& a, std::ostream& out) {
  const auto map = TensorizationMap::from_dims(a.m, a.n, a.shape);
  const InitSpec init{init_scheme_from_string(a.scheme), a.sigma};
  const auto cores = tt_random_init(map.shape(), uniform_ranks(map.shape(), a.rank), a.seed, init);
  write_ttlf(a.output, {make_manifest(cores, map, a.alpha, parse_dtype(a.dtype), a.seed, to_string(init.scheme), a.label),
                        cores});
  out << "wrote " << cores.element_count() << " core parameters to " << a.output << "\n";
  return 0;
}

int run_merge(const MergeArgs& a, std::ostream& out) {
  const auto archive = read_ttlf(a.adapter);
  FrozenLinear base{read_dense(a.base), std::nullopt};
  AdaptedLinear layer{std::move(base), archive.cores, archive.map(), archive.manifest.alpha};
  layer.validate();
  const auto merged = merge(layer);
  write_dense(a.output, merged.weight, parse_dtype(a.dtype));
  out << "merged " << merged.weight.rows() << " x " << merged.weight.cols() << " weight (alpha "
      << archive.manifest.alpha << ") to " << a.output << "\n";
  return 0;
}

void write_adapter(const fs::path& path, const AdaptedLinear& layer, const AdapterSpec& spec, DType dtype,
                   const std::string& label) {
  write_ttlf(path, {make_manifest(layer.cores, layer.map, layer.alpha, dtype, spec.seed, to_string(spec.init.scheme),
                                  label),
                    layer.cores});
}

int run_train(const TrainArgs& a, std::ostream& out) {
  const auto spec = parse_train_spec(load_json(a.config));
  fs::create_directories(a.out);
  const TaskData data(spec.task);
  auto problem = make_problem(data, spec.adapter);
  const auto result = train(*problem, spec.train);
  write_text(fs::path(a.out) / "history.csv", history_csv(result.history, a.timing));

  json summary;
  summary["best_epoch"] = result.best_epoch;
  summary["stopped_epoch"] = result.stopped_epoch;
  summary["early_stopped"] = result.early_stopped;
  summary["best_val_loss"] = result.best_val_loss;
  summary["best_val_metric"] = result.best_val_metric;

  if (auto* ts = dynamic_cast<TeacherStudentProblem*>(problem.get())) {
    const auto& student = ts->student();
    write_adapter(fs::path(a.out) / "adapter.ttlf", student, spec.adapter, spec.storage_dtype, "student");
    write_dense(fs::path(a.out) / "base.bin", student.base.weight, DType::f64);
    const Matrix learned = student.alpha * tt_reconstruct(student.cores, student.map);
    summary["adapter_params"] = student.cores.element_count();
    summary["update_rel_error"] = relative_frobenius_error(learned, data.teacher_student().true_update);
  } else if (auto* cls = dynamic_cast<ClassificationProblem*>(problem.get())) {
    const auto& model = cls->model();
    auto save = [&](const ToyAttentionClassifier::Projection& p, const std::string& name) {
      if (const auto* tt = std::get_if<AdaptedLinear>(&p)) {
        write_adapter(fs::path(a.out) / (name + ".ttlf"), *tt, spec.adapter, spec.storage_dtype, name);
      } else if (const auto* lora = std::get_if<LoRALinear>(&p)) {
        write_dense(fs::path(a.out) / (name + ".lora_B.bin"), lora->b, spec.storage_dtype);
        write_dense(fs::path(a.out) / (name + ".lora_A.bin"), lora->a, spec.storage_dtype);
      }
    };
    save(model.query(), "W_q");
    save(model.value_proj(), "W_v");
    summary["adapter_params"] = model.adapter_count();
    summary["head_params"] = model.head_count();
    summary["frozen_params"] = model.frozen_count();
  }
  write_text(fs::path(a.out) / "summary.json", summary.dump(2) + "\n");
  out << "best epoch " << result.best_epoch << ", stopped at " << result.stopped_epoch
      << (result.early_stopped ? " (early stop)" : "") << ", val loss " << result.best_val_loss << ", val metric "
      << result.best_val_metric << "\n";
  return 0;
}

int run_sweep(const SweepArgs& a, std::ostream& out, std::ostream& err) {
  auto spec = parse_sweep_spec(load_json(a.spec));
  if (a.workers > 0) spec.workers = a.workers;
  fs::create_directories(a.out);
  const auto enumeration = enumerate_trials(spec.space());
  const TaskData data(spec.task);
  const auto factory = training_trial_factory(data, spec.adapter, spec.train, spec.schedule.back());
  const auto report = successive_halving(enumeration.trials, spec.halving(), factory);

  write_text(fs::path(a.out) / "sweep_results.csv", sweep_results_csv(report));
  write_text(fs::path(a.out) / "pareto.csv", pareto_csv(report));
  out << report.trials.size() << " trials: " << report.count(TrialStatus::completed) << " completed, "
      << report.count(TrialStatus::pruned) << " pruned, " << report.count(TrialStatus::failed) << " failed\n";
  if (report.all_failed()) {
    err << "every trial failed; see the status column of sweep_results.csv\n";
    return 2;
  }
  emit_tradeoff_data(report, fs::path(a.out) / "tradeoff.csv");
  const auto& best = report.trials[*report.best];
  out << "best trial " << best.config.trial_id << ": shape " << best.config.map.label() << ", rank " << best.config.rank
      << ", alpha " << best.config.alpha << ", lr " << best.config.learning_rate << ", val loss " << best.best_val_loss
      << ", metric " << best.val_metric << "\n";
  out << "pareto frontier: " << report.pareto.size() << " trials\n";
  return 0;
}

struct GradcheckSetup {
  std::size_t m = 4, n = 4, rank = 2, batch = 3;
  std::vector<std::size_t> shape{2, 2, 2, 2};
  double alpha = 1.0, tol = 1e-4;
  InitSpec init{InitScheme::gaussian, 0.5};
  std::uint64_t seed = 0;
};

GradcheckSetup parse_gradcheck(const json& j) {
  GradcheckSetup g;
  for (const auto& [key, _] : j.items()) {
    static const std::set<std::string> ok{"m", "n", "shape", "rank", "batch", "alpha", "tol", "init", "sigma", "seed"};
    require(ok.count(key) > 0, "unknown key '" + key + "' in gradcheck config");
  }
  try {
    g.m = j.value("m", g.m);
    g.n = j.value("n", g.n);
    g.shape = j.value("shape", g.shape);
    g.rank = j.value("rank", g.rank);
    g.batch = j.value("batch", g.batch);
    g.alpha = j.value("alpha", g.alpha);
    g.tol = j.value("tol", g.tol);
    g.init.scheme = init_scheme_from_string(j.value("init", to_string(g.init.scheme)));
    g.init.sigma = j.value("sigma", g.init.sigma);
    g.seed = j.value("seed", g.seed);
  } catch (const json::exception& e) {
    throw ContractViolation(std::string("bad gradcheck config: ") + e.what());
  }
  require(g.batch >= 1, "batch must be >= 1");
  return g;
}

int run_gradcheck(const GradcheckArgs& a, std::ostream& out) {
  GradcheckSetup g;
  if (!a.config.empty()) {
    g = parse_gradcheck(load_json(a.config));
  } else {
    require(a.preset == "small", "unknown preset '" + a.preset + "' (available: small)");
  }
  std::mt19937_64 rng(g.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto gaussian = [&](std::size_t r, std::size_t c) {
    return Matrix::NullaryExpr(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c), [&]() { return normal(rng); });
  };
  const auto map = TensorizationMap::from_dims(g.m, g.n, g.shape);
  FrozenLinear base{gaussian(g.m, g.n), std::nullopt};
  const auto layer =
      make_adapted_linear(std::move(base), map, uniform_ranks(map.shape(), g.rank), g.alpha, g.seed + 1, g.init);
  const Matrix x = gaussian(g.batch, g.n);
  const Matrix target = gaussian(g.batch, g.m);
  const auto report = grad_check(layer, quadratic_loss(target), x, g.tol);
  out << "checked " << report.checked << " core entries, max relative error " << std::scientific << report.max_rel_err
      << std::defaultfloat << " (tol " << g.tol << "): " << (report.pass ? "PASS" : "FAIL") << "\n";
  if (!report.diagnostic.empty()) out << report.diagnostic << "\n";
  return report.pass ? 0 : 2;
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"TT-LoRA toolkit: tensor-train adapters, training, sweeps and accounting", "ttlora"};
  app.require_subcommand(1);
  app.fallthrough(false);

  DecomposeArgs dec;
  auto* c_dec = app.add_subcommand("decompose", "TT-SVD of a dense matrix file into a TTLF archive");
  c_dec->add_option("--input", dec.input, "dense matrix file (with .json sidecar)")->required();
  c_dec->add_option("--output", dec.output, "TTLF archive to write")->required();
  c_dec->add_option("--shape", dec.shape, "TT modes, rows first, e.g. 4,8,8,4")->required()->delimiter(',');
  c_dec->add_option("--max-rank", dec.max_rank, "largest bond dimension kept")->required();
  c_dec->add_option("--tol", dec.tol, "relative singular value cutoff");
  c_dec->add_option("--alpha", dec.alpha, "alpha recorded in the manifest");
  c_dec->add_option("--dtype", dec.dtype, "storage dtype: f16, f32 or f64");
  c_dec->add_option("--label", dec.label, "layer label recorded in the manifest");

  ReconstructArgs rec;
  auto* c_rec = app.add_subcommand("reconstruct", "contract a TTLF archive back to a dense update matrix");
  c_rec->add_option("--input", rec.input, "TTLF archive")->required();
  c_rec->add_option("--output", rec.output, "dense matrix file to write")->required();
  c_rec->add_option("--dtype", rec.dtype, "storage dtype: f16, f32 or f64");

  CountArgs cnt;
  auto* c_cnt = app.add_subcommand("count", "parameter, compression and storage accounting");
  c_cnt->add_option("--m", cnt.m, "matrix rows")->required();
  c_cnt->add_option("--n", cnt.n, "matrix columns")->required();
  c_cnt->add_option("--shape", cnt.shape, "TT modes whose product is m*n")->required()->delimiter(',');
  c_cnt->add_option("--rank", cnt.rank, "uniform internal TT rank")->required();
  c_cnt->add_option("--wrapped", cnt.wrapped, "number of adapted matrices of this size");
  c_cnt->add_flag("--json", cnt.as_json, "print JSON instead of text");

  InitArgs ini;
  auto* c_ini = app.add_subcommand("init", "write a randomly initialised TTLF archive");
  c_ini->add_option("--m", ini.m, "matrix rows")->required();
  c_ini->add_option("--n", ini.n, "matrix columns")->required();
  c_ini->add_option("--shape", ini.shape, "TT modes, rows first")->required()->delimiter(',');
  c_ini->add_option("--rank", ini.rank, "uniform internal TT rank")->required();
  c_ini->add_option("--output", ini.output, "TTLF archive to write")->required();
  c_ini->add_option("--seed", ini.seed, "RNG seed");
  c_ini->add_option("--init", ini.scheme, "gaussian or gaussian-all-but-last-zero");
  c_ini->add_option("--sigma", ini.sigma, "standard deviation of the Gaussian cores");
  c_ini->add_option("--alpha", ini.alpha, "alpha recorded in the manifest");
  c_ini->add_option("--dtype", ini.dtype, "storage dtype: f16, f32 or f64");
  c_ini->add_option("--label", ini.label, "layer label recorded in the manifest");

  TrainArgs trn;
  auto* c_trn = app.add_subcommand("train", "train one adapter from a JSON config");
  c_trn->add_option("--config", trn.config, "train config JSON")->required();
  c_trn->add_option("--out", trn.out, "output directory")->required();
  c_trn->add_flag("--timing", trn.timing, "record wall-clock seconds in history.csv");

  SweepArgs swp;
  auto* c_swp = app.add_subcommand("sweep", "successive-halving search from a JSON sweep spec");
  c_swp->add_option("--spec", swp.spec, "sweep spec JSON")->required();
  c_swp->add_option("--out", swp.out, "output directory")->required();
  c_swp->add_option("--workers", swp.workers, "parallel trials (overrides the sweep file)");

  MergeArgs mrg;
  auto* c_mrg = app.add_subcommand("merge", "fold a TTLF adapter into a dense base weight");
  c_mrg->add_option("--adapter", mrg.adapter, "TTLF archive")->required();
  c_mrg->add_option("--base", mrg.base, "dense base weight file")->required();
  c_mrg->add_option("--output", mrg.output, "merged dense weight file")->required();
  c_mrg->add_option("--dtype", mrg.dtype, "storage dtype: f16, f32 or f64");

  GradcheckArgs gck;
  auto* c_gck = app.add_subcommand("gradcheck", "finite-difference check of the TT adapter gradients");
  auto* preset = c_gck->add_option("--preset", gck.preset, "built-in configuration (small)");
  auto* config = c_gck->add_option("--config", gck.config, "gradcheck config JSON");
  preset->excludes(config);
  config->excludes(preset);
  c_gck->require_option(1);

  std::vector<const char*> argv;
  for (const auto& s : args) argv.push_back(s.c_str());
  if (argv.empty()) argv.push_back("ttlora");
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (*c_dec) return run_decompose(dec, out);
    if (*c_rec) return run_reconstruct(rec, out);
    if (*c_cnt) return run_count(cnt, out);
    if (*c_ini) return run_init(ini, out);
    if (*c_trn) return run_train(trn, out);
    if (*c_swp) return run_sweep(swp, out, err);
    if (*c_mrg) return run_merge(mrg, out);
    if (*c_gck) return run_gradcheck(gck, out);
  } catch (const NumericalFailure& e) {
    err << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const ContractViolation& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << "\n";
    return 1;
  } catch (const fs::filesystem_error& e) {
    err << "I/O error: " << e.what() << "\n";
    return 1;
  }
  err << app.help();
  return 1;
}

int cli_main(const std::vector<std::string>& args) { return cli_main(args, std::cout, std::cerr); }

}  // namespace ttlora
