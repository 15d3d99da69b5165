#include "ttlora/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "ttlora/error.hpp"

namespace ttlora {

namespace {

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string with_commas(std::uint64_t v) {
  std::string digits = std::to_string(v);
  std::string out;
  for (std::size_t i = 0; i < digits.size(); ++i) {
    if (i && (digits.size() - i) % 3 == 0) out += ',';
    out += digits[i];
  }
  return out;
}

std::string join(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

// Published figures for specific configurations that the per-core sum does
// not reproduce. Surfaced so users comparing against them are not misled.
struct QuotedFigure {
  std::size_t m, n;
  std::vector<std::size_t> shape;
  std::size_t rank;
  std::size_t params;
  const char* ratio;
};

const std::vector<QuotedFigure>& quoted_figures() {
  static const std::vector<QuotedFigure> figures{
      {768, 2304, {12, 8, 8, 3, 8, 8, 12}, 5, 1135, "1560x"},
  };
  return figures;
}

}  // namespace

std::string format_significant(double value, int digits) {
  require(digits >= 1, "need at least one significant digit");
  if (!std::isfinite(value)) return num(value);
  if (value == 0.0) return "0";
  const int magnitude = static_cast<int>(std::floor(std::log10(std::fabs(value))));
  const int decimals = std::max(0, digits - 1 - magnitude);
  const double scale = std::pow(10.0, digits - 1 - magnitude);
  const double rounded = std::round(value * scale) / scale;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, rounded);
  return buf;
}

StorageEstimate storage_estimate(std::size_t params, DType dtype) {
  StorageEstimate s;
  s.dtype = dtype;
  s.bytes = params * bytes_per_element(dtype);
  s.kib = static_cast<double>(s.bytes) / 1024.0;
  s.kb = static_cast<double>(s.bytes) / 1000.0;
  return s;
}

const StorageEstimate& CompressionReport::storage_for(DType dtype) const {
  for (const auto& s : storage)
    if (s.dtype == dtype) return s;
  throw ContractViolation("no storage estimate for dtype " + to_string(dtype));
}

CompressionReport compression_report(std::size_t m, std::size_t n, const std::vector<std::size_t>& shape,
                                     std::size_t rank, std::size_t n_wrapped) {
  require(rank >= 1, "rank must be >= 1");
  const TTShape tt(shape);
  bool clamped = false;
  auto ranks = uniform_ranks(tt, rank, &clamped);
  auto report = compression_report(m, n, shape, ranks, n_wrapped);
  report.rank_clamped = clamped;
  for (const auto& q : quoted_figures()) {
    if (q.m == m && q.n == n && q.shape == shape && q.rank == rank && n_wrapped == 1 && !clamped &&
        q.params != report.adapter_params) {
      report.note = "A widely quoted figure for this configuration is " + with_commas(q.params) + " parameters (" +
                    q.ratio + "). Summing r_{i-1}*k_i*r_i over the cores gives " +
                    with_commas(report.adapter_params) + " (" + format_significant(report.compression_ratio()) +
                    "x); the quoted count is not reproduced by the per-core sum.";
    }
  }
  return report;
}

CompressionReport compression_report(std::size_t m, std::size_t n, const std::vector<std::size_t>& shape,
                                     const TTRanks& ranks, std::size_t n_wrapped) {
  require(m >= 1 && n >= 1, "matrix extents must be positive");
  require(n_wrapped >= 1, "at least one wrapped matrix is required");
  const TTShape tt(shape);
  require(tt.volume() == m * n, "shape [" + join(shape) + "] has " + std::to_string(tt.volume()) +
                                    " entries but the matrix has " + std::to_string(m * n));
  CompressionReport r;
  r.m = m;
  r.n = n;
  r.n_wrapped = n_wrapped;
  r.shape = shape;
  r.ranks = ranks.ranks();
  r.dense_params = n_wrapped * m * n;
  r.adapter_params = n_wrapped * param_count(tt, ranks);
  const auto g = std::gcd(r.dense_params, r.adapter_params);
  r.ratio_num = r.dense_params / g;
  r.ratio_den = r.adapter_params / g;
  for (auto dt : {DType::f16, DType::f32, DType::f64}) r.storage.push_back(storage_estimate(r.adapter_params, dt));
  return r;
}

std::string format_report(const CompressionReport& r) {
  std::ostringstream out;
  out << "matrix:            " << r.m << " x " << r.n;
  if (r.n_wrapped > 1) out << " (x" << r.n_wrapped << " wrapped)";
  out << "\nshape:             [" << join(r.shape) << "]\n";
  out << "ranks:             [" << join(r.ranks) << "]" << (r.rank_clamped ? " (clamped to exactness bound)" : "")
      << "\n";
  out << "dense params:      " << r.dense_params << "\n";
  out << "adapter params:    " << r.adapter_params << "\n";
  out << "compression ratio: " << format_significant(r.compression_ratio()) << "x (exact " << r.ratio_num << "/"
      << r.ratio_den << ")\n";
  for (const auto& s : r.storage) {
    out << "storage " << to_string(s.dtype) << ":       " << s.bytes << " bytes = " << format_significant(s.kib)
        << " KiB = " << format_significant(s.kb) << " kB\n";
  }
  if (r.note) out << "note: " << *r.note << "\n";
  return out.str();
}

namespace {

const char* kSweepHeader =
    "trial_id,shape,rank,alpha,lr,trainable_params,compression_ratio,best_val_loss,val_metric,epochs_run,status,seed\n";

void sweep_row(std::ostringstream& out, const TrialResult& t) {
  out << t.config.trial_id << ',' << t.config.map.label() << ',' << t.config.rank << ',' << num(t.config.alpha) << ','
      << num(t.config.learning_rate) << ',' << t.trainable_params << ',' << num(t.compression_ratio) << ','
      << num(t.best_val_loss) << ',' << num(t.val_metric) << ',' << t.epochs_run << ',' << to_string(t.status) << ','
      << t.seed << '\n';
}

}  // namespace

std::string sweep_results_csv(const SweepReport& report) {
  std::ostringstream out;
  out << kSweepHeader;
  for (const auto& t : report.trials) sweep_row(out, t);
  return out.str();
}

std::string pareto_csv(const SweepReport& report) {
  std::ostringstream out;
  out << kSweepHeader;
  for (auto idx : report.pareto) sweep_row(out, report.trials.at(idx));
  return out.str();
}

std::string tradeoff_csv(const SweepReport& report) {
  require(!report.trials.empty(), "cannot emit trade-off data for an empty sweep report");
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < report.trials.size(); ++i)
    if (report.trials[i].status != TrialStatus::failed) order.push_back(i);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return report.trials[a].trainable_params < report.trials[b].trainable_params;
  });
  std::ostringstream out;
  out << "trainable_params,val_metric,alpha,rank,shape,pareto\n";
  for (auto idx : order) {
    const auto& t = report.trials[idx];
    const bool on_frontier = std::find(report.pareto.begin(), report.pareto.end(), idx) != report.pareto.end();
    out << t.trainable_params << ',' << num(t.val_metric) << ',' << num(t.config.alpha) << ',' << t.config.rank << ','
        << t.config.map.label() << ',' << (on_frontier ? "true" : "false") << '\n';
  }
  return out.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

void emit_tradeoff_data(const SweepReport& report, const std::filesystem::path& path) {
  write_text(path, tradeoff_csv(report));
}

}  // namespace ttlora
