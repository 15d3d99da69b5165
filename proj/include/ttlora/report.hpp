#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ttlora/hypersearch.hpp"
#include "ttlora/ttlf.hpp"

namespace ttlora {

struct StorageEstimate {
  DType dtype = DType::f16;
  std::size_t bytes = 0;
  double kib = 0.0;  // bytes / 1024
  double kb = 0.0;   // bytes / 1000
};

/// Parameter and storage accounting for TT adapters on `n_wrapped` m x n
/// matrices. Only adapter parameters are counted, never the frozen base.
struct CompressionReport {
  std::size_t m = 0;
  std::size_t n = 0;
  std::size_t n_wrapped = 1;
  std::vector<std::size_t> shape;
  std::vector<std::size_t> ranks;
  bool rank_clamped = false;
  std::size_t dense_params = 0;    // n_wrapped * m * n
  std::size_t adapter_params = 0;  // n_wrapped * sum r_{i-1} k_i r_i
  /// dense_params / adapter_params as a reduced fraction, so that
  /// ratio_num * adapter_params == ratio_den * dense_params exactly.
  std::uint64_t ratio_num = 0;
  std::uint64_t ratio_den = 1;
  std::vector<StorageEstimate> storage;  // f16, f32, f64
  /// Set when a widely quoted figure for this configuration disagrees with
  /// the per-core sum.
  std::optional<std::string> note;

  double compression_ratio() const { return static_cast<double>(ratio_num) / static_cast<double>(ratio_den); }
  const StorageEstimate& storage_for(DType dtype) const;
};

/// Requires prod(shape) == m * n. Uniform `rank` is clamped to the
/// exactness bound, which is recorded in the result.
CompressionReport compression_report(std::size_t m, std::size_t n, const std::vector<std::size_t>& shape,
                                     std::size_t rank, std::size_t n_wrapped = 1);
CompressionReport compression_report(std::size_t m, std::size_t n, const std::vector<std::size_t>& shape,
                                     const TTRanks& ranks, std::size_t n_wrapped = 1);

StorageEstimate storage_estimate(std::size_t params, DType dtype);

/// Human-readable text printed by `count`. Ratios use 4 significant figures.
std::string format_report(const CompressionReport& report);
std::string format_significant(double value, int digits = 4);

/// CSV bodies; headers are the first line.
std::string sweep_results_csv(const SweepReport& report);
std::string pareto_csv(const SweepReport& report);
/// trainable_params,val_metric,alpha,rank,shape,pareto sorted by params
/// ascending (stable on enumeration order). Every non-failed trial appears.
std::string tradeoff_csv(const SweepReport& report);

/// Writes tradeoff_csv. An empty report is a ContractViolation; a path that
/// cannot be written throws IoError.
void emit_tradeoff_data(const SweepReport& report, const std::filesystem::path& path);

/// Writes text to a file, throwing IoError on failure.
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace ttlora
