#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ttlora/tt_core.hpp"

namespace ttlora {

enum class DType { f16, f32, f64 };

std::size_t bytes_per_element(DType dtype);
std::string to_string(DType dtype);
DType dtype_from_string(const std::string& name);

/// Little-endian IEEE-754 encoding of `values` at `dtype` (f16 rounds to
/// nearest even).
std::vector<std::uint8_t> encode_values(std::span<const double> values, DType dtype);
std::vector<double> decode_values(std::span<const std::uint8_t> bytes, DType dtype);

/// Metadata stored alongside the cores of a TTLF v1 archive.
struct TTLFManifest {
  int format_version = 1;
  std::size_t m = 0;
  std::size_t n = 0;
  std::vector<std::size_t> dims;
  std::vector<std::size_t> ranks;
  std::size_t split = 0;  // number of leading modes that index rows
  double alpha = 1.0;
  DType dtype = DType::f32;
  std::uint64_t seed = 0;
  std::string scheme = "unspecified";
  std::string layer_label;

  bool operator==(const TTLFManifest&) const = default;
};

struct TTLFArchive {
  TTLFManifest manifest;
  TTCores cores;

  TensorizationMap map() const { return TensorizationMap::from_split(manifest.m, manifest.n, manifest.dims, manifest.split); }
};

/// Builds a manifest whose extents and ranks describe `cores` under `map`.
TTLFManifest make_manifest(const TTCores& cores, const TensorizationMap& map, double alpha, DType dtype,
                           std::uint64_t seed, std::string scheme, std::string layer_label);

/// Archive layout:
///   "TTLF" | u32 version | u64 manifest bytes | manifest JSON (sorted keys) |
///   per core: u64 payload bytes | payload (index order (r_{i-1}, k_i, r_i),
///   last index fastest)
/// All integers little-endian.
std::vector<std::uint8_t> encode_ttlf(const TTLFArchive& archive);
TTLFArchive decode_ttlf(std::span<const std::uint8_t> bytes);

void write_ttlf(const std::filesystem::path& path, const TTLFArchive& archive);
TTLFArchive read_ttlf(const std::filesystem::path& path);

/// Dense weights: raw row-major little-endian payload at `path` and a JSON
/// sidecar {"dtype","m","n"} at `path` + ".json".
std::filesystem::path dense_sidecar_path(const std::filesystem::path& path);
void write_dense(const std::filesystem::path& path, const Matrix& matrix, DType dtype);
Matrix read_dense(const std::filesystem::path& path, DType* dtype = nullptr);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace ttlora
