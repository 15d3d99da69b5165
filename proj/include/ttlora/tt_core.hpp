#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace ttlora {

/// Dense matrices are row-major throughout so that a matrix buffer and the
/// row-major tensorization of that matrix share one memory layout.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Mode sizes k_1..k_d of a tensorized matrix.
class TTShape {
 public:
  TTShape() = default;
  explicit TTShape(std::vector<std::size_t> dims);

  std::size_t order() const { return dims_.size(); }
  std::size_t operator[](std::size_t i) const { return dims_[i]; }
  const std::vector<std::size_t>& dims() const { return dims_; }
  /// Product of all modes.
  std::size_t volume() const;

  bool operator==(const TTShape&) const = default;

 private:
  std::vector<std::size_t> dims_;
};

/// Bond dimensions r_0..r_d with r_0 = r_d = 1.
class TTRanks {
 public:
  TTRanks() = default;
  explicit TTRanks(std::vector<std::size_t> ranks);

  /// [1, r, r, ..., r, 1] for a chain of `order` cores (no clamping).
  static TTRanks uniform(std::size_t order, std::size_t rank);

  std::size_t size() const { return ranks_.size(); }
  std::size_t operator[](std::size_t i) const { return ranks_[i]; }
  const std::vector<std::size_t>& ranks() const { return ranks_; }
  std::size_t max_rank() const;

  bool operator==(const TTRanks&) const = default;

 private:
  std::vector<std::size_t> ranks_;
};

/// Sum over cores of r_{i-1} * k_i * r_i.
std::size_t param_count(const TTShape& shape, const TTRanks& ranks);

/// Largest rank at each bond for which a TT representation can be exact:
/// min(prod_{j<=i} k_j, prod_{j>i} k_j).
std::vector<std::size_t> rank_bounds(const TTShape& shape);

/// Clamps every internal rank to rank_bounds(shape). Logs a warning when any
/// entry changes; `clamped` (optional) reports whether that happened.
TTRanks clamp_ranks(const TTShape& shape, const TTRanks& ranks, bool* clamped = nullptr);

/// Uniform internal rank, clamped to the exactness bound.
TTRanks uniform_ranks(const TTShape& shape, std::size_t rank, bool* clamped = nullptr);

/// Bijection between an m x n matrix index (i, j) and a multi-index over
/// row_modes ++ col_modes. Rows occupy the leading modes and columns the
/// trailing modes, each in row-major order (last mode fastest). Either side
/// may be empty only when the matching extent is 1, which gives the plain
/// flattened-vector tensorization.
class TensorizationMap {
 public:
  TensorizationMap() = default;
  TensorizationMap(std::size_t m, std::size_t n, std::vector<std::size_t> row_modes,
                   std::vector<std::size_t> col_modes);

  /// Splits `dims` at the first prefix whose product is m (suffix must then
  /// multiply to n).
  static TensorizationMap from_dims(std::size_t m, std::size_t n, const std::vector<std::size_t>& dims);
  /// Same as from_dims but with an explicit split point (number of row modes).
  static TensorizationMap from_split(std::size_t m, std::size_t n, const std::vector<std::size_t>& dims,
                                     std::size_t split);

  std::size_t m() const { return m_; }
  std::size_t n() const { return n_; }
  const std::vector<std::size_t>& row_modes() const { return row_modes_; }
  const std::vector<std::size_t>& col_modes() const { return col_modes_; }
  std::size_t split() const { return row_modes_.size(); }
  TTShape shape() const;
  std::vector<std::size_t> dims() const;

  std::vector<std::size_t> delinearize(std::size_t i, std::size_t j) const;
  std::pair<std::size_t, std::size_t> linearize(std::span<const std::size_t> multi_index) const;

  /// "8x8|8x8" style label.
  std::string label() const;

  bool operator==(const TensorizationMap&) const = default;

 private:
  std::size_t m_ = 0;
  std::size_t n_ = 0;
  std::vector<std::size_t> row_modes_;
  std::vector<std::size_t> col_modes_;
};

/// Order-3 core with extents (left, mode, right); element (a, k, b) lives at
/// (a * mode + k) * right + b.
struct TTCore {
  std::size_t left = 1;
  std::size_t mode = 1;
  std::size_t right = 1;
  std::vector<double> data;

  TTCore() = default;
  TTCore(std::size_t left, std::size_t mode, std::size_t right)
      : left(left), mode(mode), right(right), data(left * mode * right, 0.0) {}

  std::size_t size() const { return data.size(); }
  double& at(std::size_t a, std::size_t k, std::size_t b) { return data[(a * mode + k) * right + b]; }
  double at(std::size_t a, std::size_t k, std::size_t b) const { return data[(a * mode + k) * right + b]; }

  bool operator==(const TTCore&) const = default;
};

/// A chain of cores whose neighbouring ranks agree and whose boundary ranks
/// are 1.
class TTCores {
 public:
  TTCores() = default;
  explicit TTCores(std::vector<TTCore> cores);
  /// All-zero cores of the given shape and ranks.
  TTCores(const TTShape& shape, const TTRanks& ranks);

  std::size_t order() const { return cores_.size(); }
  const TTCore& operator[](std::size_t i) const { return cores_[i]; }
  TTCore& operator[](std::size_t i) { return cores_[i]; }
  const std::vector<TTCore>& cores() const { return cores_; }

  TTShape shape() const;
  TTRanks ranks() const;
  std::size_t element_count() const;

  bool operator==(const TTCores&) const = default;

 private:
  std::vector<TTCore> cores_;
};

enum class InitScheme { gaussian, gaussian_all_but_last_zero };

struct InitSpec {
  InitScheme scheme = InitScheme::gaussian_all_but_last_zero;
  double sigma = 0.02;
};

std::string to_string(InitScheme scheme);
InitScheme init_scheme_from_string(const std::string& name);

/// Ordered factorizations of m and n into d modes in total (each mode >= 2),
/// sorted lexicographically by (row_modes, col_modes). With max_results > 0
/// and more candidates than that, a seeded sample of max_results maps is
/// returned, still in lexicographic order.
std::vector<TensorizationMap> factorize_dims(std::size_t m, std::size_t n, std::size_t d,
                                             std::size_t max_results = 0, std::uint64_t seed = 0);

TTCores tt_random_init(const TTShape& shape, const TTRanks& ranks, std::uint64_t seed, const InitSpec& init);

/// Contracts the chain back to the dense m x n matrix it represents.
Matrix tt_reconstruct(const TTCores& cores, const TensorizationMap& map);

/// Sequential truncated SVD. At every unfolding, singular values below
/// tol * (largest singular value) are dropped and at most max_rank kept.
TTCores tt_svd(const Matrix& dense, const TensorizationMap& map, std::size_t max_rank, double tol = 1e-12);

double relative_frobenius_error(const Matrix& approx, const Matrix& reference);

}  // namespace ttlora
