#include "ttlora/tt_core.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <iterator>
#include <numeric>
#include <random>

#include <Eigen/SVD>
#include <spdlog/spdlog.h>

#include "ttlora/error.hpp"

namespace ttlora {

namespace {

std::size_t product(std::span<const std::size_t> values) {
  return std::accumulate(values.begin(), values.end(), std::size_t{1}, std::multiplies<>());
}

std::string join(const std::vector<std::size_t>& values, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += sep;
    out += std::to_string(values[i]);
  }
  return out;
}

// All ordered factorizations of `value` into exactly `count` factors >= 2.
void ordered_factorizations(std::size_t value, std::size_t count, std::vector<std::size_t>& prefix,
                            std::vector<std::vector<std::size_t>>& out) {
  if (count == 0) {
    if (value == 1) out.push_back(prefix);
    return;
  }
  for (std::size_t f = 2; f <= value; ++f) {
    if (value % f != 0) continue;
    prefix.push_back(f);
    ordered_factorizations(value / f, count - 1, prefix, out);
    prefix.pop_back();
  }
}

}  // namespace

TTShape::TTShape(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
  require(dims_.size() >= 2, "TTShape needs at least 2 modes, got " + std::to_string(dims_.size()));
  for (auto k : dims_) require(k >= 1, "TTShape modes must be positive");
}

std::size_t TTShape::volume() const { return product(dims_); }

TTRanks::TTRanks(std::vector<std::size_t> ranks) : ranks_(std::move(ranks)) {
  require(ranks_.size() >= 2, "TTRanks needs at least r_0 and r_d");
  require(ranks_.front() == 1 && ranks_.back() == 1, "TTRanks boundary ranks must be 1");
  for (auto r : ranks_) require(r >= 1, "TTRanks entries must be positive");
}

TTRanks TTRanks::uniform(std::size_t order, std::size_t rank) {
  require(order >= 1, "uniform ranks need a positive order");
  require(rank >= 1, "rank must be positive");
  std::vector<std::size_t> r(order + 1, rank);
  r.front() = 1;
  r.back() = 1;
  return TTRanks(std::move(r));
}

std::size_t TTRanks::max_rank() const { return *std::max_element(ranks_.begin(), ranks_.end()); }

std::size_t param_count(const TTShape& shape, const TTRanks& ranks) {
  require(ranks.size() == shape.order() + 1,
          "param_count: expected " + std::to_string(shape.order() + 1) + " ranks, got " +
              std::to_string(ranks.size()));
  std::size_t total = 0;
  for (std::size_t i = 0; i < shape.order(); ++i) total += ranks[i] * shape[i] * ranks[i + 1];
  return total;
}

std::vector<std::size_t> rank_bounds(const TTShape& shape) {
  const auto& dims = shape.dims();
  std::vector<std::size_t> bounds(dims.size() + 1, 1);
  for (std::size_t i = 1; i < dims.size(); ++i) {
    // Saturating products: bounds only matter up to the requested rank.
    std::size_t left = 1, right = 1;
    for (std::size_t j = 0; j < i && left < (std::size_t{1} << 40); ++j) left *= dims[j];
    for (std::size_t j = i; j < dims.size() && right < (std::size_t{1} << 40); ++j) right *= dims[j];
    bounds[i] = std::min(left, right);
  }
  return bounds;
}

TTRanks clamp_ranks(const TTShape& shape, const TTRanks& ranks, bool* clamped) {
  require(ranks.size() == shape.order() + 1, "clamp_ranks: rank/shape length mismatch");
  auto bounds = rank_bounds(shape);
  std::vector<std::size_t> out = ranks.ranks();
  bool changed = false;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i] > bounds[i]) {
      out[i] = bounds[i];
      changed = true;
    }
  }
  if (changed) {
    spdlog::warn("TT ranks [{}] exceed the exactness bound for shape [{}]; clamped to [{}]",
                 join(ranks.ranks(), ","), join(shape.dims(), ","), join(out, ","));
  }
  if (clamped) *clamped = changed;
  return TTRanks(std::move(out));
}

TTRanks uniform_ranks(const TTShape& shape, std::size_t rank, bool* clamped) {
  return clamp_ranks(shape, TTRanks::uniform(shape.order(), rank), clamped);
}

TensorizationMap::TensorizationMap(std::size_t m, std::size_t n, std::vector<std::size_t> row_modes,
                                   std::vector<std::size_t> col_modes)
    : m_(m), n_(n), row_modes_(std::move(row_modes)), col_modes_(std::move(col_modes)) {
  require(m_ >= 1 && n_ >= 1, "TensorizationMap extents must be positive");
  for (auto k : row_modes_) require(k >= 1, "row modes must be positive");
  for (auto k : col_modes_) require(k >= 1, "col modes must be positive");
  require(product(row_modes_) == m_,
          "row modes [" + join(row_modes_, ",") + "] do not multiply to m=" + std::to_string(m_));
  require(product(col_modes_) == n_,
          "col modes [" + join(col_modes_, ",") + "] do not multiply to n=" + std::to_string(n_));
  require(row_modes_.size() + col_modes_.size() >= 2, "a tensorization needs at least 2 modes");
}

TensorizationMap TensorizationMap::from_dims(std::size_t m, std::size_t n, const std::vector<std::size_t>& dims) {
  std::size_t prefix = 1;
  for (std::size_t p = 0; p <= dims.size(); ++p) {
    if (p > 0) prefix *= dims[p - 1];
    if (prefix == m && product(std::span(dims).subspan(p)) == n) return from_split(m, n, dims, p);
    if (prefix > m) break;
  }
  throw ContractViolation("shape [" + join(dims, ",") + "] does not factor a " + std::to_string(m) + "x" +
                          std::to_string(n) + " matrix as row modes followed by column modes");
}

TensorizationMap TensorizationMap::from_split(std::size_t m, std::size_t n, const std::vector<std::size_t>& dims,
                                              std::size_t split) {
  require(split <= dims.size(), "split point beyond shape length");
  return TensorizationMap(m, n, std::vector<std::size_t>(dims.begin(), dims.begin() + split),
                          std::vector<std::size_t>(dims.begin() + split, dims.end()));
}

TTShape TensorizationMap::shape() const { return TTShape(dims()); }

std::vector<std::size_t> TensorizationMap::dims() const {
  std::vector<std::size_t> d = row_modes_;
  d.insert(d.end(), col_modes_.begin(), col_modes_.end());
  return d;
}

std::vector<std::size_t> TensorizationMap::delinearize(std::size_t i, std::size_t j) const {
  require(i < m_ && j < n_, "matrix index out of range");
  std::vector<std::size_t> idx(row_modes_.size() + col_modes_.size());
  for (std::size_t t = row_modes_.size(); t-- > 0;) {
    idx[t] = i % row_modes_[t];
    i /= row_modes_[t];
  }
  for (std::size_t t = col_modes_.size(); t-- > 0;) {
    idx[row_modes_.size() + t] = j % col_modes_[t];
    j /= col_modes_[t];
  }
  return idx;
}

std::pair<std::size_t, std::size_t> TensorizationMap::linearize(std::span<const std::size_t> multi_index) const {
  require(multi_index.size() == row_modes_.size() + col_modes_.size(), "multi-index length mismatch");
  std::size_t i = 0, j = 0;
  for (std::size_t t = 0; t < row_modes_.size(); ++t) {
    require(multi_index[t] < row_modes_[t], "multi-index out of range");
    i = i * row_modes_[t] + multi_index[t];
  }
  for (std::size_t t = 0; t < col_modes_.size(); ++t) {
    const auto v = multi_index[row_modes_.size() + t];
    require(v < col_modes_[t], "multi-index out of range");
    j = j * col_modes_[t] + v;
  }
  return {i, j};
}

std::string TensorizationMap::label() const { return join(row_modes_, "x") + "|" + join(col_modes_, "x"); }

TTCores::TTCores(std::vector<TTCore> cores) : cores_(std::move(cores)) {
  require(cores_.size() >= 2, "TTCores needs at least 2 cores");
  require(cores_.front().left == 1 && cores_.back().right == 1, "TTCores boundary ranks must be 1");
  for (std::size_t i = 0; i < cores_.size(); ++i) {
    const auto& c = cores_[i];
    require(c.left >= 1 && c.mode >= 1 && c.right >= 1, "core extents must be positive");
    require(c.data.size() == c.left * c.mode * c.right, "core data size does not match its extents");
    if (i + 1 < cores_.size())
      require(c.right == cores_[i + 1].left, "core " + std::to_string(i) + " trailing rank " +
                                                  std::to_string(c.right) + " != core " +
                                                  std::to_string(i + 1) + " leading rank " +
                                                  std::to_string(cores_[i + 1].left));
  }
}

TTCores::TTCores(const TTShape& shape, const TTRanks& ranks) {
  require(ranks.size() == shape.order() + 1, "TTCores: rank/shape length mismatch");
  cores_.reserve(shape.order());
  for (std::size_t i = 0; i < shape.order(); ++i) cores_.emplace_back(ranks[i], shape[i], ranks[i + 1]);
}

TTShape TTCores::shape() const {
  std::vector<std::size_t> dims;
  for (const auto& c : cores_) dims.push_back(c.mode);
  return TTShape(std::move(dims));
}

TTRanks TTCores::ranks() const {
  std::vector<std::size_t> r{1};
  for (const auto& c : cores_) r.push_back(c.right);
  return TTRanks(std::move(r));
}

std::size_t TTCores::element_count() const {
  std::size_t total = 0;
  for (const auto& c : cores_) total += c.size();
  return total;
}

std::string to_string(InitScheme scheme) {
  switch (scheme) {
    case InitScheme::gaussian: return "gaussian";
    case InitScheme::gaussian_all_but_last_zero: return "gaussian_all_but_last_zero";
  }
  return "unknown";
}

InitScheme init_scheme_from_string(const std::string& name) {
  if (name == "gaussian") return InitScheme::gaussian;
  if (name == "gaussian_all_but_last_zero") return InitScheme::gaussian_all_but_last_zero;
  throw ContractViolation("unknown init scheme '" + name + "'");
}

std::vector<TensorizationMap> factorize_dims(std::size_t m, std::size_t n, std::size_t d, std::size_t max_results,
                                             std::uint64_t seed) {
  require(d >= 2, "factorize_dims needs d >= 2");
  require(m >= 1 && n >= 1, "factorize_dims needs positive extents");
  std::vector<TensorizationMap> maps;
  for (std::size_t p = 0; p <= d; ++p) {
    std::vector<std::vector<std::size_t>> rows, cols;
    std::vector<std::size_t> scratch;
    ordered_factorizations(m, p, scratch, rows);
    if (rows.empty()) continue;
    ordered_factorizations(n, d - p, scratch, cols);
    for (const auto& r : rows)
      for (const auto& c : cols) maps.emplace_back(m, n, r, c);
  }
  std::sort(maps.begin(), maps.end(), [](const TensorizationMap& a, const TensorizationMap& b) {
    if (a.row_modes() != b.row_modes()) return a.row_modes() < b.row_modes();
    return a.col_modes() < b.col_modes();
  });
  if (max_results > 0 && maps.size() > max_results) {
    std::vector<TensorizationMap> sample;
    sample.reserve(max_results);
    std::mt19937_64 rng(seed);
    std::sample(maps.begin(), maps.end(), std::back_inserter(sample), max_results, rng);
    return sample;
  }
  return maps;
}

TTCores tt_random_init(const TTShape& shape, const TTRanks& ranks, std::uint64_t seed, const InitSpec& init) {
  require(init.sigma > 0.0 && std::isfinite(init.sigma), "init sigma must be positive");
  TTCores cores(shape, ranks);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, init.sigma);
  const std::size_t last = cores.order() - 1;
  for (std::size_t i = 0; i < cores.order(); ++i) {
    if (init.scheme == InitScheme::gaussian_all_but_last_zero && i == last) continue;
    for (auto& v : cores[i].data) v = normal(rng);
  }
  return cores;
}

Matrix tt_reconstruct(const TTCores& cores, const TensorizationMap& map) {
  require(cores.order() == map.row_modes().size() + map.col_modes().size(),
          "tt_reconstruct: core count does not match the tensorization");
  for (std::size_t i = 0; i < cores.order(); ++i)
    require(cores[i].mode == map.dims()[i], "tt_reconstruct: core mode does not match the tensorization");

  // Running prefix contraction, viewed as (prefix volume) x (current rank).
  std::vector<double> acc{1.0};
  std::size_t prefix = 1;
  for (const auto& core : cores.cores()) {
    Eigen::Map<const Matrix> lhs(acc.data(), static_cast<Eigen::Index>(prefix), static_cast<Eigen::Index>(core.left));
    Eigen::Map<const Matrix> rhs(core.data.data(), static_cast<Eigen::Index>(core.left),
                                 static_cast<Eigen::Index>(core.mode * core.right));
    Matrix next = lhs * rhs;
    acc.assign(next.data(), next.data() + next.size());
    prefix *= core.mode;
  }
  return Eigen::Map<const Matrix>(acc.data(), static_cast<Eigen::Index>(map.m()), static_cast<Eigen::Index>(map.n()));
}

TTCores tt_svd(const Matrix& dense, const TensorizationMap& map, std::size_t max_rank, double tol) {
  require(max_rank >= 1, "tt_svd: max_rank must be >= 1");
  require(tol >= 0.0, "tt_svd: tol must be nonnegative");
  require(static_cast<std::size_t>(dense.rows()) == map.m() && static_cast<std::size_t>(dense.cols()) == map.n(),
          "tt_svd: dense extents do not match the tensorization");
  const auto dims = map.dims();
  const std::size_t d = dims.size();

  if (dense.isZero(0.0)) return TTCores(TTShape(dims), TTRanks::uniform(d, 1));

  std::vector<TTCore> cores;
  cores.reserve(d);
  // Remainder carried between unfoldings, row-major (rank * remaining volume).
  Matrix remainder = Eigen::Map<const Matrix>(dense.data(), 1, dense.size());
  std::size_t rank_left = 1;
  std::size_t rest = static_cast<std::size_t>(dense.size());
  for (std::size_t i = 0; i + 1 < d; ++i) {
    rest /= dims[i];
    Eigen::Map<const Matrix> unfolding(remainder.data(), static_cast<Eigen::Index>(rank_left * dims[i]),
                                       static_cast<Eigen::Index>(rest));
    Eigen::BDCSVD<Eigen::MatrixXd> svd(Eigen::MatrixXd(unfolding), Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sigma = svd.singularValues();
    std::size_t keep = 0;
    const double cutoff = tol * (sigma.size() > 0 ? sigma(0) : 0.0);
    while (keep < static_cast<std::size_t>(sigma.size()) && keep < max_rank && sigma(keep) > 0.0 &&
           sigma(keep) >= cutoff)
      ++keep;
    keep = std::max<std::size_t>(keep, 1);

    TTCore core(rank_left, dims[i], keep);
    Eigen::Map<Matrix>(core.data.data(), static_cast<Eigen::Index>(rank_left * dims[i]),
                       static_cast<Eigen::Index>(keep)) = svd.matrixU().leftCols(static_cast<Eigen::Index>(keep));
    cores.push_back(std::move(core));

    remainder = sigma.head(static_cast<Eigen::Index>(keep)).asDiagonal() *
                svd.matrixV().leftCols(static_cast<Eigen::Index>(keep)).transpose();
    rank_left = keep;
  }
  TTCore last(rank_left, dims[d - 1], 1);
  std::copy(remainder.data(), remainder.data() + remainder.size(), last.data.begin());
  cores.push_back(std::move(last));
  return TTCores(std::move(cores));
}

double relative_frobenius_error(const Matrix& approx, const Matrix& reference) {
  require(approx.rows() == reference.rows() && approx.cols() == reference.cols(),
          "relative_frobenius_error: extent mismatch");
  const double ref = reference.norm();
  const double diff = (approx - reference).norm();
  return ref > 0.0 ? diff / ref : diff;
}

}  // namespace ttlora
