#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "ttlora/error.hpp"
#include "ttlora/tt_linear.hpp"

using namespace ttlora;

namespace {

Matrix gaussian(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c) {
  std::normal_distribution<double> normal;
  return Matrix::NullaryExpr(r, c, [&]() { return normal(rng); });
}

AdaptedLinear random_layer(std::size_t m, std::size_t n, const std::vector<std::size_t>& dims, std::size_t rank,
                           double alpha, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  FrozenLinear base{gaussian(rng, static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n)),
                    Vector(gaussian(rng, static_cast<Eigen::Index>(m), 1))};
  const auto map = TensorizationMap::from_dims(m, n, dims);
  return make_adapted_linear(std::move(base), map, uniform_ranks(map.shape(), rank), alpha, seed + 1,
                             {InitScheme::gaussian, 1.0});
}

double rel(const Vector& a, const Vector& b) { return (a - b).norm() / std::max(b.norm(), 1e-300); }

}  // namespace

TEST_CASE("tt_matvec hand example and zero core") {
  const auto map = TensorizationMap::from_dims(2, 2, {2, 2});
  TTCores ones(map.shape(), TTRanks({1, 1, 1}));
  for (std::size_t i = 0; i < 2; ++i) std::fill(ones[i].data.begin(), ones[i].data.end(), 1.0);
  Vector x(2);
  x << 1, 2;
  const Vector y = tt_matvec(ones, map, x);
  CHECK(y(0) == 3.0);
  CHECK(y(1) == 3.0);
  std::fill(ones[0].data.begin(), ones[0].data.end(), 0.0);
  CHECK(tt_matvec(ones, map, x).isZero(0.0));
  CHECK_THROWS_AS(tt_matvec(ones, map, Vector::Ones(3)), ContractViolation);
}

TEST_CASE("tt_matvec against the elementwise dense oracle on 6x4") {
  const auto map = TensorizationMap(6, 4, {2, 3}, {2, 2});
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto cores = tt_random_init(map.shape(), uniform_ranks(map.shape(), 3), seed, {InitScheme::gaussian, 1.0});
    const Matrix dense = oracle::elementwise_reconstruct(cores, 6, 4, {2, 3}, {2, 2});
    std::mt19937_64 rng(seed);
    const Vector x = gaussian(rng, 4, 1);
    const auto expect = oracle::naive_matvec(dense, std::vector<double>(x.data(), x.data() + 4));
    CHECK(rel(tt_matvec(cores, map, x), Eigen::Map<const Vector>(expect.data(), 6)) < 1e-10);
  }
}

TEST_CASE("tt_matvec is linear and handles flattened-vector maps") {
  std::mt19937_64 rng(4);
  const auto map = TensorizationMap::from_dims(8, 12, {2, 4, 3, 4});
  const auto cores = tt_random_init(map.shape(), uniform_ranks(map.shape(), 4), 2, {InitScheme::gaussian, 1.0});
  const Vector x = gaussian(rng, 12, 1), z = gaussian(rng, 12, 1);
  const double a = 1.7, b = -0.3;
  const Vector lhs = tt_matvec(cores, map, a * x + b * z);
  const Vector rhs = a * tt_matvec(cores, map, x) + b * tt_matvec(cores, map, z);
  CHECK(rel(lhs, rhs) < 1e-10);

  const auto row_vec = TensorizationMap::from_dims(1, 24, {2, 3, 4});
  const auto rc = tt_random_init(row_vec.shape(), uniform_ranks(row_vec.shape(), 2), 5, {InitScheme::gaussian, 1.0});
  const Vector x24 = gaussian(rng, 24, 1);
  CHECK(rel(tt_matvec(rc, row_vec, x24), tt_reconstruct(rc, row_vec) * x24) < 1e-12);

  const auto col_vec = TensorizationMap::from_dims(24, 1, {2, 3, 4});
  const auto cc = tt_random_init(col_vec.shape(), uniform_ranks(col_vec.shape(), 2), 6, {InitScheme::gaussian, 1.0});
  const Vector x1 = Vector::Constant(1, 0.7);
  CHECK(rel(tt_matvec(cc, col_vec, x1), tt_reconstruct(cc, col_vec) * x1) < 1e-12);
}

TEST_CASE("tt_matmul_rows matches row-by-row tt_matvec") {
  std::mt19937_64 rng(8);
  const auto map = TensorizationMap::from_dims(9, 8, {3, 3, 2, 4});
  const auto cores = tt_random_init(map.shape(), uniform_ranks(map.shape(), 3), 1, {InitScheme::gaussian, 1.0});
  const Matrix x = gaussian(rng, 5, 8);
  const Matrix y = tt_matmul_rows(cores, map, x);
  for (Eigen::Index r = 0; r < 5; ++r)
    CHECK(rel(y.row(r).transpose(), tt_matvec(cores, map, x.row(r).transpose())) < 1e-12);
}

TEST_CASE("adapted_forward definitions") {
  auto layer = random_layer(6, 8, {2, 3, 2, 4}, 3, 1.5, 3);
  std::mt19937_64 rng(1);
  const Vector x = gaussian(rng, 8, 1);
  const Vector plain = layer.base.weight * x + *layer.base.bias;
  const Matrix dense = oracle::elementwise_reconstruct(layer.cores, 6, 8, {2, 3}, {2, 4});
  CHECK(rel(adapted_forward(layer, x), (layer.base.weight + 1.5 * dense) * x + *layer.base.bias) < 1e-10);

  layer.alpha = 0.0;
  CHECK(adapted_forward(layer, x) == plain);

  auto zero_start = make_adapted_linear(layer.base, layer.map, uniform_ranks(layer.map.shape(), 3), 4.0, 2,
                                        {InitScheme::gaussian_all_but_last_zero, 0.02});
  CHECK(adapted_forward(zero_start, x) == plain);
  CHECK_THROWS_AS(adapted_forward(layer, Vector::Ones(7)), ContractViolation);
}

TEST_CASE("merge agrees with the adapted forward") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto layer = random_layer(8, 8, {2, 4, 4, 2}, 2 + seed % 3, 0.5 + static_cast<double>(seed), seed);
    const auto merged = merge(layer);
    REQUIRE(merged.bias.has_value());
    CHECK(*merged.bias == *layer.base.bias);
    std::mt19937_64 rng(seed);
    for (int k = 0; k < 5; ++k) {
      const Vector x = gaussian(rng, 8, 1);
      CHECK(rel(merged.forward(x), adapted_forward(layer, x)) < 1e-10);
    }
  }
  auto zero = random_layer(4, 4, {2, 2, 2, 2}, 2, 3.0, 1);
  for (auto& v : zero.cores[3].data) v = 0.0;
  CHECK(merge(zero).weight == zero.base.weight);
  auto no_alpha = random_layer(4, 4, {2, 2, 2, 2}, 2, 0.0, 2);
  CHECK(merge(no_alpha).weight == no_alpha.base.weight);
}

TEST_CASE("batch_forward equals per-row adapted_forward") {
  const auto layer = random_layer(6, 4, {2, 3, 2, 2}, 2, 2.0, 7);
  std::mt19937_64 rng(7);
  const Matrix x = gaussian(rng, 8, 4);
  const Matrix y = batch_forward(layer, x);
  for (Eigen::Index r = 0; r < 8; ++r)
    CHECK(rel(y.row(r).transpose(), adapted_forward(layer, x.row(r).transpose())) < 1e-12);
  const Matrix zeros = batch_forward(layer, Matrix::Zero(3, 4));
  for (Eigen::Index r = 0; r < 3; ++r) CHECK(zeros.row(r).transpose() == *layer.base.bias);
  CHECK(rel(batch_forward(layer, x.topRows(1)).row(0).transpose(), adapted_forward(layer, x.row(0).transpose())) < 1e-13);
  CHECK_THROWS_AS(batch_forward(layer, Matrix::Zero(2, 5)), ContractViolation);
}

TEST_CASE("adapted layer validation") {
  auto layer = random_layer(6, 4, {2, 3, 2, 2}, 2, 1.0, 1);
  CHECK_NOTHROW(layer.validate());
  layer.base.weight = Matrix::Zero(4, 6);
  CHECK_THROWS_AS(layer.validate(), ContractViolation);
}
