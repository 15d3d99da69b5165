#include "ttlora/tt_linear.hpp"

#include <utility>

#include "ttlora/detail/tt_contraction.hpp"
#include "ttlora/error.hpp"

namespace ttlora {

namespace detail {

namespace {

using ConstMap = Eigen::Map<const Matrix>;
using MutMap = Eigen::Map<Matrix>;

Eigen::Index ix(std::size_t v) { return static_cast<Eigen::Index>(v); }

}  // namespace

void forward_rows(const TTCores& cores, const TensorizationMap& map, const double* x, std::size_t batch, double* y,
                  std::vector<std::vector<double>>* trace) {
  const std::size_t d = cores.order();
  const std::size_t split = map.split();
  std::vector<double> state(x, x + batch * map.n());
  std::size_t per_sample = map.n();
  if (trace) trace->clear();

  for (std::size_t c = d; c-- > 0;) {
    const TTCore& core = cores[c];
    std::vector<double> next;
    if (c >= split) {
      const std::size_t outer = per_sample / (core.mode * core.right);
      ConstMap z(state.data(), ix(batch * outer), ix(core.mode * core.right));
      ConstMap g(core.data.data(), ix(core.left), ix(core.mode * core.right));
      next.resize(batch * outer * core.left);
      MutMap(next.data(), ix(batch * outer), ix(core.left)).noalias() = z * g.transpose();
      per_sample = outer * core.left;
    } else {
      const std::size_t inner = per_sample / core.right;
      ConstMap g(core.data.data(), ix(core.left * core.mode), ix(core.right));
      const std::size_t out_per = core.left * core.mode * inner;
      next.resize(batch * out_per);
      for (std::size_t b = 0; b < batch; ++b) {
        ConstMap w(state.data() + b * per_sample, ix(core.right), ix(inner));
        MutMap(next.data() + b * out_per, ix(core.left * core.mode), ix(inner)).noalias() = g * w;
      }
      per_sample = out_per;
    }
    if (trace) trace->push_back(std::move(state));
    state = std::move(next);
  }
  std::copy(state.begin(), state.end(), y);
}

void backward_rows(const TTCores& cores, const TensorizationMap& map, std::size_t batch,
                   const std::vector<std::vector<double>>& trace, const double* dy, double* dx,
                   std::vector<std::vector<double>>& core_grads) {
  const std::size_t d = cores.order();
  const std::size_t split = map.split();
  require(trace.size() == d, "backward_rows: contraction trace is incomplete");
  require(core_grads.size() == d, "backward_rows: gradient buffer count mismatch");

  std::vector<double> grad(dy, dy + batch * map.m());
  for (std::size_t c = 0; c < d; ++c) {
    const TTCore& core = cores[c];
    const auto& input = trace[d - 1 - c];
    const std::size_t per_in = input.size() / batch;
    auto& dcore = core_grads[c];
    require(dcore.size() == core.size(), "backward_rows: gradient buffer extents mismatch");
    std::vector<double> grad_in(input.size());
    if (c >= split) {
      const std::size_t outer = per_in / (core.mode * core.right);
      ConstMap z(input.data(), ix(batch * outer), ix(core.mode * core.right));
      ConstMap g(core.data.data(), ix(core.left), ix(core.mode * core.right));
      ConstMap dout(grad.data(), ix(batch * outer), ix(core.left));
      MutMap(dcore.data(), ix(core.left), ix(core.mode * core.right)).noalias() += dout.transpose() * z;
      MutMap(grad_in.data(), ix(batch * outer), ix(core.mode * core.right)).noalias() = dout * g;
    } else {
      const std::size_t inner = per_in / core.right;
      const std::size_t out_per = core.left * core.mode * inner;
      ConstMap g(core.data.data(), ix(core.left * core.mode), ix(core.right));
      MutMap dg(dcore.data(), ix(core.left * core.mode), ix(core.right));
      for (std::size_t b = 0; b < batch; ++b) {
        ConstMap w(input.data() + b * per_in, ix(core.right), ix(inner));
        ConstMap dout(grad.data() + b * out_per, ix(core.left * core.mode), ix(inner));
        dg.noalias() += dout * w.transpose();
        MutMap(grad_in.data() + b * per_in, ix(core.right), ix(inner)).noalias() = g.transpose() * dout;
      }
    }
    grad = std::move(grad_in);
  }
  if (dx) std::copy(grad.begin(), grad.end(), dx);
}

}  // namespace detail

namespace {

void check_cores_match(const TTCores& cores, const TensorizationMap& map) {
  const auto dims = map.dims();
  require(cores.order() == dims.size(), "TT cores have " + std::to_string(cores.order()) +
                                            " modes but the tensorization has " + std::to_string(dims.size()));
  for (std::size_t i = 0; i < dims.size(); ++i)
    require(cores[i].mode == dims[i], "TT core " + std::to_string(i) + " mode " + std::to_string(cores[i].mode) +
                                          " does not match tensorization mode " + std::to_string(dims[i]));
}

}  // namespace

Vector FrozenLinear::forward(const Vector& x) const {
  require(static_cast<std::size_t>(x.size()) == cols(), "FrozenLinear: input length mismatch");
  Vector y = weight * x;
  if (bias) y += *bias;
  return y;
}

void AdaptedLinear::validate() const {
  require(map.m() == base.rows() && map.n() == base.cols(),
          "AdaptedLinear: tensorization " + std::to_string(map.m()) + "x" + std::to_string(map.n()) +
              " does not match W0 " + std::to_string(base.rows()) + "x" + std::to_string(base.cols()));
  if (base.bias) require(static_cast<std::size_t>(base.bias->size()) == base.rows(), "AdaptedLinear: bias length");
  check_cores_match(cores, map);
}

AdaptedLinear make_adapted_linear(FrozenLinear base, const TensorizationMap& map, const TTRanks& ranks, double alpha,
                                  std::uint64_t seed, const InitSpec& init) {
  AdaptedLinear layer{std::move(base), tt_random_init(map.shape(), ranks, seed, init), map, alpha};
  layer.validate();
  return layer;
}

Vector tt_matvec(const TTCores& cores, const TensorizationMap& map, const Vector& x) {
  check_cores_match(cores, map);
  require(static_cast<std::size_t>(x.size()) == map.n(),
          "tt_matvec: input length " + std::to_string(x.size()) + " != n=" + std::to_string(map.n()));
  Vector y(static_cast<Eigen::Index>(map.m()));
  detail::forward_rows(cores, map, x.data(), 1, y.data(), nullptr);
  return y;
}

Matrix tt_matmul_rows(const TTCores& cores, const TensorizationMap& map, const Matrix& x) {
  check_cores_match(cores, map);
  require(static_cast<std::size_t>(x.cols()) == map.n(), "tt_matmul_rows: input width != n");
  Matrix y(x.rows(), static_cast<Eigen::Index>(map.m()));
  if (x.rows() > 0) detail::forward_rows(cores, map, x.data(), static_cast<std::size_t>(x.rows()), y.data(), nullptr);
  return y;
}

Vector adapted_forward(const AdaptedLinear& layer, const Vector& x) {
  layer.validate();
  require(static_cast<std::size_t>(x.size()) == layer.map.n(), "adapted_forward: input length mismatch");
  Vector y = layer.base.forward(x);
  if (layer.alpha != 0.0) y += layer.alpha * tt_matvec(layer.cores, layer.map, x);
  return y;
}

Matrix batch_forward(const AdaptedLinear& layer, const Matrix& x) {
  layer.validate();
  require(static_cast<std::size_t>(x.cols()) == layer.map.n(), "batch_forward: input width mismatch");
  Matrix y = x * layer.base.weight.transpose();
  if (layer.base.bias) y.rowwise() += layer.base.bias->transpose();
  if (layer.alpha != 0.0) y += layer.alpha * tt_matmul_rows(layer.cores, layer.map, x);
  return y;
}

FrozenLinear merge(const AdaptedLinear& layer) {
  layer.validate();
  FrozenLinear merged{layer.base.weight, layer.base.bias};
  merged.weight += layer.alpha * tt_reconstruct(layer.cores, layer.map);
  return merged;
}

}  // namespace ttlora
