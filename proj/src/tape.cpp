#include "ttlora/tape.hpp"

#include <cmath>
#include <memory>
#include <numbers>

#include "ttlora/detail/tt_contraction.hpp"
#include "ttlora/error.hpp"

namespace ttlora {

namespace {

void require_same_extents(const Matrix& a, const Matrix& b, const char* op) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), std::string(op) + ": operand extents differ");
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluK = 0.044715;

}  // namespace

Var Tape::push(Matrix value, bool needs_grad, std::function<void(Tape&, const Node&)> back) {
  require(!backward_done_, "cannot record onto a tape that has already been replayed");
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  if (needs_grad) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

const Tape::Node& Tape::node(Var v) const {
  require(v.valid() && v.id < nodes_.size(), "tape variable does not belong to this tape");
  return nodes_[v.id];
}

void Tape::accumulate(Var v, const Matrix& g) {
  Node& n = nodes_[v.id];
  if (!n.needs_grad) return;
  if (n.grad.size() == 0)
    n.grad = g;
  else
    n.grad += g;
}

Var Tape::constant(Matrix value) { return push(std::move(value), false); }

Var Tape::parameter(Matrix value) { return push(std::move(value), true, [](Tape&, const Node&) {}); }

const Matrix& Tape::value(Var v) const { return node(v).value; }

Matrix Tape::grad(Var v) const {
  const Node& n = node(v);
  if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

bool Tape::requires_grad(Var v) const { return node(v).needs_grad; }

Var Tape::add(Var a, Var b) {
  require_same_extents(value(a), value(b), "add");
  return push(value(a) + value(b), requires_grad(a) || requires_grad(b), [a, b](Tape& t, const Node& self) {
    t.accumulate(a, self.grad);
    t.accumulate(b, self.grad);
  });
}

Var Tape::scale(Var a, double s) {
  return push(s * value(a), requires_grad(a), [a, s](Tape& t, const Node& self) { t.accumulate(a, s * self.grad); });
}

Var Tape::matmul(Var a, Var b) {
  require(value(a).cols() == value(b).rows(), "matmul: inner extents differ");
  return push(value(a) * value(b), requires_grad(a) || requires_grad(b), [a, b](Tape& t, const Node& self) {
    if (t.requires_grad(a)) t.accumulate(a, self.grad * t.value(b).transpose());
    if (t.requires_grad(b)) t.accumulate(b, t.value(a).transpose() * self.grad);
  });
}

Var Tape::matmul_nt(Var a, Var b) {
  require(value(a).cols() == value(b).cols(), "matmul_nt: inner extents differ");
  return push(value(a) * value(b).transpose(), requires_grad(a) || requires_grad(b),
              [a, b](Tape& t, const Node& self) {
                if (t.requires_grad(a)) t.accumulate(a, self.grad * t.value(b));
                if (t.requires_grad(b)) t.accumulate(b, self.grad.transpose() * t.value(a));
              });
}

Var Tape::linear_frozen(Var x, const Matrix* weight) {
  require(weight != nullptr && value(x).cols() == weight->cols(), "linear_frozen: input width != weight columns");
  return push(value(x) * weight->transpose(), requires_grad(x),
              [x, weight](Tape& t, const Node& self) { t.accumulate(x, self.grad * *weight); });
}

Var Tape::add_row_frozen(Var x, const Vector* bias) {
  require(bias != nullptr && value(x).cols() == bias->size(), "add_row_frozen: bias length != width");
  Matrix out = value(x);
  out.rowwise() += bias->transpose();
  return push(std::move(out), requires_grad(x), [x](Tape& t, const Node& self) { t.accumulate(x, self.grad); });
}

Var Tape::add_row(Var x, Var row) {
  require(value(row).rows() == 1 && value(row).cols() == value(x).cols(), "add_row: row must be 1 x width");
  Matrix out = value(x);
  out.rowwise() += value(row).row(0);
  return push(std::move(out), requires_grad(x) || requires_grad(row), [x, row](Tape& t, const Node& self) {
    t.accumulate(x, self.grad);
    if (t.requires_grad(row)) t.accumulate(row, self.grad.colwise().sum());
  });
}

Var Tape::gelu(Var a) {
  const Matrix& in = value(a);
  Matrix out = in.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::tanh(kGeluC * (v + kGeluK * v * v * v))); });
  return push(std::move(out), requires_grad(a), [a](Tape& t, const Node& self) {
    Matrix d = t.value(a).unaryExpr([](double v) {
      const double th = std::tanh(kGeluC * (v + kGeluK * v * v * v));
      return 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * kGeluC * (1.0 + 3.0 * kGeluK * v * v);
    });
    t.accumulate(a, self.grad.cwiseProduct(d));
  });
}

Var Tape::softmax_rows(Var a) {
  const Matrix& in = value(a);
  Matrix out(in.rows(), in.cols());
  for (Eigen::Index r = 0; r < in.rows(); ++r) {
    const double mx = in.row(r).maxCoeff();
    out.row(r) = (in.row(r).array() - mx).exp();
    out.row(r) /= out.row(r).sum();
  }
  return push(std::move(out), requires_grad(a), [a](Tape& t, const Node& self) {
    const Matrix& y = self.value;
    Matrix g(y.rows(), y.cols());
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      const double dot = self.grad.row(r).dot(y.row(r));
      g.row(r) = y.row(r).cwiseProduct((self.grad.row(r).array() - dot).matrix());
    }
    t.accumulate(a, g);
  });
}

Var Tape::mean_rows(Var a) {
  const Matrix& in = value(a);
  require(in.rows() > 0, "mean_rows: empty input");
  const double inv = 1.0 / static_cast<double>(in.rows());
  Matrix out = in.colwise().sum() * inv;
  const Eigen::Index rows = in.rows();
  return push(std::move(out), requires_grad(a), [a, rows, inv](Tape& t, const Node& self) {
    t.accumulate(a, self.grad.replicate(rows, 1) * inv);
  });
}

Var Tape::sum(std::span<const Var> terms) {
  require(!terms.empty(), "sum: no terms");
  Matrix out = value(terms[0]);
  bool needs = requires_grad(terms[0]);
  for (std::size_t i = 1; i < terms.size(); ++i) {
    require_same_extents(out, value(terms[i]), "sum");
    out += value(terms[i]);
    needs = needs || requires_grad(terms[i]);
  }
  std::vector<Var> ids(terms.begin(), terms.end());
  return push(std::move(out), needs, [ids = std::move(ids)](Tape& t, const Node& self) {
    for (auto v : ids) t.accumulate(v, self.grad);
  });
}

Var Tape::tt_apply(std::span<const Var> core_vars, const TensorizationMap& map, Var x) {
  const auto dims = map.dims();
  require(core_vars.size() == dims.size(), "tt_apply: core count does not match the tensorization");
  std::vector<TTCore> cores;
  cores.reserve(core_vars.size());
  std::size_t left = 1;
  bool needs = requires_grad(x);
  for (std::size_t i = 0; i < core_vars.size(); ++i) {
    const Matrix& v = value(core_vars[i]);
    require(v.rows() % static_cast<Eigen::Index>(dims[i]) == 0 &&
                static_cast<std::size_t>(v.rows()) == left * dims[i],
            "tt_apply: core " + std::to_string(i) + " extents do not chain");
    TTCore core(left, dims[i], static_cast<std::size_t>(v.cols()));
    std::copy(v.data(), v.data() + v.size(), core.data.begin());
    left = core.right;
    cores.push_back(std::move(core));
    needs = needs || requires_grad(core_vars[i]);
  }
  auto chain = std::make_shared<const TTCores>(std::move(cores));
  const Matrix& in = value(x);
  require(static_cast<std::size_t>(in.cols()) == map.n(), "tt_apply: input width != n");
  const auto batch = static_cast<std::size_t>(in.rows());
  Matrix out(in.rows(), static_cast<Eigen::Index>(map.m()));
  auto trace = std::make_shared<std::vector<std::vector<double>>>();
  detail::forward_rows(*chain, map, in.data(), batch, out.data(), needs ? trace.get() : nullptr);

  std::vector<Var> ids(core_vars.begin(), core_vars.end());
  return push(std::move(out), needs,
              [ids = std::move(ids), chain, trace, map, x, batch](Tape& t, const Node& self) {
                std::vector<std::vector<double>> core_grads;
                for (const auto& c : chain->cores()) core_grads.emplace_back(c.size(), 0.0);
                Matrix dx;
                const bool want_dx = t.requires_grad(x);
                if (want_dx) dx.resize(static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(map.n()));
                detail::backward_rows(*chain, map, batch, *trace, self.grad.data(), want_dx ? dx.data() : nullptr,
                                      core_grads);
                for (std::size_t i = 0; i < ids.size(); ++i) {
                  if (!t.requires_grad(ids[i])) continue;
                  const auto& c = (*chain)[i];
                  t.accumulate(ids[i], Eigen::Map<const Matrix>(core_grads[i].data(),
                                                                static_cast<Eigen::Index>(c.left * c.mode),
                                                                static_cast<Eigen::Index>(c.right)));
                }
                if (want_dx) t.accumulate(x, dx);
              });
}

Var Tape::cross_entropy(Var logits, std::span<const int> labels) {
  const Matrix& z = value(logits);
  require(static_cast<std::size_t>(z.rows()) == labels.size(), "cross_entropy: one label per row required");
  require(z.rows() > 0, "cross_entropy: empty batch");
  Matrix probs(z.rows(), z.cols());
  double total = 0.0;
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const int y = labels[static_cast<std::size_t>(r)];
    require(y >= 0 && y < z.cols(), "cross_entropy: label out of range");
    const double mx = z.row(r).maxCoeff();
    probs.row(r) = (z.row(r).array() - mx).exp();
    const double norm = probs.row(r).sum();
    probs.row(r) /= norm;
    total += std::log(norm) + mx - z(r, y);
  }
  const double inv = 1.0 / static_cast<double>(z.rows());
  Matrix out(1, 1);
  out(0, 0) = total * inv;
  std::vector<int> ys(labels.begin(), labels.end());
  return push(std::move(out), requires_grad(logits),
              [logits, probs = std::move(probs), ys = std::move(ys), inv](Tape& t, const Node& self) {
                Matrix g = probs;
                for (std::size_t r = 0; r < ys.size(); ++r) g(static_cast<Eigen::Index>(r), ys[r]) -= 1.0;
                t.accumulate(logits, g * (inv * self.grad(0, 0)));
              });
}

Var Tape::mse(Var prediction, const Matrix& target) {
  const Matrix& p = value(prediction);
  require_same_extents(p, target, "mse");
  require(p.size() > 0, "mse: empty input");
  Matrix diff = p - target;
  const double inv = 1.0 / static_cast<double>(p.size());
  Matrix out(1, 1);
  out(0, 0) = diff.squaredNorm() * inv;
  return push(std::move(out), requires_grad(prediction),
              [prediction, diff = std::move(diff), inv](Tape& t, const Node& self) {
                t.accumulate(prediction, diff * (2.0 * inv * self.grad(0, 0)));
              });
}

void Tape::backward(Var loss, double seed) {
  require(!nodes_.empty(), "backward called on an empty tape (no forward pass recorded)");
  require(!backward_done_, "backward already ran on this tape");
  const Node& root = node(loss);
  require(root.value.rows() == 1 && root.value.cols() == 1, "backward needs a scalar loss node");
  backward_done_ = true;
  if (!root.needs_grad) return;
  nodes_[loss.id].grad = Matrix::Constant(1, 1, seed);
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.back || n.grad.size() == 0) continue;
    n.back(*this, n);
  }
}

std::size_t GradBuffer::element_count() const {
  std::size_t total = 0;
  for (const auto& c : cores) total += c.size();
  return total;
}

void GradBuffer::zero() {
  for (auto& c : cores) std::fill(c.data.begin(), c.data.end(), 0.0);
  loss = 0.0;
}

Matrix core_matrix(const TTCore& core) {
  return Eigen::Map<const Matrix>(core.data.data(), static_cast<Eigen::Index>(core.left * core.mode),
                                  static_cast<Eigen::Index>(core.right));
}

std::vector<Var> register_cores(Tape& tape, const TTCores& cores) {
  std::vector<Var> vars;
  vars.reserve(cores.order());
  for (const auto& c : cores.cores()) vars.push_back(tape.parameter(core_matrix(c)));
  return vars;
}

Var adapted_forward(Tape& tape, const AdaptedLinear& layer, std::span<const Var> cores, Var x) {
  layer.validate();
  Var y = tape.linear_frozen(x, &layer.base.weight);
  if (layer.base.bias) y = tape.add_row_frozen(y, &*layer.base.bias);
  return tape.add(y, tape.scale(tape.tt_apply(cores, layer.map, x), layer.alpha));
}

GradBuffer backward(Tape& tape, Var loss, std::span<const Var> cores, double loss_grad) {
  tape.backward(loss, loss_grad);
  GradBuffer out;
  out.loss = tape.value(loss)(0, 0);
  std::size_t left = 1;
  for (auto v : cores) {
    const Matrix g = tape.grad(v);
    const auto right = static_cast<std::size_t>(g.cols());
    TTCore c(left, static_cast<std::size_t>(g.rows()) / left, right);
    std::copy(g.data(), g.data() + g.size(), c.data.begin());
    out.cores.push_back(std::move(c));
    left = right;
  }
  return out;
}

}  // namespace ttlora
