#include "lyricrl/numcore/tape.hpp"

#include <cmath>
#include <string>

#include "lyricrl/numcore/errors.hpp"

namespace lyricrl {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, std::string_view op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
  }
}

}  // namespace

std::size_t Tape::checked(Var v) const {
  if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) {
    throw ShapeError("tape: invalid variable handle");
  }
  return static_cast<std::size_t>(v.id);
}

Var Tape::record(Matrix value, std::string_view op, std::vector<int> inputs,
                 std::function<void(Tape&, const Matrix&)> push) {
  bool needs = false;
  for (int in : inputs) needs = needs || nodes_[static_cast<std::size_t>(in)].needs_grad;
  Node n;
  n.value = std::move(value);
  n.op = op;
  n.needs_grad = needs;
  if (needs) n.push = std::move(push);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size() - 1)};
}

void Tape::accumulate(int id, const Matrix& g) {
  auto& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.needs_grad) return;
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

Var Tape::constant(Matrix value) { return record(std::move(value), "constant", {}, nullptr); }

Var Tape::scalar(double v) { return constant(Matrix::Constant(1, 1, v)); }

Var Tape::param(ParamSet& params, std::size_t index) {
  const auto key = std::make_pair(static_cast<const ParamSet*>(&params), index);
  if (auto it = bound_.find(key); it != bound_.end()) return Var{it->second};
  Node n;
  n.value = params[index].value;
  n.op = "param";
  n.needs_grad = true;
  nodes_.push_back(std::move(n));
  const int id = static_cast<int>(nodes_.size() - 1);
  bound_.emplace(key, id);
  bindings_.push_back(Binding{&params, index, id});
  return Var{id};
}

Var Tape::matmul(Var a, Var b) {
  const Matrix& av = value(a);
  const Matrix& bv = value(b);
  if (av.cols() != bv.rows()) throw ShapeError("matmul: inner dimensions differ");
  Matrix out = av * bv;
  return record(std::move(out), "matmul", {a.id, b.id}, [a, b](Tape& t, const Matrix& g) {
    if (t.nodes_[a.id].needs_grad) t.accumulate(a.id, g * t.value(b).transpose());
    if (t.nodes_[b.id].needs_grad) t.accumulate(b.id, t.value(a).transpose() * g);
  });
}

Var Tape::matmul_bt(Var a, Var b) {
  const Matrix& av = value(a);
  const Matrix& bv = value(b);
  if (av.cols() != bv.cols()) throw ShapeError("matmul_bt: inner dimensions differ");
  Matrix out = av * bv.transpose();
  return record(std::move(out), "matmul_bt", {a.id, b.id}, [a, b](Tape& t, const Matrix& g) {
    if (t.nodes_[a.id].needs_grad) t.accumulate(a.id, g * t.value(b));
    if (t.nodes_[b.id].needs_grad) t.accumulate(b.id, g.transpose() * t.value(a));
  });
}

Var Tape::add(Var a, Var b) {
  require_same_shape(value(a), value(b), "add");
  Matrix out = value(a) + value(b);
  return record(std::move(out), "add", {a.id, b.id}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a.id, g);
    t.accumulate(b.id, g);
  });
}

Var Tape::sub(Var a, Var b) {
  require_same_shape(value(a), value(b), "sub");
  Matrix out = value(a) - value(b);
  return record(std::move(out), "sub", {a.id, b.id}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a.id, g);
    t.accumulate(b.id, -g);
  });
}

Var Tape::add_row(Var a, Var row) {
  const Matrix& av = value(a);
  const Matrix& rv = value(row);
  if (rv.rows() != 1 || rv.cols() != av.cols()) throw ShapeError("add_row: bias shape mismatch");
  Matrix out = av.rowwise() + rv.row(0);
  return record(std::move(out), "add_row", {a.id, row.id}, [a, row](Tape& t, const Matrix& g) {
    t.accumulate(a.id, g);
    if (t.nodes_[row.id].needs_grad) t.accumulate(row.id, g.colwise().sum());
  });
}

Var Tape::mul(Var a, Var b) {
  require_same_shape(value(a), value(b), "mul");
  Matrix out = value(a).cwiseProduct(value(b));
  return record(std::move(out), "mul", {a.id, b.id}, [a, b](Tape& t, const Matrix& g) {
    if (t.nodes_[a.id].needs_grad) t.accumulate(a.id, g.cwiseProduct(t.value(b)));
    if (t.nodes_[b.id].needs_grad) t.accumulate(b.id, g.cwiseProduct(t.value(a)));
  });
}

Var Tape::scale(Var a, double s) {
  Matrix out = value(a) * s;
  return record(std::move(out), "scale", {a.id}, [a, s](Tape& t, const Matrix& g) { t.accumulate(a.id, g * s); });
}

Var Tape::add_scalar(Var a, double s) {
  Matrix out = value(a).array() + s;
  return record(std::move(out), "add_scalar", {a.id}, [a](Tape& t, const Matrix& g) { t.accumulate(a.id, g); });
}

template <typename F>
Var Tape::unary(Var a, std::string_view op, F&& f, Matrix deriv) {
  Matrix out = f(value(a));
  return record(std::move(out), op, {a.id}, [a, d = std::move(deriv)](Tape& t, const Matrix& g) {
    t.accumulate(a.id, g.cwiseProduct(d));
  });
}

Var Tape::exp(Var a) {
  Matrix e = value(a).array().exp().matrix();
  return unary(a, "exp", [&](const Matrix&) { return e; }, e);
}

Var Tape::log(Var a) {
  const Matrix& x = value(a);
  return unary(a, "log", [](const Matrix& v) -> Matrix { return v.array().log().matrix(); },
               x.cwiseInverse());
}

Var Tape::tanh(Var a) {
  Matrix y = value(a).array().tanh().matrix();
  Matrix d = (1.0 - y.array().square()).matrix();
  return unary(a, "tanh", [&](const Matrix&) { return y; }, std::move(d));
}

Var Tape::sigmoid(Var a) {
  Matrix y = value(a).unaryExpr([](double x) {
    return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  });
  Matrix d = y.cwiseProduct((1.0 - y.array()).matrix());
  return unary(a, "sigmoid", [&](const Matrix&) { return y; }, std::move(d));
}

Var Tape::log_sigmoid(Var a) {
  const Matrix& x = value(a);
  Matrix y = x.unaryExpr([](double v) { return v >= 0 ? -std::log1p(std::exp(-v)) : v - std::log1p(std::exp(v)); });
  // d/dx log sigmoid(x) = 1 - sigmoid(x) = sigmoid(-x)
  Matrix d = x.unaryExpr([](double v) {
    return v >= 0 ? std::exp(-v) / (1.0 + std::exp(-v)) : 1.0 / (1.0 + std::exp(v));
  });
  return unary(a, "log_sigmoid", [&](const Matrix&) { return y; }, std::move(d));
}

Var Tape::abs(Var a) {
  const Matrix& x = value(a);
  Matrix d = x.unaryExpr([](double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
  return unary(a, "abs", [](const Matrix& v) -> Matrix { return v.cwiseAbs(); }, std::move(d));
}

Var Tape::square(Var a) {
  const Matrix& x = value(a);
  return unary(a, "square", [](const Matrix& v) -> Matrix { return v.array().square().matrix(); }, 2.0 * x);
}

Var Tape::clamp(Var a, double lo, double hi) {
  const Matrix& x = value(a);
  Matrix d = x.unaryExpr([lo, hi](double v) { return (v > lo && v < hi) ? 1.0 : 0.0; });
  return unary(
      a, "clamp", [lo, hi](const Matrix& v) -> Matrix { return v.cwiseMax(lo).cwiseMin(hi); }, std::move(d));
}

Var Tape::minimum(Var a, Var b) {
  require_same_shape(value(a), value(b), "minimum");
  const Matrix& av = value(a);
  const Matrix& bv = value(b);
  Matrix pick_a = (av.array() <= bv.array()).cast<double>().matrix();
  Matrix out = av.cwiseMin(bv);
  return record(std::move(out), "minimum", {a.id, b.id}, [a, b, m = std::move(pick_a)](Tape& t, const Matrix& g) {
    t.accumulate(a.id, g.cwiseProduct(m));
    if (t.nodes_[b.id].needs_grad) t.accumulate(b.id, g.cwiseProduct((1.0 - m.array()).matrix()));
  });
}

Var Tape::softmax_rows(Var a) {
  const Matrix& x = value(a);
  Matrix y(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double m = x.row(i).maxCoeff();
    y.row(i) = (x.row(i).array() - m).exp().matrix();
    y.row(i) /= y.row(i).sum();
  }
  Matrix yc = y;
  return record(std::move(y), "softmax_rows", {a.id}, [a, yc = std::move(yc)](Tape& t, const Matrix& g) {
    Matrix dx(yc.rows(), yc.cols());
    for (Eigen::Index i = 0; i < yc.rows(); ++i) {
      const double dot = g.row(i).dot(yc.row(i));
      dx.row(i) = yc.row(i).cwiseProduct((g.row(i).array() - dot).matrix());
    }
    t.accumulate(a.id, dx);
  });
}

Var Tape::log_softmax_rows(Var a) {
  const Matrix& x = value(a);
  Matrix y(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double m = x.row(i).maxCoeff();
    const double lse = m + std::log((x.row(i).array() - m).exp().sum());
    y.row(i) = (x.row(i).array() - lse).matrix();
  }
  Matrix p = y.array().exp().matrix();
  return record(std::move(y), "log_softmax_rows", {a.id}, [a, p = std::move(p)](Tape& t, const Matrix& g) {
    Matrix dx = g;
    for (Eigen::Index i = 0; i < p.rows(); ++i) dx.row(i) -= p.row(i) * g.row(i).sum();
    t.accumulate(a.id, dx);
  });
}

Var Tape::causal_softmax_rows(Var a) {
  const Matrix& x = value(a);
  if (x.rows() != x.cols()) throw ShapeError("causal_softmax_rows: expects a square matrix");
  const Eigen::Index n = x.rows();
  Matrix y = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto row = x.row(i).head(i + 1);
    const double m = row.maxCoeff();
    y.row(i).head(i + 1) = (row.array() - m).exp().matrix();
    y.row(i).head(i + 1) /= y.row(i).head(i + 1).sum();
  }
  Matrix yc = y;
  return record(std::move(y), "causal_softmax_rows", {a.id}, [a, yc = std::move(yc)](Tape& t, const Matrix& g) {
    const Eigen::Index n = yc.rows();
    Matrix dx = Matrix::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto yr = yc.row(i).head(i + 1);
      const auto gr = g.row(i).head(i + 1);
      const double dot = gr.dot(yr);
      dx.row(i).head(i + 1) = yr.cwiseProduct((gr.array() - dot).matrix());
    }
    t.accumulate(a.id, dx);
  });
}

Var Tape::rms_norm_rows(Var a, Var gain, double eps) {
  const Matrix& x = value(a);
  const Matrix& w = value(gain);
  if (w.rows() != 1 || w.cols() != x.cols()) throw ShapeError("rms_norm_rows: gain shape mismatch");
  const Eigen::Index n = x.rows();
  const double d = static_cast<double>(x.cols());
  Eigen::VectorXd inv(n);
  Matrix xhat(n, x.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    inv(i) = 1.0 / std::sqrt(x.row(i).squaredNorm() / d + eps);
    xhat.row(i) = x.row(i) * inv(i);
  }
  Matrix out = xhat.array().rowwise() * w.row(0).array();
  return record(std::move(out), "rms_norm_rows", {a.id, gain.id},
                [a, gain, xhat = std::move(xhat), inv = std::move(inv), d](Tape& t, const Matrix& g) {
                  const Matrix& w = t.value(gain);
                  if (t.nodes_[gain.id].needs_grad) t.accumulate(gain.id, g.cwiseProduct(xhat).colwise().sum());
                  if (t.nodes_[a.id].needs_grad) {
                    Matrix gx = g.array().rowwise() * w.row(0).array();
                    Matrix dx(gx.rows(), gx.cols());
                    for (Eigen::Index i = 0; i < gx.rows(); ++i) {
                      const double dot = gx.row(i).dot(xhat.row(i)) / d;
                      dx.row(i) = inv(i) * (gx.row(i) - xhat.row(i) * dot);
                    }
                    t.accumulate(a.id, dx);
                  }
                });
}

Var Tape::gather_rows(Var table, std::span<const int> ids) {
  const Matrix& tv = value(table);
  Matrix out(static_cast<Eigen::Index>(ids.size()), tv.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= tv.rows()) throw ShapeError("gather_rows: id out of range");
    out.row(static_cast<Eigen::Index>(i)) = tv.row(ids[i]);
  }
  std::vector<int> idv(ids.begin(), ids.end());
  return record(std::move(out), "gather_rows", {table.id}, [table, idv = std::move(idv)](Tape& t, const Matrix& g) {
    const Matrix& tv = t.value(table);
    Matrix dt = Matrix::Zero(tv.rows(), tv.cols());
    for (std::size_t i = 0; i < idv.size(); ++i) dt.row(idv[i]) += g.row(static_cast<Eigen::Index>(i));
    t.accumulate(table.id, dt);
  });
}

Var Tape::pick(Var a, std::span<const int> cols, Eigen::Index row_begin) {
  const Matrix& av = value(a);
  const auto n = static_cast<Eigen::Index>(cols.size());
  if (row_begin < 0 || row_begin + n > av.rows()) throw ShapeError("pick: row range out of bounds");
  Matrix out(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int c = cols[static_cast<std::size_t>(i)];
    if (c < 0 || c >= av.cols()) throw ShapeError("pick: column out of range");
    out(i, 0) = av(row_begin + i, c);
  }
  std::vector<int> cv(cols.begin(), cols.end());
  return record(std::move(out), "pick", {a.id}, [a, cv = std::move(cv), row_begin](Tape& t, const Matrix& g) {
    const Matrix& av = t.value(a);
    Matrix da = Matrix::Zero(av.rows(), av.cols());
    for (std::size_t i = 0; i < cv.size(); ++i) {
      da(row_begin + static_cast<Eigen::Index>(i), cv[i]) += g(static_cast<Eigen::Index>(i), 0);
    }
    t.accumulate(a.id, da);
  });
}

Var Tape::slice_rows(Var a, Eigen::Index begin, Eigen::Index count) {
  const Matrix& av = value(a);
  if (begin < 0 || count < 0 || begin + count > av.rows()) throw ShapeError("slice_rows: out of bounds");
  Matrix out = av.middleRows(begin, count);
  return record(std::move(out), "slice_rows", {a.id}, [a, begin, count](Tape& t, const Matrix& g) {
    const Matrix& av = t.value(a);
    Matrix da = Matrix::Zero(av.rows(), av.cols());
    da.middleRows(begin, count) = g;
    t.accumulate(a.id, da);
  });
}

Var Tape::concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  Eigen::Index rows = 0;
  const Eigen::Index cols = value(parts[0]).cols();
  std::vector<int> ids;
  for (Var p : parts) {
    if (value(p).cols() != cols) throw ShapeError("concat_rows: column mismatch");
    rows += value(p).rows();
    ids.push_back(p.id);
  }
  Matrix out(rows, cols);
  Eigen::Index r = 0;
  for (Var p : parts) {
    out.middleRows(r, value(p).rows()) = value(p);
    r += value(p).rows();
  }
  std::vector<int> inputs = ids;
  return record(std::move(out), "concat_rows", std::move(inputs), [ids](Tape& t, const Matrix& g) {
    Eigen::Index r = 0;
    for (int id : ids) {
      const Eigen::Index n = t.nodes_[static_cast<std::size_t>(id)].value.rows();
      t.accumulate(id, g.middleRows(r, n));
      r += n;
    }
  });
}

Var Tape::sum(Var a) {
  Matrix out = Matrix::Constant(1, 1, value(a).sum());
  return record(std::move(out), "sum", {a.id}, [a](Tape& t, const Matrix& g) {
    const Matrix& av = t.value(a);
    t.accumulate(a.id, Matrix::Constant(av.rows(), av.cols(), g(0, 0)));
  });
}

Var Tape::mean(Var a) {
  const double n = static_cast<double>(value(a).size());
  if (n == 0) throw ShapeError("mean: empty input");
  Matrix out = Matrix::Constant(1, 1, value(a).sum() / n);
  return record(std::move(out), "mean", {a.id}, [a, n](Tape& t, const Matrix& g) {
    const Matrix& av = t.value(a);
    t.accumulate(a.id, Matrix::Constant(av.rows(), av.cols(), g(0, 0) / n));
  });
}

double Tape::scalar_value(Var v) const {
  const Matrix& m = value(v);
  if (m.rows() != 1 || m.cols() != 1) throw ShapeError("scalar_value: not a 1x1 node");
  return m(0, 0);
}

int Tape::first_non_finite() const {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!nodes_[i].value.allFinite()) return static_cast<int>(i);
  }
  return -1;
}

void Tape::backward(Var loss) {
  const auto root = checked(loss);
  if (nodes_[root].value.size() != 1) throw ShapeError("backward: loss must be 1x1");
  for (auto& n : nodes_) n.grad.resize(0, 0);
  if (!nodes_[root].needs_grad) return;
  nodes_[root].grad = Matrix::Ones(1, 1);
  for (std::size_t i = root + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (!n.needs_grad || !n.push || n.grad.size() == 0) continue;
    n.push(*this, n.grad);
  }
  for (const auto& b : bindings_) {
    const auto& g = nodes_[static_cast<std::size_t>(b.node)].grad;
    if (g.size() != 0) (*b.params)[b.index].grad += g;
  }
}

}  // namespace lyricrl
