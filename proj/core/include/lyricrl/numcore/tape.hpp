#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "lyricrl/numcore/param_set.hpp"

namespace lyricrl {

/// Handle to a node recorded on a Tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Reverse-mode autodiff over dense row-major matrices.
///
/// Every op appends a node holding its forward value and a closure that pushes
/// the node's gradient to its inputs. backward() walks the nodes in reverse
/// record order, which is a valid topological order because inputs always
/// precede outputs. A tape is built for a single loss evaluation and then
/// discarded.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaves.
  Var constant(Matrix value);
  Var scalar(double v);
  /// Binds a ParamSet entry. Repeated calls with the same entry return the same
  /// leaf; backward() accumulates into entry.grad.
  Var param(ParamSet& params, std::size_t index);

  // Linear algebra.
  Var matmul(Var a, Var b);      // a * b
  Var matmul_bt(Var a, Var b);   // a * b^T
  Var add(Var a, Var b);         // same shape
  Var sub(Var a, Var b);
  Var add_row(Var a, Var row);   // broadcast a 1 x n row over every row of a
  Var mul(Var a, Var b);         // elementwise
  Var scale(Var a, double s);
  Var add_scalar(Var a, double s);
  Var neg(Var a) { return scale(a, -1.0); }

  // Elementwise nonlinearities.
  Var exp(Var a);
  Var log(Var a);
  Var tanh(Var a);
  Var sigmoid(Var a);
  Var log_sigmoid(Var a);        // numerically stable log(1/(1+e^-x))
  Var abs(Var a);                // subgradient 0 at 0
  Var square(Var a);
  Var clamp(Var a, double lo, double hi);  // gradient passes only strictly inside
  Var minimum(Var a, Var b);     // ties route the gradient to a

  // Row-wise ops.
  Var softmax_rows(Var a);
  Var log_softmax_rows(Var a);
  /// Softmax of each row i restricted to columns j <= i; masked entries are 0.
  Var causal_softmax_rows(Var a);
  /// x_i * gain / sqrt(mean(x_i^2) + eps) for every row i.
  Var rms_norm_rows(Var a, Var gain, double eps = 1e-5);

  // Indexing.
  /// Rows of `table` selected by ids (embedding lookup).
  Var gather_rows(Var table, std::span<const int> ids);
  /// Column vector whose i-th entry is a(row_begin + i, cols[i]).
  Var pick(Var a, std::span<const int> cols, Eigen::Index row_begin = 0);
  Var slice_rows(Var a, Eigen::Index begin, Eigen::Index count);
  Var concat_rows(std::span<const Var> parts);

  // Reductions to 1 x 1.
  Var sum(Var a);
  Var mean(Var a);

  const Matrix& value(Var v) const { return nodes_[checked(v)].value; }
  double scalar_value(Var v) const;
  const Matrix& grad(Var v) const { return nodes_[checked(v)].grad; }
  std::string_view op_name(Var v) const { return nodes_[checked(v)].op; }
  std::size_t size() const { return nodes_.size(); }

  /// Index of the first node with a non-finite value, or -1.
  int first_non_finite() const;

  /// Seeds d(loss)/d(loss) = 1 and propagates. `loss` must be 1 x 1.
  void backward(Var loss);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::string_view op;
    std::function<void(Tape&, const Matrix&)> push;
    bool needs_grad = false;
  };
  struct Binding {
    ParamSet* params;
    std::size_t index;
    int node;
  };

  std::size_t checked(Var v) const;
  Var record(Matrix value, std::string_view op, std::vector<int> inputs,
             std::function<void(Tape&, const Matrix&)> push);
  void accumulate(int id, const Matrix& g);
  template <typename F>
  Var unary(Var a, std::string_view op, F&& f, Matrix deriv);

  std::vector<Node> nodes_;
  std::vector<Binding> bindings_;
  std::map<std::pair<const ParamSet*, std::size_t>, int> bound_;
};

}  // namespace lyricrl
