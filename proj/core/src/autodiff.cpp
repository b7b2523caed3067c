#include "lyricrl/numcore/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "lyricrl/numcore/errors.hpp"

namespace lyricrl {

namespace {

void throw_if_non_finite(const Tape& tape, Var loss) {
  const int bad = tape.first_non_finite();
  if (bad >= 0) {
    throw NumericalError("non-finite value at node " + std::to_string(bad) + " (op '" +
                         std::string(tape.op_name(Var{bad})) + "')");
  }
  if (!std::isfinite(tape.scalar_value(loss))) throw NumericalError("non-finite loss");
}

}  // namespace

double eval_with_gradients(std::span<ParamSet* const> params, const LossFn& loss_fn) {
  for (ParamSet* p : params) p->zero_grad();
  Tape tape;
  const Var loss = loss_fn(tape);
  throw_if_non_finite(tape, loss);
  tape.backward(loss);
  return tape.scalar_value(loss);
}

double eval_with_gradients(ParamSet& params, const LossFn& loss_fn) {
  ParamSet* const ps[] = {&params};
  return eval_with_gradients(ps, loss_fn);
}

double eval_loss(const LossFn& loss_fn) {
  Tape tape;
  const Var loss = loss_fn(tape);
  throw_if_non_finite(tape, loss);
  return tape.scalar_value(loss);
}

double finite_diff_check(ParamSet& params, const LossFn& loss_fn, const FiniteDiffOptions& opts) {
  if (!(opts.epsilon >= 1e-6 && opts.epsilon <= 1e-3)) {
    throw DomainError("finite_diff_check: epsilon must lie in [1e-6, 1e-3]");
  }
  eval_with_gradients(params, loss_fn);
  const std::size_t n = params.total_values();
  std::vector<double> analytic(n);
  for (std::size_t i = 0; i < n; ++i) analytic[i] = params.grad_at(i);

  std::vector<std::size_t> coords(n);
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  if (opts.max_coords > 0 && opts.max_coords < n) {
    Rng rng(opts.seed);
    for (std::size_t i = 0; i < opts.max_coords; ++i) {
      const auto j = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(i), static_cast<std::int64_t>(n - 1)));
      std::swap(coords[i], coords[j]);
    }
    coords.resize(opts.max_coords);
  }

  double worst = 0.0;
  for (std::size_t c : coords) {
    double& x = params.value_at(c);
    const double saved = x;
    x = saved + opts.epsilon;
    const double up = eval_loss(loss_fn);
    x = saved - opts.epsilon;
    const double down = eval_loss(loss_fn);
    x = saved;
    const double central = (up - down) / (2.0 * opts.epsilon);
    worst = std::max(worst, std::abs(analytic[c] - central) / (std::abs(central) + 1e-8));
  }
  return worst;
}

}  // namespace lyricrl
