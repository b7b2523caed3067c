#pragma once

#include <cstddef>
#include <functional>

#include "lyricrl/numcore/param_set.hpp"
#include "lyricrl/numcore/rng.hpp"
#include "lyricrl/numcore/tape.hpp"

namespace lyricrl {

/// A scalar loss recorded on a fresh tape. The callable binds whatever
/// parameters it needs through Tape::param.
using LossFn = std::function<Var(Tape&)>;

/// Runs loss_fn on a new tape, overwrites grads of every bound ParamSet with
/// d(loss)/d(param), and returns the loss. The caller passes the ParamSet(s)
/// whose grads should be reset first.
///
/// Throws NumericalError naming the first node (op and index) whose value is
/// not finite.
double eval_with_gradients(std::span<ParamSet* const> params, const LossFn& loss_fn);
double eval_with_gradients(ParamSet& params, const LossFn& loss_fn);

/// Loss value only; no gradient bookkeeping beyond the tape itself.
double eval_loss(const LossFn& loss_fn);

struct FiniteDiffOptions {
  double epsilon = 1e-5;
  /// Coordinates to probe; 0 means all of them.
  std::size_t max_coords = 0;
  Seed seed{0};
};

/// Max over probed coordinates of |analytic - central| / (|central| + 1e-8).
/// The analytic gradient is recomputed here via eval_with_gradients.
double finite_diff_check(ParamSet& params, const LossFn& loss_fn, const FiniteDiffOptions& opts = {});

}  // namespace lyricrl
