#include "lyricrl/numcore/adam.hpp"

#include <cmath>

#include "lyricrl/numcore/errors.hpp"

namespace lyricrl {

double Adam::step(ParamSet& params) {
  if (m_.size() != params.size()) {
    m_.clear();
    v_.clear();
    for (const auto& e : params) {
      m_.push_back(Matrix::Zero(e.value.rows(), e.value.cols()));
      v_.push_back(Matrix::Zero(e.value.rows(), e.value.cols()));
    }
    t_ = 0;
  }
  double sq = 0.0;
  for (const auto& e : params) {
    if (!e.grad.allFinite()) throw NumericalError("adam: non-finite gradient in '" + e.name + "'");
    sq += e.grad.squaredNorm();
  }
  const double norm = std::sqrt(sq);
  const double clip = (cfg_.grad_clip > 0 && norm > cfg_.grad_clip) ? cfg_.grad_clip / norm : 1.0;

  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& e = params[i];
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * clip * e.grad;
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * (clip * e.grad).array().square().matrix();
    e.value.array() -= cfg_.lr * cfg_.weight_decay * e.value.array();
    e.value.array() -= cfg_.lr * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + cfg_.eps);
  }
  return norm;
}

}  // namespace lyricrl
