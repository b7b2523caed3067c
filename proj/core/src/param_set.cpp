#include "lyricrl/numcore/param_set.hpp"

#include <cstring>

#include "lyricrl/numcore/errors.hpp"

namespace lyricrl {

std::size_t ParamSet::add(std::string name, Eigen::Index rows, Eigen::Index cols) {
  if (rows <= 0 || cols <= 0) {
    throw ConfigError("parameter '" + name + "' has non-positive shape");
  }
  if (contains(name)) {
    throw ConfigError("duplicate parameter name '" + name + "'");
  }
  entries_.push_back(Entry{std::move(name), Matrix::Zero(rows, cols), Matrix::Zero(rows, cols)});
  return entries_.size() - 1;
}

std::size_t ParamSet::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name == name) return i;
  }
  throw ConfigError("no parameter named '" + name + "'");
}

bool ParamSet::contains(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return true;
  }
  return false;
}

std::size_t ParamSet::total_values() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += static_cast<std::size_t>(e.value.size());
  return n;
}

void ParamSet::zero_grad() {
  for (auto& e : entries_) e.grad.setZero();
}

bool ParamSet::all_finite() const {
  for (const auto& e : entries_) {
    if (!e.value.allFinite()) return false;
  }
  return true;
}

double& ParamSet::value_at(std::size_t flat) {
  for (auto& e : entries_) {
    const auto n = static_cast<std::size_t>(e.value.size());
    if (flat < n) return e.value.data()[flat];
    flat -= n;
  }
  throw ShapeError("flat parameter index out of range");
}

double ParamSet::grad_at(std::size_t flat) const {
  for (const auto& e : entries_) {
    const auto n = static_cast<std::size_t>(e.grad.size());
    if (flat < n) return e.grad.data()[flat];
    flat -= n;
  }
  throw ShapeError("flat parameter index out of range");
}

bool operator==(const ParamSet& a, const ParamSet& b) {
  if (a.entries_.size() != b.entries_.size()) return false;
  for (std::size_t i = 0; i < a.entries_.size(); ++i) {
    const auto& x = a.entries_[i];
    const auto& y = b.entries_[i];
    if (x.name != y.name || x.value.rows() != y.value.rows() || x.value.cols() != y.value.cols()) {
      return false;
    }
    // Bitwise comparison: determinism checks must not tolerate drift.
    for (Eigen::Index k = 0; k < x.value.size(); ++k) {
      if (std::memcmp(&x.value.data()[k], &y.value.data()[k], sizeof(double)) != 0) return false;
    }
  }
  return true;
}

}  // namespace lyricrl
