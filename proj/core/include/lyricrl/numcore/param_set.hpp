#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace lyricrl {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

/// Named, shaped parameter tensors with gradient buffers of matching shape.
/// Entries are 2-D (rows x cols); vectors are stored as 1 x n.
class ParamSet {
 public:
  struct Entry {
    std::string name;
    Matrix value;
    Matrix grad;
  };

  /// Adds a zero-initialized entry. Throws ConfigError on a duplicate name or
  /// non-positive dims.
  std::size_t add(std::string name, Eigen::Index rows, Eigen::Index cols);

  std::size_t index_of(const std::string& name) const;
  bool contains(const std::string& name) const;

  Entry& operator[](std::size_t i) { return entries_[i]; }
  const Entry& operator[](std::size_t i) const { return entries_[i]; }
  Entry& at(const std::string& name) { return entries_[index_of(name)]; }
  const Entry& at(const std::string& name) const { return entries_[index_of(name)]; }

  std::size_t size() const { return entries_.size(); }
  std::size_t total_values() const;
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  void zero_grad();
  bool all_finite() const;

  /// Flat views over every scalar, in entry order. Used by the finite-difference
  /// checker and by equality tests.
  double& value_at(std::size_t flat);
  double grad_at(std::size_t flat) const;

  friend bool operator==(const ParamSet& a, const ParamSet& b);

 private:
  std::vector<Entry> entries_;
};

}  // namespace lyricrl
