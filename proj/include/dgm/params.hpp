#pragma once

#include "dgm/tensor.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dgm {

/// Named parameter tensors in insertion order.
class ParamStore {
 public:
  void add(std::string name, Matrix value);

  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  /// Sum of element counts over all tensors.
  std::size_t total_count() const noexcept;

  const std::string& name(std::size_t i) const { return names_.at(i); }
  const Matrix& operator[](std::size_t i) const { return values_[i]; }
  Matrix& operator[](std::size_t i) { return values_[i]; }
  const Matrix& at(std::size_t i) const { return values_.at(i); }
  std::optional<std::size_t> find(const std::string& name) const;

  /// Concatenation of all tensors (row-major each) in store order.
  std::vector<double> flatten() const;
  void assign_flat(std::span<const double> flat);

  /// Same names and shapes, all zeros.
  ParamStore zeros_like() const;

  bool same_layout(const ParamStore& other) const;

 private:
  std::vector<std::string> names_;
  std::vector<Matrix> values_;
};

}  // namespace dgm
