#include "dgm/params.hpp"

#include "dgm/errors.hpp"

#include <algorithm>

namespace dgm {

void ParamStore::add(std::string name, Matrix value) {
  if (find(name)) throw Error("ParamStore: duplicate tensor name '" + name + "'");
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
}

std::size_t ParamStore::total_count() const noexcept {
  std::size_t n = 0;
  for (const auto& v : values_) n += static_cast<std::size_t>(v.size());
  return n;
}

std::optional<std::size_t> ParamStore::find(const std::string& name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - names_.begin());
}

std::vector<double> ParamStore::flatten() const {
  std::vector<double> flat;
  flat.reserve(total_count());
  for (const auto& v : values_) flat.insert(flat.end(), v.data(), v.data() + v.size());
  return flat;
}

void ParamStore::assign_flat(std::span<const double> flat) {
  if (flat.size() != total_count()) {
    throw ShapeError("ParamStore::assign_flat: expected " + std::to_string(total_count()) +
                     " values, got " + std::to_string(flat.size()));
  }
  std::size_t offset = 0;
  for (auto& v : values_) {
    std::copy_n(flat.data() + offset, v.size(), v.data());
    offset += static_cast<std::size_t>(v.size());
  }
}

ParamStore ParamStore::zeros_like() const {
  ParamStore out;
  for (std::size_t i = 0; i < size(); ++i) {
    out.add(names_[i], Matrix::Zero(values_[i].rows(), values_[i].cols()));
  }
  return out;
}

bool ParamStore::same_layout(const ParamStore& other) const {
  if (size() != other.size()) return false;
  for (std::size_t i = 0; i < size(); ++i) {
    if (names_[i] != other.names_[i] || values_[i].rows() != other.values_[i].rows() ||
        values_[i].cols() != other.values_[i].cols()) {
      return false;
    }
  }
  return true;
}

}  // namespace dgm
